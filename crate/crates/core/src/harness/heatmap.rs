use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::fieldmodels::ModelKind;
use crate::signals::Bandwidth;
use crate::tasks::TaskKind;

use super::report::{fmt_float, Metric, ResultRow};
use super::run::CellStatus;

/// Edge length in pixels of one heatmap cell.
pub const CELL_PIXELS: usize = 16;
const MISSING: [u8; 3] = [128, 128, 128];

const VIRIDIS: [[f64; 3]; 9] = [
    [68.0, 1.0, 84.0],
    [71.0, 44.0, 122.0],
    [59.0, 81.0, 139.0],
    [44.0, 113.0, 142.0],
    [33.0, 144.0, 141.0],
    [39.0, 173.0, 129.0],
    [92.0, 200.0, 99.0],
    [170.0, 220.0, 50.0],
    [253.0, 231.0, 37.0],
];
const BLUE: [f64; 3] = [33.0, 102.0, 172.0];
const WHITE: [f64; 3] = [255.0, 255.0, 255.0];
const RED: [f64; 3] = [178.0, 24.0, 43.0];

fn lerp(a: [f64; 3], b: [f64; 3], t: f64) -> [u8; 3] {
    [0, 1, 2].map(|i| (a[i] + (b[i] - a[i]) * t).round().clamp(0.0, 255.0) as u8)
}

/// Sequential palette on `t ∈ [0, 1]`.
pub fn viridis(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0) * (VIRIDIS.len() - 1) as f64;
    let i = (t.floor() as usize).min(VIRIDIS.len() - 2);
    lerp(VIRIDIS[i], VIRIDIS[i + 1], t - i as f64)
}

/// Diverging palette on `t ∈ [-1, 1]`: blue below zero, white at zero, red above.
pub fn diverging(t: f64) -> [u8; 3] {
    let t = t.clamp(-1.0, 1.0);
    if t < 0.0 {
        lerp(WHITE, BLUE, -t)
    } else {
        lerp(WHITE, RED, t)
    }
}

/// Values of one (model, task) slab; `values[i][j]` is budget `i`, bandwidth `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeatmapGrid {
    pub model: ModelKind,
    pub task: TaskKind,
    /// Ascending.
    pub budgets: Vec<usize>,
    /// Ascending.
    pub bandwidths: Vec<Bandwidth>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl HeatmapGrid {
    /// Mean over the ok seeds of each cell on the given axes.
    pub fn collect(rows: &[ResultRow], model: ModelKind, task: TaskKind, metric: Metric, budgets: &[usize], bandwidths: &[Bandwidth]) -> Self {
        let mut acc: BTreeMap<(usize, Bandwidth), Vec<f64>> = BTreeMap::new();
        for r in rows {
            if r.model == model && r.task == task && r.status == CellStatus::Ok {
                if let Some(v) = metric.of(r) {
                    acc.entry((r.budget, r.bandwidth)).or_default().push(v);
                }
            }
        }
        let values = budgets
            .iter()
            .map(|&p| {
                bandwidths
                    .iter()
                    .map(|&b| acc.get(&(p, b)).map(|v| v.iter().sum::<f64>() / v.len() as f64))
                    .collect()
            })
            .collect();
        HeatmapGrid {
            model,
            task,
            budgets: budgets.to_vec(),
            bandwidths: bandwidths.to_vec(),
            values,
        }
    }

    pub fn missing(&self) -> usize {
        self.values.iter().flatten().filter(|v| v.is_none()).count()
    }

    /// Cell-by-cell `self - baseline`.
    pub fn minus(&self, baseline: &HeatmapGrid) -> HeatmapGrid {
        let values = self
            .values
            .iter()
            .zip(&baseline.values)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| Some((*x)? - (*y)?)).collect())
            .collect();
        HeatmapGrid {
            values,
            ..self.clone()
        }
    }

    fn finite(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().flatten().flatten().copied().filter(|v| v.is_finite())
    }

    /// Budgets run bottom (smallest) to top, bandwidths left to right.
    fn render(&self, color: impl Fn(f64) -> [u8; 3]) -> Image {
        let (rows, cols) = (self.budgets.len(), self.bandwidths.len());
        let mut img = Image::new(cols * CELL_PIXELS, rows * CELL_PIXELS);
        for (i, line) in self.values.iter().enumerate() {
            let top = (rows - 1 - i) * CELL_PIXELS;
            for (j, v) in line.iter().enumerate() {
                let rgb = match v {
                    Some(x) if !x.is_nan() => color(*x),
                    _ => MISSING,
                };
                img.fill(j * CELL_PIXELS, top, CELL_PIXELS, CELL_PIXELS, rgb);
            }
        }
        img
    }

    /// Sequential colors over `[lo, hi]`; infinities saturate and a degenerate
    /// range maps to the middle.
    pub fn render_absolute(&self, lo: f64, hi: f64) -> Image {
        self.render(|x| {
            let t = if x.is_infinite() {
                (x > 0.0) as u8 as f64
            } else if hi > lo {
                (x - lo) / (hi - lo)
            } else {
                0.5
            };
            viridis(t)
        })
    }

    /// Diverging colors over `[-span, span]`, white at zero.
    pub fn render_delta(&self, span: f64) -> Image {
        self.render(|x| {
            let t = if span > 0.0 {
                x / span
            } else if x == 0.0 {
                0.0
            } else {
                x.signum()
            };
            diverging(t)
        })
    }
}

/// 8-bit RGB raster.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            rgb: vec![0; width * height * 3],
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let k = 3 * (y * self.width + x);
        [self.rgb[k], self.rgb[k + 1], self.rgb[k + 2]]
    }

    fn fill(&mut self, x0: usize, y0: usize, w: usize, h: usize, rgb: [u8; 3]) {
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                let k = 3 * (y * self.width + x);
                self.rgb[k..k + 3].copy_from_slice(&rgb);
            }
        }
    }

    /// Binary PPM (`P6`).
    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        let mut bytes = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        bytes.extend_from_slice(&self.rgb);
        fs::write(path, bytes)?;
        Ok(())
    }
}

/// Files written by [`emit_heatmaps`].
#[derive(Clone, Debug, Default)]
pub struct HeatmapOutput {
    pub images: Vec<PathBuf>,
    pub delta_csv: Option<PathBuf>,
    pub grids: Vec<HeatmapGrid>,
}

/// Writes `{model}_{task}_{metric}.ppm` for every model and, when the
/// baseline is present, `{model}_{task}_{metric}_delta.ppm` plus
/// `delta_{metric}.csv`.
///
/// All images of a metric share one color scale; missing cells are gray.
pub fn emit_heatmaps(rows: &[ResultRow], metric: Metric, baseline: ModelKind, dir: &Path) -> Result<HeatmapOutput> {
    fs::create_dir_all(dir)?;
    let mut out = HeatmapOutput::default();
    let tasks: BTreeSet<TaskKind> = rows.iter().map(|r| r.task).collect();
    let mut delta_lines = Vec::new();
    for task in tasks {
        let task_rows: Vec<&ResultRow> = rows.iter().filter(|r| r.task == task).collect();
        let budgets: Vec<usize> = task_rows.iter().map(|r| r.budget).collect::<BTreeSet<_>>().into_iter().collect();
        let bandwidths: Vec<Bandwidth> = task_rows.iter().map(|r| r.bandwidth).collect::<BTreeSet<_>>().into_iter().collect();
        let mut models: Vec<ModelKind> = task_rows.iter().map(|r| r.model).collect::<BTreeSet<_>>().into_iter().collect();
        models.sort_by_key(|m| m.name());
        let grids: Vec<HeatmapGrid> = models
            .iter()
            .map(|&m| HeatmapGrid::collect(rows, m, task, metric, &budgets, &bandwidths))
            .collect();
        let finite: Vec<f64> = grids.iter().flat_map(|g| g.finite()).collect();
        let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if finite.is_empty() { (0.0, 0.0) } else { (lo, hi) };
        for g in &grids {
            if g.missing() > 0 {
                log::warn!("{} on {task}: {} of {} cells have no {} value", g.model, g.missing(), budgets.len() * bandwidths.len(), metric.name());
            }
            let path = dir.join(format!("{}_{}_{}.ppm", g.model, task, metric.name()));
            g.render_absolute(lo, hi).write_ppm(&path)?;
            out.images.push(path);
        }
        let Some(base) = grids.iter().find(|g| g.model == baseline) else {
            log::warn!("baseline {baseline} has no {task} results; gap heatmaps skipped");
            out.grids.extend(grids);
            continue;
        };
        let deltas: Vec<HeatmapGrid> = grids.iter().map(|g| g.minus(base)).collect();
        let span = deltas.iter().flat_map(|d| d.finite()).fold(0.0, |a: f64, v| a.max(v.abs()));
        for (g, d) in grids.iter().zip(&deltas) {
            let path = dir.join(format!("{}_{}_{}_delta.ppm", g.model, task, metric.name()));
            d.render_delta(span).write_ppm(&path)?;
            out.images.push(path);
            for (i, &p) in budgets.iter().enumerate() {
                for (j, &b) in bandwidths.iter().enumerate() {
                    let cell = |v: Option<f64>| v.map(fmt_float).unwrap_or_default();
                    delta_lines.push(vec![
                        g.model.name().to_string(),
                        task.name().to_string(),
                        p.to_string(),
                        fmt_float(b.value()),
                        cell(g.values[i][j]),
                        cell(base.values[i][j]),
                        cell(d.values[i][j]),
                    ]);
                }
            }
        }
        out.grids.extend(grids);
    }
    if !delta_lines.is_empty() {
        let path = dir.join(format!("delta_{}.csv", metric.name()));
        let mut w = csv::Writer::from_path(&path).map_err(std::io::Error::from)?;
        w.write_record(["model", "task", "budget", "bandwidth", "value", "baseline", "delta"])
            .map_err(std::io::Error::from)?;
        for line in &delta_lines {
            w.write_record(line).map_err(std::io::Error::from)?;
        }
        w.flush()?;
        out.delta_csv = Some(path);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::report::tests::row;

    #[test]
    fn palettes_hit_their_anchors() {
        assert_eq!(viridis(0.0), [68, 1, 84]);
        assert_eq!(viridis(1.0), [253, 231, 37]);
        assert_eq!(diverging(0.0), [255, 255, 255]);
        assert_eq!(diverging(1.0), [178, 24, 43]);
        assert_eq!(diverging(-1.0), [33, 102, 172]);
    }

    #[test]
    fn single_cell_psnr_twenty() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![row(ModelKind::Grid, 100, 0.5, 1, 20.0)];
        let out = emit_heatmaps(&rows, Metric::Psnr, ModelKind::Grid, dir.path()).unwrap();
        assert_eq!(out.grids[0].values, vec![vec![Some(20.0)]]);
        let bytes = fs::read(&out.images[0]).unwrap();
        assert!(bytes.starts_with(format!("P6\n{CELL_PIXELS} {CELL_PIXELS}\n255\n").as_bytes()));
    }

    #[test]
    fn baseline_gap_is_zero_and_white() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![
            row(ModelKind::Grid, 100, 0.5, 1, 20.0),
            row(ModelKind::Grid, 300, 0.5, 1, 30.0),
            row(ModelKind::Siren, 100, 0.5, 1, 25.0),
            row(ModelKind::Siren, 300, 0.5, 1, 10.0),
        ];
        let out = emit_heatmaps(&rows, Metric::Psnr, ModelKind::Grid, dir.path()).unwrap();
        let grid = &out.grids[0];
        let d = grid.minus(grid);
        assert!(d.values.iter().flatten().all(|v| *v == Some(0.0)));
        let img = d.render_delta(10.0);
        assert!(img.rgb.iter().all(|&c| c == 255));
        let siren = out.grids[1].minus(grid);
        assert_eq!(siren.values, vec![vec![Some(5.0)], vec![Some(-20.0)]]);
        let img = siren.render_delta(20.0);
        assert_eq!(img.pixel(0, CELL_PIXELS), diverging(0.25));
        assert_eq!(img.pixel(0, 0), diverging(-1.0));
        let csv = fs::read_to_string(out.delta_csv.unwrap()).unwrap();
        assert!(csv.contains("siren,overfit,300,0.5,10.0,30.0,-20.0"));
    }

    #[test]
    fn ragged_slab_leaves_gray_cells() {
        let rows = vec![
            row(ModelKind::Grid, 100, 0.5, 1, 20.0),
            row(ModelKind::Grid, 300, 0.2, 1, 30.0),
        ];
        let g = HeatmapGrid::collect(&rows, ModelKind::Grid, TaskKind::Overfit, Metric::Psnr, &[100, 300], &[Bandwidth::new(0.2).unwrap(), Bandwidth::new(0.5).unwrap()]);
        assert_eq!(g.missing(), 2);
        let img = g.render_absolute(20.0, 30.0);
        assert_eq!(img.pixel(0, 2 * CELL_PIXELS - 1), MISSING);
        assert_eq!(img.pixel(CELL_PIXELS, 2 * CELL_PIXELS - 1), viridis(0.0));
        assert_eq!(img.pixel(0, 0), viridis(1.0));
    }

    #[test]
    fn infinite_psnr_saturates() {
        let rows = vec![row(ModelKind::Grid, 100, 0.5, 1, f64::INFINITY), row(ModelKind::Grid, 300, 0.5, 1, 20.0)];
        let g = HeatmapGrid::collect(&rows, ModelKind::Grid, TaskKind::Overfit, Metric::Psnr, &[100, 300], &[Bandwidth::new(0.5).unwrap()]);
        let img = g.render_absolute(20.0, 20.0);
        assert_eq!(img.pixel(0, CELL_PIXELS), viridis(1.0));
        let d = g.minus(&g);
        assert!(d.values[0][0].unwrap().is_nan());
        assert_eq!(d.render_delta(0.0).pixel(0, CELL_PIXELS), MISSING);
    }
}
