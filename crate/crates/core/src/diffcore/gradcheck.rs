use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

use super::{value_and_grad, Tape, Tensor, Var};

/// Which parameter coordinates a finite-difference check perturbs.
#[derive(Clone, Copy, Debug)]
pub enum Probe {
    /// Every coordinate of every parameter.
    All,
    /// At most this many coordinates per parameter tensor, drawn with a fixed seed.
    PerTensor(usize, u64),
}

/// Outcome of [`finite_diff_check`].
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// `(tensor index, flat index)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub probed: usize,
}

fn eval(params: &[Tensor], f: &impl Fn(&mut Tape, &[Var]) -> Result<Var>) -> Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.constant(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    Ok(tape.value(out).item())
}

/// Compares autodiff gradients with central differences of step `h`.
///
/// The error per coordinate is `|a - cd| / (|a| + |cd| + 1e-12)`; the maximum
/// over probed coordinates is reported.
pub fn finite_diff_check<F>(f: F, params: &[Tensor], h: f64, probe: Probe) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let (_, grads) = value_and_grad(params, &f)?;
    let mut work = params.to_vec();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: None,
        probed: 0,
    };
    for ti in 0..params.len() {
        let n = params[ti].len();
        let coords: Vec<usize> = match probe {
            Probe::All => (0..n).collect(),
            Probe::PerTensor(k, seed) if k < n => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ti as u64);
                let mut c = sample(&mut rng, n, k).into_vec();
                c.sort_unstable();
                c
            }
            Probe::PerTensor(..) => (0..n).collect(),
        };
        for j in coords {
            let orig = work[ti].data()[j];
            work[ti].data_mut()[j] = orig + h;
            let fp = eval(&work, &f)?;
            work[ti].data_mut()[j] = orig - h;
            let fm = eval(&work, &f)?;
            work[ti].data_mut()[j] = orig;
            let cd = (fp - fm) / (2.0 * h);
            let a = grads[ti].data()[j];
            let err = (a - cd).abs() / (a.abs() + cd.abs() + 1e-12);
            report.probed += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((ti, j));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let w = Tensor::new(vec![3], vec![0.3, -1.2, 2.0]).unwrap();
        let x = Tensor::new(vec![3], vec![1.0, 2.0, -0.5]).unwrap();
        let r = finite_diff_check(
            |t, v| {
                let c = t.constant(w.clone());
                let m = t.mul(v[0], c)?;
                Ok(t.sum(m))
            },
            &[x],
            1e-4,
            Probe::All,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-10, "{}", r.max_rel_error);
        assert_eq!(r.probed, 3);
    }

    #[test]
    fn sine_within_taylor_bound() {
        let x = Tensor::new(vec![4], vec![0.1, 0.7, -1.3, 2.2]).unwrap();
        let r = finite_diff_check(
            |t, v| {
                let s = t.sin(v[0]);
                Ok(t.sum(s))
            },
            &[x],
            1e-4,
            Probe::All,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-6, "{}", r.max_rel_error);
    }
}
