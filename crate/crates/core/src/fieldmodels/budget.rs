use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Budget targets of the standard sweep.
pub const STANDARD_BUDGETS: [usize; 6] = [10_000, 30_000, 100_000, 300_000, 1_000_000, 3_000_000];

/// Inputs to the hidden-width quadratic
/// `L x^2 + (L + d_enc + d_out) x + d_in + d_out + params_enc = P`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterBudget {
    pub target: usize,
    pub layers: usize,
    pub d_in: usize,
    pub d_enc: usize,
    pub d_out: usize,
    pub params_enc: usize,
}

/// Floor of the positive root of the hidden-width quadratic.
pub fn solve_hidden_width(b: &ParameterBudget) -> Result<usize> {
    let infeasible = |reason: String| Error::BudgetInfeasible {
        target: b.target,
        reason,
    };
    if b.target == 0 {
        return Err(infeasible("target must be positive".into()));
    }
    if b.layers == 0 {
        return Err(infeasible("at least one hidden layer is required".into()));
    }
    let a = b.layers as f64;
    let lin = (b.layers + b.d_enc + b.d_out) as f64;
    let c = (b.d_in + b.d_out + b.params_enc) as f64 - b.target as f64;
    let disc = lin * lin - 4.0 * a * c;
    if disc < 0.0 {
        return Err(infeasible("negative discriminant".into()));
    }
    let root = (-lin + disc.sqrt()) / (2.0 * a);
    // exact integer correction around the floating root
    let eval = |x: usize| -> u128 {
        let x = x as u128;
        b.layers as u128 * x * x
            + (b.layers + b.d_enc + b.d_out) as u128 * x
            + (b.d_in + b.d_out + b.params_enc) as u128
    };
    let mut x = root.max(0.0).floor() as usize;
    while x > 0 && eval(x) > b.target as u128 {
        x -= 1;
    }
    while eval(x + 1) <= b.target as u128 {
        x += 1;
    }
    if x == 0 {
        return Err(infeasible(format!(
            "no positive width fits (positive root {root:.3})"
        )));
    }
    Ok(x)
}

/// Grid side `floor((budget / channels)^(1/dim))`, evaluated in floating point.
///
/// The floating-point root of a perfect power can land just below the integer
/// (`1e6^(1/3)` gives 99), and that value is kept.
pub fn grid_side(budget: usize, dim: usize, channels: usize) -> Result<usize> {
    let per = budget as f64 / channels.max(1) as f64;
    let mut s = per.powf(1.0 / dim as f64).floor() as usize;
    while s > 0 && s.pow(dim as u32) * channels > budget {
        s -= 1;
    }
    if s < 2 {
        return Err(Error::BudgetInfeasible {
            target: budget,
            reason: format!("grid side {s} is below 2"),
        });
    }
    Ok(s)
}

/// Parameters of the hash-grid decoder `32 -> 64 -> d_out`.
pub fn hash_decoder_params(levels: usize, features: usize, d_out: usize) -> usize {
    let enc = levels * features;
    enc * 64 + 64 + 64 * d_out + d_out
}

/// Largest `log2` table size with all levels plus the decoder within budget.
pub fn hash_log2_table(budget: usize, levels: usize, features: usize, d_out: usize) -> Result<u32> {
    let dec = hash_decoder_params(levels, features, d_out);
    let mut t: Option<u32> = None;
    for k in 0..31u32 {
        if levels * features * (1usize << k) + dec <= budget {
            t = Some(k);
        } else {
            break;
        }
    }
    t.filter(|&k| k >= 1).ok_or_else(|| Error::BudgetInfeasible {
        target: budget,
        reason: format!("the {dec}-parameter decoder leaves no room for a table"),
    })
}

/// Parameters per splat: mean (3) + log-scales (3) + quaternion (4) +
/// opacity (1) + color.
pub fn gsplat_params_per_gaussian(channels: usize) -> usize {
    11 + channels
}

pub fn gsplat_count(budget: usize, channels: usize) -> Result<usize> {
    let n = budget / gsplat_params_per_gaussian(channels);
    if n == 0 {
        return Err(Error::BudgetInfeasible {
            target: budget,
            reason: "too small for a single Gaussian".into(),
        });
    }
    Ok(n)
}

/// Feature width `f` for GA-Planes with `cells` grid cells per feature:
/// nearest integer root of `f^2 + (cells + 1 + d_out) f + d_out = P`.
pub fn gaplanes_features(budget: usize, cells: usize, d_out: usize) -> Result<usize> {
    let lin = (cells + 1 + d_out) as f64;
    let c = d_out as f64 - budget as f64;
    let root = (-lin + (lin * lin - 4.0 * c).sqrt()) / 2.0;
    let f = root.round();
    if !(f >= 1.0) {
        return Err(Error::BudgetInfeasible {
            target: budget,
            reason: format!("{cells} grid cells per feature leave no room for one feature"),
        });
    }
    Ok(f as usize)
}
