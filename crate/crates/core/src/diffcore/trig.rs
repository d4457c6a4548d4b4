//! Sine and cosine with Cody-Waite reduction by π/2 and minimax kernels on
//! `[-π/4, π/4]`, for the moderate arguments that dominate sine activations.

const INV_PIO2: f64 = 6.36619772367581382433e-01;
const PIO2_1: f64 = 1.57079632673412561417e+00;
const PIO2_2: f64 = 6.07710050630396597660e-11;
const PIO2_3: f64 = 2.02226624871116645580e-21;
/// Beyond this `k·PIO2_1` is no longer exact and std is used instead.
const REDUCE_LIMIT: f64 = 1.0e6;

const S1: f64 = -1.66666666666666324348e-01;
const S2: f64 = 8.33333333332248946124e-03;
const S3: f64 = -1.98412698298579493134e-04;
const S4: f64 = 2.75573137070700676789e-06;
const S5: f64 = -2.50507602534068634195e-08;
const S6: f64 = 1.58969099521155010221e-10;

const C1: f64 = 4.16666666666666019037e-02;
const C2: f64 = -1.38888888888741095749e-03;
const C3: f64 = 2.48015872894767294178e-05;
const C4: f64 = -2.75573143513906633035e-07;
const C5: f64 = 2.08757232129817482790e-09;
const C6: f64 = -1.13596475577881948265e-11;

#[inline]
fn kernel_sin(x: f64) -> f64 {
    let z = x * x;
    let r = S2 + z * (S3 + z * (S4 + z * (S5 + z * S6)));
    x + z * x * (S1 + z * r)
}

#[inline]
fn kernel_cos(x: f64) -> f64 {
    let z = x * x;
    let r = z * (C1 + z * (C2 + z * (C3 + z * (C4 + z * (C5 + z * C6)))));
    let hz = 0.5 * z;
    let w = 1.0 - hz;
    w + (((1.0 - w) - hz) + z * r)
}

/// Adding and subtracting `1.5·2^52` rounds to the nearest integer.
const ROUND_SHIFT: f64 = 6_755_399_441_055_744.0;

#[inline]
fn reduce(x: f64) -> (f64, i64) {
    let k = (x * INV_PIO2 + ROUND_SHIFT) - ROUND_SHIFT;
    let r = ((x - k * PIO2_1) - k * PIO2_2) - k * PIO2_3;
    (r, k as i64)
}

#[inline]
pub fn sin(x: f64) -> f64 {
    if !(x.abs() < REDUCE_LIMIT) {
        return x.sin();
    }
    let (r, k) = reduce(x);
    match k & 3 {
        0 => kernel_sin(r),
        1 => kernel_cos(r),
        2 => -kernel_sin(r),
        _ => -kernel_cos(r),
    }
}

#[inline]
pub fn cos(x: f64) -> f64 {
    if !(x.abs() < REDUCE_LIMIT) {
        return x.cos();
    }
    let (r, k) = reduce(x);
    match k & 3 {
        0 => kernel_cos(r),
        1 => -kernel_sin(r),
        2 => -kernel_cos(r),
        _ => kernel_sin(r),
    }
}

/// `(sin x, cos x)` with a shared reduction.
#[inline]
pub fn sin_cos(x: f64) -> (f64, f64) {
    if !(x.abs() < REDUCE_LIMIT) {
        return x.sin_cos();
    }
    let (r, k) = reduce(x);
    let (s, c) = (kernel_sin(r), kernel_cos(r));
    match k & 3 {
        0 => (s, c),
        1 => (c, -s),
        2 => (-s, -c),
        _ => (-c, s),
    }
}
