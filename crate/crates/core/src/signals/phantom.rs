use crate::error::Result;

use super::lattice::center_coord;
use super::SampledSignal;

/// `(intensity, semi-axis a, semi-axis b, x0, y0, rotation in degrees)`.
const MODIFIED_SHEPP_LOGAN: [[f64; 6]; 10] = [
    [1.0, 0.69, 0.92, 0.0, 0.0, 0.0],
    [-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0],
    [-0.2, 0.11, 0.31, 0.22, 0.0, -18.0],
    [-0.2, 0.16, 0.41, -0.22, 0.0, 18.0],
    [0.1, 0.21, 0.25, 0.0, 0.35, 0.0],
    [0.1, 0.046, 0.046, 0.0, 0.1, 0.0],
    [0.1, 0.046, 0.046, 0.0, -0.1, 0.0],
    [0.1, 0.046, 0.023, -0.08, -0.605, 0.0],
    [0.1, 0.023, 0.023, 0.0, -0.606, 0.0],
    [0.1, 0.023, 0.046, 0.06, -0.605, 0.0],
];

/// Modified (high-contrast) Shepp-Logan phantom on an `n × n` lattice, values
/// in [0, 1], with row 0 at the top (y = +1).
pub fn shepp_logan(n: usize) -> Result<SampledSignal> {
    SampledSignal::from_fn(&[n, n], 1, |idx, _| {
        let x = center_coord(idx[1], n);
        let y = -center_coord(idx[0], n);
        let mut v = 0.0;
        for [a, sa, sb, x0, y0, phi] in MODIFIED_SHEPP_LOGAN {
            let (s, c) = phi.to_radians().sin_cos();
            let (dx, dy) = (x - x0, y - y0);
            let u = (dx * c + dy * s) / sa;
            let w = (-dx * s + dy * c) / sb;
            if u * u + w * w <= 1.0 {
                v += a;
            }
        }
        f64::clamp(v, 0.0, 1.0)
    })
}
