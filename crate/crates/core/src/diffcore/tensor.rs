use std::sync::Arc;

use crate::error::{Error, Result};

/// Dense row-major tensor of 64-bit floats with copy-on-write storage, so
/// clones are cheap until one side is mutated.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::build(format!(
                "shape {shape:?} holds {n} values but {} were given",
                data.len()
            )));
        }
        Ok(Tensor {
            shape,
            data: Arc::new(data),
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: Arc::new(vec![0.0; shape.iter().product()]),
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: Arc::new(vec![value; shape.iter().product()]),
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![],
            data: Arc::new(vec![value]),
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: Arc::new((0..n).map(&mut f).collect()),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    pub fn into_data(self) -> Vec<f64> {
        Arc::try_unwrap(self.data).unwrap_or_else(|shared| (*shared).clone())
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rows and columns of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::build(format!("expected a matrix, got shape {s:?}"))),
        }
    }

    /// The single value of a scalar (or one-element) tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::build(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: Arc::new(self.data.iter().map(|&v| f(v)).collect()),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn same_shape(&self, other: &Tensor, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::build(format!(
                "{what}: shape {:?} does not match {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in Arc::make_mut(&mut self.data).iter_mut().zip(other.data.iter()) {
            *a += b;
        }
    }
}

/// Output widths at or below this skip panel packing and use direct loops.
const THIN_COLUMNS: usize = 4;

#[allow(clippy::too_many_arguments)]
fn thin_gemm(
    a: &[f64],
    ac: usize,
    trans_a: bool,
    b: &[f64],
    bc: usize,
    trans_b: bool,
    (m, k, n): (usize, usize, usize),
    c: &mut [f64],
) {
    let b_at = |p: usize, j: usize| if trans_b { b[j * bc + p] } else { b[p * bc + j] };
    for j in 0..n {
        let col: Vec<f64> = (0..k).map(|p| b_at(p, j)).collect();
        if trans_a {
            for (p, &bp) in col.iter().enumerate() {
                let row = &a[p * ac..p * ac + m];
                for (i, &av) in row.iter().enumerate() {
                    c[i * n + j] += av * bp;
                }
            }
        } else {
            for i in 0..m {
                let row = &a[i * ac..i * ac + k];
                c[i * n + j] = row.iter().zip(&col).map(|(x, y)| x * y).sum();
            }
        }
    }
}

/// `c = op(a) * op(b)` for row-major matrices, where `op` optionally transposes.
pub(crate) fn gemm(
    a: &[f64],
    (ar, ac): (usize, usize),
    trans_a: bool,
    b: &[f64],
    (br, bc): (usize, usize),
    trans_b: bool,
) -> Vec<f64> {
    let (m, k) = if trans_a { (ac, ar) } else { (ar, ac) };
    let (k2, n) = if trans_b { (bc, br) } else { (br, bc) };
    debug_assert_eq!(k, k2);
    let mut c = vec![0.0; m * n];
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    if n <= THIN_COLUMNS {
        thin_gemm(a, ac, trans_a, b, bc, trans_b, (m, k, n), &mut c);
        return c;
    }
    let (rsa, csa) = if trans_a { (1, ac as isize) } else { (ac as isize, 1) };
    let (rsb, csb) = if trans_b { (1, bc as isize) } else { (bc as isize, 1) };
    // SAFETY: the strides above describe exactly the row-major buffers `a`,
    // `b` (possibly read transposed) and `c`, whose lengths cover m*k, k*n and
    // m*n elements respectively.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    c
}
