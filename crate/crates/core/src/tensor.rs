//! Dense row-major tensors of `f64`.

use crate::error::{Error, Result};

/// A contiguous row-major array with an explicit shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} needs {} elements, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Size of the trailing axis (1 for a scalar-shaped tensor).
    pub fn last_dim(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Element of a 2-D tensor.
    pub fn at2(&self, r: usize, c: usize) -> f64 {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[r * self.shape[1] + c]
    }

    /// Element of a 3-D tensor.
    pub fn at3(&self, i: usize, j: usize, k: usize) -> f64 {
        debug_assert_eq!(self.shape.len(), 3);
        self.data[(i * self.shape[1] + j) * self.shape[2] + k]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let w = self.data.len() / self.rows().max(1);
        &self.data[r * w..(r + 1) * w]
    }

    /// Fails with [`Error::Numerical`] if any entry is NaN or infinite.
    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::Numerical(format!(
                "{what}: non-finite value {} at flat index {i}",
                self.data[i]
            ))),
            None => Ok(()),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// `x[b × n_in] · w[n_out × n_in]ᵀ`, accumulated into `out[b × n_out]`.
/// Every output element is summed over the inputs in increasing order, so
/// results do not depend on the batch size or blocking.
pub(crate) fn matmul_wt_acc(x: &[f64], w: &[f64], n_in: usize, n_out: usize, out: &mut [f64]) {
    if n_out == 0 || n_in == 0 {
        return;
    }
    let batch = out.len() / n_out;
    let mut wt = vec![0.0; n_in * n_out];
    for o in 0..n_out {
        for i in 0..n_in {
            wt[i * n_out + o] = w[o * n_in + i];
        }
    }
    let mut b = 0;
    while b < batch {
        let rb = (batch - b).min(4);
        let mut o = 0;
        while o < n_out {
            let ob = (n_out - o).min(4);
            if rb == 4 && ob == 4 {
                let xs: [&[f64]; 4] = std::array::from_fn(|r| &x[(b + r) * n_in..(b + r + 1) * n_in]);
                let mut acc = [[0.0f64; 4]; 4];
                for i in 0..n_in {
                    let wv: [f64; 4] = wt[i * n_out + o..i * n_out + o + 4].try_into().expect("4 outputs");
                    for r in 0..4 {
                        let xv = xs[r][i];
                        for k in 0..4 {
                            acc[r][k] += xv * wv[k];
                        }
                    }
                }
                for r in 0..4 {
                    for k in 0..4 {
                        out[(b + r) * n_out + o + k] += acc[r][k];
                    }
                }
            } else {
                for r in b..b + rb {
                    for k in o..o + ob {
                        let mut s = 0.0;
                        for i in 0..n_in {
                            s += x[r * n_in + i] * wt[i * n_out + k];
                        }
                        out[r * n_out + k] += s;
                    }
                }
            }
            o += ob;
        }
        b += rb;
    }
}

/// `dw[n_out × n_in] += dyᵀ · x` over the batch.
pub(crate) fn outer_acc(dy: &[f64], x: &[f64], n_in: usize, n_out: usize, dw: &mut [f64]) {
    let batch = dy.len() / n_out.max(1);
    for o in 0..n_out {
        let dwr = &mut dw[o * n_in..(o + 1) * n_in];
        for b in 0..batch {
            let g = dy[b * n_out + o];
            if g == 0.0 {
                continue;
            }
            for (d, a) in dwr.iter_mut().zip(&x[b * n_in..(b + 1) * n_in]) {
                *d += g * a;
            }
        }
    }
}

/// `dx[b × n_in] += dy[b × n_out] · w[n_out × n_in]`.
pub(crate) fn matmul_w_acc(dy: &[f64], w: &[f64], n_in: usize, n_out: usize, dx: &mut [f64]) {
    let batch = dy.len() / n_out.max(1);
    for b in 0..batch {
        let dxr = &mut dx[b * n_in..(b + 1) * n_in];
        for o in 0..n_out {
            let g = dy[b * n_out + o];
            if g == 0.0 {
                continue;
            }
            let wr = &w[o * n_in..(o + 1) * n_in];
            for (d, c) in dxr.iter_mut().zip(wr) {
                *d += g * c;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_length() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(matches!(
            Tensor::new(vec![2, 3], vec![0.0; 5]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn non_finite_is_detected() {
        let t = Tensor::new(vec![3], vec![1.0, f64::NAN, 2.0]).unwrap();
        assert!(matches!(t.ensure_finite("x"), Err(Error::Numerical(_))));
    }

    #[test]
    fn small_matmuls() {
        // x = [[1,2]], w = [[1,0],[0,1],[1,1]]
        let x = [1.0, 2.0];
        let w = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let mut y = [0.0; 3];
        matmul_wt_acc(&x, &w, 2, 3, &mut y);
        assert_eq!(y, [1.0, 2.0, 3.0]);

        let mut dx = [0.0; 2];
        matmul_w_acc(&[1.0, 1.0, 1.0], &w, 2, 3, &mut dx);
        assert_eq!(dx, [2.0, 2.0]);

        let mut dw = [0.0; 6];
        outer_acc(&[1.0, 0.0, 2.0], &x, 2, 3, &mut dw);
        assert_eq!(dw, [1.0, 2.0, 0.0, 0.0, 2.0, 4.0]);
    }
}
