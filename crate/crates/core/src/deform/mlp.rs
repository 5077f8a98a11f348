//! Small dense MLPs with ReLU hidden activations, evaluated over batches
//! (rows = samples) so the matrix products can use a real GEMM.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    /// (in, out); samples multiply from the left.
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// Inputs seen by each layer during the forward pass (post-activation of
/// the previous layer); doubles as the ReLU mask source.
pub struct MlpCache {
    pub inputs: Vec<DMatrix<f64>>,
}

#[derive(Clone, Debug)]
pub struct LinearGrad {
    pub d_w: DMatrix<f64>,
    pub d_b: DVector<f64>,
}

#[derive(Clone, Debug)]
pub struct MlpGrads {
    pub layers: Vec<LinearGrad>,
}

impl Mlp {
    /// `dims` = [in, hidden.., out]. Hidden layers get uniform He init;
    /// the final layer is zero-initialized so the network starts as the
    /// constant zero function.
    pub fn new(dims: &[usize], rng: &mut impl Rng) -> Mlp {
        assert!(dims.len() >= 2);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for i in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[i], dims[i + 1]);
            let last = i == dims.len() - 2;
            let w = if last {
                DMatrix::zeros(fan_in, fan_out)
            } else {
                let limit = (6.0 / fan_in as f64).sqrt();
                DMatrix::from_fn(fan_in, fan_out, |_, _| rng.gen_range(-limit..limit))
            };
            layers.push(Linear { w, b: DVector::zeros(fan_out) });
        }
        Mlp { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().w.ncols()
    }

    /// Forward over a batch (N x in) -> (N x out) plus the cache needed by
    /// `backward_batch`.
    pub fn forward_batch(&self, x: DMatrix<f64>) -> (DMatrix<f64>, MlpCache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = x;
        for (i, l) in self.layers.iter().enumerate() {
            let mut y = &cur * &l.w;
            for mut row in y.row_iter_mut() {
                row += l.b.transpose();
            }
            if i + 1 < self.layers.len() {
                y.apply(|v| *v = v.max(0.0));
            }
            inputs.push(cur);
            cur = y;
        }
        (cur, MlpCache { inputs })
    }

    /// Reverse pass; returns the input adjoint and per-layer weight grads.
    pub fn backward_batch(&self, cache: &MlpCache, d_out: &DMatrix<f64>) -> (DMatrix<f64>, MlpGrads) {
        let mut d_cur = d_out.clone();
        let mut grads: Vec<Option<LinearGrad>> = (0..self.layers.len()).map(|_| None).collect();
        for i in (0..self.layers.len()).rev() {
            let l = &self.layers[i];
            let x = &cache.inputs[i];
            // The stored input of layer i+1 is relu(pre_i); a positive
            // entry there marks an active unit of layer i.
            if i + 1 < self.layers.len() {
                let act = &cache.inputs[i + 1];
                d_cur.zip_apply(act, |d, a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            let d_w = x.transpose() * &d_cur;
            let d_b = DVector::from_fn(l.w.ncols(), |c, _| d_cur.column(c).sum());
            grads[i] = Some(LinearGrad { d_w, d_b });
            d_cur *= l.w.transpose();
        }
        (d_cur, MlpGrads { layers: grads.into_iter().map(|g| g.unwrap()).collect() })
    }

    /// Visit every parameter tensor in a fixed order.
    pub fn for_each_tensor(&self, prefix: &str, f: &mut impl FnMut(String, &[f64])) {
        for (i, l) in self.layers.iter().enumerate() {
            f(format!("{}.{}.w", prefix, i), l.w.as_slice());
            f(format!("{}.{}.b", prefix, i), l.b.as_slice());
        }
    }

    pub fn for_each_tensor_mut(&mut self, prefix: &str, f: &mut impl FnMut(String, &mut [f64])) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            f(format!("{}.{}.w", prefix, i), l.w.as_mut_slice());
            f(format!("{}.{}.b", prefix, i), l.b.as_mut_slice());
        }
    }
}

impl MlpGrads {
    pub fn for_each_tensor(&self, prefix: &str, f: &mut impl FnMut(String, &[f64])) {
        for (i, l) in self.layers.iter().enumerate() {
            f(format!("{}.{}.w", prefix, i), l.d_w.as_slice());
            f(format!("{}.{}.b", prefix, i), l.d_b.as_slice());
        }
    }

    pub fn zeros_like(mlp: &Mlp) -> MlpGrads {
        MlpGrads {
            layers: mlp
                .layers
                .iter()
                .map(|l| LinearGrad {
                    d_w: DMatrix::zeros(l.w.nrows(), l.w.ncols()),
                    d_b: DVector::zeros(l.b.len()),
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.d_w += &b.d_w;
            a.d_b += &b.d_b;
        }
    }
}
