//! Manually differentiated feed-forward classifier.
//!
//! Dense ReLU layers with a softmax cross-entropy head. Weights are stored
//! `out x in` so the layerwise gradient has the same `n x m` orientation the
//! projection machinery expects. `forward_backward` is a pure function of
//! `(model, batch)`; the finite-difference harness in `verify` pins its
//! gradients.

use std::collections::BTreeMap;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gauss::GaussStream;
use crate::matrix::Matrix;
use crate::optim::{ParamGroup, ParamShape, Policy};

#[derive(Debug, Clone)]
pub struct MlpModel {
    dims: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Matrix>,
}

impl MlpModel {
    /// He-initialized network over the given layer dims
    /// (e.g. `[784, 768, 768, 10]`).
    pub fn new(dims: &[usize], seed: u64) -> Result<Self> {
        Self::init(dims, Some(seed))
    }

    /// All-zero weights; uniform logits regardless of input.
    pub fn zeroed(dims: &[usize]) -> Result<Self> {
        Self::init(dims, None)
    }

    fn init(dims: &[usize], seed: Option<u64>) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::config(
                "model needs at least input and output dims".to_string(),
            ));
        }
        if dims.contains(&0) {
            return Err(Error::config("layer dims must be positive".to_string()));
        }
        let mut stream = seed.map(GaussStream::new);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let w = match stream.as_mut() {
                Some(s) => {
                    let scale = (2.0 / fan_in as f64).sqrt();
                    Matrix::from_fn(fan_out, fan_in, |_, _| s.next_gauss() * scale)
                }
                None => Matrix::zeros(fan_out, fan_in),
            };
            weights.push(w);
            biases.push(Matrix::zeros(1, fan_out));
        }
        Ok(MlpModel {
            dims: dims.to_vec(),
            weights,
            biases,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn n_classes(&self) -> usize {
        *self.dims.last().expect("dims nonempty")
    }

    pub fn weight(&self, layer: usize) -> &Matrix {
        &self.weights[layer]
    }

    pub fn bias(&self, layer: usize) -> &Matrix {
        &self.biases[layer]
    }

    pub fn set_weight(&mut self, layer: usize, w: Matrix) -> Result<()> {
        if w.shape() != self.weights[layer].shape() {
            return Err(Error::shape(format!(
                "layer {layer} weight is {:?}, got {:?}",
                self.weights[layer].shape(),
                w.shape()
            )));
        }
        self.weights[layer] = w;
        Ok(())
    }

    pub fn weight_id(layer: usize) -> String {
        format!("w{layer}")
    }

    pub fn bias_id(layer: usize) -> String {
        format!("b{layer}")
    }

    /// Parameter groups for the optimizer: weight matrices are eligible for
    /// compression, bias vectors follow the naive procedure.
    pub fn param_groups(&self) -> Vec<ParamGroup> {
        let mut groups = Vec::new();
        for (l, w) in self.weights.iter().enumerate() {
            groups.push(ParamGroup {
                id: Self::weight_id(l),
                shape: ParamShape::Mat {
                    rows: w.rows(),
                    cols: w.cols(),
                },
                policy: Policy::Compressed,
            });
            groups.push(ParamGroup {
                id: Self::bias_id(l),
                shape: ParamShape::Vector {
                    len: self.biases[l].cols(),
                },
                policy: Policy::Naive,
            });
        }
        groups
    }

    /// Adds deltas (keyed like `param_groups`, biases as `1 x len`) in place.
    pub fn apply_deltas(&mut self, deltas: &BTreeMap<String, Matrix>) -> Result<()> {
        for (key, delta) in deltas {
            let target = self.param_mut(key)?;
            target.add_assign_scaled(delta, 1.0)?;
        }
        Ok(())
    }

    fn param_mut(&mut self, id: &str) -> Result<&mut Matrix> {
        let (kind, idx) = id.split_at(1);
        let layer: usize = idx
            .parse()
            .map_err(|_| Error::state(format!("unknown parameter id {id:?}")))?;
        match kind {
            "w" if layer < self.weights.len() => Ok(&mut self.weights[layer]),
            "b" if layer < self.biases.len() => Ok(&mut self.biases[layer]),
            _ => Err(Error::state(format!("unknown parameter id {id:?}"))),
        }
    }

    /// Forward pass to logits, `batch x classes`.
    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        let mut h = x.clone();
        for l in 0..self.n_layers() {
            h = self.layer_forward(l, &h)?;
            if l + 1 < self.n_layers() {
                relu_in_place(&mut h);
            }
        }
        Ok(h)
    }

    fn layer_forward(&self, layer: usize, h: &Matrix) -> Result<Matrix> {
        let mut z = h.matmul(&self.weights[layer].transpose())?;
        let b = &self.biases[layer];
        for i in 0..z.rows() {
            for j in 0..z.cols() {
                let v = z.get(i, j) + b.get(0, j);
                z.set(i, j, v);
            }
        }
        if !z.is_finite() {
            return Err(Error::data(format!(
                "non-finite activation in layer {layer}"
            )));
        }
        Ok(z)
    }

    /// Mean cross-entropy over the batch plus gradients for every parameter.
    pub fn forward_backward(
        &self,
        x: &Matrix,
        labels: &[usize],
    ) -> Result<(f64, BTreeMap<String, Matrix>)> {
        let batch = x.rows();
        if batch == 0 {
            return Err(Error::state("empty batch".to_string()));
        }
        if labels.len() != batch {
            return Err(Error::shape(format!(
                "batch has {batch} rows but {} labels",
                labels.len()
            )));
        }
        if x.cols() != self.dims[0] {
            return Err(Error::shape(format!(
                "features are {}-dimensional, model expects {}",
                x.cols(),
                self.dims[0]
            )));
        }
        let classes = self.n_classes();
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::data(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }

        // Forward, keeping post-activation values for the backward pass.
        let mut acts: Vec<Matrix> = Vec::with_capacity(self.n_layers() + 1);
        acts.push(x.clone());
        for l in 0..self.n_layers() {
            let mut z = self.layer_forward(l, &acts[l])?;
            if l + 1 < self.n_layers() {
                relu_in_place(&mut z);
            }
            acts.push(z);
        }

        // Softmax cross-entropy; dz = (softmax - onehot) / batch.
        let logits = &acts[self.n_layers()];
        let mut dz = Matrix::zeros(batch, classes);
        let mut loss = 0.0;
        let inv_batch = 1.0 / batch as f64;
        for i in 0..batch {
            let row = logits.row(i);
            let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let mut denom = 0.0;
            for &v in row {
                denom += (v - max).exp();
            }
            let log_denom = denom.ln();
            loss += -(row[labels[i]] - max - log_denom);
            for (j, &v) in row.iter().enumerate() {
                let p = (v - max).exp() / denom;
                let target = if j == labels[i] { 1.0 } else { 0.0 };
                dz.set(i, j, (p - target) * inv_batch);
            }
        }
        loss *= inv_batch;

        let mut grads = BTreeMap::new();
        for l in (0..self.n_layers()).rev() {
            let grad_w = dz.transpose().matmul(&acts[l])?;
            let mut grad_b = Matrix::zeros(1, dz.cols());
            for i in 0..dz.rows() {
                for j in 0..dz.cols() {
                    let v = grad_b.get(0, j) + dz.get(i, j);
                    grad_b.set(0, j, v);
                }
            }
            grads.insert(Self::weight_id(l), grad_w);
            grads.insert(Self::bias_id(l), grad_b);
            if l > 0 {
                let mut dh = dz.matmul(&self.weights[l])?;
                // ReLU mask from the stored post-activation values.
                for (d, &a) in dh.data_mut().iter_mut().zip(acts[l].data()) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
                dz = dh;
            }
        }
        Ok((loss, grads))
    }

    /// Classification accuracy in percent over (a prefix of) a dataset.
    pub fn accuracy(&self, data: &Dataset, limit: Option<usize>) -> Result<f64> {
        let total = limit.map_or(data.len(), |l| l.min(data.len()));
        if total == 0 {
            return Err(Error::state("accuracy over empty dataset".to_string()));
        }
        let mut correct = 0usize;
        let mut start = 0usize;
        while start < total {
            let end = (start + 256).min(total);
            let idxs: Vec<usize> = (start..end).collect();
            let (x, labels) = data.batch(&idxs);
            let logits = self.logits(&x)?;
            for (i, &label) in labels.iter().enumerate() {
                let row = logits.row(i);
                let mut best = 0usize;
                for j in 1..row.len() {
                    if row[j] > row[best] {
                        best = j;
                    }
                }
                if best == label {
                    correct += 1;
                }
            }
            start = end;
        }
        Ok(100.0 * correct as f64 / total as f64)
    }
}

fn relu_in_place(m: &mut Matrix) {
    for v in m.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}
