//! The built-in classifier: a fully connected network over the flattened,
//! per-DoF normalized motion with `tanh` hidden layers and a softmax output.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::{Motion, Representation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `out × in`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Per-DoF input normalization `(x − mean) / scale`, shared by all frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalization {
    pub fn identity(dofs: usize) -> Self {
        Self {
            mean: vec![0.0; dofs],
            scale: vec![1.0; dofs],
        }
    }

    /// Mean and standard deviation per DoF over every frame of every motion.
    /// Scales are floored at a tenth of the mean scale so nearly constant
    /// DoFs do not dominate the input.
    pub fn fit<'a>(motions: impl IntoIterator<Item = &'a Motion>) -> Result<Self> {
        let mut sum: Option<Array1<f64>> = None;
        let mut sq: Option<Array1<f64>> = None;
        let mut count = 0usize;
        for m in motions {
            let s = m.frames().sum_axis(Axis(0));
            let q = m.frames().mapv(|v| v * v).sum_axis(Axis(0));
            match (&mut sum, &mut sq) {
                (Some(a), Some(b)) => {
                    if a.len() != s.len() {
                        return Err(Error::DimensionMismatch(
                            "motions with different dof counts".into(),
                        ));
                    }
                    *a += &s;
                    *b += &q;
                }
                _ => {
                    sum = Some(s);
                    sq = Some(q);
                }
            }
            count += m.n_frames();
        }
        let (sum, sq) = match (sum, sq) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::EmptyBatch),
        };
        let c = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / c).collect();
        let std: Vec<f64> = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| (q / c - m * m).max(0.0).sqrt())
            .collect();
        let floor = 0.1 * std.iter().sum::<f64>() / std.len() as f64;
        let floor = if floor > 0.0 { floor } else { 1.0 };
        Ok(Self {
            mean,
            scale: std.into_iter().map(|s| s.max(floor)).collect(),
        })
    }
}

/// Hidden activations of one forward pass, kept for backpropagation.
pub(crate) struct Activations {
    /// Input followed by each hidden layer output, `B × width`.
    pub(crate) layers: Vec<Array2<f64>>,
    pub(crate) logits: Array2<f64>,
}

/// Trainable feedforward classifier over fixed-length motions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    n_frames: usize,
    dofs: usize,
    classes: usize,
    representation: Representation,
    normalization: Normalization,
    layers: Vec<Layer>,
}

pub(crate) fn softmax(logits: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let e = logits.mapv(|v| (v - max).exp());
    let s = e.sum();
    e / s
}

/// First index of the maximum.
pub(crate) fn argmax(v: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl ClassifierModel {
    /// Glorot-uniform weights and zero biases.
    pub fn new_random<R: Rng + ?Sized>(
        n_frames: usize,
        dofs: usize,
        classes: usize,
        representation: Representation,
        hidden: &[usize],
        normalization: Normalization,
        rng: &mut R,
    ) -> Result<Self> {
        let mut model = Self::zeros(n_frames, dofs, classes, representation, hidden, normalization)?;
        for layer in &mut model.layers {
            let (out, inp) = layer.weights.dim();
            let bound = (6.0 / (inp + out) as f64).sqrt();
            layer
                .weights
                .mapv_inplace(|_| rng.random_range(-bound..bound));
        }
        Ok(model)
    }

    /// All weights and biases zero: every input scores uniformly.
    pub fn zeros(
        n_frames: usize,
        dofs: usize,
        classes: usize,
        representation: Representation,
        hidden: &[usize],
        normalization: Normalization,
    ) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidConfig(vec![format!(
                "classes: need at least 2, got {classes}"
            )]));
        }
        if n_frames == 0 || dofs == 0 || hidden.contains(&0) {
            return Err(Error::InvalidConfig(vec![
                "layer sizes must be positive".into()
            ]));
        }
        if normalization.mean.len() != dofs || normalization.scale.len() != dofs {
            return Err(Error::DimensionMismatch(format!(
                "normalization for {} dofs, model has {dofs}",
                normalization.mean.len()
            )));
        }
        let mut widths = vec![n_frames * dofs];
        widths.extend_from_slice(hidden);
        widths.push(classes);
        let layers = widths
            .windows(2)
            .map(|w| Layer {
                weights: Array2::zeros((w[1], w[0])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Ok(Self {
            n_frames,
            dofs,
            classes,
            representation,
            normalization,
            layers,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn dofs(&self) -> usize {
        self.dofs
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_width(&self) -> usize {
        self.n_frames * self.dofs
    }

    pub fn check_input(&self, motion: &Motion) -> Result<()> {
        if motion.representation() != self.representation
            || motion.n_frames() != self.n_frames
            || motion.dofs() != self.dofs
        {
            return Err(Error::DimensionMismatch(format!(
                "model expects {:?} {}x{}, got {:?} {}x{}",
                self.representation,
                self.n_frames,
                self.dofs,
                motion.representation(),
                motion.n_frames(),
                motion.dofs()
            )));
        }
        Ok(())
    }

    /// Normalized, flattened network input.
    pub(crate) fn encode(&self, motion: &Motion) -> Result<Array1<f64>> {
        self.check_input(motion)?;
        let norm = &self.normalization;
        Ok(Array1::from_iter(motion.frames().indexed_iter().map(
            |((_, d), &v)| (v - norm.mean[d]) / norm.scale[d],
        )))
    }

    /// Stacks encoded inputs into a `B × in` matrix.
    pub(crate) fn encode_batch<'a>(
        &self,
        motions: impl IntoIterator<Item = &'a Motion>,
    ) -> Result<Array2<f64>> {
        let rows: Vec<Array1<f64>> = motions
            .into_iter()
            .map(|m| self.encode(m))
            .collect::<Result<_>>()?;
        let mut out = Array2::zeros((rows.len(), self.input_width()));
        for (i, r) in rows.into_iter().enumerate() {
            out.row_mut(i).assign(&r);
        }
        Ok(out)
    }

    pub(crate) fn forward(&self, inputs: Array2<f64>) -> Activations {
        let last = self.layers.len() - 1;
        let mut layers = vec![inputs];
        let mut logits = None;
        for (i, layer) in self.layers.iter().enumerate() {
            let prev = layers.last().expect("input present");
            let z = prev.dot(&layer.weights.t()) + &layer.bias;
            if i == last {
                logits = Some(z);
            } else {
                layers.push(z.mapv(f64::tanh));
            }
        }
        Activations {
            layers,
            logits: logits.expect("at least one layer"),
        }
    }

    /// Parameter gradients given `∂loss/∂logits`, plus `∂loss/∂input`
    /// (w.r.t. the normalized input).
    pub(crate) fn backward(
        &self,
        acts: &Activations,
        dlogits: Array2<f64>,
    ) -> (Vec<Layer>, Array2<f64>) {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = dlogits;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &acts.layers[i];
            grads.push(Layer {
                weights: delta.t().dot(input),
                bias: delta.sum_axis(Axis(0)),
            });
            let back = delta.dot(&layer.weights);
            delta = if i > 0 {
                back * &input.mapv(|h| 1.0 - h * h)
            } else {
                back
            };
        }
        grads.reverse();
        (grads, delta)
    }

    pub fn logits(&self, motion: &Motion) -> Result<Array1<f64>> {
        let z = self.encode(motion)?;
        let n = z.len();
        let acts = self.forward(z.into_shape_with_order((1, n)).expect("row vector"));
        Ok(acts.logits.row(0).to_owned())
    }

    /// Softmax class probabilities.
    pub fn predict_scores(&self, motion: &Motion) -> Result<Array1<f64>> {
        Ok(softmax(self.logits(motion)?.view()))
    }

    /// Argmax of the scores, ties broken toward the lower class index.
    /// This does not count as a query; go through a
    /// [`ClassifierHandle`](super::ClassifierHandle) for counted access.
    pub fn predict(&self, motion: &Motion) -> Result<usize> {
        Ok(argmax(self.predict_scores(motion)?.view()))
    }

    /// Maps a gradient w.r.t. the normalized input back to motion units.
    pub(crate) fn decode_gradient(&self, g: ArrayView1<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_frames, self.dofs));
        for ((t, d), v) in out.indexed_iter_mut() {
            *v = g[t * self.dofs + d] / self.normalization.scale[d];
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn motion(n: usize, m: usize, seed: u64) -> Motion {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Motion::from_flat(
            Representation::PositionSpace,
            n,
            m,
            (0..n * m).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    fn model(seed: u64) -> ClassifierModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ClassifierModel::new_random(
            3,
            2,
            4,
            Representation::PositionSpace,
            &[5, 4],
            Normalization::identity(2),
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn scores_are_a_distribution() {
        let m = model(1);
        for s in 0..20 {
            let p = m.predict_scores(&motion(3, 2, s)).unwrap();
            assert!(p.iter().all(|&v| v >= 0.0));
            assert!((p.sum() - 1.0).abs() < 1e-9);
            assert_eq!(argmax(p.view()), m.predict(&motion(3, 2, s)).unwrap());
        }
    }

    #[test]
    fn zero_model_is_uniform_and_picks_class_zero() {
        let m = ClassifierModel::zeros(
            3,
            2,
            5,
            Representation::PositionSpace,
            &[4],
            Normalization::identity(2),
        )
        .unwrap();
        let p = m.predict_scores(&motion(3, 2, 9)).unwrap();
        for v in p.iter() {
            assert!((v - 0.2).abs() < 1e-15);
        }
        assert_eq!(m.predict(&motion(3, 2, 9)).unwrap(), 0);
    }

    #[test]
    fn rejects_wrong_shape() {
        let m = model(2);
        assert!(matches!(
            m.predict(&motion(4, 2, 0)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn deterministic_given_seed() {
        assert_eq!(model(5), model(5));
        assert_ne!(model(5), model(6));
    }

    #[test]
    fn normalization_fit() {
        let a = Motion::new(
            Representation::PositionSpace,
            ndarray::array![[1.0, 5.0], [3.0, 5.0]],
        )
        .unwrap();
        let n = Normalization::fit([&a]).unwrap();
        assert_eq!(n.mean, vec![2.0, 5.0]);
        assert_eq!(n.scale[0], 1.0);
        // constant dof floored at a tenth of the mean scale
        assert!((n.scale[1] - 0.05).abs() < 1e-15);
    }
}
