use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::motion::Motion;

use super::model::{softmax, ClassifierModel};

/// Loss whose input gradient [`input_gradient`] computes.
#[derive(Debug, Clone, PartialEq)]
pub enum LossSpec {
    /// `CE(onehot(label), Φ(x'))`.
    CrossEntropy { label: usize },
    /// `−CE(Φ(x), Φ(x'))` with `Φ(x)` given: pushes the prediction on `x'`
    /// away from the clean prediction.
    NegatedCrossEntropy { clean_scores: Array1<f64> },
}

/// Value of `loss` at `motion` and its exact gradient, in motion units.
pub fn input_gradient(
    model: &ClassifierModel,
    motion: &Motion,
    loss: &LossSpec,
) -> Result<(f64, Array2<f64>)> {
    let z = model.encode(motion)?;
    let n = z.len();
    let acts = model.forward(z.into_shape_with_order((1, n)).expect("row vector"));
    let logits = acts.logits.row(0);
    let q = softmax(logits);
    let classes = model.classes();
    let (value, dlogits) = match loss {
        LossSpec::CrossEntropy { label } => {
            if *label >= classes {
                return Err(Error::LabelOutOfRange {
                    label: *label,
                    classes,
                });
            }
            let mut d = q.clone();
            d[*label] -= 1.0;
            (-log_softmax(logits.to_owned())[*label], d)
        }
        LossSpec::NegatedCrossEntropy { clean_scores: p } => {
            if p.len() != classes {
                return Err(Error::DimensionMismatch(format!(
                    "clean scores have {} entries for {classes} classes",
                    p.len()
                )));
            }
            // Σ p log q has logit gradient p − q·Σp.
            let value = p.dot(&log_softmax(logits.to_owned()));
            (value, p - &(&q * p.sum()))
        }
    };
    let (_, dinput) = model.backward(&acts, dlogits.insert_axis(ndarray::Axis(0)));
    Ok((value, model.decode_gradient(dinput.row(0))))
}

fn log_softmax(z: Array1<f64>) -> Array1<f64> {
    let max = z.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let lse = max + z.mapv(|v| (v - max).exp()).sum().ln();
    z - lse
}
