use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_mismatch, Error, Result};
use crate::features::Frame;
use crate::numerics::{
    conv2d, load_tensor, save_tensor, softmax, tanh_backward, Dense, LstmParams, Padding, Parameters, SeededRng, Tensor,
};

use super::AttentionMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierShape {
    pub inputs: usize,
    pub proj: usize,
    pub hidden: usize,
    pub classes: usize,
}

/// Input projection (tanh), an LSTM over the frame sequence, and a dense
/// readout of the final hidden state.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierParams {
    pub proj: Dense,
    pub lstm: LstmParams,
    pub readout: Dense,
}

const TENSOR_NAMES: [&str; 7] = [
    "proj_weight",
    "proj_bias",
    "lstm_w_x",
    "lstm_w_h",
    "lstm_bias",
    "readout_weight",
    "readout_bias",
];

impl ClassifierParams {
    pub fn new(shape: ClassifierShape, rng: &mut SeededRng) -> Result<Self> {
        if shape.inputs == 0 || shape.proj == 0 || shape.hidden == 0 || shape.classes < 2 {
            return Err(invalid(format!("bad classifier shape {shape:?}")));
        }
        Ok(Self {
            proj: Dense::new(shape.inputs, shape.proj, rng),
            lstm: LstmParams::new(shape.proj, shape.hidden, rng),
            readout: Dense::new(shape.hidden, shape.classes, rng),
        })
    }

    pub fn shape(&self) -> ClassifierShape {
        ClassifierShape {
            inputs: self.proj.inputs(),
            proj: self.proj.outputs(),
            hidden: self.lstm.hidden(),
            classes: self.readout.outputs(),
        }
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        for (name, t) in TENSOR_NAMES.iter().zip(self.tensors()) {
            save_tensor(dir.join(format!("{name}.pdnt")), t)?;
        }
        fs::write(
            dir.join("classifier.json"),
            serde_json::to_string_pretty(&self.shape())? + "\n",
        )?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let shape: ClassifierShape = serde_json::from_str(&fs::read_to_string(dir.join("classifier.json"))?)?;
        let mut params = Self::new(shape, &mut SeededRng::new(0))?;
        for (name, t) in TENSOR_NAMES.iter().zip(params.tensors_mut()) {
            let loaded = load_tensor(dir.join(format!("{name}.pdnt")))?;
            if loaded.shape() != t.shape() {
                return Err(Error::Format(format!(
                    "{name}: stored shape {:?}, expected {:?}",
                    loaded.shape(),
                    t.shape()
                )));
            }
            *t = loaded;
        }
        Ok(params)
    }
}

impl Parameters for ClassifierParams {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut v = self.proj.tensors();
        v.extend(self.lstm.tensors());
        v.extend(self.readout.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.proj.tensors_mut();
        v.extend(self.lstm.tensors_mut());
        v.extend(self.readout.tensors_mut());
        v
    }
}

fn project(seq: &[Vec<f64>], p: &ClassifierParams) -> Result<Vec<Vec<f64>>> {
    if seq.is_empty() {
        return Err(invalid("cannot classify an empty sequence"));
    }
    seq.iter()
        .map(|x| Ok(p.proj.forward(x)?.into_iter().map(f64::tanh).collect()))
        .collect()
}

/// Class distribution for a sequence of attended feature vectors.
pub fn classify_event(seq: &[Vec<f64>], p: &ClassifierParams) -> Result<Vec<f64>> {
    let xs = project(seq, p)?;
    let (states, _) = p.lstm.forward_sequence(&xs)?;
    let logits = p.readout.forward(&states.last().expect("nonempty").h)?;
    Ok(softmax(&logits))
}

/// Cross-entropy of `label` and its gradient with respect to every parameter.
pub fn classifier_loss_grad(seq: &[Vec<f64>], label: usize, p: &ClassifierParams) -> Result<(f64, ClassifierParams)> {
    if label >= p.readout.outputs() {
        return Err(invalid(format!("label {label} out of range")));
    }
    let xs = project(seq, p)?;
    let (states, caches) = p.lstm.forward_sequence(&xs)?;
    let h_last = &states.last().expect("nonempty").h;
    let probs = softmax(&p.readout.forward(h_last)?);
    let loss = -probs[label].max(f64::MIN_POSITIVE).ln();

    let mut grads = p.zeros_like();
    let mut dlogits = probs;
    dlogits[label] -= 1.0;
    let dh = p.readout.backward(h_last, &dlogits, &mut grads.readout);
    let mut dhs = vec![vec![0.0; p.lstm.hidden()]; xs.len()];
    *dhs.last_mut().expect("nonempty") = dh;
    let dxs = p.lstm.backward_sequence(&caches, &dhs, &mut grads.lstm);
    for ((x, y), dy) in seq.iter().zip(&xs).zip(&dxs) {
        let dpre = tanh_backward(y, dy);
        p.proj.backward(x, &dpre, &mut grads.proj);
    }
    Ok((loss, grads))
}

fn standardize(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
    if sd > 1e-12 {
        v.iter_mut().for_each(|x| *x = (*x - mean) / sd);
    } else {
        v.fill(0.0);
    }
    v
}

/// Per frame: a 3x3 box-filtered grayscale map, weighted by `att`, summed
/// over `pool x pool` cells, then standardized across cells.
pub fn attended_features(frames: &[Frame], att: &AttentionMap, pool: usize) -> Result<Vec<Vec<f64>>> {
    let n = att.n();
    if pool == 0 || !n.is_multiple_of(pool) {
        return Err(invalid(format!("pool size {pool} must divide {n}")));
    }
    let box3 = Tensor::filled(&[3, 3], 1.0 / 9.0);
    let cells = n / pool;
    frames
        .iter()
        .map(|f| {
            if f.height() != n || f.width() != n {
                return Err(shape_mismatch(&[n, n], &[f.height(), f.width()]));
            }
            let fm = conv2d(&Tensor::new(vec![n, n], f.gray())?, &box3, Padding::Same)?;
            let mut out = vec![0.0; cells * cells];
            for i in 0..n {
                for j in 0..n {
                    out[(i / pool) * cells + j / pool] += fm.get2(i, j) * att.get(i, j);
                }
            }
            Ok(standardize(out))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_params, relative_error};

    fn shape() -> ClassifierShape {
        ClassifierShape {
            inputs: 6,
            proj: 5,
            hidden: 4,
            classes: 3,
        }
    }

    fn seq(rng: &mut SeededRng) -> Vec<Vec<f64>> {
        (0..4).map(|_| rng.uniform_vec(6, 1.0)).collect()
    }

    #[test]
    fn distribution_sums_to_one() {
        let mut rng = SeededRng::new(1);
        let p = ClassifierParams::new(shape(), &mut rng).unwrap();
        let probs = classify_event(&seq(&mut rng), &p).unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_readout_is_uniform() {
        let mut rng = SeededRng::new(2);
        let mut p = ClassifierParams::new(shape(), &mut rng).unwrap();
        p.readout = Dense::zeros(4, 3);
        for v in classify_event(&seq(&mut rng), &p).unwrap() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..20 {
            let mut rng = SeededRng::new(100 + seed);
            let p = ClassifierParams::new(shape(), &mut rng).unwrap();
            let xs = seq(&mut rng);
            let label = rng.below(3);
            let (_, analytic) = classifier_loss_grad(&xs, label, &p).unwrap();
            let numeric = finite_diff_params(&p, |q| classifier_loss_grad(&xs, label, q).unwrap().0, 1e-5).unwrap();
            let err = relative_error(&analytic, &numeric);
            assert!(err <= 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn errors() {
        let mut rng = SeededRng::new(3);
        let p = ClassifierParams::new(shape(), &mut rng).unwrap();
        assert!(classify_event(&[], &p).is_err());
        assert!(classify_event(&[vec![0.0; 5]], &p).is_err());
        assert!(classifier_loss_grad(&seq(&mut rng), 3, &p).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = ClassifierParams::new(shape(), &mut SeededRng::new(4)).unwrap();
        p.save(dir.path()).unwrap();
        assert_eq!(ClassifierParams::load(dir.path()).unwrap(), p);
    }

    #[test]
    fn attention_gates_features() {
        let f = Frame::from_fn(16, 16, |_, _| [0.5; 3]).unwrap();
        let zero = attended_features(std::slice::from_ref(&f), &AttentionMap::zeros(16), 8).unwrap();
        assert!(zero[0].iter().all(|&v| v == 0.0));
        let mut spot = vec![0.0; 256];
        spot[0] = 1.0;
        let full = attended_features(&[f], &AttentionMap::new(16, spot).unwrap(), 8).unwrap();
        assert_eq!(full[0].len(), 4);
        assert!((full[0][0] - 3f64.sqrt()).abs() < 1e-12);
        assert!(full[0][1..].iter().all(|&v| (v + 1.0 / 3f64.sqrt()).abs() < 1e-12));
        assert!(attended_features(&[], &AttentionMap::zeros(16), 5).is_err());
    }
}
