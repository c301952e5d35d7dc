use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::DrlError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Linear,
    /// Logistic output in `(0, 1)`.
    Sigmoid,
}

/// Fully connected network with rectifier hidden units, parameters kept in
/// one flat vector: for each layer the `out x in` weights row by row, then
/// the `out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    widths: Vec<usize>,
    output: OutputActivation,
    params: Vec<f64>,
}

/// Activations of one batched forward pass, kept for backprop.
#[derive(Debug, Clone)]
pub struct Tape {
    batch: usize,
    /// `acts[0]` is the input, `acts[l]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("tape holds the input at least")
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl DenseNet {
    /// Weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], output: OutputActivation, rng: &mut R) -> Self {
        assert!(widths.len() >= 2, "need input and output widths");
        let mut params = Vec::with_capacity(Self::count(widths));
        for w in widths.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..(w[0] + 1) * w[1] {
                params.push(rng.random_range(-bound..=bound));
            }
        }
        Self {
            widths: widths.to_vec(),
            output,
            params,
        }
    }

    pub fn from_params(widths: &[usize], output: OutputActivation, params: Vec<f64>) -> Result<Self, DrlError> {
        if widths.len() < 2 || params.len() != Self::count(widths) {
            return Err(DrlError::Shape(format!(
                "widths {widths:?} need {} parameters, got {}",
                Self::count(widths),
                params.len()
            )));
        }
        Ok(Self {
            widths: widths.to_vec(),
            output,
            params,
        })
    }

    fn count(widths: &[usize]) -> usize {
        widths.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.widths == other.widths && self.output == other.output
    }

    /// `x` holds `batch` rows of `input_dim` values.
    pub fn forward(&self, x: &[f64], batch: usize) -> Tape {
        assert_eq!(x.len(), batch * self.input_dim(), "input shape");
        let n_layers = self.widths.len() - 1;
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(x.to_vec());
        let mut offset = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let w = &self.params[offset..offset + n_in * n_out];
            let b = &self.params[offset + n_in * n_out..offset + (n_in + 1) * n_out];
            offset += (n_in + 1) * n_out;
            let input = &acts[l];
            let mut out = vec![0.0; batch * n_out];
            for m in 0..batch {
                let xi = &input[m * n_in..(m + 1) * n_in];
                let yo = &mut out[m * n_out..(m + 1) * n_out];
                for (j, y) in yo.iter_mut().enumerate() {
                    let row = &w[j * n_in..(j + 1) * n_in];
                    let z = b[j] + row.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>();
                    *y = if l + 1 < n_layers {
                        z.max(0.0)
                    } else {
                        match self.output {
                            OutputActivation::Linear => z,
                            OutputActivation::Sigmoid => sigmoid(z),
                        }
                    };
                }
            }
            acts.push(out);
        }
        Tape { batch, acts }
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x, x.len() / self.input_dim()).output().to_vec()
    }

    /// Accumulates `d(sum of d_out * output)/d(params)` into `grad` and, when
    /// asked, writes the gradient with respect to the input rows.
    pub fn backward(&self, tape: &Tape, d_out: &[f64], grad: &mut [f64], mut d_input: Option<&mut [f64]>) {
        let batch = tape.batch;
        let n_layers = self.widths.len() - 1;
        assert_eq!(d_out.len(), batch * self.output_dim(), "output gradient shape");
        assert_eq!(grad.len(), self.params.len(), "parameter gradient shape");

        let mut delta: Vec<f64> = match self.output {
            OutputActivation::Linear => d_out.to_vec(),
            OutputActivation::Sigmoid => d_out
                .iter()
                .zip(tape.output())
                .map(|(g, y)| g * y * (1.0 - y))
                .collect(),
        };

        let mut offsets = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for l in 0..n_layers {
            offsets.push(offset);
            offset += (self.widths[l] + 1) * self.widths[l + 1];
        }

        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let off = offsets[l];
            let input = &tape.acts[l];
            {
                let (gw, gb) = grad[off..off + (n_in + 1) * n_out].split_at_mut(n_in * n_out);
                for m in 0..batch {
                    let xi = &input[m * n_in..(m + 1) * n_in];
                    for j in 0..n_out {
                        let d = delta[m * n_out + j];
                        if d == 0.0 {
                            continue;
                        }
                        gb[j] += d;
                        for (g, x) in gw[j * n_in..(j + 1) * n_in].iter_mut().zip(xi) {
                            *g += d * x;
                        }
                    }
                }
            }
            if l == 0 && d_input.is_none() {
                break;
            }
            let w = &self.params[off..off + n_in * n_out];
            let mut prev = vec![0.0; batch * n_in];
            for m in 0..batch {
                let p = &mut prev[m * n_in..(m + 1) * n_in];
                for j in 0..n_out {
                    let d = delta[m * n_out + j];
                    if d == 0.0 {
                        continue;
                    }
                    for (pv, wv) in p.iter_mut().zip(&w[j * n_in..(j + 1) * n_in]) {
                        *pv += d * wv;
                    }
                }
            }
            if l > 0 {
                for (pv, a) in prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *pv = 0.0;
                    }
                }
            } else if let Some(out) = d_input.as_deref_mut() {
                out.copy_from_slice(&prev);
            }
            delta = prev;
        }
    }

    /// `self <- phi * online + (1 - phi) * self`.
    pub fn soft_update_from(&mut self, online: &Self, phi: f64) {
        debug_assert!(self.same_shape(online));
        for (t, o) in self.params.iter_mut().zip(&online.params) {
            *t = phi * o + (1.0 - phi) * *t;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = a.iter().chain(b).map(|x| x * x).sum::<f64>().sqrt();
        diff / scale.max(1e-12)
    }

    fn numeric_grad(net: &DenseNet, x: &[f64], batch: usize, weights: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        let f = |n: &DenseNet| -> f64 {
            n.forward(x, batch).output().iter().zip(weights).map(|(y, w)| y * w).sum()
        };
        (0..net.num_params())
            .map(|i| {
                let mut p = net.clone();
                p.params_mut()[i] += h;
                let up = f(&p);
                p.params_mut()[i] -= 2.0 * h;
                (up - f(&p)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for output in [OutputActivation::Linear, OutputActivation::Sigmoid] {
            let net = DenseNet::new(&[3, 6, 5, 1], output, &mut rng);
            let batch = 4;
            let x: Vec<f64> = (0..batch * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..batch).map(|_| rng.random_range(-1.0..1.0)).collect();
            let tape = net.forward(&x, batch);
            let mut grad = vec![0.0; net.num_params()];
            let mut dx = vec![0.0; x.len()];
            net.backward(&tape, &w, &mut grad, Some(&mut dx));
            assert!(rel_err(&grad, &numeric_grad(&net, &x, batch, &w)) < 1e-6);

            let h = 1e-6;
            let f = |x: &[f64]| -> f64 { net.forward(x, batch).output().iter().zip(&w).map(|(y, w)| y * w).sum() };
            let num_dx: Vec<f64> = (0..x.len())
                .map(|i| {
                    let mut xp = x.clone();
                    xp[i] += h;
                    let up = f(&xp);
                    xp[i] -= 2.0 * h;
                    (up - f(&xp)) / (2.0 * h)
                })
                .collect();
            assert!(rel_err(&dx, &num_dx) < 1e-6);
        }
    }

    #[test]
    fn single_layer_linear_gradient_is_input() {
        let net = DenseNet::from_params(&[2, 1], OutputActivation::Linear, vec![0.5, -1.0, 0.25]).unwrap();
        let tape = net.forward(&[2.0, 3.0], 1);
        assert_eq!(tape.output(), &[0.5 * 2.0 - 3.0 + 0.25]);
        let mut g = vec![0.0; 3];
        net.backward(&tape, &[1.0], &mut g, None);
        assert_eq!(g, vec![2.0, 3.0, 1.0]);
    }

    #[test]
    fn sigmoid_output_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = DenseNet::new(&[2, 8, 1], OutputActivation::Sigmoid, &mut rng);
        for p in net.params_mut() {
            *p *= 300.0;
        }
        for x in [[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [-5.0, 7.0]] {
            let y = net.predict(&x)[0];
            assert!((0.0..=1.0).contains(&y) && y.is_finite());
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        assert!(DenseNet::from_params(&[2, 3, 1], OutputActivation::Linear, vec![0.0; 5]).is_err());
    }

    #[test]
    fn soft_update_examples() {
        let online = DenseNet::from_params(&[1, 1], OutputActivation::Linear, vec![1.0, 1.0]).unwrap();
        let mut target = DenseNet::from_params(&[1, 1], OutputActivation::Linear, vec![0.0, 0.0]).unwrap();
        target.soft_update_from(&online, 5e-3);
        assert_eq!(target.params(), &[0.005, 0.005]);
        target.soft_update_from(&online, 0.0);
        assert_eq!(target.params(), &[0.005, 0.005]);
        target.soft_update_from(&online, 1.0);
        assert_eq!(target.params(), online.params());
    }
}
