use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
    Sigmoid,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Fully connected network shape. `layer_sizes` includes input and output.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    #[serde(default = "default_hidden")]
    pub hidden_activation: Activation,
    #[serde(default = "default_output")]
    pub output_activation: Activation,
}

fn default_hidden() -> Activation {
    Activation::Relu
}

fn default_output() -> Activation {
    Activation::Identity
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, output_activation: Activation) -> Result<Self> {
        let spec = Self {
            layer_sizes,
            hidden_activation: Activation::Relu,
            output_activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `input -> hidden.. -> output` with rectifier hidden layers.
    pub fn with_hidden(
        input: usize,
        hidden: &[usize],
        output: usize,
        output_activation: Activation,
    ) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        Self::new(sizes, output_activation)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 3 {
            return Err(Error::config("mlp needs at least one hidden layer"));
        }
        if self.layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::config("mlp layer sizes must be >= 1"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.num_layers() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    /// Offsets of `(weights, biases)` for each layer in the flat vector.
    /// Weights are stored row-major as `out x in`.
    fn layout(&self) -> impl Iterator<Item = (usize, usize, usize, usize)> + '_ {
        let mut offset = 0;
        self.layer_sizes.windows(2).map(move |w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let w_off = offset;
            let b_off = w_off + fan_in * fan_out;
            offset = b_off + fan_out;
            (fan_in, fan_out, w_off, b_off)
        })
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn zeros(&self) -> ParamSet {
        ParamSet(vec![0.0; self.param_count()])
    }

    /// Fan-in scaled uniform initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamSet {
        let mut p = vec![0.0; self.param_count()];
        for (fan_in, fan_out, w_off, b_off) in self.layout() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in &mut p[w_off..b_off + fan_out] {
                *v = rng.random_range(-bound..bound);
            }
        }
        ParamSet(p)
    }

    /// Stable 64-bit fingerprint used in checkpoint headers.
    pub fn spec_hash(&self) -> u64 {
        let mut h = Sha256::new();
        for s in &self.layer_sizes {
            h.update((*s as u64).to_le_bytes());
        }
        h.update(self.hidden_activation.name());
        h.update(b"/");
        h.update(self.output_activation.name());
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().unwrap())
    }

    /// Batched forward pass. `inputs` is row-major `batch x input_dim`.
    pub fn forward_batch(&self, params: &[f64], inputs: &[f64], batch: usize) -> Result<Tape> {
        if params.len() != self.param_count() {
            return Err(Error::dim("mlp params", self.param_count(), params.len()));
        }
        if inputs.len() != batch * self.input_dim() {
            return Err(Error::dim(
                "mlp input",
                batch * self.input_dim(),
                inputs.len(),
            ));
        }
        let mut activations = Vec::with_capacity(self.layer_sizes.len());
        activations.push(inputs.to_vec());
        for (layer, (fan_in, fan_out, w_off, b_off)) in self.layout().enumerate() {
            let x = activations.last().unwrap();
            let mut z = vec![0.0; batch * fan_out];
            for row in z.chunks_exact_mut(fan_out) {
                row.copy_from_slice(&params[b_off..b_off + fan_out]);
            }
            // z += x * W^T
            gemm(
                batch,
                fan_in,
                fan_out,
                x,
                (fan_in, 1),
                &params[w_off..b_off],
                (1, fan_in),
                &mut z,
                1.0,
            );
            let act = self.activation(layer);
            if act != Activation::Identity {
                for v in &mut z {
                    *v = act.apply(*v);
                }
            }
            activations.push(z);
        }
        Ok(Tape { batch, activations })
    }

    /// Reverse pass for a tape produced by [`MlpSpec::forward_batch`] with the
    /// same `params`. `grad_output` is `dL/d(output)`, row-major.
    pub fn backward(&self, params: &[f64], tape: &Tape, grad_output: &[f64]) -> Backprop {
        let batch = tape.batch;
        assert_eq!(grad_output.len(), batch * self.output_dim());
        let mut param_grad = vec![0.0; self.param_count()];
        let layers: Vec<_> = self.layout().collect();
        let mut delta = grad_output.to_vec();
        for (layer, &(fan_in, fan_out, w_off, b_off)) in layers.iter().enumerate().rev() {
            let y = &tape.activations[layer + 1];
            let act = self.activation(layer);
            if act != Activation::Identity {
                for (d, &yv) in delta.iter_mut().zip(y) {
                    *d *= act.derivative_from_output(yv);
                }
            }
            let x = &tape.activations[layer];
            // dW = delta^T * x
            gemm(
                fan_out,
                batch,
                fan_in,
                &delta,
                (1, fan_out),
                x,
                (fan_in, 1),
                &mut param_grad[w_off..b_off],
                0.0,
            );
            let db = &mut param_grad[b_off..b_off + fan_out];
            for row in delta.chunks_exact(fan_out) {
                for (g, d) in db.iter_mut().zip(row) {
                    *g += d;
                }
            }
            // dx = delta * W
            let mut dx = vec![0.0; batch * fan_in];
            gemm(
                batch,
                fan_out,
                fan_in,
                &delta,
                (fan_out, 1),
                &params[w_off..b_off],
                (fan_in, 1),
                &mut dx,
                0.0,
            );
            delta = dx;
        }
        Backprop {
            param_grad,
            input_grad: delta,
        }
    }
}

/// Cached layer outputs of one batched forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    batch: usize,
    activations: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.activations.last().unwrap()
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

#[derive(Debug, Clone)]
pub struct Backprop {
    pub param_grad: Vec<f64>,
    pub input_grad: Vec<f64>,
}

/// Flat weights and biases of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet(Vec<f64>);

impl ParamSet {
    pub fn from_vec(v: Vec<f64>) -> Self {
        Self(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// `self <- tau * source + (1 - tau) * self`.
    pub fn soft_update_from(&mut self, source: &ParamSet, tau: f64) {
        for (t, s) in self.0.iter_mut().zip(&source.0) {
            *t = tau * s + (1.0 - tau) * *t;
        }
    }
}

/// Evaluates a single input vector.
pub fn forward(spec: &MlpSpec, params: &ParamSet, input: &[f64]) -> Result<Vec<f64>> {
    Ok(spec
        .forward_batch(params.as_slice(), input, 1)?
        .output()
        .to_vec())
}

/// Gradient of a scalar loss of the network outputs with respect to the
/// parameters. `loss` receives the batched outputs and returns the loss value
/// together with `dL/d(outputs)`.
pub fn grad<F>(
    spec: &MlpSpec,
    params: &ParamSet,
    inputs: &[f64],
    batch: usize,
    loss: F,
) -> Result<(f64, Vec<f64>)>
where
    F: FnOnce(&[f64]) -> (f64, Vec<f64>),
{
    let tape = spec.forward_batch(params.as_slice(), inputs, batch)?;
    let (value, g_out) = loss(tape.output());
    if g_out.len() != tape.output().len() {
        return Err(Error::dim("loss gradient", tape.output().len(), g_out.len()));
    }
    Ok((value, spec.backward(params.as_slice(), &tape, &g_out).param_grad))
}

/// `C = A * B + beta * C` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(k == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above bound every index the kernel touches, and
    // `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcapprox::gradcheck::check_gradient;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_net_outputs_zero() {
        let spec = MlpSpec::with_hidden(3, &[4, 4], 2, Activation::Identity).unwrap();
        let out = forward(&spec, &spec.zeros(), &[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn hand_evaluated_chain() {
        let spec = MlpSpec::new(vec![1, 1, 1], Activation::Identity).unwrap();
        // w1, b1, w2, b2
        let p = ParamSet::from_vec(vec![1.0, 0.0, 1.0, 0.0]);
        assert_eq!(forward(&spec, &p, &[2.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn sigmoid_head_range() {
        let spec = MlpSpec::with_hidden(2, &[8], 3, Activation::Sigmoid).unwrap();
        let p = spec.init(&mut ChaCha8Rng::seed_from_u64(1));
        for x in [-50.0, -1.0, 0.0, 3.0, 40.0] {
            for y in forward(&spec, &p, &[x, -x]).unwrap() {
                assert!(y > 0.0 && y < 1.0);
            }
        }
    }

    #[test]
    fn spec_validation() {
        assert!(MlpSpec::new(vec![2, 3], Activation::Identity).is_err());
        assert!(MlpSpec::new(vec![2, 0, 3], Activation::Identity).is_err());
        let spec = MlpSpec::with_hidden(2, &[3], 1, Activation::Identity).unwrap();
        assert_eq!(spec.param_count(), 2 * 3 + 3 + 3 + 1);
        assert!(forward(&spec, &spec.zeros(), &[1.0]).is_err());
    }

    #[test]
    fn squared_error_gradient_on_linear_chain() {
        // identity hidden layer collapses to a linear 1-1 map
        let spec = MlpSpec {
            layer_sizes: vec![1, 1, 1],
            hidden_activation: Activation::Identity,
            output_activation: Activation::Identity,
        };
        let (w1, b1, w2, b2) = (0.7, 0.2, 1.3, -0.4);
        let p = ParamSet::from_vec(vec![w1, b1, w2, b2]);
        let (x, y) = (1.5, 0.25);
        let (_, g) = grad(&spec, &p, &[x], 1, |out| {
            let e = out[0] - y;
            (e * e, vec![2.0 * e])
        })
        .unwrap();
        let h = w1 * x + b1;
        let e = w2 * h + b2 - y;
        let expect = [2.0 * e * w2 * x, 2.0 * e * w2, 2.0 * e * h, 2.0 * e];
        for (a, b) in g.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let spec = MlpSpec::with_hidden(2, &[5], 1, Activation::Tanh).unwrap();
        let p = spec.init(&mut ChaCha8Rng::seed_from_u64(2));
        let (_, g) = grad(&spec, &p, &[0.3, 0.1], 1, |out| (1.0, vec![0.0; out.len()])).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for out_act in [Activation::Identity, Activation::Sigmoid, Activation::Tanh] {
            let spec = MlpSpec::with_hidden(3, &[6, 5], 2, out_act).unwrap();
            let p = spec.init(&mut rng);
            let batch = 4;
            let inputs: Vec<f64> = (0..batch * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let targets: Vec<f64> = (0..batch * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
            let loss = |out: &[f64]| -> (f64, Vec<f64>) {
                let n = out.len() as f64;
                let v = out.iter().zip(&targets).map(|(o, t)| (o - t).powi(2)).sum::<f64>() / n;
                let g = out.iter().zip(&targets).map(|(o, t)| 2.0 * (o - t) / n).collect();
                (v, g)
            };
            let (_, analytic) = grad(&spec, &p, &inputs, batch, loss).unwrap();
            let report = check_gradient(p.as_slice(), &analytic, 1e-5, |q| {
                let out = spec.forward_batch(q, &inputs, batch).unwrap();
                loss(out.output()).0
            });
            assert!(report.max_abs_rel_error < 1e-4, "{out_act:?}: {}", report.max_abs_rel_error);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let spec = MlpSpec::with_hidden(4, &[16, 16], 3, Activation::Identity).unwrap();
        let p = spec.init(&mut ChaCha8Rng::seed_from_u64(5));
        let x = [0.1, 0.2, -0.3, 0.4];
        let a = forward(&spec, &p, &x).unwrap();
        let b = forward(&spec, &p, &x).unwrap();
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}
