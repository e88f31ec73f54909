use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Architecture of a time-conditioned MLP.
///
/// The network maps `(x, t)` to an output vector: the scalar time is
/// concatenated to `x` as one extra input channel, so the first layer has
/// `input_dim + 1` input features. `depth` counts affine layers; a leaky
/// ReLU sits between consecutive layers but not after the last one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// State dimension, excluding the time channel.
    pub input_dim: usize,
    pub hidden_width: usize,
    /// Number of affine layers. `1` is a single linear map (useful in
    /// tests); real models use at least 2.
    pub depth: usize,
    pub output_dim: usize,
    /// Negative slope of the leaky ReLU.
    pub leaky_slope: f64,
}

impl MlpSpec {
    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        MlpSpec {
            input_dim,
            hidden_width: 256,
            depth: 5,
            output_dim,
            leaky_slope: 0.01,
        }
    }

    pub fn with_hidden(mut self, width: usize, depth: usize) -> Self {
        self.hidden_width = width;
        self.depth = depth;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::Parameter("depth must be >= 1".into()));
        }
        if self.output_dim == 0 || (self.depth > 1 && self.hidden_width == 0) {
            return Err(Error::Parameter("layer widths must be >= 1".into()));
        }
        Ok(())
    }

    /// Per-layer `(in, out)` feature counts, time channel included.
    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut sizes = Vec::with_capacity(self.depth + 1);
        sizes.push(self.input_dim + 1);
        for _ in 1..self.depth {
            sizes.push(self.hidden_width);
        }
        sizes.push(self.output_dim);
        sizes.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// One affine layer: `y = x W^T + b`, weights stored `(out, in)` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub w: Matrix,
    pub b: Vec<f64>,
}

/// Parameter set for one MLP. Doubles as the container for gradients and
/// Adam moment accumulators, which by construction share its shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<DenseLayer>,
}

impl MlpParams {
    /// Kaiming-style uniform init with fan-in scaling, zero biases.
    pub fn init<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_dims()
            .iter()
            .map(|&(fan_in, fan_out)| {
                let limit = (6.0 / fan_in as f64).sqrt();
                let mut w = Matrix::zeros(fan_out, fan_in);
                for v in w.data_mut() {
                    *v = rng.random_range(-limit..limit);
                }
                DenseLayer { w, b: vec![0.0; fan_out] }
            })
            .collect();
        Ok(MlpParams { layers })
    }

    /// Like [`MlpParams::init`] but with the final layer zeroed, so the
    /// fresh model outputs exactly zero everywhere.
    pub fn init_zero_final<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> Result<Self> {
        let mut params = Self::init(spec, rng)?;
        let last = params.layers.last_mut().expect("depth >= 1");
        last.w = Matrix::zeros(last.w.rows(), last.w.cols());
        last.b.iter_mut().for_each(|v| *v = 0.0);
        Ok(params)
    }

    /// All-zero parameters in the shape of `spec`.
    pub fn zeros(spec: &MlpSpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_dims()
            .iter()
            .map(|&(fan_in, fan_out)| DenseLayer {
                w: Matrix::zeros(fan_out, fan_in),
                b: vec![0.0; fan_out],
            })
            .collect();
        Ok(MlpParams { layers })
    }

    /// Zero weights with the final bias set to `out`, i.e. a constant map.
    pub fn constant(spec: &MlpSpec, out: &[f64]) -> Result<Self> {
        if out.len() != spec.output_dim {
            return Err(Error::Shape(format!(
                "constant output length {} != output_dim {}",
                out.len(),
                spec.output_dim
            )));
        }
        let mut params = Self::zeros(spec)?;
        params.layers.last_mut().expect("depth >= 1").b = out.to_vec();
        Ok(params)
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.w.data().len() + l.b.len())
            .sum()
    }

    pub fn iter_mut_flat(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.w.data_mut().iter_mut().chain(l.b.iter_mut()))
    }

    pub fn iter_flat(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.w.data().iter().chain(l.b.iter()))
    }

    fn check_matches(&self, spec: &MlpSpec) -> Result<()> {
        let dims = spec.layer_dims();
        if self.layers.len() != dims.len() {
            return Err(Error::Shape("layer count does not match spec".into()));
        }
        for (layer, &(fan_in, fan_out)) in self.layers.iter().zip(&dims) {
            if layer.w.rows() != fan_out || layer.w.cols() != fan_in || layer.b.len() != fan_out {
                return Err(Error::Shape("layer shape does not match spec".into()));
            }
        }
        Ok(())
    }
}

/// Forward activations kept around for the backward pass: the input of
/// every affine layer (post-activation for hidden layers).
pub struct MlpCache {
    inputs: Vec<Matrix>,
}

#[inline]
fn leaky(v: f64, slope: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        slope * v
    }
}

// Subgradient convention at 0: the negative-slope branch (v > 0 ? 1 : slope).
#[inline]
fn leaky_grad(v: f64, slope: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else {
        slope
    }
}

fn concat_time(x: &Matrix, t: &[f64]) -> Matrix {
    let (n, d) = (x.rows(), x.cols());
    let mut out = Matrix::zeros(n, d + 1);
    for i in 0..n {
        out.row_mut(i)[..d].copy_from_slice(x.row(i));
        out.row_mut(i)[d] = t[i];
    }
    out
}

fn affine(input: &Matrix, layer: &DenseLayer) -> Matrix {
    let mut z = input.matmul_nt(&layer.w);
    for i in 0..z.rows() {
        for (v, b) in z.row_mut(i).iter_mut().zip(&layer.b) {
            *v += b;
        }
    }
    z
}

/// Batched forward pass. `x` is `(batch, input_dim)`, `t` one scalar per
/// row; returns `(batch, output_dim)`.
pub fn mlp_forward(spec: &MlpSpec, params: &MlpParams, x: &Matrix, t: &[f64]) -> Result<Matrix> {
    Ok(forward_impl(spec, params, x, t)?.0)
}

/// Forward pass that also returns the cache needed by [`mlp_backward`].
pub fn mlp_forward_cached(
    spec: &MlpSpec,
    params: &MlpParams,
    x: &Matrix,
    t: &[f64],
) -> Result<(Matrix, MlpCache)> {
    forward_impl(spec, params, x, t)
}

fn forward_impl(
    spec: &MlpSpec,
    params: &MlpParams,
    x: &Matrix,
    t: &[f64],
) -> Result<(Matrix, MlpCache)> {
    params.check_matches(spec)?;
    if x.cols() != spec.input_dim {
        return Err(Error::Shape(format!(
            "input has {} columns, spec wants {}",
            x.cols(),
            spec.input_dim
        )));
    }
    if t.len() != x.rows() {
        return Err(Error::Shape(format!(
            "time vector length {} != batch size {}",
            t.len(),
            x.rows()
        )));
    }

    let mut inputs = Vec::with_capacity(params.layers.len());
    let mut h = concat_time(x, t);
    let last = params.layers.len() - 1;
    for (l, layer) in params.layers.iter().enumerate() {
        let mut z = affine(&h, layer);
        inputs.push(h);
        if l < last {
            for v in z.data_mut() {
                *v = leaky(*v, spec.leaky_slope);
            }
        }
        h = z;
    }
    Ok((h, MlpCache { inputs }))
}

/// Reverse-mode gradients of a scalar loss with respect to all parameters,
/// given `upstream = dL/dy` of shape `(batch, output_dim)`.
pub fn mlp_backward(
    spec: &MlpSpec,
    params: &MlpParams,
    cache: &MlpCache,
    upstream: &Matrix,
) -> Result<MlpParams> {
    params.check_matches(spec)?;
    if !upstream.is_finite() {
        return Err(Error::Numeric("non-finite upstream gradient".into()));
    }
    let last = params.layers.len() - 1;
    if upstream.cols() != spec.output_dim || upstream.rows() != cache.inputs[0].rows() {
        return Err(Error::Shape("upstream gradient shape".into()));
    }

    let mut grads: Vec<DenseLayer> = params
        .layers
        .iter()
        .map(|l| DenseLayer {
            w: Matrix::zeros(l.w.rows(), l.w.cols()),
            b: vec![0.0; l.b.len()],
        })
        .collect();

    let mut dz = upstream.clone();
    for l in (0..=last).rev() {
        let input = &cache.inputs[l];
        grads[l].w = dz.matmul_tn(input);
        grads[l].b = dz.col_sums();
        if l == 0 {
            break;
        }
        // d(input) through the affine map, then through the activation that
        // produced this input. Leaky ReLU keeps the sign of its
        // pre-activation, so the stored post-activation value selects the
        // branch.
        let mut dh = dz.matmul(&params.layers[l].w);
        for i in 0..dh.rows() {
            let h_row = input.row(i);
            for (g, &h) in dh.row_mut(i).iter_mut().zip(h_row) {
                *g *= leaky_grad(h, spec.leaky_slope);
            }
        }
        dz = dh;
    }
    Ok(MlpParams { layers: grads })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sum_of_squares(spec: &MlpSpec, params: &MlpParams, x: &Matrix, t: &[f64]) -> f64 {
        let y = mlp_forward(spec, params, x, t).unwrap();
        y.data().iter().map(|v| v * v).sum()
    }

    #[test]
    fn zero_final_layer_outputs_zero() {
        let spec = MlpSpec::new(3, 2).with_hidden(16, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = MlpParams::init_zero_final(&spec, &mut rng).unwrap();
        let x = Matrix::from_vec(4, 3, (0..12).map(|i| i as f64 / 3.0).collect()).unwrap();
        let y = mlp_forward(&spec, &params, &x, &[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_linear_layer_identity() {
        let spec = MlpSpec {
            input_dim: 2,
            hidden_width: 0,
            depth: 1,
            output_dim: 2,
            leaky_slope: 0.01,
        };
        let mut params = MlpParams::zeros(&spec).unwrap();
        params.layers[0].w.set(0, 0, 1.0);
        params.layers[0].w.set(1, 1, 1.0);
        let x = Matrix::from_vec(1, 2, vec![1.0, 2.0]).unwrap();
        let y = mlp_forward(&spec, &params, &x, &[0.7]).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);
    }

    #[test]
    fn output_shape_contract() {
        let spec = MlpSpec::new(3, 4).with_hidden(8, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let params = MlpParams::init(&spec, &mut rng).unwrap();
        let x = Matrix::zeros(7, 3);
        let y = mlp_forward(&spec, &params, &x, &vec![0.0; 7]).unwrap();
        assert_eq!((y.rows(), y.cols()), (7, 4));
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let spec = MlpSpec::new(3, 1).with_hidden(8, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let params = MlpParams::init(&spec, &mut rng).unwrap();
        let x = Matrix::zeros(2, 4);
        assert!(matches!(
            mlp_forward(&spec, &params, &x, &[0.0, 0.0]),
            Err(crate::Error::Shape(_))
        ));
    }

    #[test]
    fn forward_is_deterministic() {
        let spec = MlpSpec::new(2, 2).with_hidden(32, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = MlpParams::init(&spec, &mut rng).unwrap();
        let x = Matrix::from_vec(3, 2, vec![0.1, -0.2, 1.5, 0.3, -0.7, 0.9]).unwrap();
        let t = [0.25, 0.5, 0.75];
        let a = mlp_forward(&spec, &params, &x, &t).unwrap();
        let b = mlp_forward(&spec, &params, &x, &t).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn leaky_relu_is_continuous_at_zero() {
        let slope = 0.01;
        let eps = 1e-12;
        assert!((leaky(eps, slope) - leaky(-eps, slope)).abs() < 1e-10);
        assert_eq!(leaky(0.0, slope), 0.0);
        // fixed subgradient choice at 0: the negative-slope branch
        assert_eq!(leaky_grad(0.0, slope), slope);
    }

    #[test]
    fn gradients_match_finite_differences() {
        // sum-of-squares loss, central differences with h = 1e-5
        for seed in 0..5 {
            let spec = MlpSpec::new(3, 2).with_hidden(6, 3);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut params = MlpParams::init(&spec, &mut rng).unwrap();
            let x = Matrix::from_vec(4, 3, (0..12).map(|_| rng.random_range(-1.0..1.0)).collect())
                .unwrap();
            let t: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();

            let (y, cache) = mlp_forward_cached(&spec, &params, &x, &t).unwrap();
            let mut upstream = y.clone();
            upstream.scale(2.0);
            let grads = mlp_backward(&spec, &params, &cache, &upstream).unwrap();

            let analytic: Vec<f64> = grads.iter_flat().copied().collect();
            let h = 1e-5;
            let n = params.num_params();
            for k in 0..n {
                let orig = *params.iter_flat().nth(k).unwrap();
                *params.iter_mut_flat().nth(k).unwrap() = orig + h;
                let up = sum_of_squares(&spec, &params, &x, &t);
                *params.iter_mut_flat().nth(k).unwrap() = orig - h;
                let down = sum_of_squares(&spec, &params, &x, &t);
                *params.iter_mut_flat().nth(k).unwrap() = orig;
                let fd = (up - down) / (2.0 * h);
                let a = analytic[k];
                let scale = a.abs().max(fd.abs());
                if scale > 1e-8 {
                    assert!(
                        (a - fd).abs() / scale < 1e-4,
                        "seed {seed} param {k}: analytic {a} vs fd {fd}"
                    );
                } else {
                    assert!((a - fd).abs() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let spec = MlpSpec::new(2, 3).with_hidden(5, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = MlpParams::init(&spec, &mut rng).unwrap();
        let x = Matrix::from_vec(2, 2, vec![0.3, -0.4, 1.0, 2.0]).unwrap();
        let (_, cache) = mlp_forward_cached(&spec, &params, &x, &[0.1, 0.9]).unwrap();
        let grads = mlp_backward(&spec, &params, &cache, &Matrix::zeros(2, 3)).unwrap();
        assert!(grads.iter_flat().all(|&g| g == 0.0));
    }

    #[test]
    fn hand_derivative_linear_model() {
        // L = (w x - y)^2 with x = 1, y = 0, w = 2: dL/dw = 2 (w x - y) x = 4
        let spec = MlpSpec {
            input_dim: 1,
            hidden_width: 0,
            depth: 1,
            output_dim: 1,
            leaky_slope: 0.01,
        };
        let mut params = MlpParams::zeros(&spec).unwrap();
        params.layers[0].w.set(0, 0, 2.0);
        let x = Matrix::from_vec(1, 1, vec![1.0]).unwrap();
        let (y, cache) = mlp_forward_cached(&spec, &params, &x, &[0.0]).unwrap();
        assert_eq!(y.get(0, 0), 2.0);
        let upstream = Matrix::from_vec(1, 1, vec![2.0 * y.get(0, 0)]).unwrap();
        let grads = mlp_backward(&spec, &params, &cache, &upstream).unwrap();
        assert_eq!(grads.layers[0].w.get(0, 0), 4.0);
    }

    #[test]
    fn non_finite_upstream_is_numeric_error() {
        let spec = MlpSpec::new(1, 1).with_hidden(4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = MlpParams::init(&spec, &mut rng).unwrap();
        let x = Matrix::zeros(1, 1);
        let (_, cache) = mlp_forward_cached(&spec, &params, &x, &[0.0]).unwrap();
        let bad = Matrix::from_vec(1, 1, vec![f64::NAN]).unwrap();
        assert!(matches!(
            mlp_backward(&spec, &params, &cache, &bad),
            Err(crate::Error::Numeric(_))
        ));
    }
}
