//! Mass-weighted score-matching loss over all consecutive snapshot pairs,
//! and the training loop around it.
//!
//! For each pair `k` the loop draws endpoint pairs from the precomputed
//! semi-coupling, samples bridge tuples at uniform in-interval times, and
//! regresses three networks on the conditional targets:
//!
//!   loss = mean  w * ( |v(x,t) - u|^2 + (g(x,t) - g*)^2
//!                      + |lambda(t) s(x,t) + eps|^2 )
//!
//! The networks share parameters across pairs; the time input is the
//! global internal time `k + t`.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bridge::{sample_pb_bridge, score_weight, BridgeSample};
use crate::coupling::{
    minibatch_semi_coupling, pair_sampler, product_semi_coupling, CouplingOptions, MinibatchPlan,
};
use crate::data::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{
    adam_step, mlp_backward, mlp_forward, mlp_forward_cached, AdamState, MlpParams, MlpSpec,
};
use crate::VERSION;

/// Shared architecture of the three fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelArch {
    /// State dimension `d` (time is appended internally).
    pub input_dim: usize,
    pub hidden_width: usize,
    pub depth: usize,
    pub leaky_slope: f64,
}

impl ModelArch {
    pub fn new(input_dim: usize) -> Self {
        ModelArch { input_dim, hidden_width: 256, depth: 5, leaky_slope: 0.01 }
    }
}

/// Drift, growth-rate and score networks over one [`ModelArch`], plus the
/// diffusion level they were trained for.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelTriple {
    pub arch: ModelArch,
    pub nu: f64,
    pub v: MlpParams,
    pub g: MlpParams,
    pub s: MlpParams,
}

impl ModelTriple {
    pub fn spec_v(&self) -> MlpSpec {
        self.spec(self.arch.input_dim)
    }

    pub fn spec_g(&self) -> MlpSpec {
        self.spec(1)
    }

    pub fn spec_s(&self) -> MlpSpec {
        self.spec(self.arch.input_dim)
    }

    fn spec(&self, output_dim: usize) -> MlpSpec {
        MlpSpec {
            input_dim: self.arch.input_dim,
            hidden_width: self.arch.hidden_width,
            depth: self.arch.depth,
            output_dim,
            leaky_slope: self.arch.leaky_slope,
        }
    }

    /// Fresh model. The growth and score nets start with a zeroed final
    /// layer so the initial prediction is no growth and no score.
    pub fn init<R: Rng + ?Sized>(arch: ModelArch, nu: f64, rng: &mut R) -> Result<Self> {
        if !(nu > 0.0) {
            return Err(Error::Parameter("nu must be > 0".into()));
        }
        let mut model = ModelTriple {
            arch,
            nu,
            v: MlpParams::zeros(&MlpSpec {
                input_dim: arch.input_dim,
                hidden_width: arch.hidden_width,
                depth: arch.depth,
                output_dim: arch.input_dim,
                leaky_slope: arch.leaky_slope,
            })?,
            g: MlpParams::zeros(&MlpSpec {
                input_dim: arch.input_dim,
                hidden_width: arch.hidden_width,
                depth: arch.depth,
                output_dim: 1,
                leaky_slope: arch.leaky_slope,
            })?,
            s: MlpParams::zeros(&MlpSpec {
                input_dim: arch.input_dim,
                hidden_width: arch.hidden_width,
                depth: arch.depth,
                output_dim: arch.input_dim,
                leaky_slope: arch.leaky_slope,
            })?,
        };
        model.v = MlpParams::init(&model.spec_v(), rng)?;
        model.g = MlpParams::init_zero_final(&model.spec_g(), rng)?;
        model.s = MlpParams::init_zero_final(&model.spec_s(), rng)?;
        Ok(model)
    }

    /// Constant fields, mostly for tests and reference runs: `v(x,t) = v0`,
    /// `g(x,t) = g0`, `s(x,t) = 0`. Unlike [`ModelTriple::init`] this
    /// accepts `nu = 0` for noise-free reference dynamics.
    pub fn constant_fields(input_dim: usize, v0: &[f64], g0: f64, nu: f64) -> Result<Self> {
        if !(nu >= 0.0) {
            return Err(Error::Parameter("nu must be >= 0".into()));
        }
        let arch = ModelArch { input_dim, hidden_width: 1, depth: 2, leaky_slope: 0.01 };
        let mut model = ModelTriple {
            arch,
            nu,
            v: MlpParams::zeros(&MlpSpec {
                input_dim,
                hidden_width: 1,
                depth: 2,
                output_dim: input_dim,
                leaky_slope: 0.01,
            })?,
            g: MlpParams::zeros(&MlpSpec {
                input_dim,
                hidden_width: 1,
                depth: 2,
                output_dim: 1,
                leaky_slope: 0.01,
            })?,
            s: MlpParams::zeros(&MlpSpec {
                input_dim,
                hidden_width: 1,
                depth: 2,
                output_dim: input_dim,
                leaky_slope: 0.01,
            })?,
        };
        model.v = MlpParams::constant(&model.spec_v(), v0)?;
        model.g = MlpParams::constant(&model.spec_g(), &[g0])?;
        model.s = MlpParams::constant(&model.spec_s(), &vec![0.0; input_dim])?;
        Ok(model)
    }

    pub fn eval_v(&self, x: &Matrix, t: &[f64]) -> Result<Matrix> {
        mlp_forward(&self.spec_v(), &self.v, x, t)
    }

    /// Growth rate per point, flattened from the net's single output column.
    pub fn eval_g(&self, x: &Matrix, t: &[f64]) -> Result<Vec<f64>> {
        Ok(mlp_forward(&self.spec_g(), &self.g, x, t)?.into_data())
    }

    pub fn eval_s(&self, x: &Matrix, t: &[f64]) -> Result<Matrix> {
        mlp_forward(&self.spec_s(), &self.s, x, t)
    }
}

/// Which pairing feeds the bridge sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingKind {
    /// Entropy-transport semi-coupling (the real pipeline).
    Transport,
    /// Independent product pairing, the ablation baseline.
    Product,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Growth penalty scale of the transport cost.
    pub delta: f64,
    /// Diffusion parameter of the bridge and of inference.
    pub nu: f64,
    pub epochs: usize,
    pub batch_per_pair: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Mini-batch size for the coupling solves; 0 means full batch.
    pub minibatch_ot_size: usize,
    /// Bridge times are drawn from `U(t_floor, 1 - t_floor)` to keep the
    /// drift target bounded.
    pub t_floor: f64,
    pub hidden_width: usize,
    pub depth: usize,
    /// Cosine learning-rate annealing; `None` enables it automatically
    /// for data of dimension >= 50.
    pub cosine_lr: Option<bool>,
    /// Entropic regularization override; `None` picks the scale-adaptive
    /// default from each cost matrix.
    pub eps_entropic: Option<f64>,
    pub coupling_max_iter: usize,
    pub coupling_tol: f64,
    pub coupling: CouplingKind,
}

impl TrainConfig {
    pub fn new(delta: f64, nu: f64) -> Self {
        TrainConfig {
            delta,
            nu,
            epochs: 1000,
            batch_per_pair: 256,
            learning_rate: 1e-3,
            seed: 0,
            minibatch_ot_size: 0,
            t_floor: 1e-3,
            hidden_width: 256,
            depth: 5,
            cosine_lr: None,
            eps_entropic: None,
            coupling_max_iter: 100_000,
            coupling_tol: 1e-9,
            coupling: CouplingKind::Transport,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positives = [
            ("delta", self.delta),
            ("nu", self.nu),
            ("learning_rate", self.learning_rate),
            ("coupling_tol", self.coupling_tol),
        ];
        for (name, v) in positives {
            if !(v > 0.0) {
                return Err(Error::Parameter(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.epochs == 0 || self.batch_per_pair == 0 || self.depth == 0 {
            return Err(Error::Parameter("epochs, batch_per_pair and depth must be > 0".into()));
        }
        if !(self.t_floor > 0.0 && self.t_floor < 0.5) {
            return Err(Error::Parameter("t_floor must lie in (0, 0.5)".into()));
        }
        Ok(())
    }

    fn coupling_options(&self) -> CouplingOptions {
        CouplingOptions {
            delta: self.delta,
            eps_entropic: self.eps_entropic,
            max_iter: self.coupling_max_iter,
            tol: self.coupling_tol,
        }
    }
}

/// Loss value split by term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub drift: f64,
    pub growth: f64,
    pub score: f64,
}

/// Gradients for the three networks.
pub struct TripleGrads {
    pub v: MlpParams,
    pub g: MlpParams,
    pub s: MlpParams,
}

/// Evaluates the conditional loss on a batch and returns reverse-mode
/// gradients for all three networks.
///
/// `global_t[i]` is the concatenated time `k + t` fed to the networks,
/// while `batch[i].t` stays in-interval and drives the score weighting.
pub fn cusm_loss(
    model: &ModelTriple,
    batch: &[BridgeSample],
    global_t: &[f64],
) -> Result<(LossParts, TripleGrads)> {
    let n = batch.len();
    if n == 0 || global_t.len() != n {
        return Err(Error::Shape("batch and global_t must be equal and non-empty".into()));
    }
    let d = model.arch.input_dim;
    let rows: Vec<Vec<f64>> = batch.iter().map(|s| s.x.clone()).collect();
    let x = Matrix::from_rows(&rows)?;
    if x.cols() != d {
        return Err(Error::Shape(format!("samples have dim {}, model wants {d}", x.cols())));
    }

    let (v_out, v_cache) = mlp_forward_cached(&model.spec_v(), &model.v, &x, global_t)?;
    let (g_out, g_cache) = mlp_forward_cached(&model.spec_g(), &model.g, &x, global_t)?;
    let (s_out, s_cache) = mlp_forward_cached(&model.spec_s(), &model.s, &x, global_t)?;

    let mut up_v = Matrix::zeros(n, d);
    let mut up_g = Matrix::zeros(n, 1);
    let mut up_s = Matrix::zeros(n, d);
    let (mut loss_v, mut loss_g, mut loss_s) = (0.0, 0.0, 0.0);
    let inv_n = 1.0 / n as f64;

    for (i, sample) in batch.iter().enumerate() {
        let w = sample.mass_weight;
        let lam = score_weight(sample.t, model.nu);
        let mut contrib = 0.0;

        for k in 0..d {
            let rv = v_out.get(i, k) - sample.u_target[k];
            loss_v += w * rv * rv * inv_n;
            contrib += rv * rv;
            up_v.set(i, k, 2.0 * w * rv * inv_n);

            let rs = lam * s_out.get(i, k) + sample.eps_target[k];
            loss_s += w * rs * rs * inv_n;
            contrib += rs * rs;
            up_s.set(i, k, 2.0 * w * lam * rs * inv_n);
        }
        let rg = g_out.get(i, 0) - sample.g_target;
        loss_g += w * rg * rg * inv_n;
        contrib += rg * rg;
        up_g.set(i, 0, 2.0 * w * rg * inv_n);

        if !(w * contrib).is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss at sample {i}: t={}, weight={w}, contribution={contrib}",
                sample.t
            )));
        }
    }

    let grads = TripleGrads {
        v: mlp_backward(&model.spec_v(), &model.v, &v_cache, &up_v)?,
        g: mlp_backward(&model.spec_g(), &model.g, &g_cache, &up_g)?,
        s: mlp_backward(&model.spec_s(), &model.s, &s_cache, &up_s)?,
    };
    let parts = LossParts {
        total: loss_v + loss_g + loss_s,
        drift: loss_v,
        growth: loss_g,
        score: loss_s,
    };
    Ok((parts, grads))
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub step: usize,
    pub loss: f64,
    pub loss_v: f64,
    pub loss_g: f64,
    pub loss_s: f64,
}

pub struct TrainOutput {
    pub model: ModelTriple,
    pub log: Vec<LossRow>,
}

/// Runs the full training workflow: per-pair couplings up front, then
/// `epochs` optimizer steps on batches concatenated across all pairs.
pub fn train(dataset: &TimeSeriesDataset, config: &TrainConfig) -> Result<TrainOutput> {
    config.validate()?;
    let pairs = dataset.num_intervals();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let opts = config.coupling_options();
    let mut pair_plans: Vec<Vec<MinibatchPlan>> = Vec::with_capacity(pairs);
    for k in 0..pairs {
        let (snap0, snap1) = (dataset.snapshot(k), dataset.snapshot(k + 1));
        let plans = match config.coupling {
            CouplingKind::Product => vec![MinibatchPlan {
                idx0: (0..snap0.len()).collect(),
                idx1: (0..snap1.len()).collect(),
                semi: product_semi_coupling(snap0, snap1)?,
                converged: true,
            }],
            CouplingKind::Transport => {
                let n_batches = if config.minibatch_ot_size == 0 {
                    1
                } else {
                    snap0.len().max(snap1.len()).div_ceil(config.minibatch_ot_size).max(1)
                };
                minibatch_semi_coupling(
                    snap0,
                    snap1,
                    config.minibatch_ot_size,
                    &opts,
                    n_batches,
                    &mut rng,
                )?
            }
        };
        if let Some(bad) = plans.iter().position(|p| !p.converged) {
            return Err(Error::Numeric(format!(
                "coupling for pair {k} (plan {bad}) did not converge; \
                 raise coupling_max_iter or eps_entropic"
            )));
        }
        pair_plans.push(plans);
    }

    let arch = ModelArch {
        input_dim: dataset.dim(),
        hidden_width: config.hidden_width,
        depth: config.depth,
        leaky_slope: 0.01,
    };
    let mut model = ModelTriple::init(arch, config.nu, &mut rng)?;
    let mut state_v = AdamState::new(&model.spec_v(), config.learning_rate)?;
    let mut state_g = AdamState::new(&model.spec_g(), config.learning_rate)?;
    let mut state_s = AdamState::new(&model.spec_s(), config.learning_rate)?;
    let cosine = config.cosine_lr.unwrap_or(dataset.dim() >= 50);

    let mut log = Vec::with_capacity(config.epochs);
    let mut batch = Vec::with_capacity(pairs * config.batch_per_pair);
    let mut global_t = Vec::with_capacity(pairs * config.batch_per_pair);

    for step in 0..config.epochs {
        batch.clear();
        global_t.clear();
        for (k, plans) in pair_plans.iter().enumerate() {
            let plan = match plans.len() {
                1 => &plans[0],
                n => &plans[rng.random_range(0..n)],
            };
            let x0 = &dataset.snapshot(k).points;
            let x1 = &dataset.snapshot(k + 1).points;
            for draw in pair_sampler(&plan.semi, config.batch_per_pair, &mut rng)? {
                let t_local = rng.random_range(config.t_floor..1.0 - config.t_floor);
                let sample = sample_pb_bridge(
                    x0.row(plan.idx0[draw.i]),
                    x1.row(plan.idx1[draw.j]),
                    draw.m0,
                    draw.m1,
                    config.nu,
                    t_local,
                    &mut rng,
                )?;
                batch.push(sample);
                global_t.push(k as f64 + t_local);
            }
        }

        let (parts, grads) = cusm_loss(&model, &batch, &global_t)?;
        let lr = if cosine {
            config.learning_rate
                * 0.5
                * (1.0 + (std::f64::consts::PI * step as f64 / config.epochs as f64).cos())
        } else {
            config.learning_rate
        };
        state_v.learning_rate = lr;
        state_g.learning_rate = lr;
        state_s.learning_rate = lr;
        adam_step(&mut state_v, &mut model.v, &grads.v)?;
        adam_step(&mut state_g, &mut model.g, &grads.g)?;
        adam_step(&mut state_s, &mut model.s, &grads.s)?;

        log.push(LossRow {
            step,
            loss: parts.total,
            loss_v: parts.drift,
            loss_g: parts.growth,
            loss_s: parts.score,
        });
    }

    Ok(TrainOutput { model, log })
}

/// Provenance carried inside a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProvenance {
    pub delta: f64,
    pub seed: u64,
    pub data_hash: String,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: String,
    arch: ModelArch,
    nu: f64,
    provenance: ModelProvenance,
    v: MlpParams,
    g: MlpParams,
    s: MlpParams,
}

pub fn save_model(
    model: &ModelTriple,
    provenance: &ModelProvenance,
    path: impl AsRef<Path>,
) -> Result<()> {
    let file = ModelFile {
        version: VERSION.to_string(),
        arch: model.arch,
        nu: model.nu,
        provenance: provenance.clone(),
        v: model.v.clone(),
        g: model.g.clone(),
        s: model.s.clone(),
    };
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(w, &file)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(ModelTriple, ModelProvenance)> {
    let r = BufReader::new(File::open(path)?);
    let file: ModelFile = serde_json::from_reader(r)?;
    if file.version != VERSION {
        return Err(Error::Version(format!(
            "model written by version {}, this library is {VERSION}",
            file.version
        )));
    }
    let model = ModelTriple {
        arch: file.arch,
        nu: file.nu,
        v: file.v,
        g: file.g,
        s: file.s,
    };
    // probe the shapes once so a tampered file fails here, not mid-run
    let probe = Matrix::zeros(1, model.arch.input_dim);
    model
        .eval_v(&probe, &[0.0])
        .and_then(|_| model.eval_g(&probe, &[0.0]).map(|_| ()))
        .and_then(|_| model.eval_s(&probe, &[0.0]).map(|_| ()))
        .map_err(|e| Error::Version(format!("stored parameters do not match architecture: {e}")))?;
    Ok((model, file.provenance))
}
