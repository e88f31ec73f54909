//! Synthetic ground-truth generators for desk-scale experiments.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Snapshot, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Toggle-switch gene network with probabilistic cell division.
///
/// Three genes evolve under mutual inhibition / self-activation with
/// additive noise; per step each cell divides with probability
/// `g * dt` where `g = alpha_g/100 * X2^2/(1+X2^2)` (the division scale is
/// given in percent). Daughters copy the parent plus `eta_d * N(0,1)`
/// per gene. The recorded dataset keeps `(X1, X2)`.
///
/// The rate constants are tunables, not ground truth; they are carried in
/// the output metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SimGeneParams {
    /// Self-activation rates `alpha_1..3`.
    pub alpha: [f64; 3],
    /// External activation signal.
    pub beta: f64,
    /// Cross-inhibition rates `gamma_1..3`.
    pub gamma: [f64; 3],
    /// Degradation rates.
    pub decay: [f64; 3],
    /// SDE noise scale per gene.
    pub eta: [f64; 3],
    /// Division-rate scale, in percent per unit time.
    pub alpha_g: f64,
    /// Std of the noise daughters add to the parent state.
    pub eta_d: f64,
    pub dt: f64,
    pub record_times: Vec<f64>,
    /// Cells seeded at the no-growth steady state.
    pub n_steady: usize,
    /// Cells seeded at `transit_start`, heading for the high-X2 branch.
    pub n_transit: usize,
    pub transit_start: [f64; 3],
    /// Std of the Gaussian jitter applied to both initial populations.
    pub init_spread: f64,
}

impl Default for SimGeneParams {
    fn default() -> Self {
        SimGeneParams {
            alpha: [1.0; 3],
            beta: 0.3,
            gamma: [1.0; 3],
            decay: [0.3; 3],
            eta: [0.05; 3],
            alpha_g: 2.0,
            eta_d: 0.05,
            dt: 0.1,
            record_times: vec![0.0, 8.0, 16.0, 24.0, 32.0],
            n_steady: 300,
            n_transit: 300,
            transit_start: [0.05, 0.3, 0.0],
            init_spread: 0.05,
        }
    }
}

impl SimGeneParams {
    pub fn validate(&self) -> Result<()> {
        let rates = self
            .alpha
            .iter()
            .chain(&self.gamma)
            .chain(&self.decay)
            .chain(&self.eta)
            .chain([&self.beta, &self.alpha_g, &self.eta_d, &self.init_spread]);
        if rates.into_iter().any(|&r| r < 0.0 || !r.is_finite()) {
            return Err(Error::Parameter("sim-gene rates must be finite and >= 0".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Parameter("dt must be > 0".into()));
        }
        if self.record_times.len() < 2 || self.record_times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parameter("record_times must be >= 2 strictly increasing values".into()));
        }
        if self.n_steady + self.n_transit == 0 {
            return Err(Error::Parameter("need at least one initial cell".into()));
        }
        Ok(())
    }

    pub fn metadata(&self) -> Vec<(String, String)> {
        vec![
            ("generator".into(), "sim-gene".into()),
            ("alpha".into(), format!("{:?}", self.alpha)),
            ("beta".into(), self.beta.to_string()),
            ("gamma".into(), format!("{:?}", self.gamma)),
            ("decay".into(), format!("{:?}", self.decay)),
            ("eta".into(), format!("{:?}", self.eta)),
            ("alpha_g".into(), self.alpha_g.to_string()),
            ("eta_d".into(), self.eta_d.to_string()),
            ("dt".into(), self.dt.to_string()),
            ("n_steady".into(), self.n_steady.to_string()),
            ("n_transit".into(), self.n_transit.to_string()),
        ]
    }
}

fn drift(p: &SimGeneParams, x: &[f64; 3]) -> [f64; 3] {
    let sq = [x[0] * x[0], x[1] * x[1], x[2] * x[2]];
    let d1 = 1.0 + p.alpha[0] * sq[0] + p.gamma[1] * sq[1] + p.gamma[2] * sq[2] + p.beta;
    let d2 = 1.0 + p.gamma[0] * sq[0] + p.alpha[1] * sq[1] + p.gamma[2] * sq[2] + p.beta;
    let d3 = 1.0 + p.alpha[2] * sq[2];
    [
        (p.alpha[0] * sq[0] + p.beta) / d1 - p.decay[0] * x[0],
        (p.alpha[1] * sq[1] + p.beta) / d2 - p.decay[1] * x[1],
        (p.alpha[2] * sq[2]) / d3 - p.decay[2] * x[2],
    ]
}

/// True division rate per unit time at gene level `x2` (fraction, not
/// percent).
pub fn sim_gene_growth_rate(x2: f64, alpha_g: f64) -> f64 {
    alpha_g / 100.0 * x2 * x2 / (1.0 + x2 * x2)
}

/// The high-X1/low-X2 fixed point of the noise-free dynamics, found by
/// relaxing the ODE from the basin of that state.
pub fn steady_state(params: &SimGeneParams) -> [f64; 3] {
    let mut x = [3.0, 0.1, 0.0];
    let h = 0.01;
    for _ in 0..200_000 {
        let f = drift(params, &x);
        for k in 0..3 {
            x[k] += h * f[k];
        }
    }
    x
}

pub fn gen_sim_gene(params: &SimGeneParams, seed: u64) -> Result<TimeSeriesDataset> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;

    let steady = steady_state(params);
    let mut cells: Vec<[f64; 3]> = Vec::with_capacity(params.n_steady + params.n_transit);
    for base in std::iter::repeat_n(steady, params.n_steady)
        .chain(std::iter::repeat_n(params.transit_start, params.n_transit))
    {
        let mut cell = base;
        for v in &mut cell {
            let z: f64 = normal.sample(&mut rng);
            *v += params.init_spread * z;
        }
        cells.push(cell);
    }

    let sqrt_dt = params.dt.sqrt();
    let horizon = *params.record_times.last().unwrap();
    let start = params.record_times[0];
    let n_steps = ((horizon - start) / params.dt).round() as usize;

    let mut snapshots = Vec::with_capacity(params.record_times.len());
    let mut next_record = 0usize;
    let record = |cells: &[[f64; 3]], time: f64, snaps: &mut Vec<Snapshot>| -> Result<()> {
        let rows: Vec<Vec<f64>> = cells.iter().map(|c| vec![c[0], c[1]]).collect();
        snaps.push(Snapshot::from_points(time, Matrix::from_rows(&rows)?)?);
        Ok(())
    };

    for step in 0..=n_steps {
        let t = start + step as f64 * params.dt;
        if next_record < params.record_times.len()
            && t >= params.record_times[next_record] - params.dt * 0.5
        {
            record(&cells, params.record_times[next_record], &mut snapshots)?;
            next_record += 1;
        }
        if step == n_steps {
            break;
        }

        let mut daughters: Vec<[f64; 3]> = Vec::new();
        for cell in &mut cells {
            let f = drift(params, cell);
            for k in 0..3 {
                let z: f64 = normal.sample(&mut rng);
                cell[k] += f[k] * params.dt + params.eta[k] * sqrt_dt * z;
            }
            let p_div = sim_gene_growth_rate(cell[1], params.alpha_g) * params.dt;
            if rng.random_range(0.0..1.0) < p_div {
                let mut a = *cell;
                let mut b = *cell;
                for k in 0..3 {
                    let za: f64 = normal.sample(&mut rng);
                    let zb: f64 = normal.sample(&mut rng);
                    a[k] += params.eta_d * za;
                    b[k] += params.eta_d * zb;
                }
                *cell = a;
                daughters.push(b);
            }
        }
        cells.extend(daughters);
    }

    Ok(TimeSeriesDataset::new(snapshots)?.with_metadata(params.metadata()))
}

/// Two-time Gaussian mixture: a stationary cluster that grows 100 -> 1000
/// and a no-growth cluster of 400 that splits into 200 + 200 around two
/// shifted centers.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixtureParams {
    pub dim: usize,
    /// Cluster standard deviation.
    pub spread: f64,
}

impl Default for GaussianMixtureParams {
    fn default() -> Self {
        GaussianMixtureParams { dim: 10, spread: 0.3 }
    }
}

pub fn gen_gaussian_mixture(params: &GaussianMixtureParams, seed: u64) -> Result<TimeSeriesDataset> {
    if params.dim < 2 {
        return Err(Error::Parameter("gaussian mixture needs dim >= 2".into()));
    }
    if !(params.spread > 0.0) {
        return Err(Error::Parameter("spread must be > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = params.dim;

    let center = |x: f64, y: f64| {
        let mut c = vec![0.0; d];
        c[0] = x;
        c[1] = y;
        c
    };
    let upper = center(0.0, 2.0);
    let lower = center(0.0, -2.0);
    let left = center(-2.0, -2.0);
    let right = center(2.0, -2.0);

    let cloud = |counts: &[(usize, &[f64])], rng: &mut ChaCha8Rng| -> Result<Matrix> {
        let normal = StandardNormal;
        let mut rows = Vec::new();
        for &(n, c) in counts {
            for _ in 0..n {
                let mut row = Vec::with_capacity(d);
                for &ck in c {
                    let z: f64 = normal.sample(rng);
                    row.push(ck + params.spread * z);
                }
                rows.push(row);
            }
        }
        Matrix::from_rows(&rows)
    };

    let t0 = cloud(&[(100, &upper), (400, &lower)], &mut rng)?;
    let t1 = cloud(&[(1000, &upper), (200, &left), (200, &right)], &mut rng)?;

    let metadata = vec![
        ("generator".into(), "gaussian".into()),
        ("dim".into(), d.to_string()),
        ("spread".into(), params.spread.to_string()),
    ];
    Ok(TimeSeriesDataset::new(vec![
        Snapshot::from_points(0.0, t0)?,
        Snapshot::from_points(1.0, t1)?,
    ])?
    .with_metadata(metadata))
}
