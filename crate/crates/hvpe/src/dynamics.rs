//! Time integration of the Galerkin system
//!
//! `dω̂_k = B^m_k(ω) dt − |k|^{2θ} ω̂_k dt + √2 |k|^θ dβ^k_t`,
//!
//! with exact Ornstein-Uhlenbeck transitions for the linear part, drift
//! accumulators `G_t = ∫₀ᵗ B^m(ω_s) ds` and the mild variant
//! `G̃_t = ∫₀ᵗ e^{−(t−s)(−Δ)^θ} B^m(ω_s) ds`, martingale extraction, time
//! reversal, and the Itô-trick statistic.
//!
//! Noise is keyed per `(seed, replica, step, mode)`: two simulations at
//! different cutoffs but the same seed are driven by the same Brownian
//! paths restricted to their mode sets, which is what the coupled
//! convergence studies rely on.

use thiserror::Error;

use crate::chaos::{evaluate_form, generator_apply, ChaosError, GeneratorParams, QuadraticForm};
use crate::measure::{sample_mu_replica, MeasureError};
use crate::nonlinearity::{BFastPlan, InteractionTable, NonlinearityError};
use crate::rng::{standard_normal, NoiseKey};
use crate::spectral::{disk_modes, FieldError, ModeIndex, SpectralField};

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("field cutoff {field} does not match configured cutoff {cfg}")]
    CutoffMismatch { field: u32, cfg: u32 },
    #[error("trajectory needs at least {needed} recorded times, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Nonlinearity(#[from] NonlinearityError),
    #[error(transparent)]
    Chaos(#[from] ChaosError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ExpEuler,
    Splitting,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::ExpEuler => write!(f, "exp_euler"),
            Self::Splitting => write!(f, "splitting"),
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exp_euler" => Ok(Self::ExpEuler),
            "splitting" => Ok(Self::Splitting),
            other => Err(format!(
                "unknown scheme '{other}' (expected exp_euler or splitting)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SimConfig {
    pub theta: f64,
    pub m: u32,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub dt: f64,
    #[serde(rename = "seed")]
    pub master_seed: u64,
    pub ensemble: usize,
    pub scheme: Scheme,
    pub record_stride: usize,
    #[serde(rename = "fast")]
    pub fast_nonlinearity: bool,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |msg: String| Err(DynamicsError::InvalidConfig(msg));
        if !(self.theta > 0.0) {
            return bad(format!("theta must be > 0, got {}", self.theta));
        }
        if self.m == 0 {
            return bad("m must be >= 1".into());
        }
        if !(self.dt > 0.0) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.t_final >= 0.0) {
            return bad(format!("T must be >= 0, got {}", self.t_final));
        }
        if self.ensemble == 0 {
            return bad("ensemble must be >= 1".into());
        }
        if self.record_stride == 0 {
            return bad("record_stride must be >= 1".into());
        }
        Ok(())
    }

    pub fn generator(&self) -> GeneratorParams {
        GeneratorParams::new(self.theta).expect("validated theta")
    }

    /// Number of time steps covering the horizon (0 when T = 0).
    pub fn num_steps(&self) -> u64 {
        if self.t_final == 0.0 {
            0
        } else {
            ((self.t_final / self.dt).round() as u64).max(1)
        }
    }
}

/// Initial condition of a simulation.
#[derive(Debug, Clone)]
pub enum Initial {
    Field(SpectralField),
    SampleMu,
}

/// The per-step Gaussian inputs. `primary` drives the exponential-Euler
/// noise increment and the first OU half-step of the splitting scheme;
/// `secondary` drives the second half-step only.
#[derive(Debug, Clone)]
pub struct StepNoise {
    pub primary: SpectralField,
    pub secondary: SpectralField,
}

/// Keyed noise for step `step` of a replica: counters `2·step + 1` and
/// `2·step + 2` (counter 0 stays reserved for initial sampling).
pub fn step_noise(m: u32, seed: u64, replica: u64, step: u64) -> StepNoise {
    let draw = |counter: u64| {
        let mut field = SpectralField::zero(m).expect("m >= 1");
        for k in disk_modes(m) {
            let xi = standard_normal(NoiseKey {
                seed,
                stream: replica,
                counter,
                mode: (k.k1(), k.k2()),
            });
            field.set(k, xi).expect("mode in disk");
        }
        field
    };
    StepNoise {
        primary: draw(2 * step + 1),
        secondary: draw(2 * step + 2),
    }
}

/// `φ₁(z) = (1 − e^{−z})/z`, `φ₁(0) = 1`, with a series branch against
/// cancellation for tiny arguments.
pub fn phi1(z: f64) -> f64 {
    if z < 1e-5 {
        1.0 - z / 2.0 + z * z / 6.0
    } else {
        (1.0 - (-z).exp()) / z
    }
}

/// Exact OU transition per mode:
/// `X̂_k ← e^{−λ_k dt} X̂_k + √(1 − e^{−2 λ_k dt}) ξ_k`, `λ_k = |k|^{2θ}`.
pub fn ou_step(field: &SpectralField, theta: f64, dt: f64, noise: &SpectralField) -> SpectralField {
    let m = field.cutoff();
    let mut out = SpectralField::zero(m).expect("valid cutoff");
    for k in disk_modes(m) {
        let lambda = (k.norm_sq() as f64).powf(theta);
        let decay = (-lambda * dt).exp();
        let amp = (1.0 - (-2.0 * lambda * dt).exp()).sqrt();
        out.set(k, decay * field.get(k) + amp * noise.get(k))
            .expect("mode in disk");
    }
    out
}

/// Reusable stepper with precomputed per-mode transition constants and a
/// nonlinearity evaluator (interaction table, or zero-padded transforms
/// when `fast_nonlinearity` is set).
pub struct Stepper {
    m: u32,
    dt: f64,
    scheme: Scheme,
    table: Option<InteractionTable>,
    plan: Option<BFastPlan>,
    modes: Vec<ModeIndex>,
    rate: Vec<f64>,
    decay: Vec<f64>,
    namp: Vec<f64>,
    phi1dt: Vec<f64>,
    half_decay: Vec<f64>,
    half_namp: Vec<f64>,
}

impl Stepper {
    pub fn new(cfg: &SimConfig) -> Result<Self, DynamicsError> {
        cfg.validate()?;
        let modes = disk_modes(cfg.m);
        let mut rate = Vec::with_capacity(modes.len());
        let mut decay = Vec::with_capacity(modes.len());
        let mut namp = Vec::with_capacity(modes.len());
        let mut phi1dt = Vec::with_capacity(modes.len());
        let mut half_decay = Vec::with_capacity(modes.len());
        let mut half_namp = Vec::with_capacity(modes.len());
        for &k in &modes {
            let lambda = (k.norm_sq() as f64).powf(cfg.theta);
            rate.push(lambda);
            decay.push((-lambda * cfg.dt).exp());
            namp.push((1.0 - (-2.0 * lambda * cfg.dt).exp()).sqrt());
            phi1dt.push(phi1(lambda * cfg.dt) * cfg.dt);
            half_decay.push((-lambda * cfg.dt / 2.0).exp());
            half_namp.push((1.0 - (-lambda * cfg.dt).exp()).sqrt());
        }
        let (table, plan) = if cfg.fast_nonlinearity {
            (None, Some(BFastPlan::new(cfg.m)))
        } else {
            (Some(InteractionTable::new(cfg.m)), None)
        };
        Ok(Self {
            m: cfg.m,
            dt: cfg.dt,
            scheme: cfg.scheme,
            table,
            plan,
            modes,
            rate,
            decay,
            namp,
            phi1dt,
            half_decay,
            half_namp,
        })
    }

    pub fn cutoff(&self) -> u32 {
        self.m
    }

    /// Mode list matching the per-mode constant arrays.
    pub fn modes(&self) -> &[ModeIndex] {
        &self.modes
    }

    pub fn rates(&self) -> &[f64] {
        &self.rate
    }

    /// Per-step linear decay factors `e^{−λ_k dt}` (also the mild-integral
    /// weights).
    pub fn decays(&self) -> &[f64] {
        &self.decay
    }

    /// Evaluates `B^m` into `out`.
    pub fn eval_b(
        &mut self,
        state: &SpectralField,
        out: &mut SpectralField,
    ) -> Result<(), DynamicsError> {
        if let Some(table) = &self.table {
            table.apply(state, out);
        } else {
            let plan = self.plan.as_mut().expect("fast plan");
            *out = plan.apply(state)?;
        }
        Ok(())
    }

    /// One step of the configured scheme. `b_at_state` must be `B^m`
    /// evaluated at `state` (the exponential-Euler drift; the splitting
    /// scheme evaluates its own drift point internally and ignores it).
    pub fn advance(
        &mut self,
        state: &SpectralField,
        b_at_state: &SpectralField,
        noise: &StepNoise,
    ) -> Result<SpectralField, DynamicsError> {
        if state.cutoff() != self.m {
            return Err(DynamicsError::CutoffMismatch {
                field: state.cutoff(),
                cfg: self.m,
            });
        }
        match self.scheme {
            Scheme::ExpEuler => {
                let mut out = SpectralField::zero(self.m)?;
                for (i, &k) in self.modes.iter().enumerate() {
                    let value = self.decay[i] * state.get(k)
                        + self.phi1dt[i] * b_at_state.get(k)
                        + self.namp[i] * noise.primary.get(k);
                    out.set(k, value)?;
                }
                Ok(out)
            }
            Scheme::Splitting => {
                // Strang: half OU, full explicit-Euler drift, half OU
                let mut mid = SpectralField::zero(self.m)?;
                for (i, &k) in self.modes.iter().enumerate() {
                    mid.set(
                        k,
                        self.half_decay[i] * state.get(k)
                            + self.half_namp[i] * noise.primary.get(k),
                    )?;
                }
                let mut b_mid = SpectralField::zero(self.m)?;
                if let Some(table) = &self.table {
                    table.apply(&mid, &mut b_mid);
                } else {
                    b_mid = self.plan.as_mut().expect("fast plan").apply(&mid)?;
                }
                let mut out = SpectralField::zero(self.m)?;
                for (i, &k) in self.modes.iter().enumerate() {
                    let drifted = mid.get(k) + self.dt * b_mid.get(k);
                    out.set(
                        k,
                        self.half_decay[i] * drifted
                            + self.half_namp[i] * noise.secondary.get(k),
                    )?;
                }
                Ok(out)
            }
        }
    }
}

/// One step of the configured scheme with explicit noise; builds a fresh
/// [`Stepper`], so prefer a reused one in loops.
pub fn galerkin_step(
    field: &SpectralField,
    cfg: &SimConfig,
    noise: &StepNoise,
) -> Result<SpectralField, DynamicsError> {
    let mut stepper = Stepper::new(cfg)?;
    let mut b = SpectralField::zero(cfg.m)?;
    stepper.eval_b(field, &mut b)?;
    stepper.advance(field, &b, noise)
}

/// Recorded path of one replica with its accumulators.
///
/// At each recorded time `t`: `g` is the left-endpoint Riemann sum of
/// `B^m(ω_s)` at the simulation `dt`, `g_mild` its exponentially weighted
/// counterpart, and `mart` the martingale remainder
/// `M_t = ω_t − ω_0 + ∫₀ᵗ (−Δ)^θ ω_s ds − G_t` (same Riemann resolution).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SpectralField>,
    pub g: Vec<SpectralField>,
    pub g_mild: Vec<SpectralField>,
    pub mart: Vec<SpectralField>,
    pub theta: f64,
    pub dt: f64,
}

impl Trajectory {
    pub fn cutoff(&self) -> u32 {
        self.states[0].cutoff()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &SpectralField {
        self.states.last().expect("nonempty trajectory")
    }
}

/// Simulates one replica. The replica index selects both the initial
/// μ-sample (for [`Initial::SampleMu`]) and the noise stream.
pub fn simulate_replica(
    cfg: &SimConfig,
    init: &Initial,
    replica: u64,
) -> Result<Trajectory, DynamicsError> {
    cfg.validate()?;
    let mut stepper = Stepper::new(cfg)?;
    let state0 = match init {
        Initial::Field(f) => {
            if f.cutoff() != cfg.m {
                return Err(DynamicsError::CutoffMismatch {
                    field: f.cutoff(),
                    cfg: cfg.m,
                });
            }
            f.clone()
        }
        Initial::SampleMu => sample_mu_replica(cfg.m, cfg.master_seed, replica)?,
    };
    let n = cfg.num_steps();
    let modes = stepper.modes().to_vec();
    let rates = stepper.rates().to_vec();
    let mild_decay = stepper.decays().to_vec();
    // Duhamel weight of the newest slice: exact for B frozen at the left
    // endpoint, and nonzero even when e^{-λ dt} underflows
    let mild_weight: Vec<f64> = rates.iter().map(|&r| cfg.dt * phi1(r * cfg.dt)).collect();

    let mut state = state0.clone();
    let mut g = SpectralField::zero(cfg.m)?;
    let mut g_mild = SpectralField::zero(cfg.m)?;
    let mut lin = SpectralField::zero(cfg.m)?;
    let mut b = SpectralField::zero(cfg.m)?;

    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        g: Vec::new(),
        g_mild: Vec::new(),
        mart: Vec::new(),
        theta: cfg.theta,
        dt: cfg.dt,
    };
    let mut record = |i: u64,
                      state: &SpectralField,
                      g: &SpectralField,
                      g_mild: &SpectralField,
                      lin: &SpectralField|
     -> Result<(), DynamicsError> {
        let mut mart = SpectralField::zero(cfg.m)?;
        for &k in &modes {
            mart.set(k, state.get(k) - state0.get(k) + lin.get(k) - g.get(k))?;
        }
        traj.times.push(i as f64 * cfg.dt);
        traj.states.push(state.clone());
        traj.g.push(g.clone());
        traj.g_mild.push(g_mild.clone());
        traj.mart.push(mart);
        Ok(())
    };

    for i in 0..n {
        if i % cfg.record_stride as u64 == 0 {
            record(i, &state, &g, &g_mild, &lin)?;
        }
        stepper.eval_b(&state, &mut b)?;
        for (j, &k) in modes.iter().enumerate() {
            let bk = b.get(k);
            g.set(k, g.get(k) + cfg.dt * bk)?;
            g_mild.set(k, mild_decay[j] * g_mild.get(k) + mild_weight[j] * bk)?;
            lin.set(k, lin.get(k) + cfg.dt * rates[j] * state.get(k))?;
        }
        let noise = step_noise(cfg.m, cfg.master_seed, replica, i);
        state = stepper.advance(&state, &b, &noise)?;
    }
    record(n, &state, &g, &g_mild, &lin)?;
    Ok(traj)
}

/// Simulates the full ensemble (replicas `0..cfg.ensemble`).
pub fn simulate(cfg: &SimConfig, init: &Initial) -> Result<Vec<Trajectory>, DynamicsError> {
    (0..cfg.ensemble as u64)
        .map(|r| simulate_replica(cfg, init, r))
        .collect()
}

/// Realized quadratic variation of `M(φ)` against its stationary target
/// `2T ‖(−Δ)^{θ/2} φ‖² = 2T Σ_k |k|^{2θ} φ̂_k²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QvEstimate {
    pub realized: f64,
    pub expected: f64,
}

pub fn realized_qv(
    traj: &Trajectory,
    phi: &SpectralField,
    theta: f64,
) -> Result<QvEstimate, DynamicsError> {
    if traj.len() < 2 {
        return Err(DynamicsError::TooShort {
            needed: 2,
            got: traj.len(),
        });
    }
    let paired: Vec<f64> = traj.mart.iter().map(|m| m.coupling(phi)).collect();
    let realized = paired.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    let horizon = traj.times.last().unwrap() - traj.times[0];
    let expected = 2.0
        * horizon
        * disk_modes(phi.cutoff())
            .into_iter()
            .map(|k| (k.norm_sq() as f64).powf(theta) * phi.get(k).powi(2))
            .sum::<f64>();
    Ok(QvEstimate { realized, expected })
}

/// Time reversal `ω̃_t = ω_{T−t}` with the drift convention
/// `𝒜̃_t = −(𝒜_T − 𝒜_{T−t})` (applied to both `g` and `g_mild`); the
/// reversed martingale part is rebuilt from the decomposition, with the
/// linear integral re-accumulated over the recorded reversed states.
pub fn reverse_trajectory(traj: &Trajectory) -> Trajectory {
    let n = traj.len() - 1;
    let m = traj.cutoff();
    let modes = disk_modes(m);
    let horizon = traj.times[n];
    let times: Vec<f64> = (0..=n).map(|i| horizon - traj.times[n - i]).collect();
    let states: Vec<SpectralField> = (0..=n).map(|i| traj.states[n - i].clone()).collect();
    let minus_reversed = |acc: &[SpectralField]| -> Vec<SpectralField> {
        (0..=n)
            .map(|i| {
                let mut out = SpectralField::zero(m).expect("valid cutoff");
                for &k in &modes {
                    out.set(k, -(acc[n].get(k) - acc[n - i].get(k)))
                        .expect("mode in disk");
                }
                out
            })
            .collect()
    };
    let g = minus_reversed(&traj.g);
    let g_mild = minus_reversed(&traj.g_mild);

    let mut lin = SpectralField::zero(m).expect("valid cutoff");
    let mut mart = Vec::with_capacity(n + 1);
    for i in 0..=n {
        if i > 0 {
            let dt = times[i] - times[i - 1];
            for &k in &modes {
                let rate = (k.norm_sq() as f64).powf(traj.theta);
                lin.set(k, lin.get(k) + dt * rate * states[i - 1].get(k))
                    .expect("mode in disk");
            }
        }
        let mut mi = SpectralField::zero(m).expect("valid cutoff");
        for &k in &modes {
            mi.set(
                k,
                states[i].get(k) - states[0].get(k) + lin.get(k) - g[i].get(k),
            )
            .expect("mode in disk");
        }
        mart.push(mi);
    }
    Trajectory {
        times,
        states,
        g,
        g_mild,
        mart,
        theta: traj.theta,
        dt: traj.dt,
    }
}

/// Monte Carlo estimate of `𝔼[sup_{t≤T} |∫₀ᵗ 𝓛_θ F(ω_s) ds|^p]` over the
/// configured ensemble started from μ, with the integral accumulated by
/// left-endpoint sums at the simulation `dt`.
pub fn ito_trick_statistic(
    cfg: &SimConfig,
    form: &QuadraticForm,
    p: f64,
) -> Result<f64, DynamicsError> {
    cfg.validate()?;
    if !(p >= 1.0) {
        return Err(DynamicsError::InvalidConfig(format!(
            "moment order p must be >= 1, got {p}"
        )));
    }
    if form.cutoff() > cfg.m {
        return Err(DynamicsError::InvalidConfig(format!(
            "form cutoff {} exceeds simulation cutoff {}",
            form.cutoff(),
            cfg.m
        )));
    }
    let lf = generator_apply(form, cfg.generator());
    let n = cfg.num_steps();
    let mut total = 0.0;
    for replica in 0..cfg.ensemble as u64 {
        let mut stepper = Stepper::new(cfg)?;
        let mut state = sample_mu_replica(cfg.m, cfg.master_seed, replica)?;
        let mut b = SpectralField::zero(cfg.m)?;
        let mut integral = 0.0;
        let mut sup = 0.0f64;
        for i in 0..n {
            integral += cfg.dt * evaluate_form(&lf, &state)?;
            sup = sup.max(integral.abs());
            stepper.eval_b(&state, &mut b)?;
            let noise = step_noise(cfg.m, cfg.master_seed, replica, i);
            state = stepper.advance(&state, &b, &noise)?;
        }
        total += sup.powf(p);
    }
    Ok(total / cfg.ensemble as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos::h_poisson;
    use crate::measure::sample_mu;
    use crate::nonlinearity::b_truncated;
    use crate::spectral::NormSpec;
    use crate::stats::ks_test_standard_normal;
    use approx::assert_abs_diff_eq;

    fn mode(k1: u32, k2: u32) -> ModeIndex {
        ModeIndex::new(k1, k2).unwrap()
    }

    fn cfg(m: u32, theta: f64, t_final: f64, dt: f64, seed: u64) -> SimConfig {
        SimConfig {
            theta,
            m,
            t_final,
            dt,
            master_seed: seed,
            ensemble: 1,
            scheme: Scheme::ExpEuler,
            record_stride: 1,
            fast_nonlinearity: false,
        }
    }

    #[test]
    fn phi1_branches_agree() {
        assert_eq!(phi1(0.0), 1.0);
        // the series branch exists because the direct expression cancels
        // catastrophically for tiny z; check it against the next series
        // term instead of the noisy direct value
        for z in [1e-8f64, 9e-6, 9.9e-6] {
            let series = 1.0 - z / 2.0 + z * z / 6.0;
            assert_abs_diff_eq!(phi1(z), series, epsilon = 1e-15);
        }
        // where the direct branch is well conditioned the two agree
        for z in [1e-3f64, 1e-2, 1.0] {
            let direct = (1.0 - (-z).exp()) / z;
            assert_abs_diff_eq!(phi1(z), direct, epsilon = 1e-12);
        }
    }

    #[test]
    fn ou_step_cases() {
        let f = sample_mu(4, 1).unwrap();
        let zero = SpectralField::zero(4).unwrap();
        let near_id = ou_step(&f, 2.5, 1e-14, &zero);
        for k in disk_modes(4) {
            assert_abs_diff_eq!(near_id.get(k), f.get(k), epsilon = 1e-10);
        }

        // single mode (1,1), θ=2: λ = 2² = 4, decay e^{-0.4} at dt = 0.1
        let e11 = SpectralField::basis(2, mode(1, 1)).unwrap();
        let stepped = ou_step(&e11, 2.0, 0.1, &SpectralField::zero(2).unwrap());
        assert_abs_diff_eq!(
            stepped.get(mode(1, 1)),
            (-0.4f64).exp(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn ou_step_preserves_stationary_variance() {
        let m = 4u32;
        let n = 10_000u64;
        let modes = disk_modes(m);
        let mut sums_sq = vec![0.0f64; modes.len()];
        for r in 0..n {
            let f = sample_mu_replica(m, 77, r).unwrap();
            let noise = step_noise(m, 77, r, 0);
            let stepped = ou_step(&f, 2.5, 0.05, &noise.primary);
            for (i, &k) in modes.iter().enumerate() {
                sums_sq[i] += stepped.get(k) * stepped.get(k);
            }
        }
        let tol = 4.0 * (2.0 / n as f64).sqrt();
        for (i, &k) in modes.iter().enumerate() {
            let var = sums_sq[i] / n as f64;
            assert!((var - 1.0).abs() <= tol, "mode {k:?}: var {var}");
        }
    }

    #[test]
    fn exp_euler_reduces_to_ou_for_single_mode() {
        // B^m of a single eigenmode vanishes, so the drift drops out
        let c = cfg(4, 2.5, 0.1, 0.05, 3);
        let e11 = SpectralField::basis(4, mode(1, 1)).unwrap();
        let noise = step_noise(4, 3, 0, 0);
        let stepped = galerkin_step(&e11, &c, &noise).unwrap();
        let ou = ou_step(&e11, 2.5, 0.05, &noise.primary);
        for k in disk_modes(4) {
            assert_abs_diff_eq!(stepped.get(k), ou.get(k), epsilon = 1e-13);
        }
    }

    #[test]
    fn drift_enstrophy_error_is_second_order() {
        // explicit Euler on the conservative drift: ΔΣω̂² = dt²‖B‖² exactly
        let f = sample_mu(6, 9).unwrap();
        let l2 = NormSpec::new(2.0, 0.0).unwrap();
        let e0 = f.fl_norm(l2).powi(2);
        let mut changes = Vec::new();
        for dt in [1e-2, 5e-3, 2.5e-3] {
            let b = b_truncated(&f, 6).unwrap().field;
            let mut drifted = f.clone();
            for k in disk_modes(6) {
                drifted.set(k, f.get(k) + dt * b.get(k)).unwrap();
            }
            changes.push((drifted.fl_norm(l2).powi(2) - e0).abs());
        }
        // halving dt divides the change by 4
        assert!((changes[0] / changes[1] - 4.0).abs() < 0.1);
        assert!((changes[1] / changes[2] - 4.0).abs() < 0.1);
    }

    #[test]
    fn schemes_agree_weakly() {
        let base = SimConfig {
            theta: 2.5,
            m: 4,
            t_final: 0.1,
            dt: 0.01,
            master_seed: 21,
            ensemble: 10_000,
            scheme: Scheme::ExpEuler,
            record_stride: 100,
            fast_nonlinearity: false,
        };
        let k = mode(1, 1);
        let run = |scheme: Scheme| {
            let c = SimConfig { scheme, ..base.clone() };
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for r in 0..c.ensemble as u64 {
                let t = simulate_replica(&c, &Initial::SampleMu, r).unwrap();
                let x = t.final_state().get(k);
                sum += x;
                sum_sq += x * x;
            }
            let n = c.ensemble as f64;
            let mean = sum / n;
            let var = sum_sq / n - mean * mean;
            (mean, (var / n).sqrt())
        };
        let (mean_a, se_a) = run(Scheme::ExpEuler);
        let (mean_b, se_b) = run(Scheme::Splitting);
        let joint_se = (se_a * se_a + se_b * se_b).sqrt();
        assert!(
            (mean_a - mean_b).abs() <= 4.0 * joint_se,
            "{mean_a} vs {mean_b}, joint se {joint_se}"
        );
    }

    #[test]
    fn zero_horizon_and_determinism() {
        let c = cfg(4, 2.5, 0.0, 0.01, 5);
        let f = sample_mu(4, 5).unwrap();
        let t = simulate_replica(&c, &Initial::Field(f.clone()), 0).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.states[0], f);
        assert_eq!(t.g[0], SpectralField::zero(4).unwrap());
        assert_eq!(t.times[0], 0.0);

        let c2 = cfg(6, 2.25, 0.2, 0.01, 11);
        let a = simulate_replica(&c2, &Initial::SampleMu, 3).unwrap();
        let b = simulate_replica(&c2, &Initial::SampleMu, 3).unwrap();
        assert_eq!(a, b);
        let other = simulate_replica(&c2, &Initial::SampleMu, 4).unwrap();
        assert_ne!(a.states.last(), other.states.last());
    }

    #[test]
    fn rejects_bad_configs_and_mismatched_cutoff() {
        let mut c = cfg(4, 2.5, 1.0, 0.01, 0);
        c.dt = 0.0;
        assert!(matches!(
            simulate_replica(&c, &Initial::SampleMu, 0),
            Err(DynamicsError::InvalidConfig(_))
        ));

        let c = cfg(4, 2.5, 0.1, 0.01, 0);
        let wrong = sample_mu(8, 0).unwrap();
        assert!(matches!(
            simulate_replica(&c, &Initial::Field(wrong), 0),
            Err(DynamicsError::CutoffMismatch { .. })
        ));
    }

    #[test]
    fn linear_moments_stay_bounded_for_large_dt() {
        // unconditional stability: exact OU factorization, any dt
        let m = 4u32;
        for dt in [0.1, 1.0, 10.0] {
            let n = 2000u64;
            let modes = disk_modes(m);
            let mut sums_sq = vec![0.0f64; modes.len()];
            for r in 0..n {
                let mut f = sample_mu_replica(m, 31, r).unwrap();
                for step in 0..5 {
                    let noise = step_noise(m, 31, r, step);
                    f = ou_step(&f, 2.5, dt, &noise.primary);
                }
                for (i, &k) in modes.iter().enumerate() {
                    sums_sq[i] += f.get(k) * f.get(k);
                }
            }
            for (i, &k) in modes.iter().enumerate() {
                let var = sums_sq[i] / n as f64;
                assert!(var <= 1.0 + 4.0 * (2.0 / n as f64).sqrt(), "dt {dt} mode {k:?}: {var}");
            }
        }
    }

    #[test]
    fn accumulators_replay_and_decomposition_closes() {
        let c = cfg(5, 2.5, 0.1, 0.005, 13);
        let t = simulate_replica(&c, &Initial::SampleMu, 2).unwrap();
        let modes = disk_modes(5);

        // replay G and G_mild from recorded states (stride 1) with the
        // production evaluator: equality is exact, not approximate
        let table = InteractionTable::new(5);
        let mut g = SpectralField::zero(5).unwrap();
        let mut gm = SpectralField::zero(5).unwrap();
        let mut b = SpectralField::zero(5).unwrap();
        for i in 0..t.len() - 1 {
            table.apply(&t.states[i], &mut b);
            for &k in &modes {
                let lambda = (k.norm_sq() as f64).powf(c.theta);
                g.set(k, g.get(k) + c.dt * b.get(k)).unwrap();
                gm.set(
                    k,
                    (-lambda * c.dt).exp() * gm.get(k)
                        + c.dt * phi1(lambda * c.dt) * b.get(k),
                )
                .unwrap();
            }
            for &k in &modes {
                assert_eq!(g.get(k), t.g[i + 1].get(k), "G replay at {}", i + 1);
                assert_eq!(gm.get(k), t.g_mild[i + 1].get(k), "G_mild replay");
            }
        }

        // state_t = state_0 - ∫λω + G + M per mode
        let mut lin = SpectralField::zero(5).unwrap();
        for i in 0..t.len() {
            if i > 0 {
                for &k in &modes {
                    let lambda = (k.norm_sq() as f64).powf(c.theta);
                    lin.set(k, lin.get(k) + c.dt * lambda * t.states[i - 1].get(k))
                        .unwrap();
                }
            }
            for &k in &modes {
                let recon = t.states[0].get(k) - lin.get(k)
                    + t.g[i].get(k)
                    + t.mart[i].get(k);
                assert!(
                    (recon - t.states[i].get(k)).abs() <= 1e-12,
                    "decomposition at {i} mode {k:?}"
                );
            }
        }
    }

    #[test]
    fn stationarity_of_mu_at_desk_scale() {
        let c = SimConfig {
            theta: 2.5,
            m: 8,
            t_final: 1.0,
            dt: 1e-3,
            master_seed: 2024,
            ensemble: 2000,
            scheme: Scheme::ExpEuler,
            record_stride: 1000,
            fast_nonlinearity: false,
        };
        let k = mode(1, 1);
        let finals: Vec<f64> = (0..c.ensemble as u64)
            .map(|r| {
                simulate_replica(&c, &Initial::SampleMu, r)
                    .unwrap()
                    .final_state()
                    .get(k)
            })
            .collect();
        let ks = ks_test_standard_normal(&finals);
        assert!(
            ks.p_value.unwrap() > 0.01,
            "KS p = {:?}, D = {}",
            ks.p_value,
            ks.statistic
        );
    }

    #[test]
    fn qv_cases() {
        let c = cfg(4, 2.5, 1.0, 1e-3, 404);
        let t = simulate_replica(&c, &Initial::SampleMu, 0).unwrap();
        let phi = SpectralField::basis(4, mode(1, 1)).unwrap();
        let qv = realized_qv(&t, &phi, 2.5).unwrap();
        assert_abs_diff_eq!(qv.expected, 2.0 * 2.0f64.powf(2.5), epsilon = 1e-12);
        assert!(
            (qv.realized - qv.expected).abs() <= 0.10 * qv.expected,
            "realized {}, expected {}",
            qv.realized,
            qv.expected
        );

        let zero = SpectralField::zero(4).unwrap();
        assert_eq!(realized_qv(&t, &zero, 2.5).unwrap().realized, 0.0);

        let single = simulate_replica(&cfg(4, 2.5, 0.0, 1e-3, 1), &Initial::SampleMu, 0).unwrap();
        assert!(realized_qv(&single, &phi, 2.5).is_err());
    }

    #[test]
    fn qv_is_linear_in_horizon() {
        let phi = SpectralField::basis(4, mode(1, 1)).unwrap();
        let mut ratios = 0.0;
        let n = 100u64;
        for r in 0..n {
            let short = simulate_replica(&cfg(4, 2.5, 0.25, 2.5e-3, 88), &Initial::SampleMu, r)
                .unwrap();
            let long = simulate_replica(&cfg(4, 2.5, 0.5, 2.5e-3, 88), &Initial::SampleMu, r)
                .unwrap();
            ratios += realized_qv(&long, &phi, 2.5).unwrap().realized
                / realized_qv(&short, &phi, 2.5).unwrap().realized;
        }
        let mean_ratio = ratios / n as f64;
        assert!(
            (mean_ratio - 2.0).abs() <= 0.15 * 2.0,
            "mean QV ratio {mean_ratio}"
        );
    }

    #[test]
    fn reversal_involution_and_conventions() {
        let c = cfg(5, 2.5, 0.1, 0.005, 19);
        let t = simulate_replica(&c, &Initial::SampleMu, 1).unwrap();
        let rev = reverse_trajectory(&t);
        let modes = disk_modes(5);

        // reversed drift accumulator starts at zero
        for &k in &modes {
            assert_eq!(rev.g[0].get(k), 0.0);
            assert_eq!(rev.g_mild[0].get(k), 0.0);
        }
        for (a, b) in rev.times.iter().zip(t.times.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }

        let back = reverse_trajectory(&rev);
        assert_eq!(back.states, t.states);
        for i in 0..t.len() {
            for &k in &modes {
                assert!((back.g[i].get(k) - t.g[i].get(k)).abs() <= 1e-12);
                assert!((back.mart[i].get(k) - t.mart[i].get(k)).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn backward_qv_matches_forward() {
        let phi = SpectralField::basis(4, mode(1, 1)).unwrap();
        let n = 100u64;
        let mut fwd = 0.0;
        let mut bwd = 0.0;
        for r in 0..n {
            let t = simulate_replica(&cfg(4, 2.5, 0.5, 2.5e-3, 55), &Initial::SampleMu, r)
                .unwrap();
            fwd += realized_qv(&t, &phi, 2.5).unwrap().realized;
            bwd += realized_qv(&reverse_trajectory(&t), &phi, 2.5)
                .unwrap()
                .realized;
        }
        assert!(
            (bwd / fwd - 1.0).abs() <= 0.15,
            "forward {fwd}, backward {bwd}"
        );
    }

    #[test]
    fn ito_trick_constant_form_is_zero() {
        let c = SimConfig {
            ensemble: 5,
            ..cfg(4, 2.5, 0.1, 0.01, 7)
        };
        let f = QuadraticForm::constant_form(4, 3.0);
        assert_eq!(ito_trick_statistic(&c, &f, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn ito_trick_scales_like_sqrt_t() {
        let p = GeneratorParams::new(2.5).unwrap();
        let f = h_poisson(mode(1, 1), 8, p);
        let base = SimConfig {
            theta: 2.5,
            m: 8,
            t_final: 0.1,
            dt: 2e-3,
            master_seed: 61,
            ensemble: 2000,
            scheme: Scheme::ExpEuler,
            record_stride: 1,
            fast_nonlinearity: false,
        };
        let short = ito_trick_statistic(&base, &f, 2.0).unwrap();
        let long = ito_trick_statistic(
            &SimConfig {
                t_final: 0.4,
                ..base.clone()
            },
            &f,
            2.0,
        )
        .unwrap();
        // the p = 2 moment scales like T; compare the L² norms, whose
        // target ratio is √(0.4/0.1) = 2
        let ratio = (long / short).sqrt();
        assert!((1.3..=3.1).contains(&ratio), "ratio {ratio}");

        // finiteness against the closed-form right-hand side (p = 2)
        let rhs = 4.0 * base.t_final * crate::chaos::expected_carre(mode(1, 1), 8, p).unwrap();
        assert!(short <= 10.0 * rhs, "statistic {short} vs bound {rhs}");
    }
}
