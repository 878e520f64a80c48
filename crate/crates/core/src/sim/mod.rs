//! Monte-Carlo experiment harness.
//!
//! A run is one JSON [`ExperimentConfig`]: a system, a channel model, a sweep
//! axis and a list of curves (estimator plus per-curve overrides). Every
//! `(trial, sweep point)` pair draws one channel, one pilot design and one
//! noise realization, shared by all curves with the same channel and pilot
//! parameters, so curves are compared on common random numbers.

mod plot;
pub mod verify;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelParams, ChannelPath, ChannelRealization, Grid};
use crate::error::{param_err, Error, Result};
use crate::linalg::{self, CMatrix};
use crate::recovery::{self, Algorithm, ModelOrder, RecoveryConfig};
use crate::sensing::{twiddle, DesignParams, KroneckerSensingOperator, PilotDesign, Vectorization};
use crate::{SparsityProfile, C64};

pub use plot::{emit_plot_data, PlotOutput};

pub const CSV_HEADER: [&str; 6] = ["sweep_value", "algorithm", "mse_mean", "mse_stderr", "trials", "seconds"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    SingleUserSweep,
    MultiuserSweep,
    SfVsFs,
    #[serde(rename = "mismatched-L")]
    MismatchedL,
    OmpCompare,
    OffgridSweep,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Small,
    Paper,
}

impl Preset {
    /// `(N, M, D)`.
    pub fn dims(self) -> (usize, usize, usize) {
        match self {
            Preset::Small => (128, 64, 32),
            Preset::Paper => (1024, 256, 256),
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "small" => Ok(Preset::Small),
            "paper" => Ok(Preset::Paper),
            _ => param_err(format!("unknown preset {s:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub u: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    0.25
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub l: usize,
    pub v: usize,
    #[serde(default = "one")]
    pub k_v: usize,
    #[serde(default = "one")]
    pub k_l: usize,
    #[serde(default = "default_grid")]
    pub grid: Grid,
}

fn one() -> usize {
    1
}

fn default_grid() -> Grid {
    Grid::On
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Np,
    LHat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<usize>,
    /// Pilot subcarriers when the axis is not `np`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub np: Option<usize>,
}

/// What produces `Ĥ` for a curve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Estimator {
    Solver(Algorithm),
    /// `Ĥ = conj(c)·Y` on the sampled grid; needs `Np = N`, `Mp = M`, `U = 1`.
    Naive,
    Zero,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Estimator::Solver(a) => a.fmt(f),
            Estimator::Naive => f.write_str("Naive"),
            Estimator::Zero => f.write_str("Zero"),
        }
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "naive" => Ok(Estimator::Naive),
            "zero" => Ok(Estimator::Zero),
            _ => s.parse().map(Estimator::Solver),
        }
    }
}

impl Serialize for Estimator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Estimator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSpec {
    pub estimator: Estimator,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub option: Option<Vectorization>,
    /// Path count assumed by the solver.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_hat: Option<usize>,
    /// Off-grid `(L1, L2)` candidates; with more than one, each sweep point
    /// reports the best.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leakage: Option<Vec<(usize, usize)>>,
}

impl CurveSpec {
    pub fn new(estimator: Estimator) -> Self {
        Self { estimator, label: None, l: None, v: None, option: None, l_hat: None, leakage: None }
    }

    fn auto_label(&self) -> String {
        let mut s = self.estimator.to_string();
        if let Some(o) = self.option {
            s += &format!(" {o}");
        }
        if let Some(l) = self.l {
            s += &format!(" L={l}");
        }
        if let Some(v) = self.v {
            s += &format!(" V={v}");
        }
        if let Some(lh) = self.l_hat {
            s += &format!(" Lhat={lh}");
        }
        match self.leakage.as_deref() {
            Some([(l1, l2)]) => s += &format!(" L1={l1} L2={l2}"),
            Some(list) if list.len() > 1 => s += " [best L1,L2]",
            _ => {}
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub system: SystemConfig,
    pub channel: ChannelConfig,
    #[serde(default = "default_option")]
    pub option: Vectorization,
    pub sweep: SweepConfig,
    /// Fraction of the array observed, `Mp = round(fraction·M)`.
    #[serde(default = "default_fraction")]
    pub mp_fraction: f64,
    /// Empty selects the scenario's default curves.
    #[serde(default)]
    pub curves: Vec<CurveSpec>,
    /// `None` is noiseless.
    pub snr_db: Option<f64>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "default_iters")]
    pub max_iters: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

fn default_option() -> Vectorization {
    Vectorization::FrequencySpace
}

fn default_fraction() -> f64 {
    1.0
}

fn default_iters() -> usize {
    10
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// A runnable configuration with the scenario's default parameters.
    pub fn template(scenario: Scenario, preset: Preset) -> Self {
        let (n, m, d) = preset.dims();
        let np_values: Vec<usize> = match preset {
            Preset::Small => vec![2, 4, 6, 8, 12, 16, 24, 32],
            Preset::Paper => vec![4, 6, 8, 10, 15, 20, 40, 80, 160],
        };
        let mut cfg = Self {
            scenario,
            system: SystemConfig { n, m, d, u: 1, alpha: 0.25 },
            channel: ChannelConfig { l: 3, v: 1, k_v: 1, k_l: 1, grid: Grid::On },
            option: Vectorization::FrequencySpace,
            sweep: SweepConfig { axis: SweepAxis::Np, values: np_values, np: None },
            mp_fraction: 1.0,
            curves: Vec::new(),
            snr_db: Some(10.0),
            trials: 100,
            seed: 1,
            max_iters: 10,
            output: None,
        };
        match scenario {
            Scenario::SingleUserSweep => {}
            Scenario::MultiuserSweep | Scenario::SfVsFs => cfg.system.u = 4,
            Scenario::MismatchedL => {
                cfg.system.u = 4;
                cfg.channel.v = 2;
                cfg.sweep = SweepConfig { axis: SweepAxis::LHat, values: vec![1, 2, 3, 4, 5, 6], np: Some(15) };
            }
            Scenario::OmpCompare => {
                cfg.system.u = 4;
                cfg.channel.v = 2;
                cfg.mp_fraction = 0.25;
            }
            Scenario::OffgridSweep => {
                cfg.channel.grid = Grid::Off;
                cfg.system.u = 4;
                cfg.channel.v = 2;
            }
        }
        cfg
    }

    /// Swaps in the preset's `(N, M, D)`. Swept `Np` values above the new `N`
    /// are dropped and returned.
    pub fn apply_preset(&mut self, preset: Preset) -> Vec<usize> {
        let (n, m, d) = preset.dims();
        self.system.n = n;
        self.system.m = m;
        self.system.d = d;
        let mut dropped = Vec::new();
        if self.sweep.axis == SweepAxis::Np {
            self.sweep.values.retain(|&v| v <= n || {
                dropped.push(v);
                false
            });
        }
        dropped
    }

    pub fn mp(&self) -> usize {
        ((self.mp_fraction * self.system.m as f64).round() as usize).clamp(1, self.system.m)
    }

    /// Curves as run: the explicit list or the scenario default.
    pub fn resolved_curves(&self) -> Vec<CurveSpec> {
        if !self.curves.is_empty() {
            return self.curves.clone();
        }
        let solver = |a| CurveSpec::new(Estimator::Solver(a));
        let grid: Vec<(usize, usize)> =
            [1, 2, 4].iter().flat_map(|&a| [1, 2, 4].iter().map(move |&b| (a, b))).collect();
        match self.scenario {
            Scenario::SingleUserSweep => [1, 3, 5]
                .iter()
                .flat_map(|&l| {
                    [Algorithm::HiIHT, Algorithm::IHT].map(|a| CurveSpec { l: Some(l), ..solver(a) })
                })
                .collect(),
            Scenario::MultiuserSweep => {
                (1..=4).map(|v| CurveSpec { v: Some(v), ..solver(Algorithm::HiIHT) }).collect()
            }
            Scenario::SfVsFs => [Vectorization::FrequencySpace, Vectorization::SpaceFrequency]
                .iter()
                .flat_map(|&o| {
                    [1, 4].map(|v| CurveSpec { option: Some(o), v: Some(v), ..solver(Algorithm::HiIHT) })
                })
                .collect(),
            Scenario::MismatchedL => vec![solver(Algorithm::HiIHT)],
            Scenario::OmpCompare => [Algorithm::HiHTP, Algorithm::HiIHT, Algorithm::OMP].map(solver).to_vec(),
            Scenario::OffgridSweep => [Algorithm::HiIHT, Algorithm::HiHTP]
                .map(|a| CurveSpec { leakage: Some(grid.clone()), ..solver(a) })
                .to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.system;
        if self.trials == 0 {
            return param_err("trials must be at least 1");
        }
        if self.max_iters == 0 {
            return param_err("max_iters must be at least 1");
        }
        if !(self.mp_fraction > 0.0 && self.mp_fraction <= 1.0) {
            return param_err(format!("mp_fraction must lie in (0, 1], got {}", self.mp_fraction));
        }
        if self.sweep.values.is_empty() {
            return param_err("sweep needs at least one value");
        }
        if let Some(db) = self.snr_db {
            if !db.is_finite() {
                return param_err("snr_db must be finite; use null for noiseless");
            }
        }
        match (self.scenario, self.sweep.axis) {
            (Scenario::MismatchedL, SweepAxis::LHat) => {
                let np = self.sweep.np.ok_or_else(|| Error::InvalidParameter("l_hat sweep needs sweep.np".into()))?;
                self.check_np(np)?;
            }
            (Scenario::MismatchedL, _) => return param_err("mismatched-L sweeps the l_hat axis"),
            (_, SweepAxis::Np) => {
                for &np in &self.sweep.values {
                    self.check_np(np)?;
                }
            }
            (_, SweepAxis::LHat) => {
                let np = self.sweep.np.ok_or_else(|| Error::InvalidParameter("l_hat sweep needs sweep.np".into()))?;
                self.check_np(np)?;
            }
        }
        if (self.scenario == Scenario::OffgridSweep) != (self.channel.grid == Grid::Off) {
            return param_err("offgrid-sweep goes with grid = off and only with it");
        }
        for curve in self.resolved_curves() {
            let chan = self.channel_params(&curve);
            chan.validate()?;
            if curve.l_hat == Some(0) || self.sweep.values.contains(&0) && self.sweep.axis == SweepAxis::LHat {
                return param_err("L̂ must be positive");
            }
            if chan.grid == Grid::Off && curve.estimator != Estimator::Zero {
                let pairs = curve.leakage.as_deref().unwrap_or(&[]);
                if matches!(curve.estimator, Estimator::Solver(_)) && pairs.is_empty() {
                    return param_err(format!("off-grid curve {} needs leakage (L1, L2)", curve.auto_label()));
                }
                if pairs.iter().any(|&(a, b)| a == 0 || b == 0) {
                    return param_err("L1 and L2 must be positive");
                }
            }
            if curve.estimator == Estimator::Naive && (s.u != 1 || self.mp() != s.m) {
                return param_err("the naive estimator needs U = 1 and Mp = M");
            }
        }
        DesignParams { n: s.n, m: s.m, d: s.d, u: s.u, np: 1, mp: self.mp() }.validate()
    }

    fn check_np(&self, np: usize) -> Result<()> {
        if np == 0 || np > self.system.n {
            return param_err(format!("Np={np} outside 1..=N={}", self.system.n));
        }
        Ok(())
    }

    fn channel_params(&self, curve: &CurveSpec) -> ChannelParams {
        let s = &self.system;
        let c = &self.channel;
        ChannelParams {
            n: s.n,
            m: s.m,
            d: s.d,
            u: s.u,
            v: curve.v.unwrap_or(c.v),
            l: curve.l.unwrap_or(c.l),
            k_v: c.k_v,
            k_l: c.k_l,
            alpha: s.alpha,
            option: curve.option.unwrap_or(self.option),
            grid: c.grid,
        }
    }

    fn point_np(&self, point: usize) -> usize {
        match self.sweep.axis {
            SweepAxis::Np => self.sweep.values[point],
            SweepAxis::LHat => self.sweep.np.expect("validated"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MseRecord {
    pub sweep_value: f64,
    pub algorithm: String,
    pub mse_mean: f64,
    pub mse_stderr: f64,
    pub trials: usize,
    /// Mean estimator wall time per trial.
    pub seconds: f64,
}

/// One estimator evaluation inside a trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub point: usize,
    pub curve: usize,
    /// Index into the curve's leakage list; 0 on the grid.
    pub variant: usize,
    /// `None` when the estimator failed.
    pub mse: Option<f64>,
    pub seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed derived from the master seed and a sequence of stream labels.
pub fn derive_seed(master: u64, labels: &[u64]) -> u64 {
    labels.iter().fold(splitmix(master), |h, &l| splitmix(h ^ splitmix(l)))
}

const STREAM_CHANNEL: u64 = 1;
const STREAM_PILOTS: u64 = 2;
const STREAM_NOISE: u64 = 3;

fn channel_key(p: &ChannelParams) -> u64 {
    let option = match p.option {
        Vectorization::FrequencySpace => 0,
        Vectorization::SpaceFrequency => 1,
    };
    derive_seed(p.l as u64, &[p.v as u64, option])
}

/// Measurements `y = vec(Y)/√(Np·Mp)` and the raw `Np × Mp` observation.
struct Observation {
    y: Vec<C64>,
    raw: Vec<C64>,
}

/// `Y[i, j] = Σ_u c_u[i]·H_u[s_i, a_j] + Z[i, j]` with `Z ~ CN(0, 1/SNR)`.
fn observe(
    op: &KroneckerSensingOperator,
    realization: &ChannelRealization,
    snr_linear: Option<f64>,
    noise_rng: &mut ChaCha8Rng,
) -> Result<Observation> {
    let design = op.design();
    let DesignParams { n, m, np, mp, .. } = design.params();
    let mut raw = vec![C64::new(0.0, 0.0); np * mp];
    for (ue, paths) in realization.paths.iter().enumerate() {
        if paths.is_empty() {
            continue;
        }
        let sig = design.signature(ue)?;
        let h = sampled_transfer(paths, design.subcarriers(), design.antennas(), n, m);
        for i in 0..np {
            for j in 0..mp {
                raw[i * mp + j] += sig[i] * h[i * mp + j];
            }
        }
    }
    if let Some(snr) = snr_linear {
        let sd = (0.5 / snr).sqrt();
        for v in raw.iter_mut() {
            let re: f64 = noise_rng.sample(StandardNormal);
            let im: f64 = noise_rng.sample(StandardNormal);
            *v += C64::new(re * sd, im * sd);
        }
    }
    let scale = 1.0 / ((np * mp) as f64).sqrt();
    let mut y = vec![C64::new(0.0, 0.0); np * mp];
    for i in 0..np {
        for j in 0..mp {
            y[op.measurement_index(i, j)] = raw[i * mp + j] * scale;
        }
    }
    Ok(Observation { y, raw })
}

/// Normalized measurements `y` of `realization` through `op`, with noise
/// drawn from `noise_seed` (`snr_db = None` is noiseless).
pub fn simulate_measurements(
    op: &KroneckerSensingOperator,
    realization: &ChannelRealization,
    snr_db: Option<f64>,
    noise_seed: u64,
) -> Result<Vec<C64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    Ok(observe(op, realization, snr_db.map(|db| 10f64.powf(db / 10.0)), &mut rng)?.y)
}

/// `H[rows[i], cols[j]]`, row-major over `(i, j)`.
fn sampled_transfer(paths: &[ChannelPath], rows: &[usize], cols: &[usize], n: usize, m: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); rows.len() * cols.len()];
    for p in paths {
        let (b, a_conj): (Vec<C64>, Vec<C64>) = match p.grid_indices(n, m) {
            Some((k, l)) => (
                rows.iter().map(|&r| twiddle(r as u128 * k as u128, n)).collect(),
                cols.iter().map(|&c| twiddle(c as u128 * l as u128, m).conj()).collect(),
            ),
            None => (
                rows.iter().map(|&r| C64::from_polar(1.0, -2.0 * std::f64::consts::PI * r as f64 * p.tau_norm)).collect(),
                cols.iter().map(|&c| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * c as f64 * p.theta)).collect(),
            ),
        };
        for (i, bi) in b.iter().enumerate() {
            let g = p.gain * bi;
            for (j, aj) in a_conj.iter().enumerate() {
                out[i * cols.len() + j] += g * aj;
            }
        }
    }
    out
}

/// Per-UE `D × M` block of a stacked unknown.
fn ue_block(op: &KroneckerSensingOperator, x: &[C64], ue: usize) -> CMatrix {
    let DesignParams { d, m, .. } = op.design().params();
    CMatrix::from_fn(d, m, |k, l| x[op.unknown_index(ue * d + k, l)])
}

/// `(1/NM)·Σ_u ‖H_u − Ĥ_u‖²` with `Ĥ_u = A_τ X̂_u A_θ^H`.
fn solver_mse(op: &KroneckerSensingOperator, realization: &ChannelRealization, x_hat: &[C64]) -> Result<f64> {
    let p = &realization.params;
    match p.grid {
        // F_{N,D} and F_M have orthogonal columns of norms √N and √M
        Grid::On => Ok(linalg::norm_sqr(&linalg::sub(&realization.unknown_vector(op.option())?, x_hat))),
        Grid::Off => {
            let mut total = 0.0;
            for ue in 0..p.u {
                let h = channel::synthesize_transfer_offgrid(&realization.paths[ue], p.n, p.m);
                let h_hat = channel::transfer_from_delay_angular(&ue_block(op, x_hat, ue), p.n);
                total += (h - h_hat).norm_squared();
            }
            Ok(total / (p.n * p.m) as f64)
        }
    }
}

fn full_transfer(realization: &ChannelRealization, ue: usize) -> Result<CMatrix> {
    let p = &realization.params;
    match p.grid {
        Grid::On => channel::synthesize_transfer(realization, ue),
        Grid::Off => Ok(channel::synthesize_transfer_offgrid(&realization.paths[ue], p.n, p.m)),
    }
}

fn naive_mse(op: &KroneckerSensingOperator, realization: &ChannelRealization, raw: &[C64]) -> Result<f64> {
    let design = op.design();
    let DesignParams { n, m, np, mp, u, .. } = design.params();
    if u != 1 || np != n || mp != m {
        return param_err("the naive estimator needs U = 1 and full sampling");
    }
    let h = full_transfer(realization, 0)?;
    let sig = design.signature(0)?;
    let mut total = 0.0;
    for (i, &sc) in design.subcarriers().iter().enumerate() {
        for (j, &ant) in design.antennas().iter().enumerate() {
            total += (h[(sc, ant)] - sig[i].conj() * raw[i * mp + j]).norm_sqr();
        }
    }
    Ok(total / (n * m) as f64)
}

fn zero_mse(realization: &ChannelRealization) -> Result<f64> {
    let p = &realization.params;
    let mut total = 0.0;
    for ue in 0..p.u {
        if !realization.paths[ue].is_empty() {
            total += full_transfer(realization, ue)?.norm_squared();
        }
    }
    Ok(total / (p.n * p.m) as f64)
}

fn solver_config(
    cfg: &ExperimentConfig,
    curve: &CurveSpec,
    chan: &ChannelParams,
    algorithm: Algorithm,
    l_hat: Option<usize>,
    leakage: Option<(usize, usize)>,
) -> Result<RecoveryConfig> {
    let order = ModelOrder { v: chan.v, l: l_hat.or(curve.l_hat).unwrap_or(chan.l), k_v: chan.k_v, k_l: chan.k_l };
    let profile = if algorithm.is_hierarchical() {
        match leakage {
            None => order.ongrid_profile(chan.option)?,
            Some((l1, l2)) => order.offgrid_profile(chan.option, l1, l2)?,
        }
    } else {
        SparsityProfile::flat(order.flat_sparsity(leakage))?
    };
    Ok(RecoveryConfig::new(algorithm, profile).with_max_iters(cfg.max_iters))
}

/// Runs every curve and sweep point of one trial. Estimator failures are
/// recorded in the outcomes; only configuration errors abort.
pub fn run_trial(cfg: &ExperimentConfig, trial: usize) -> Result<Vec<TrialOutcome>> {
    let curves = cfg.resolved_curves();
    let snr = cfg.snr_db.map(|db| 10f64.powf(db / 10.0));
    let mp = cfg.mp();
    let mut out = Vec::new();
    // Channels keyed by their generation parameters, shared across points and curves.
    let mut channels: Vec<(u64, ChannelRealization)> = Vec::new();

    for point in 0..cfg.sweep.values.len() {
        let np = cfg.point_np(point);
        let l_hat = (cfg.sweep.axis == SweepAxis::LHat).then(|| cfg.sweep.values[point]);
        let pilot_seed = derive_seed(cfg.seed, &[STREAM_PILOTS, trial as u64, np as u64]);
        let design = PilotDesign::generate(
            DesignParams { n: cfg.system.n, m: cfg.system.m, d: cfg.system.d, u: cfg.system.u, np, mp },
            None,
            pilot_seed,
        )?;
        let mut ops: Vec<KroneckerSensingOperator> = Vec::new();

        for (ci, curve) in curves.iter().enumerate() {
            let chan = cfg.channel_params(curve);
            let key = channel_key(&chan);
            if !channels.iter().any(|(k, _)| *k == key) {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[STREAM_CHANNEL, trial as u64, key]));
                channels.push((key, channel::generate(&chan, &mut rng)?));
            }
            let realization = &channels.iter().find(|(k, _)| *k == key).expect("inserted").1;
            let op = match ops.iter().position(|o| o.option() == chan.option) {
                Some(i) => &ops[i],
                None => {
                    ops.push(KroneckerSensingOperator::new(design.clone(), chan.option));
                    ops.last().expect("pushed")
                }
            };
            let mut noise_rng =
                ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[STREAM_NOISE, trial as u64, np as u64, key]));
            let obs = observe(op, realization, snr, &mut noise_rng)?;

            let variants: Vec<Option<(usize, usize)>> = match (&curve.leakage, chan.grid) {
                (Some(list), Grid::Off) if !list.is_empty() => list.iter().map(|&p| Some(p)).collect(),
                _ => vec![None],
            };
            for (vi, leak) in variants.into_iter().enumerate() {
                let start = Instant::now();
                let res: Result<f64> = match curve.estimator {
                    Estimator::Zero => zero_mse(realization),
                    Estimator::Naive => naive_mse(op, realization, &obs.raw),
                    Estimator::Solver(alg) => solver_config(cfg, curve, &chan, alg, l_hat, leak)
                        .and_then(|rc| recovery::recover(&obs.y, op, &rc))
                        .and_then(|r| solver_mse(op, realization, r.x_hat.values())),
                };
                let seconds = start.elapsed().as_secs_f64();
                let (mse, error) = match res {
                    Ok(v) => (Some(v), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                out.push(TrialOutcome { point, curve: ci, variant: vi, mse, seconds, error });
            }
        }
    }
    Ok(out)
}

fn run_trials(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Vec<Vec<TrialOutcome>>> {
    let work = |t: usize| run_trial(cfg, t);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let go = || (0..cfg.trials).into_par_iter().map(work).collect::<Result<Vec<_>>>();
        match threads {
            Some(k) => rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
                .install(go),
            None => go(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        (0..cfg.trials).map(work).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakageChoice {
    pub sweep_value: f64,
    pub algorithm: String,
    pub l1: usize,
    pub l2: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub records: Vec<MseRecord>,
    /// `(trial, point, curve, message)` of failed estimator runs.
    pub failures: Vec<(usize, usize, usize, String)>,
    /// Winning `(L1, L2)` for curves flagged `[best L1,L2]`.
    pub leakage_choices: Vec<LeakageChoice>,
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Aggregates trial outcomes listed in trial order.
fn aggregate(cfg: &ExperimentConfig, per_trial: &[Vec<TrialOutcome>]) -> SweepResult {
    let curves = cfg.resolved_curves();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut leakage_choices = Vec::new();
    for (t, outcomes) in per_trial.iter().enumerate() {
        for o in outcomes {
            if let Some(e) = &o.error {
                failures.push((t, o.point, o.curve, e.clone()));
            }
        }
    }
    for point in 0..cfg.sweep.values.len() {
        let sweep_value = cfg.sweep.values[point] as f64;
        for (ci, curve) in curves.iter().enumerate() {
            let label = curve.label.clone().unwrap_or_else(|| curve.auto_label());
            let n_variants = match (&curve.leakage, cfg.channel.grid) {
                (Some(list), Grid::Off) if !list.is_empty() => list.len(),
                _ => 1,
            };
            let mut best: Option<(usize, MseRecord)> = None;
            for vi in 0..n_variants {
                let mut mses = Vec::with_capacity(per_trial.len());
                let mut secs = 0.0;
                for outcomes in per_trial {
                    for o in outcomes.iter().filter(|o| o.point == point && o.curve == ci && o.variant == vi) {
                        secs += o.seconds;
                        if let Some(v) = o.mse {
                            mses.push(v);
                        }
                    }
                }
                let (mse_mean, mse_stderr) = mean_stderr(&mses);
                let rec = MseRecord {
                    sweep_value,
                    algorithm: label.clone(),
                    mse_mean,
                    mse_stderr,
                    trials: per_trial.len(),
                    seconds: secs / per_trial.len().max(1) as f64,
                };
                let better = match &best {
                    None => true,
                    Some((_, b)) => rec.mse_mean < b.mse_mean || b.mse_mean.is_nan(),
                };
                if better {
                    best = Some((vi, rec));
                }
            }
            let (vi, rec) = best.expect("at least one variant");
            if n_variants > 1 {
                let (l1, l2) = curve.leakage.as_ref().expect("variants come from leakage")[vi];
                leakage_choices.push(LeakageChoice { sweep_value, algorithm: label.clone(), l1, l2 });
            }
            records.push(rec);
        }
    }
    SweepResult { records, failures, leakage_choices }
}

/// Runs all trials and aggregates in memory.
pub fn run_experiment(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<SweepResult> {
    cfg.validate()?;
    let per_trial = run_trials(cfg, threads)?;
    Ok(aggregate(cfg, &per_trial))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepArtifacts {
    pub result: SweepResult,
    pub csv_path: PathBuf,
    pub manifest_path: PathBuf,
}

#[derive(Serialize)]
struct Manifest<'a> {
    library: &'static str,
    version: &'static str,
    config: &'a ExperimentConfig,
    curves: Vec<CurveSpec>,
    seed_derivation: &'static str,
    csv: String,
    failures: &'a [(usize, usize, usize, String)],
    leakage_choices: &'a [LeakageChoice],
}

pub fn write_csv(path: &Path, records: &[MseRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.sweep_value.to_string(),
            r.algorithm.clone(),
            format!("{:e}", r.mse_mean),
            format!("{:e}", r.mse_stderr),
            r.trials.to_string(),
            format!("{:.6}", r.seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the sweep and writes `<stem>.csv` and `<stem>.manifest.json` to
/// `out_dir` (or the config's `output`, or the working directory).
pub fn run_sweep(cfg: &ExperimentConfig, out_dir: Option<&Path>, threads: Option<usize>) -> Result<SweepArtifacts> {
    let result = run_experiment(cfg, threads)?;
    let dir = out_dir.map(Path::to_path_buf).or_else(|| cfg.output.as_ref().map(PathBuf::from)).unwrap_or_default();
    if !dir.as_os_str().is_empty() {
        fs::create_dir_all(&dir)?;
    }
    let stem = serde_json::to_value(cfg.scenario)?.as_str().unwrap_or("run").to_string();
    let csv_path = dir.join(format!("{stem}.csv"));
    let manifest_path = dir.join(format!("{stem}.manifest.json"));
    write_csv(&csv_path, &result.records)?;
    let manifest = Manifest {
        library: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        curves: cfg.resolved_curves(),
        seed_derivation: "splitmix64 chain over (seed, stream, trial, ...): channel (1, trial, channel key), \
                          pilots (2, trial, Np), noise (3, trial, Np, channel key)",
        csv: csv_path.display().to_string(),
        failures: &result.failures,
        leakage_choices: &result.leakage_choices,
    };
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(SweepArtifacts { result, csv_path, manifest_path })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::SensingOperator;

    fn tiny(scenario: Scenario) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::template(scenario, Preset::Small);
        cfg.system = SystemConfig { n: 32, m: 8, d: 8, u: cfg.system.u.min(2), alpha: 0.25 };
        cfg.channel.v = cfg.channel.v.min(cfg.system.u);
        cfg.trials = 4;
        if cfg.sweep.axis == SweepAxis::Np {
            cfg.sweep.values = vec![8, 32];
        }
        cfg
    }

    #[test]
    fn templates_validate_and_round_trip() {
        for s in [
            Scenario::SingleUserSweep,
            Scenario::MultiuserSweep,
            Scenario::SfVsFs,
            Scenario::MismatchedL,
            Scenario::OmpCompare,
            Scenario::OffgridSweep,
        ] {
            for p in [Preset::Small, Preset::Paper] {
                let cfg = ExperimentConfig::template(s, p);
                cfg.validate().unwrap();
                assert_eq!(ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap(), cfg);
            }
        }
        let text = ExperimentConfig::template(Scenario::MismatchedL, Preset::Small).to_json().unwrap();
        assert!(text.contains("\"mismatched-L\""));
    }

    #[test]
    fn preset_drops_np_above_n() {
        let mut cfg = ExperimentConfig::template(Scenario::OffgridSweep, Preset::Paper);
        assert_eq!(cfg.apply_preset(Preset::Small), vec![160]);
        assert_eq!(cfg.system.n, 128);
        cfg.validate().unwrap();
        let mut cfg = ExperimentConfig::template(Scenario::MismatchedL, Preset::Paper);
        assert!(cfg.apply_preset(Preset::Small).is_empty());
    }

    #[test]
    fn incomplete_configs_are_rejected() {
        let mut cfg = tiny(Scenario::MismatchedL);
        cfg.sweep.np = None;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny(Scenario::SingleUserSweep);
        cfg.trials = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny(Scenario::SingleUserSweep);
        cfg.sweep.values = vec![64];
        assert!(cfg.validate().is_err());
        let mut cfg = tiny(Scenario::OffgridSweep);
        cfg.curves = vec![CurveSpec::new(Estimator::Solver(Algorithm::HiIHT))];
        assert!(cfg.validate().is_err());
        let mut cfg = tiny(Scenario::MultiuserSweep);
        cfg.curves = vec![CurveSpec::new(Estimator::Naive)];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn noiseless_full_sampling_is_exact() {
        let mut cfg = tiny(Scenario::SingleUserSweep);
        cfg.snr_db = None;
        cfg.sweep.values = vec![32];
        cfg.curves = vec![
            CurveSpec::new(Estimator::Solver(Algorithm::HiIHT)),
            CurveSpec::new(Estimator::Solver(Algorithm::HiHTP)),
            CurveSpec::new(Estimator::Naive),
        ];
        let res = run_experiment(&cfg, Some(1)).unwrap();
        for r in &res.records {
            assert!(r.mse_mean <= 1e-20, "{r:?}");
        }
    }

    #[test]
    fn parseval_mse_matches_explicit_synthesis() {
        let cfg = tiny(Scenario::MultiuserSweep);
        let chan = cfg.channel_params(&CurveSpec { v: Some(2), ..CurveSpec::new(Estimator::Zero) });
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = channel::gen_ongrid(&chan, &mut rng).unwrap();
        let design = PilotDesign::generate(DesignParams { n: 32, m: 8, d: 8, u: 2, np: 8, mp: 8 }, None, 1).unwrap();
        for option in [Vectorization::FrequencySpace, Vectorization::SpaceFrequency] {
            let op = KroneckerSensingOperator::new(design.clone(), option);
            let x_hat: Vec<C64> = (0..op.unknown_shape().total())
                .map(|i| C64::new((i % 7) as f64 * 0.01, (i % 3) as f64 * -0.02))
                .collect();
            let mut explicit = 0.0;
            for ue in 0..2 {
                let h = synthesize_or_zero(&r, ue);
                let h_hat = channel::transfer_from_delay_angular(&ue_block(&op, &x_hat, ue), 32);
                explicit += (h - h_hat).norm_squared();
            }
            explicit /= (32 * 8) as f64;
            assert!((solver_mse(&op, &r, &x_hat).unwrap() - explicit).abs() < 1e-12 * explicit.max(1.0));
        }
    }

    fn synthesize_or_zero(r: &ChannelRealization, ue: usize) -> CMatrix {
        channel::synthesize_transfer(r, ue).unwrap()
    }

    #[test]
    fn measurements_match_operator_on_grid() {
        let cfg = tiny(Scenario::MultiuserSweep);
        let chan = cfg.channel_params(&CurveSpec { v: Some(2), ..CurveSpec::new(Estimator::Zero) });
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = channel::gen_ongrid(&chan, &mut rng).unwrap();
        let design = PilotDesign::generate(DesignParams { n: 32, m: 8, d: 8, u: 2, np: 10, mp: 5 }, None, 2).unwrap();
        for option in [Vectorization::FrequencySpace, Vectorization::SpaceFrequency] {
            let op = KroneckerSensingOperator::new(design.clone(), option);
            let obs = observe(&op, &r, None, &mut rng).unwrap();
            let direct = op.apply(&r.unknown_vector(option).unwrap());
            assert!(linalg::distance(&obs.y, &direct) < 1e-12);
        }
    }

    #[test]
    fn runs_are_deterministic_and_thread_independent() {
        let cfg = tiny(Scenario::OmpCompare);
        let a = run_experiment(&cfg, Some(1)).unwrap();
        let b = run_experiment(&cfg, Some(3)).unwrap();
        let strip = |r: &SweepResult| -> Vec<(String, u64, u64)> {
            r.records.iter().map(|m| (m.algorithm.clone(), m.mse_mean.to_bits(), m.mse_stderr.to_bits())).collect()
        };
        assert_eq!(strip(&a), strip(&b));
        assert_eq!(a.failures, b.failures);
        assert_eq!(a.records.len(), 2 * 3);
    }

    #[test]
    fn trial_order_does_not_change_means() {
        let cfg = tiny(Scenario::SingleUserSweep);
        let mut per_trial: Vec<Vec<TrialOutcome>> = (0..cfg.trials).map(|t| run_trial(&cfg, t).unwrap()).collect();
        let forward = aggregate(&cfg, &per_trial);
        per_trial.reverse();
        let backward = aggregate(&cfg, &per_trial);
        for (a, b) in forward.records.iter().zip(&backward.records) {
            assert!((a.mse_mean - b.mse_mean).abs() <= 1e-12 * a.mse_mean.abs().max(1e-300));
        }
    }

    #[test]
    fn offgrid_best_leakage_is_flagged() {
        let mut cfg = tiny(Scenario::OffgridSweep);
        cfg.curves = vec![CurveSpec {
            leakage: Some(vec![(1, 1), (2, 1)]),
            ..CurveSpec::new(Estimator::Solver(Algorithm::HiIHT))
        }];
        let res = run_experiment(&cfg, Some(1)).unwrap();
        assert!(res.records.iter().all(|r| r.algorithm.contains("[best L1,L2]")));
        assert_eq!(res.leakage_choices.len(), 2);
        assert!(res.records.iter().all(|r| r.mse_mean.is_finite()));
    }

    #[test]
    fn sweep_writes_csv_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(Scenario::MismatchedL);
        let art = run_sweep(&cfg, Some(dir.path()), Some(1)).unwrap();
        let text = fs::read_to_string(&art.csv_path).unwrap();
        assert!(text.starts_with("sweep_value,algorithm,mse_mean,mse_stderr,trials,seconds\n"));
        assert_eq!(text.lines().count(), 1 + 6);
        let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(&art.manifest_path).unwrap()).unwrap();
        assert_eq!(manifest["config"]["seed"], 1);
        assert!(manifest["version"].is_string());
        let bad = dir.path().join("file");
        fs::write(&bad, "x").unwrap();
        assert!(run_sweep(&cfg, Some(&bad.join("sub")), Some(1)).is_err());
    }

    #[test]
    fn seed_derivation_separates_streams() {
        assert_ne!(derive_seed(1, &[1, 0]), derive_seed(1, &[0, 1]));
        assert_ne!(derive_seed(1, &[1]), derive_seed(2, &[1]));
        assert_eq!(derive_seed(7, &[3, 4]), derive_seed(7, &[3, 4]));
    }

    #[test]
    fn estimator_names() {
        assert_eq!("naive".parse::<Estimator>().unwrap(), Estimator::Naive);
        assert_eq!("HiHTP".parse::<Estimator>().unwrap(), Estimator::Solver(Algorithm::HiHTP));
        assert_eq!(serde_json::to_string(&Estimator::Solver(Algorithm::OMP)).unwrap(), "\"OMP\"");
    }
}
