//! Hierarchical and flat hard-thresholding solvers, OMP, and the
//! recovery-guarantee calculators.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::block::{threshold_indices, BlockShape, HiSupport, MultiLevelVector, SparsityProfile};
use crate::error::{dim_err, param_err, Error, Result};
use crate::linalg::{self, CMatrix};
use crate::sensing::{SensingOperator, Vectorization};
use crate::C64;

/// Restricted least squares switches from dense QR to CGNR above this size.
pub const DENSE_LS_LIMIT: usize = 1024;

/// ... or when the dense factorization would cost more than this many
/// multiply-adds (`rows·|S|²`).
pub const DENSE_LS_BUDGET: usize = 1 << 27;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    HiIHT,
    HiHTP,
    IHT,
    HTP,
    OMP,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [Algorithm::HiIHT, Algorithm::HiHTP, Algorithm::IHT, Algorithm::HTP, Algorithm::OMP];

    pub fn is_hierarchical(self) -> bool {
        matches!(self, Algorithm::HiIHT | Algorithm::HiHTP)
    }

    fn solves_ls(self) -> bool {
        matches!(self, Algorithm::HiHTP | Algorithm::HTP | Algorithm::OMP)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Algorithm::HiIHT => "HiIHT",
            Algorithm::HiHTP => "HiHTP",
            Algorithm::IHT => "IHT",
            Algorithm::HTP => "HTP",
            Algorithm::OMP => "OMP",
        };
        f.write_str(s)
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryConfig {
    pub algorithm: Algorithm,
    /// Hierarchical profile for HiIHT/HiHTP; a single-level `[k]` for the
    /// flat solvers.
    pub profile: SparsityProfile,
    pub max_iters: usize,
    pub ls_tolerance: f64,
    pub ls_max_iters: usize,
}

impl RecoveryConfig {
    pub fn new(algorithm: Algorithm, profile: SparsityProfile) -> Self {
        Self { algorithm, profile, max_iters: 10, ls_tolerance: 1e-10, ls_max_iters: 200 }
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return param_err("max_iters must be at least 1");
        }
        if self.ls_tolerance.is_nan() || self.ls_tolerance <= 0.0 || self.ls_max_iters == 0 {
            return param_err("least-squares tolerance and iteration cap must be positive");
        }
        Ok(())
    }
}

/// Channel model order used to build sparsity profiles. `l` may be a
/// mismatched estimate `L̂` of the true path count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelOrder {
    pub v: usize,
    pub l: usize,
    pub k_v: usize,
    pub k_l: usize,
}

impl ModelOrder {
    /// F-S: `(VL, K_V, K_L)`; S-F: `(V, L, K_L)`.
    pub fn ongrid_profile(&self, option: Vectorization) -> Result<SparsityProfile> {
        let ModelOrder { v, l, k_v, k_l } = *self;
        match option {
            Vectorization::FrequencySpace => SparsityProfile::new(vec![v * l, k_v, k_l]),
            Vectorization::SpaceFrequency => SparsityProfile::new(vec![v, l, k_l]),
        }
    }

    /// Every path leaks into `2L1+1` delay and `2L2+1` angle taps.
    /// F-S: `(VL(2L2+1), K_V, K_L(2L1+1))`; S-F: `(V, L(2L1+1), K_L(2L2+1))`.
    pub fn offgrid_profile(&self, option: Vectorization, l1: usize, l2: usize) -> Result<SparsityProfile> {
        let ModelOrder { v, l, k_v, k_l } = *self;
        let (wd, wa) = (2 * l1 + 1, 2 * l2 + 1);
        match option {
            Vectorization::FrequencySpace => SparsityProfile::new(vec![v * l * wa, k_v, k_l * wd]),
            Vectorization::SpaceFrequency => SparsityProfile::new(vec![v, l * wd, k_l * wa]),
        }
    }

    /// Flat sparsity for IHT/HTP/OMP: `VL` on the grid, `VL(2L1+1)(2L2+1)` off it.
    pub fn flat_sparsity(&self, leakage: Option<(usize, usize)>) -> usize {
        let base = self.v * self.l;
        match leakage {
            None => base,
            Some((l1, l2)) => base * (2 * l1 + 1) * (2 * l2 + 1),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryResult {
    pub x_hat: MultiLevelVector,
    pub support: HiSupport,
    pub iterations: usize,
    pub residual_norm: f64,
    /// The support repeated before `max_iters` was reached.
    pub converged: bool,
    /// A restricted least-squares solve did not reach its tolerance; the
    /// best iterate is returned.
    pub ls_failed: bool,
    /// `‖x − x⁽ⁱ⁾‖` after every iteration, when ground truth was supplied.
    pub error_trace: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct ResultWire<'a> {
    support: &'a [usize],
    iterations: usize,
    residual_norm: f64,
    converged: bool,
    ls_failed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error_trace: Option<&'a [f64]>,
}

impl RecoveryResult {
    pub fn to_json(&self) -> Result<String> {
        let wire = ResultWire {
            support: self.support.indices(),
            iterations: self.iterations,
            residual_norm: self.residual_norm,
            converged: self.converged,
            ls_failed: self.ls_failed,
            error_trace: self.error_trace.as_deref(),
        };
        Ok(serde_json::to_string(&wire)?)
    }
}

/// Runs `cfg.algorithm`. `k` for OMP is `cfg.profile.product()`.
pub fn recover(y: &[C64], op: &dyn SensingOperator, cfg: &RecoveryConfig) -> Result<RecoveryResult> {
    recover_traced(y, op, cfg, None)
}

/// As [`recover`], recording `‖truth − x⁽ⁱ⁾‖` per iteration.
pub fn recover_traced(
    y: &[C64],
    op: &dyn SensingOperator,
    cfg: &RecoveryConfig,
    truth: Option<&[C64]>,
) -> Result<RecoveryResult> {
    cfg.validate()?;
    check_inputs(y, op, truth)?;
    match cfg.algorithm {
        Algorithm::OMP => omp_impl(y, op, cfg.profile.product(), truth),
        _ => thresholding_loop(y, op, cfg, truth),
    }
}

fn expect_algorithm(cfg: &RecoveryConfig, want: Algorithm) -> Result<()> {
    if cfg.algorithm != want {
        return param_err(format!("config selects {}, called as {want}", cfg.algorithm));
    }
    Ok(())
}

pub fn hi_iht(y: &[C64], op: &dyn SensingOperator, cfg: &RecoveryConfig) -> Result<RecoveryResult> {
    expect_algorithm(cfg, Algorithm::HiIHT)?;
    recover(y, op, cfg)
}

pub fn hi_htp(y: &[C64], op: &dyn SensingOperator, cfg: &RecoveryConfig) -> Result<RecoveryResult> {
    expect_algorithm(cfg, Algorithm::HiHTP)?;
    recover(y, op, cfg)
}

pub fn flat_iht(y: &[C64], op: &dyn SensingOperator, cfg: &RecoveryConfig) -> Result<RecoveryResult> {
    expect_algorithm(cfg, Algorithm::IHT)?;
    recover(y, op, cfg)
}

pub fn flat_htp(y: &[C64], op: &dyn SensingOperator, cfg: &RecoveryConfig) -> Result<RecoveryResult> {
    expect_algorithm(cfg, Algorithm::HTP)?;
    recover(y, op, cfg)
}

/// Orthogonal matching pursuit with `k` greedy selections.
pub fn omp(y: &[C64], op: &dyn SensingOperator, k: usize, cfg: &RecoveryConfig) -> Result<RecoveryResult> {
    expect_algorithm(cfg, Algorithm::OMP)?;
    cfg.validate()?;
    check_inputs(y, op, None)?;
    omp_impl(y, op, k, None)
}

fn check_inputs(y: &[C64], op: &dyn SensingOperator, truth: Option<&[C64]>) -> Result<()> {
    if y.len() != op.measurement_len() {
        return dim_err(format!("measurement length {} != {}", y.len(), op.measurement_len()));
    }
    if let Some(i) = y.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    if let Some(t) = truth {
        if t.len() != op.unknown_shape().total() {
            return dim_err(format!("ground truth length {} != {}", t.len(), op.unknown_shape().total()));
        }
    }
    Ok(())
}

/// Shape and profile the thresholding operator acts on.
fn threshold_geometry(op: &dyn SensingOperator, cfg: &RecoveryConfig) -> Result<(BlockShape, SparsityProfile)> {
    let shape = op.unknown_shape();
    if cfg.profile.levels().len() == 1 {
        let flat = BlockShape::flat(shape.total())?;
        let k = cfg.profile.levels()[0].min(shape.total());
        return Ok((flat, SparsityProfile::flat(k)?));
    }
    if !cfg.algorithm.is_hierarchical() {
        return param_err(format!("{} needs a single-level profile", cfg.algorithm));
    }
    let profile = cfg.profile.clamped_to(shape)?;
    Ok((shape.clone(), profile))
}

fn residual(y: &[C64], op: &dyn SensingOperator, x: &[C64]) -> Vec<C64> {
    linalg::sub(y, &op.apply(x))
}

fn thresholding_loop(
    y: &[C64],
    op: &dyn SensingOperator,
    cfg: &RecoveryConfig,
    truth: Option<&[C64]>,
) -> Result<RecoveryResult> {
    let (t_shape, t_profile) = threshold_geometry(op, cfg)?;
    let n = op.unknown_shape().total();
    let mut x = linalg::zeros(n);
    let mut r = y.to_vec();
    let mut prev: Option<Vec<usize>> = None;
    let mut trace = truth.map(|_| Vec::with_capacity(cfg.max_iters));
    let mut ls_failed = false;
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..cfg.max_iters {
        iterations += 1;
        let grad = op.apply_adjoint(&r);
        let temp: Vec<C64> = x.iter().zip(&grad).map(|(a, b)| a + b).collect();
        let support = threshold_indices(&temp, &t_shape, &t_profile);
        let mut next = linalg::zeros(n);
        if cfg.algorithm.solves_ls() {
            let (coef, ok) = restricted_ls(y, op, &support, cfg);
            ls_failed |= !ok;
            for (&i, c) in support.iter().zip(coef) {
                next[i] = c;
            }
        } else {
            for &i in &support {
                next[i] = temp[i];
            }
        }
        x = next;
        r = residual(y, op, &x);
        if let (Some(tr), Some(t)) = (trace.as_mut(), truth) {
            tr.push(linalg::distance(t, &x));
        }
        if prev.as_ref() == Some(&support) {
            converged = true;
            break;
        }
        prev = Some(support);
    }

    let support = HiSupport::from_sorted_unchecked(prev.unwrap_or_default(), t_shape, t_profile);
    Ok(RecoveryResult {
        x_hat: MultiLevelVector::new(op.unknown_shape().clone(), x)?,
        support,
        iterations,
        residual_norm: linalg::norm(&r),
        converged,
        ls_failed,
        error_trace: trace,
    })
}

/// `argmin_β ‖y − A β‖` over `supp β ⊆ support`. Returns the coefficients in
/// support order and whether the solve met its tolerance.
fn restricted_ls(y: &[C64], op: &dyn SensingOperator, support: &[usize], cfg: &RecoveryConfig) -> (Vec<C64>, bool) {
    if support.is_empty() {
        return (Vec::new(), true);
    }
    let k = support.len();
    if k <= DENSE_LS_LIMIT && op.measurement_len().saturating_mul(k * k) <= DENSE_LS_BUDGET {
        let sub = restricted_matrix(op, support);
        let coef = linalg::least_squares(&sub, y);
        let ok = coef.iter().all(|c| c.re.is_finite() && c.im.is_finite());
        return if ok { (coef, true) } else { (linalg::zeros(support.len()), false) };
    }
    cgnr(y, op, support, cfg)
}

fn restricted_matrix(op: &dyn SensingOperator, support: &[usize]) -> CMatrix {
    let rows = op.measurement_len();
    let mut sub = CMatrix::zeros(rows, support.len());
    for (c, &k) in support.iter().enumerate() {
        sub.column_mut(c).copy_from_slice(&op.column(k));
    }
    sub
}

/// Conjugate gradient on `A_S^H A_S β = A_S^H y`.
fn cgnr(y: &[C64], op: &dyn SensingOperator, support: &[usize], cfg: &RecoveryConfig) -> (Vec<C64>, bool) {
    let n = op.unknown_shape().total();
    let scatter = |v: &[C64]| {
        let mut full = linalg::zeros(n);
        for (&i, &c) in support.iter().zip(v) {
            full[i] = c;
        }
        full
    };
    let gather = |full: Vec<C64>| support.iter().map(|&i| full[i]).collect::<Vec<_>>();

    let mut beta = linalg::zeros(support.len());
    let mut r = y.to_vec();
    let mut s = gather(op.apply_adjoint(&r));
    let mut p = s.clone();
    let mut gamma = linalg::norm_sqr(&s);
    let stop = cfg.ls_tolerance * cfg.ls_tolerance * gamma.max(f64::MIN_POSITIVE);
    for _ in 0..cfg.ls_max_iters {
        if gamma <= stop {
            return (beta, true);
        }
        let q = op.apply(&scatter(&p));
        let qq = linalg::norm_sqr(&q);
        if qq == 0.0 {
            break;
        }
        let alpha = gamma / qq;
        for (b, pi) in beta.iter_mut().zip(&p) {
            *b += pi * alpha;
        }
        for (ri, qi) in r.iter_mut().zip(&q) {
            *ri -= qi * alpha;
        }
        s = gather(op.apply_adjoint(&r));
        let next = linalg::norm_sqr(&s);
        let ratio = next / gamma;
        gamma = next;
        for (pi, si) in p.iter_mut().zip(&s) {
            *pi = si + *pi * ratio;
        }
    }
    (beta, gamma <= stop)
}

fn omp_impl(
    y: &[C64],
    op: &dyn SensingOperator,
    k: usize,
    truth: Option<&[C64]>,
) -> Result<RecoveryResult> {
    let n = op.unknown_shape().total();
    let k = k.min(n).min(op.measurement_len());
    let rows = op.measurement_len();
    let mut selected: Vec<usize> = Vec::with_capacity(k);
    let mut columns = CMatrix::zeros(rows, 0);
    let mut coef: Vec<C64> = Vec::new();
    let mut r = y.to_vec();
    let mut trace = truth.map(|_| Vec::with_capacity(k));
    let mut ls_failed = false;
    let floor = 1e-14 * linalg::norm(y);

    for _ in 0..k {
        if linalg::norm(&r) <= floor {
            break;
        }
        let corr = op.apply_adjoint(&r);
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in corr.iter().enumerate() {
            let score = c.norm_sqr();
            if score > 0.0 && !selected.contains(&i) && best.is_none_or(|(_, b)| score > b) {
                best = Some((i, score));
            }
        }
        let Some((pick, _)) = best else { break };
        selected.push(pick);
        let col = op.column(pick);
        let c = columns.ncols();
        columns = columns.insert_column(c, C64::new(0.0, 0.0));
        columns.column_mut(c).copy_from_slice(&col);
        coef = linalg::least_squares(&columns, y);
        if coef.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            ls_failed = true;
            coef = linalg::zeros(selected.len());
        }
        r = linalg::sub(y, &linalg::mat_vec(&columns, &coef));
        if let (Some(tr), Some(t)) = (trace.as_mut(), truth) {
            let mut x = linalg::zeros(n);
            for (&i, &v) in selected.iter().zip(&coef) {
                x[i] = v;
            }
            tr.push(linalg::distance(t, &x));
        }
    }

    let mut x = linalg::zeros(n);
    for (&i, &v) in selected.iter().zip(&coef) {
        x[i] = v;
    }
    let iterations = selected.len();
    let mut indices = selected;
    indices.sort_unstable();
    let support =
        HiSupport::from_sorted_unchecked(indices, BlockShape::flat(n)?, SparsityProfile::flat(k.max(1))?);
    Ok(RecoveryResult {
        x_hat: MultiLevelVector::new(op.unknown_shape().clone(), x)?,
        support,
        iterations,
        residual_norm: linalg::norm(&r),
        converged: true,
        ls_failed,
        error_trace: trace,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionConstants {
    pub kappa: f64,
    /// `f64::INFINITY` when `κ ≥ 1`.
    pub tau: f64,
    pub contractive: bool,
}

/// `κ, τ` of the error bound `‖x − x⁽ⁱ⁾‖ ≤ κⁱ‖x‖ + τ‖z‖`, given the HiRIP
/// constant `δ` of the tripled profile.
pub fn theorem6_constants(delta: f64, algorithm: Algorithm) -> Result<ContractionConstants> {
    let limit = 1.0 / 3f64.sqrt();
    if delta.is_nan() || delta < 0.0 {
        return param_err(format!("δ must be non-negative, got {delta}"));
    }
    if delta >= limit {
        return Err(Error::GuaranteeVoid(format!("δ={delta} ≥ 1/√3")));
    }
    let (kappa, c) = match algorithm {
        Algorithm::HiIHT | Algorithm::IHT => (3f64.sqrt() * delta, 2.18),
        Algorithm::HiHTP | Algorithm::HTP => ((2.0 * delta / (1.0 - delta * delta)).sqrt(), 5.15),
        Algorithm::OMP => return param_err("no contraction constants for OMP"),
    };
    let contractive = kappa < 1.0;
    let tau = if contractive { c / (1.0 - kappa) } else { f64::INFINITY };
    Ok(ContractionConstants { kappa, tau, contractive })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverheadQuery {
    pub delta_tau: f64,
    pub delta_theta: f64,
    pub order: ModelOrder,
    pub n: usize,
    pub m: usize,
    /// Unspecified universal constant; 1 is a qualitative default.
    pub c: f64,
    pub option: Vectorization,
}

/// Sufficient pilot subcarriers and antennas `(Np_min, Mp_min)`.
/// Logarithms are natural; the constant `c` absorbs any change of base.
pub fn theorem9_overhead(q: &OverheadQuery) -> Result<(usize, usize)> {
    let (dt, dh) = (q.delta_tau, q.delta_theta);
    if !(dt > 0.0 && dh > 0.0) {
        return Err(Error::GuaranteeVoid(format!("need δτ, δθ > 0, got {dt}, {dh}")));
    }
    if dt + dh + dt * dh >= 1.0 / 3f64.sqrt() {
        return Err(Error::GuaranteeVoid(format!("δτ + δθ + δτδθ = {} ≥ 1/√3", dt + dh + dt * dh)));
    }
    if q.c.is_nan() || q.c <= 0.0 || q.n < 2 || q.m < 2 {
        return param_err("need C > 0 and N, M ≥ 2");
    }
    let ModelOrder { v, l, k_v, k_l } = q.order;
    let ln4 = |x: usize| (x as f64).ln().powi(4);
    let (np, mp) = match q.option {
        Vectorization::FrequencySpace => (
            3.0 * q.c / (dt * dt) * (k_v * k_l) as f64 * ln4(q.n),
            9.0 * q.c / (dh * dh) * (v * l) as f64 * ln4(q.m),
        ),
        Vectorization::SpaceFrequency => (
            9.0 * q.c / (dt * dt) * (v * l) as f64 * ln4(q.n),
            3.0 * q.c / (dh * dh) * k_l as f64 * ln4(q.m),
        ),
    };
    let cap = |x: f64, full: usize| if x >= full as f64 { full } else { x.ceil() as usize };
    Ok((cap(np, q.n), cap(mp, q.m)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block::is_hi_sparse;
    use crate::sensing::{DenseOperator, DesignParams, KroneckerSensingOperator, PilotDesign};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn operator(n: usize, m: usize, d: usize, u: usize, np: usize, mp: usize, seed: u64) -> KroneckerSensingOperator {
        let design = PilotDesign::generate(DesignParams { n, m, d, u, np, mp }, None, seed).unwrap();
        KroneckerSensingOperator::new(design, Vectorization::FrequencySpace)
    }

    fn fs_profile(l: usize) -> SparsityProfile {
        ModelOrder { v: 1, l, k_v: 1, k_l: 1 }.ongrid_profile(Vectorization::FrequencySpace).unwrap()
    }

    fn random_sparse(op: &KroneckerSensingOperator, paths: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
        let p = op.design().params();
        let mut x = linalg::zeros(op.unknown_shape().total());
        let mut angles: Vec<usize> = (0..p.m).collect();
        for i in 0..paths {
            let j = rng.random_range(i..p.m);
            angles.swap(i, j);
            let k = rng.random_range(0..p.d);
            x[op.unknown_index(k, angles[i])] = C64::new(rng.random_range(0.5..1.5), rng.random_range(-1.0..1.0));
        }
        x
    }

    #[test]
    fn single_path_full_sampling_is_exact_at_first_iteration() {
        let op = operator(32, 8, 8, 1, 32, 8, 1);
        let mut x = linalg::zeros(op.unknown_shape().total());
        x[op.unknown_index(3, 5)] = C64::new(0.7, -0.2);
        let y = op.apply(&x);
        for alg in [Algorithm::HiIHT, Algorithm::HiHTP] {
            let res = recover_traced(&y, &op, &RecoveryConfig::new(alg, fs_profile(1)), Some(&x)).unwrap();
            assert!(res.error_trace.as_ref().unwrap()[0] < 1e-12, "{alg}");
            assert!(res.converged);
            assert_eq!(res.iterations, 2);
            assert!(linalg::distance(res.x_hat.values(), &x) < 1e-12);
            assert!(res.support.contains(op.unknown_index(3, 5)));
        }
        let res = omp(&y, &op, 1, &RecoveryConfig::new(Algorithm::OMP, SparsityProfile::flat(1).unwrap())).unwrap();
        assert_eq!(res.iterations, 1);
        assert!(linalg::distance(res.x_hat.values(), &x) < 1e-12);
    }

    #[test]
    fn zero_measurements_give_zero_estimate() {
        let op = operator(32, 8, 8, 2, 8, 4, 2);
        let y = linalg::zeros(op.measurement_len());
        for alg in Algorithm::ALL {
            let profile = if alg.is_hierarchical() { fs_profile(2) } else { SparsityProfile::flat(2).unwrap() };
            let res = recover(&y, &op, &RecoveryConfig::new(alg, profile)).unwrap();
            assert!(res.x_hat.values().iter().all(|v| v.norm() == 0.0), "{alg}");
            if alg == Algorithm::OMP {
                assert!(res.support.is_empty());
            }
        }
    }

    #[test]
    fn small_preset_noiseless_recovery_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut hits = 0;
        for trial in 0..100 {
            let op = operator(128, 64, 32, 1, 8, 64, 1000 + trial);
            let x = random_sparse(&op, 3, &mut rng);
            let y = op.apply(&x);
            let res = hi_iht(&y, &op, &RecoveryConfig::new(Algorithm::HiIHT, fs_profile(3))).unwrap();
            assert!(is_hi_sparse(&res.x_hat, &fs_profile(3)).unwrap());
            let truth: Vec<usize> = (0..x.len()).filter(|&i| x[i].norm() > 0.0).collect();
            if res.x_hat.support() == truth {
                hits += 1;
            }
        }
        assert!(hits >= 90, "exact support in {hits}/100");
    }

    #[test]
    fn htp_matches_dense_pseudoinverse_on_its_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let op = operator(16, 4, 4, 1, 6, 3, 3);
        let dense = op.densify().unwrap();
        let y: Vec<C64> = (0..op.measurement_len())
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let res = hi_htp(&y, &op, &RecoveryConfig::new(Algorithm::HiHTP, fs_profile(2))).unwrap();
        let s = res.support.indices();
        // normal equations (A_S^H A_S) β = A_S^H y
        let a_s = CMatrix::from_fn(dense.nrows(), s.len(), |i, j| dense[(i, s[j])]);
        let gram = a_s.adjoint() * &a_s;
        let rhs = a_s.adjoint() * nalgebra::DVector::from_column_slice(&y);
        let beta = gram.lu().solve(&rhs).unwrap();
        for (j, &i) in s.iter().enumerate() {
            assert!((res.x_hat.values()[i] - beta[j]).norm() < 1e-8);
        }
    }

    #[test]
    fn consistent_restricted_system_has_zero_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let op = operator(64, 16, 16, 1, 16, 16, 4);
        let x = random_sparse(&op, 3, &mut rng);
        let support: Vec<usize> = (0..x.len()).filter(|&i| x[i].norm() > 0.0).collect();
        let y = op.apply(&x);
        let cfg = RecoveryConfig::new(Algorithm::HTP, SparsityProfile::flat(3).unwrap());
        let (coef, ok) = restricted_ls(&y, &op, &support, &cfg);
        assert!(ok);
        let mut full = linalg::zeros(x.len());
        for (&i, c) in support.iter().zip(coef) {
            full[i] = c;
        }
        assert!(linalg::norm(&residual(&y, &op, &full)) < 1e-10);
        let (coef_cg, ok) = cgnr(&y, &op, &support, &cfg);
        assert!(ok);
        for (&i, c) in support.iter().zip(coef_cg) {
            assert!((x[i] - c).norm() < 1e-8);
        }
    }

    #[test]
    fn single_level_profile_makes_hiiht_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let op = operator(64, 16, 16, 1, 12, 8, 5);
        let x = random_sparse(&op, 2, &mut rng);
        let y = op.apply(&x);
        let flat = SparsityProfile::flat(2).unwrap();
        let a = recover(&y, &op, &RecoveryConfig::new(Algorithm::HiIHT, flat.clone())).unwrap();
        let b = flat_iht(&y, &op, &RecoveryConfig::new(Algorithm::IHT, flat)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn flat_solver_rejects_hierarchical_profile() {
        let op = operator(16, 4, 4, 1, 4, 4, 6);
        let y = linalg::zeros(op.measurement_len());
        assert!(recover(&y, &op, &RecoveryConfig::new(Algorithm::IHT, fs_profile(1))).is_err());
        assert!(hi_iht(&y, &op, &RecoveryConfig::new(Algorithm::HiHTP, fs_profile(1))).is_err());
    }

    #[test]
    fn input_validation() {
        let op = operator(16, 4, 4, 1, 4, 4, 6);
        let cfg = RecoveryConfig::new(Algorithm::HiIHT, fs_profile(1));
        assert!(matches!(recover(&[C64::new(0.0, 0.0); 3], &op, &cfg), Err(Error::Dimension(_))));
        let mut y = linalg::zeros(op.measurement_len());
        y[5] = C64::new(f64::NAN, 0.0);
        assert!(matches!(recover(&y, &op, &cfg), Err(Error::NonFinite(5))));
        assert!(recover(&linalg::zeros(16), &op, &cfg.clone().with_max_iters(0)).is_err());
    }

    #[test]
    fn htp_residual_non_increasing_on_repeated_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let op = operator(64, 16, 16, 1, 10, 8, 100 + trial);
            let x = random_sparse(&op, 2, &mut rng);
            let mut y = op.apply(&x);
            for v in y.iter_mut() {
                *v += C64::new(rng.random_range(-0.01..0.01), rng.random_range(-0.01..0.01));
            }
            let cfg = RecoveryConfig::new(Algorithm::HiHTP, fs_profile(2)).with_max_iters(1);
            let one = recover(&y, &op, &cfg).unwrap();
            let full = recover(&y, &op, &cfg.with_max_iters(10)).unwrap();
            if full.converged && full.support == one.support {
                assert!(full.residual_norm <= one.residual_norm + 1e-12);
            }
        }
    }

    #[test]
    fn omp_on_dense_operator() {
        let h = 0.5f64.sqrt();
        let a = CMatrix::from_fn(4, 6, |i, j| match j {
            0..=3 => C64::new((i == j) as u8 as f64, 0.0),
            4 => C64::new(if i < 2 { h } else { 0.0 }, 0.0),
            _ => C64::new(if i >= 2 { h } else { 0.0 }, 0.0),
        });
        let op = DenseOperator::new(a, BlockShape::flat(6).unwrap()).unwrap();
        let mut x = linalg::zeros(6);
        x[1] = C64::new(2.0, 0.0);
        let y = op.apply(&x);
        let res = omp(&y, &op, 1, &RecoveryConfig::new(Algorithm::OMP, SparsityProfile::flat(1).unwrap())).unwrap();
        assert_eq!(res.support.indices(), &[1]);
        assert!(linalg::distance(res.x_hat.values(), &x) < 1e-12);
    }

    #[test]
    fn deterministic_and_serializable() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let op = operator(64, 16, 16, 2, 10, 8, 7);
        let x = random_sparse(&op, 3, &mut rng);
        let y = op.apply(&x);
        let cfg = RecoveryConfig::new(Algorithm::HiHTP, fs_profile(3));
        let a = recover_traced(&y, &op, &cfg, Some(&x)).unwrap();
        let b = recover_traced(&y, &op, &cfg, Some(&x)).unwrap();
        assert_eq!(a, b);
        let text = a.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["iterations"].as_u64().unwrap() as usize, a.iterations);
        assert_eq!(v["error_trace"].as_array().unwrap().len(), a.iterations);
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.to_string().parse::<Algorithm>().unwrap(), a);
        }
        assert!("lasso".parse::<Algorithm>().is_err());
    }

    #[test]
    fn profiles_for_both_vectorizations() {
        let o = ModelOrder { v: 2, l: 3, k_v: 1, k_l: 2 };
        assert_eq!(o.ongrid_profile(Vectorization::FrequencySpace).unwrap().levels(), &[6, 1, 2]);
        assert_eq!(o.ongrid_profile(Vectorization::SpaceFrequency).unwrap().levels(), &[2, 3, 2]);
        assert_eq!(o.offgrid_profile(Vectorization::FrequencySpace, 1, 2).unwrap().levels(), &[30, 1, 6]);
        assert_eq!(o.flat_sparsity(None), 6);
        assert_eq!(o.flat_sparsity(Some((1, 2))), 90);
    }

    #[test]
    fn contraction_constant_examples() {
        let z = theorem6_constants(0.0, Algorithm::HiIHT).unwrap();
        assert_eq!((z.kappa, z.tau), (0.0, 2.18));
        assert_eq!(theorem6_constants(0.0, Algorithm::HiHTP).unwrap().tau, 5.15);
        let h = theorem6_constants(0.5, Algorithm::HiIHT).unwrap();
        assert!((h.kappa - 0.866_025_403_784_438_6).abs() < 1e-15);
        assert!((h.tau - 2.18 / (1.0 - 0.866_025_403_784_438_6)).abs() < 1e-9);
        assert!((h.tau - 16.27).abs() < 0.01);
        let p = theorem6_constants(0.5, Algorithm::HiHTP).unwrap();
        assert!(!p.contractive && p.kappa > 1.0 && p.tau.is_infinite());
        assert!(matches!(theorem6_constants(0.6, Algorithm::HiIHT), Err(Error::GuaranteeVoid(_))));
        assert!(theorem6_constants(0.1, Algorithm::OMP).is_err());
    }

    #[test]
    fn overhead_examples() {
        let order = ModelOrder { v: 1, l: 1, k_v: 1, k_l: 1 };
        let q = OverheadQuery {
            delta_tau: 0.4,
            delta_theta: 0.1,
            order,
            n: 1024,
            m: 256,
            c: 1.0,
            option: Vectorization::FrequencySpace,
        };
        assert_eq!(theorem9_overhead(&q).unwrap(), (1024, 256));
        // tiny C: Np independent of V, L in F-S
        let q = OverheadQuery { c: 1e-5, delta_theta: 0.01, ..q };
        let a = theorem9_overhead(&q).unwrap();
        let b = theorem9_overhead(&OverheadQuery { order: ModelOrder { v: 4, l: 5, ..order }, ..q }).unwrap();
        assert_eq!(a.0, b.0);
        let expect = (3.0 * 1e-5 / 0.16 * 1024f64.ln().powi(4)).ceil() as usize;
        assert_eq!(a.0, expect);
        assert!(b.1 >= a.1);
        assert!(theorem9_overhead(&OverheadQuery { delta_tau: 0.6, ..q }).is_err());
        assert!(theorem9_overhead(&OverheadQuery { delta_tau: 0.0, ..q }).is_err());
    }
}
