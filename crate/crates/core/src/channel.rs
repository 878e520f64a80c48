//! Multipath channel synthesis and delay-angular representations.
//!
//! A UE channel is `H = Σ_p ρ_p·b(τ_p)·a(θ_p)^H` with `b(τ)_n = e^{-j2πnτ̃}`
//! and `a(θ)_m = e^{-j2πmθ}`, where `τ̃ = τ/T_s`. On the grid
//! `(τ̃, θ) = (k/N, l/M)` this factors as `H = F_{N,D}·X·F_{M,M}^H` with a
//! sparse delay-angular matrix `X`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::linalg::CMatrix;
use crate::sensing::Vectorization;
use crate::C64;

/// Tolerance on `|ω − k/K|` below which a point is treated as on the grid.
pub const GRID_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "PathWire", into = "PathWire")]
pub struct ChannelPath {
    /// Delay normalized by the OFDM symbol duration.
    pub tau_norm: f64,
    /// Normalized angle in `[0, 1)`.
    pub theta: f64,
    pub gain: C64,
}

#[derive(Serialize, Deserialize)]
struct PathWire {
    tau_norm: f64,
    theta: f64,
    re: f64,
    im: f64,
}

impl From<PathWire> for ChannelPath {
    fn from(w: PathWire) -> Self {
        ChannelPath { tau_norm: w.tau_norm, theta: w.theta, gain: C64::new(w.re, w.im) }
    }
}

impl From<ChannelPath> for PathWire {
    fn from(p: ChannelPath) -> Self {
        PathWire { tau_norm: p.tau_norm, theta: p.theta, re: p.gain.re, im: p.gain.im }
    }
}

impl ChannelPath {
    /// Grid indices `(k, l)` when the path sits on the `(1/N, 1/M)` grid.
    pub fn grid_indices(&self, n: usize, m: usize) -> Option<(usize, usize)> {
        let k = (self.tau_norm * n as f64).round();
        let l = (self.theta * m as f64).round();
        let on = (self.tau_norm - k / n as f64).abs() < GRID_TOL && (self.theta - l / m as f64).abs() < GRID_TOL;
        on.then_some((k as usize % n, l as usize % m))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grid {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub n: usize,
    pub m: usize,
    /// Delay taps of the on-grid dictionary, `⌊αN⌋` by default.
    pub d: usize,
    pub u: usize,
    /// Active UEs.
    pub v: usize,
    /// Paths per active UE.
    pub l: usize,
    /// Max UEs sharing an angle (F-S generation).
    pub k_v: usize,
    /// Max paths per UE sharing an angle (F-S) or a delay (S-F).
    pub k_l: usize,
    /// Max delay spread as a fraction of the symbol duration.
    pub alpha: f64,
    pub option: Vectorization,
    pub grid: Grid,
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let p = self;
        if p.n == 0 || p.m == 0 || p.d == 0 || p.u == 0 || p.l == 0 || p.k_v == 0 || p.k_l == 0 {
            return param_err(format!("channel dimensions must be positive: {p:?}"));
        }
        if p.v == 0 || p.v > p.u {
            return param_err(format!("need 1 ≤ V ≤ U, got V={} U={}", p.v, p.u));
        }
        if p.d > p.n {
            return param_err(format!("D={} exceeds N={}", p.d, p.n));
        }
        if !(p.alpha > 0.0 && p.alpha <= 1.0) {
            return param_err(format!("alpha must lie in (0, 1], got {}", p.alpha));
        }
        if p.grid == Grid::On && p.l > p.d {
            return Err(Error::Unsatisfiable(format!("L={} paths exceed D={} delay taps", p.l, p.d)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub params: ChannelParams,
    /// Per-UE path lists; empty for inactive UEs.
    pub paths: Vec<Vec<ChannelPath>>,
}

impl ChannelRealization {
    pub fn active_ues(&self) -> Vec<usize> {
        (0..self.paths.len()).filter(|&u| !self.paths[u].is_empty()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        r.params.validate()?;
        if r.paths.len() != r.params.u {
            return Err(Error::Malformed(format!("{} path lists for U={}", r.paths.len(), r.params.u)));
        }
        Ok(r)
    }

    /// On-grid delay-angular matrix `X_u ∈ C^{D×M}`.
    pub fn delay_angular(&self, ue: usize) -> Result<CMatrix> {
        let ChannelParams { n, m, d, .. } = self.params;
        let mut x = CMatrix::zeros(d, m);
        for p in &self.paths[ue] {
            let (k, l) = on_grid_indices(p, n, m, d)?;
            x[(k, l)] += p.gain;
        }
        Ok(x)
    }

    /// Stacked unknown `x = vec(X̄)` (F-S) or `vec(X̄^T)` (S-F) of the linear model.
    pub fn unknown_vector(&self, option: Vectorization) -> Result<Vec<C64>> {
        let ChannelParams { n, m, d, u, .. } = self.params;
        let ud = u * d;
        let mut x = crate::linalg::zeros(ud * m);
        for (ue, paths) in self.paths.iter().enumerate() {
            for p in paths {
                let (k, l) = on_grid_indices(p, n, m, d)?;
                let r = ue * d + k;
                let idx = match option {
                    Vectorization::FrequencySpace => l * ud + r,
                    Vectorization::SpaceFrequency => r * m + l,
                };
                x[idx] += p.gain;
            }
        }
        Ok(x)
    }
}

fn on_grid_indices(p: &ChannelPath, n: usize, m: usize, d: usize) -> Result<(usize, usize)> {
    match p.grid_indices(n, m) {
        Some((k, l)) if k < d => Ok((k, l)),
        Some((k, _)) => param_err(format!("delay tap {k} outside the D={d} dictionary")),
        None => param_err(format!("path ({}, {}) is off the grid", p.tau_norm, p.theta)),
    }
}

fn gaussian_gain<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * s, im * s)
}

fn choose_active<R: Rng + ?Sized>(rng: &mut R, u: usize, v: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..u).collect();
    for i in 0..v {
        let j = rng.random_range(i..u);
        pool.swap(i, j);
    }
    let mut out = pool[..v].to_vec();
    out.sort_unstable();
    out
}

fn pick<R: Rng + ?Sized>(rng: &mut R, candidates: &[usize], what: &str) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::Unsatisfiable(format!("no admissible {what} left")));
    }
    Ok(candidates[rng.random_range(0..candidates.len())])
}

/// Draws an on-grid realization honoring the hierarchical constraints of
/// `params.option`. Gains are i.i.d. `CN(0, 1/L)` so that the expected total
/// power per active UE is one.
pub fn gen_ongrid<R: Rng + ?Sized>(params: &ChannelParams, rng: &mut R) -> Result<ChannelRealization> {
    if params.grid != Grid::On {
        return param_err("gen_ongrid needs grid = on");
    }
    params.validate()?;
    let ChannelParams { n, m, d, u, v, l, k_v, k_l, option, .. } = *params;
    let active = choose_active(rng, u, v);
    let mut paths = vec![Vec::new(); u];
    let gain_var = 1.0 / l as f64;

    match option {
        Vectorization::FrequencySpace => {
            // UEs per angle, and per-UE (angle → delays) usage.
            let mut ues_at_angle = vec![0usize; m];
            for &ue in &active {
                let mut per_angle: Vec<Vec<usize>> = vec![Vec::new(); m];
                for _ in 0..l {
                    let angles: Vec<usize> = (0..m)
                        .filter(|&a| {
                            per_angle[a].len() < k_l.min(d) && (!per_angle[a].is_empty() || ues_at_angle[a] < k_v)
                        })
                        .collect();
                    let a = pick(rng, &angles, "angle")?;
                    let delays: Vec<usize> = (0..d).filter(|k| !per_angle[a].contains(k)).collect();
                    let k = pick(rng, &delays, "delay")?;
                    if per_angle[a].is_empty() {
                        ues_at_angle[a] += 1;
                    }
                    per_angle[a].push(k);
                    paths[ue].push(grid_path(k, a, n, m, gaussian_gain(rng, gain_var)));
                }
            }
        }
        Vectorization::SpaceFrequency => {
            for &ue in &active {
                let mut per_delay: Vec<Vec<usize>> = vec![Vec::new(); d];
                for _ in 0..l {
                    let delays: Vec<usize> = (0..d).filter(|&k| per_delay[k].len() < k_l.min(m)).collect();
                    let k = pick(rng, &delays, "delay")?;
                    let angles: Vec<usize> = (0..m).filter(|a| !per_delay[k].contains(a)).collect();
                    let a = pick(rng, &angles, "angle")?;
                    per_delay[k].push(a);
                    paths[ue].push(grid_path(k, a, n, m, gaussian_gain(rng, gain_var)));
                }
            }
        }
    }
    Ok(ChannelRealization { params: *params, paths })
}

fn grid_path(k: usize, l: usize, n: usize, m: usize, gain: C64) -> ChannelPath {
    ChannelPath { tau_norm: k as f64 / n as f64, theta: l as f64 / m as f64, gain }
}

/// Draws an off-grid realization: delays uniform on `[0, α)`, angles uniform
/// on `[0, 1)`, gains i.i.d. `CN(0, 1/L)`.
pub fn gen_offgrid<R: Rng + ?Sized>(params: &ChannelParams, rng: &mut R) -> Result<ChannelRealization> {
    if params.grid != Grid::Off {
        return param_err("gen_offgrid needs grid = off");
    }
    params.validate()?;
    let active = choose_active(rng, params.u, params.v);
    let mut paths = vec![Vec::new(); params.u];
    let gain_var = 1.0 / params.l as f64;
    for &ue in &active {
        for _ in 0..params.l {
            let tau_norm = rng.random_range(0.0..params.alpha);
            let theta = rng.random_range(0.0..1.0);
            paths[ue].push(ChannelPath { tau_norm, theta, gain: gaussian_gain(rng, gain_var) });
        }
    }
    Ok(ChannelRealization { params: *params, paths })
}

/// Draws according to `params.grid`.
pub fn generate<R: Rng + ?Sized>(params: &ChannelParams, rng: &mut R) -> Result<ChannelRealization> {
    match params.grid {
        Grid::On => gen_ongrid(params, rng),
        Grid::Off => gen_offgrid(params, rng),
    }
}

/// `H = F_{N,D}·X·F_{M,M}^H` evaluated with FFTs; `x` is `D × M`.
pub fn transfer_from_delay_angular(x: &CMatrix, n: usize) -> CMatrix {
    let (d, m) = x.shape();
    assert!(d <= n, "D exceeds N");
    let mut planner = FftPlanner::new();
    let fft_n = planner.plan_fft_forward(n);
    let ifft_m = planner.plan_fft_inverse(m);
    let zero = C64::new(0.0, 0.0);

    let mut t = CMatrix::zeros(n, m);
    let mut buf = vec![zero; n];
    for col in 0..m {
        let src = x.column(col);
        if src.iter().all(|v| *v == zero) {
            continue;
        }
        buf[..d].copy_from_slice(src.as_slice());
        buf[d..].fill(zero);
        fft_n.process(&mut buf);
        t.column_mut(col).copy_from_slice(&buf);
    }
    let mut row = vec![zero; m];
    for r in 0..n {
        for (c, slot) in row.iter_mut().enumerate() {
            *slot = t[(r, c)];
        }
        ifft_m.process(&mut row);
        for (c, v) in row.iter().enumerate() {
            t[(r, c)] = *v;
        }
    }
    t
}

/// Per-UE transfer matrix of an on-grid realization, through the sparse
/// delay-angular factorization.
pub fn synthesize_transfer(realization: &ChannelRealization, ue: usize) -> Result<CMatrix> {
    if realization.params.grid != Grid::On {
        return param_err("off-grid realization: use synthesize_transfer_offgrid");
    }
    let x = realization.delay_angular(ue)?;
    Ok(transfer_from_delay_angular(&x, realization.params.n))
}

/// `H = Σ_p ρ_p·b(τ_p)·a(θ_p)^H` evaluated entrywise.
pub fn synthesize_transfer_offgrid(paths: &[ChannelPath], n: usize, m: usize) -> CMatrix {
    let mut h = CMatrix::zeros(n, m);
    for p in paths {
        let b: Vec<C64> = (0..n).map(|i| C64::from_polar(1.0, -2.0 * PI * i as f64 * p.tau_norm)).collect();
        let a_conj: Vec<C64> = (0..m).map(|j| C64::from_polar(1.0, 2.0 * PI * j as f64 * p.theta)).collect();
        for (j, &ac) in a_conj.iter().enumerate() {
            let g = p.gain * ac;
            for (i, &bi) in b.iter().enumerate() {
                h[(i, j)] += g * bi;
            }
        }
    }
    h
}

/// `X = F_{N,N}^{-1}·H·(F_{M,M}^H)^{-1}`, the full `N × M` delay-angular
/// representation of an arbitrary transfer matrix.
pub fn delay_angular_offgrid(h: &CMatrix) -> CMatrix {
    let (n, m) = h.shape();
    let mut planner = FftPlanner::new();
    let ifft_n = planner.plan_fft_inverse(n);
    let fft_m = planner.plan_fft_forward(m);
    let mut x = h.clone();
    for mut col in x.column_iter_mut() {
        ifft_n.process(col.as_mut_slice());
    }
    let zero = C64::new(0.0, 0.0);
    let mut row = vec![zero; m];
    let scale = 1.0 / (n * m) as f64;
    for r in 0..n {
        for (c, slot) in row.iter_mut().enumerate() {
            *slot = x[(r, c)];
        }
        fft_m.process(&mut row);
        for (c, v) in row.iter().enumerate() {
            x[(r, c)] = *v * scale;
        }
    }
    x
}

/// The Dirichlet-kernel vector `u_K(ω)`:
/// `[u_K(ω)]_k = sin(πK(ω−k/K)) / (K·sin(π(ω−k/K))) · e^{-jπ(K−1)(ω−k/K)}`.
///
/// When `ω` lies within [`GRID_TOL`] of a grid point `k/K` the result is the
/// analytic limit: `e^{-jπ(K−1)(ω−k/K)}` at `k` and zero elsewhere.
pub fn dirichlet_vector(k: usize, omega: f64) -> Result<Vec<C64>> {
    if k == 0 {
        return param_err("Dirichlet vector length must be positive");
    }
    if !(0.0..=1.0).contains(&omega) {
        return param_err(format!("ω={omega} outside [0, 1]"));
    }
    let kf = k as f64;
    let nearest = (omega * kf).round();
    let offset = omega - nearest / kf;
    if offset.abs() < GRID_TOL {
        let mut out = vec![C64::new(0.0, 0.0); k];
        out[nearest as usize % k] = C64::from_polar(1.0, -PI * (kf - 1.0) * offset);
        return Ok(out);
    }
    Ok((0..k)
        .map(|i| {
            let delta = omega - i as f64 / kf;
            let ratio = (PI * kf * delta).sin() / (kf * (PI * delta).sin());
            C64::from_polar(1.0, -PI * (kf - 1.0) * delta) * ratio
        })
        .collect())
}

/// `u_K(ω)` restricted to its `2J+1` largest-modulus entries (ties to the
/// lowest index), with the kept indices in ascending order.
pub fn sparse_dirichlet(k: usize, omega: f64, j: usize) -> Result<(Vec<C64>, Vec<usize>)> {
    let keep = 2 * j + 1;
    if keep > k {
        return param_err(format!("cannot keep {keep} of {k} entries"));
    }
    let full = dirichlet_vector(k, omega)?;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| full[b].norm_sqr().total_cmp(&full[a].norm_sqr()).then(a.cmp(&b)));
    let mut kept = order[..keep].to_vec();
    kept.sort_unstable();
    let mut out = vec![C64::new(0.0, 0.0); k];
    for &i in &kept {
        out[i] = full[i];
    }
    Ok((out, kept))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparseApprox {
    /// `N × M` sparse approximation of the delay-angular matrix.
    pub x_sp: CMatrix,
    /// `(1/√L1 + 1/√L2)·Σ_p |ρ_p|`.
    pub error_bound: f64,
}

impl SparseApprox {
    pub fn nnz(&self) -> usize {
        self.x_sp.iter().filter(|v| v.re != 0.0 || v.im != 0.0).count()
    }
}

/// Sparse approximation `X_sp = Σ_p ρ_p·u_{N,sp}(τ̃_p; L1)·u_{M,sp}(θ_p; L2)^H`
/// of the full delay-angular matrix of `paths`, with its error bound.
pub fn sparse_approx(paths: &[ChannelPath], l1: usize, l2: usize, n: usize, m: usize) -> Result<SparseApprox> {
    if l1 == 0 || l2 == 0 {
        return param_err("L1 and L2 must be positive");
    }
    if 2 * l1 + 1 > n || 2 * l2 + 1 > m {
        return param_err(format!("need L1 ≤ (N−1)/2 and L2 ≤ (M−1)/2, got L1={l1} L2={l2} N={n} M={m}"));
    }
    let mut x_sp = DMatrix::zeros(n, m);
    for p in paths {
        let (un, rows) = sparse_dirichlet(n, p.tau_norm, l1)?;
        let (um, cols) = sparse_dirichlet(m, p.theta, l2)?;
        for &c in &cols {
            let right = um[c].conj() * p.gain;
            for &r in &rows {
                x_sp[(r, c)] += un[r] * right;
            }
        }
    }
    let gain_sum: f64 = paths.iter().map(|p| p.gain.norm()).sum();
    let error_bound = (1.0 / (l1 as f64).sqrt() + 1.0 / (l2 as f64).sqrt()) * gain_sum;
    Ok(SparseApprox { x_sp, error_bound })
}
