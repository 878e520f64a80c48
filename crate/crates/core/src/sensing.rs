//! Pilot design and the Kronecker-structured sensing operator.
//!
//! With `Ā_τ = (1/√Np)·P_Np·diag(c)·F_{N,UD}` and `Ā_θ = (1/√Mp)·P_Mp·F_{M,M}`
//! the normalized observation is `Y = Ā_τ·X̄·Ā_θ^H`. Vectorizing column-major
//! gives `A = conj(Ā_θ) ⊗ Ā_τ` acting on `vec(X̄)` (F-S option), vectorizing
//! `Y^T` gives `A = Ā_τ ⊗ conj(Ā_θ)` acting on `vec(X̄^T)` (S-F option).
//!
//! The DFT convention is `[F_{N,M}]_{n,m} = e^{-j2πmn/N}`; `rustfft`'s forward
//! transform matches it and all scalings are explicit.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::block::{BlockShape, MultiLevelVector};
use crate::error::{dim_err, param_err, Error, Result};
use crate::linalg::{self, CMatrix};
use crate::C64;

/// Largest `U·D·M` that [`KroneckerSensingOperator::densify`] materializes by default.
pub const DENSIFY_CAP: usize = 4096;

const UNIT_MODULUS_TOL: f64 = 1e-12;

/// `e^{-j2π·num/den}` with the numerator reduced modulo `den` first.
pub(crate) fn twiddle(num: u128, den: usize) -> C64 {
    let r = (num % den as u128) as f64;
    C64::from_polar(1.0, -2.0 * PI * r / den as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Vectorization {
    /// `y = vec(Y)`, unknown shaped `(M, U, D)`.
    #[serde(rename = "FS", alias = "fs")]
    FrequencySpace,
    /// `y = vec(Y^T)`, unknown shaped `(U, D, M)`.
    #[serde(rename = "SF", alias = "sf")]
    SpaceFrequency,
}

impl fmt::Display for Vectorization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Vectorization::FrequencySpace => write!(f, "FS"),
            Vectorization::SpaceFrequency => write!(f, "SF"),
        }
    }
}

/// System dimensions of a pilot design.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DesignParams {
    /// Subcarriers.
    pub n: usize,
    /// Antennas.
    pub m: usize,
    /// Delay taps.
    pub d: usize,
    /// UEs per group.
    pub u: usize,
    /// Pilot subcarriers.
    pub np: usize,
    /// Observed antennas.
    pub mp: usize,
}

impl DesignParams {
    pub fn validate(&self) -> Result<()> {
        let DesignParams { n, m, d, u, np, mp } = *self;
        if n == 0 || m == 0 || d == 0 || u == 0 || np == 0 || mp == 0 {
            return param_err(format!("all design dimensions must be positive: {self:?}"));
        }
        if d > n {
            return param_err(format!("delay taps D={d} exceed subcarriers N={n}"));
        }
        if u * d > n {
            return param_err(format!("U={u} exceeds N/D={}", n as f64 / d as f64));
        }
        if np > n {
            return param_err(format!("Np={np} exceeds N={n}"));
        }
        if mp > m {
            return param_err(format!("Mp={mp} exceeds M={m}"));
        }
        Ok(())
    }
}

/// Subcarrier set, antenna set and base sequence defining the sensing operator.
#[derive(Clone, Debug, PartialEq)]
pub struct PilotDesign {
    params: DesignParams,
    subcarriers: Vec<usize>,
    antennas: Vec<usize>,
    base_sequence: Vec<C64>,
    seed: u64,
}

fn sample_without_replacement(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    let mut out = pool[..k].to_vec();
    out.sort_unstable();
    out
}

impl PilotDesign {
    /// Draws `Np` subcarriers and `Mp` antennas uniformly without replacement
    /// from a ChaCha stream seeded by `seed`. `base_sequence` defaults to all ones.
    pub fn generate(params: DesignParams, base_sequence: Option<Vec<C64>>, seed: u64) -> Result<Self> {
        params.validate()?;
        let base_sequence = base_sequence.unwrap_or_else(|| vec![C64::new(1.0, 0.0); params.n]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let subcarriers = sample_without_replacement(&mut rng, params.n, params.np);
        let antennas = sample_without_replacement(&mut rng, params.m, params.mp);
        Self::from_parts(params, subcarriers, antennas, base_sequence, seed)
    }

    /// Builds a design from explicit sets, validating every invariant.
    pub fn from_parts(
        params: DesignParams,
        subcarriers: Vec<usize>,
        antennas: Vec<usize>,
        base_sequence: Vec<C64>,
        seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        check_subset(&subcarriers, params.n, params.np, "subcarrier")?;
        check_subset(&antennas, params.m, params.mp, "antenna")?;
        if base_sequence.len() != params.n {
            return dim_err(format!("base sequence has length {} but N={}", base_sequence.len(), params.n));
        }
        if let Some((i, c)) = base_sequence
            .iter()
            .enumerate()
            .find(|(_, c)| (c.norm() - 1.0).abs() > UNIT_MODULUS_TOL)
        {
            return param_err(format!("base sequence entry {i} has modulus {} (must be 1)", c.norm()));
        }
        Ok(Self { params, subcarriers, antennas, base_sequence, seed })
    }

    pub fn params(&self) -> DesignParams {
        self.params
    }

    pub fn subcarriers(&self) -> &[usize] {
        &self.subcarriers
    }

    pub fn antennas(&self) -> &[usize] {
        &self.antennas
    }

    pub fn base_sequence(&self) -> &[C64] {
        &self.base_sequence
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Pilot signature of UE `u`: `c_n·e^{-j2π·u·D·n/N}` on the pilot subcarriers.
    pub fn signature(&self, u: usize) -> Result<Vec<C64>> {
        if u >= self.params.u {
            return param_err(format!("UE index {u} out of range (U={})", self.params.u));
        }
        let DesignParams { n, d, .. } = self.params;
        Ok(self
            .subcarriers
            .iter()
            .map(|&sc| self.base_sequence[sc] * twiddle((u * d) as u128 * sc as u128, n))
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&DesignWire::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wire: DesignWire = serde_json::from_str(text)?;
        wire.try_into()
    }
}

fn check_subset(set: &[usize], range: usize, expected: usize, what: &str) -> Result<()> {
    if set.len() != expected {
        return dim_err(format!("{what} set has {} entries, expected {expected}", set.len()));
    }
    if set.windows(2).any(|w| w[0] >= w[1]) {
        return param_err(format!("{what} set must be strictly increasing"));
    }
    if set.last().is_some_and(|&l| l >= range) {
        return param_err(format!("{what} index out of range {range}"));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct DesignWire {
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "D")]
    d: usize,
    #[serde(rename = "U")]
    u: usize,
    #[serde(rename = "Np")]
    np: usize,
    #[serde(rename = "Mp")]
    mp: usize,
    subcarriers: Vec<usize>,
    antennas: Vec<usize>,
    seed: u64,
    /// Interleaved `re, im` pairs.
    base_sequence: Vec<f64>,
}

impl From<&PilotDesign> for DesignWire {
    fn from(d: &PilotDesign) -> Self {
        let DesignParams { n, m, d: taps, u, np, mp } = d.params;
        DesignWire {
            n,
            m,
            d: taps,
            u,
            np,
            mp,
            subcarriers: d.subcarriers.clone(),
            antennas: d.antennas.clone(),
            seed: d.seed,
            base_sequence: d.base_sequence.iter().flat_map(|c| [c.re, c.im]).collect(),
        }
    }
}

impl TryFrom<DesignWire> for PilotDesign {
    type Error = Error;

    fn try_from(w: DesignWire) -> Result<Self> {
        if !w.base_sequence.len().is_multiple_of(2) {
            return Err(Error::Malformed("base_sequence must hold re/im pairs".into()));
        }
        let base = w.base_sequence.chunks_exact(2).map(|p| C64::new(p[0], p[1])).collect();
        let params = DesignParams { n: w.n, m: w.m, d: w.d, u: w.u, np: w.np, mp: w.mp };
        PilotDesign::from_parts(params, w.subcarriers, w.antennas, base, w.seed)
    }
}

/// A linear map from a block-structured unknown to a measurement vector.
pub trait SensingOperator: Send + Sync {
    fn unknown_shape(&self) -> &BlockShape;

    fn measurement_len(&self) -> usize;

    /// `A·x`; `x` has length `unknown_shape().total()`.
    fn apply(&self, x: &[C64]) -> Vec<C64>;

    /// `A^H·y`; `y` has length `measurement_len()`.
    fn apply_adjoint(&self, y: &[C64]) -> Vec<C64>;

    /// Column `k` of the implied matrix.
    fn column(&self, k: usize) -> Vec<C64> {
        let mut e = linalg::zeros(self.unknown_shape().total());
        e[k] = C64::new(1.0, 0.0);
        self.apply(&e)
    }
}

/// An explicit matrix with a block shape on its columns.
#[derive(Clone, Debug)]
pub struct DenseOperator {
    matrix: CMatrix,
    shape: BlockShape,
}

impl DenseOperator {
    pub fn new(matrix: CMatrix, shape: BlockShape) -> Result<Self> {
        if matrix.ncols() != shape.total() {
            return dim_err(format!("matrix has {} columns, shape total is {}", matrix.ncols(), shape.total()));
        }
        Ok(Self { matrix, shape })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }
}

impl SensingOperator for DenseOperator {
    fn unknown_shape(&self) -> &BlockShape {
        &self.shape
    }

    fn measurement_len(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, x: &[C64]) -> Vec<C64> {
        linalg::mat_vec(&self.matrix, x)
    }

    fn apply_adjoint(&self, y: &[C64]) -> Vec<C64> {
        linalg::mat_adjoint_vec(&self.matrix, y)
    }

    fn column(&self, k: usize) -> Vec<C64> {
        self.matrix.column(k).iter().copied().collect()
    }
}

/// The matrix `A` as a fast forward/adjoint map.
///
/// Forward costs `O(M·N log N + Np·M log M)`: length-`N` FFTs down the delay
/// axis of the zero-padded `X̄`, then length-`M` inverse FFTs across the
/// antenna axis of the pilot rows. All-zero columns of `X̄` are skipped.
#[derive(Clone)]
pub struct KroneckerSensingOperator {
    design: PilotDesign,
    option: Vectorization,
    shape: BlockShape,
    pilot_base: Vec<C64>,
    fft_n: Arc<dyn Fft<f64>>,
    ifft_n: Arc<dyn Fft<f64>>,
    fft_m: Arc<dyn Fft<f64>>,
    ifft_m: Arc<dyn Fft<f64>>,
    scale_tau: f64,
    scale_theta: f64,
}

impl fmt::Debug for KroneckerSensingOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KroneckerSensingOperator")
            .field("params", &self.design.params)
            .field("option", &self.option)
            .finish()
    }
}

impl KroneckerSensingOperator {
    pub fn new(design: PilotDesign, option: Vectorization) -> Self {
        let DesignParams { n, m, d, u, np, mp } = design.params;
        let dims = match option {
            Vectorization::FrequencySpace => vec![m, u, d],
            Vectorization::SpaceFrequency => vec![u, d, m],
        };
        let shape = BlockShape::new(dims).expect("validated design has positive dims");
        let mut planner = FftPlanner::new();
        let pilot_base = design.subcarriers.iter().map(|&s| design.base_sequence[s]).collect();
        Self {
            shape,
            option,
            pilot_base,
            fft_n: planner.plan_fft_forward(n),
            ifft_n: planner.plan_fft_inverse(n),
            fft_m: planner.plan_fft_forward(m),
            ifft_m: planner.plan_fft_inverse(m),
            scale_tau: 1.0 / (np as f64).sqrt(),
            scale_theta: 1.0 / (mp as f64).sqrt(),
            design,
        }
    }

    pub fn design(&self) -> &PilotDesign {
        &self.design
    }

    pub fn option(&self) -> Vectorization {
        self.option
    }

    fn ud(&self) -> usize {
        self.design.params.u * self.design.params.d
    }

    /// Index of `X̄[r, m]` in the vectorized unknown.
    #[inline]
    pub fn unknown_index(&self, r: usize, m: usize) -> usize {
        match self.option {
            Vectorization::FrequencySpace => m * self.ud() + r,
            Vectorization::SpaceFrequency => r * self.design.params.m + m,
        }
    }

    /// Index of `Y[i, j]` (pilot `i`, observed antenna `j`) in the measurement vector.
    #[inline]
    pub fn measurement_index(&self, i: usize, j: usize) -> usize {
        match self.option {
            Vectorization::FrequencySpace => j * self.design.params.np + i,
            Vectorization::SpaceFrequency => i * self.design.params.mp + j,
        }
    }

    /// Checked `A·x`.
    pub fn forward(&self, x: &MultiLevelVector) -> Result<Vec<C64>> {
        if x.shape() != &self.shape {
            return dim_err(format!(
                "unknown shaped {:?}, operator expects {:?}",
                x.shape().dims(),
                self.shape.dims()
            ));
        }
        Ok(self.apply(x.values()))
    }

    /// Checked `A^H·y`.
    pub fn adjoint(&self, y: &[C64]) -> Result<MultiLevelVector> {
        if y.len() != self.measurement_len() {
            return dim_err(format!("measurement length {} != Np·Mp = {}", y.len(), self.measurement_len()));
        }
        MultiLevelVector::new(self.shape.clone(), self.apply_adjoint(y))
    }

    /// `Ā_τ` assembled per UE as `(1/√Np)·[diag(c_0)·P·F_{N,D}, …, diag(c_{U-1})·P·F_{N,D}]`.
    pub fn tau_factor(&self) -> CMatrix {
        let DesignParams { n, d, u, np, .. } = self.design.params;
        let mut a = CMatrix::zeros(np, u * d);
        for ue in 0..u {
            let sig = self.design.signature(ue).expect("ue in range");
            for (i, &sc) in self.design.subcarriers.iter().enumerate() {
                for k in 0..d {
                    a[(i, ue * d + k)] = sig[i] * twiddle(k as u128 * sc as u128, n) * self.scale_tau;
                }
            }
        }
        a
    }

    /// `Ā_τ` in its closed form `(1/√Np)·P·diag(c)·F_{N,UD}`.
    pub fn tau_factor_closed_form(&self) -> CMatrix {
        self.sampled_fourier_columns(self.ud())
    }

    /// `(1/√Np)·P·diag(c)·F_{N,N}`, the zero-padded extension of `Ā_τ`.
    pub fn tau_factor_extended(&self) -> CMatrix {
        self.sampled_fourier_columns(self.design.params.n)
    }

    fn sampled_fourier_columns(&self, cols: usize) -> CMatrix {
        let DesignParams { n, np, .. } = self.design.params;
        CMatrix::from_fn(np, cols, |i, r| {
            let sc = self.design.subcarriers[i];
            self.pilot_base[i] * twiddle(r as u128 * sc as u128, n) * self.scale_tau
        })
    }

    /// `Ā_θ = (1/√Mp)·P·F_{M,M}`.
    pub fn theta_factor(&self) -> CMatrix {
        let DesignParams { m, mp, .. } = self.design.params;
        CMatrix::from_fn(mp, m, |j, col| {
            twiddle(self.design.antennas[j] as u128 * col as u128, m) * self.scale_theta
        })
    }

    /// Dense `A` built as an explicit Kronecker product of the factors.
    pub fn densify(&self) -> Result<CMatrix> {
        self.densify_with_cap(DENSIFY_CAP)
    }

    pub fn densify_with_cap(&self, cap: usize) -> Result<CMatrix> {
        if self.shape.total() > cap {
            return Err(Error::CapExceeded { count: self.shape.total() as u128, cap: cap as u128 });
        }
        let tau = self.tau_factor();
        let theta_conj = self.theta_factor().map(|v| v.conj());
        Ok(match self.option {
            Vectorization::FrequencySpace => linalg::kron(&theta_conj, &tau),
            Vectorization::SpaceFrequency => linalg::kron(&tau, &theta_conj),
        })
    }
}

impl SensingOperator for KroneckerSensingOperator {
    fn unknown_shape(&self) -> &BlockShape {
        &self.shape
    }

    fn measurement_len(&self) -> usize {
        self.design.params.np * self.design.params.mp
    }

    fn apply(&self, x: &[C64]) -> Vec<C64> {
        let DesignParams { n, m, np, mp, .. } = self.design.params;
        let ud = self.ud();
        assert_eq!(x.len(), ud * m, "unknown length");
        let zero = C64::new(0.0, 0.0);

        // T = Ā_τ·X̄, stored row-major (Np × M)
        let mut t = vec![zero; np * m];
        let mut buf = vec![zero; n];
        let mut scratch = vec![zero; self.fft_n.get_inplace_scratch_len()];
        for col in 0..m {
            let mut nonzero = false;
            for r in 0..ud {
                let v = x[self.unknown_index(r, col)];
                buf[r] = v;
                nonzero |= v != zero;
            }
            if !nonzero {
                continue;
            }
            buf[ud..].fill(zero);
            self.fft_n.process_with_scratch(&mut buf, &mut scratch);
            for (i, &sc) in self.design.subcarriers.iter().enumerate() {
                t[i * m + col] = buf[sc] * self.pilot_base[i] * self.scale_tau;
            }
        }

        // Y = T·Ā_θ^H: Y[i, j] = (1/√Mp) Σ_m T[i, m] e^{+j2π a_j m / M}
        let mut y = vec![zero; np * mp];
        let mut scratch = vec![zero; self.ifft_m.get_inplace_scratch_len()];
        for i in 0..np {
            let row = &mut t[i * m..(i + 1) * m];
            if row.iter().all(|v| *v == zero) {
                continue;
            }
            self.ifft_m.process_with_scratch(row, &mut scratch);
            for (j, &ant) in self.design.antennas.iter().enumerate() {
                y[self.measurement_index(i, j)] = row[ant] * self.scale_theta;
            }
        }
        y
    }

    fn apply_adjoint(&self, y: &[C64]) -> Vec<C64> {
        let DesignParams { n, m, np, mp, .. } = self.design.params;
        let ud = self.ud();
        assert_eq!(y.len(), np * mp, "measurement length");
        let zero = C64::new(0.0, 0.0);

        // W = Y·Ā_θ, row-major (Np × M)
        let mut w = vec![zero; np * m];
        let mut scratch = vec![zero; self.fft_m.get_inplace_scratch_len()];
        for i in 0..np {
            let row = &mut w[i * m..(i + 1) * m];
            for (j, &ant) in self.design.antennas.iter().enumerate() {
                row[ant] = y[self.measurement_index(i, j)];
            }
            self.fft_m.process_with_scratch(row, &mut scratch);
        }

        // X̄ = Ā_τ^H·W
        let mut x = vec![zero; ud * m];
        let mut buf = vec![zero; n];
        let mut scratch = vec![zero; self.ifft_n.get_inplace_scratch_len()];
        for col in 0..m {
            buf.fill(zero);
            for (i, &sc) in self.design.subcarriers.iter().enumerate() {
                buf[sc] = self.pilot_base[i].conj() * w[i * m + col];
            }
            self.ifft_n.process_with_scratch(&mut buf, &mut scratch);
            for r in 0..ud {
                x[self.unknown_index(r, col)] = buf[r] * (self.scale_tau * self.scale_theta);
            }
        }
        x
    }

    fn column(&self, k: usize) -> Vec<C64> {
        let DesignParams { n, m, np, mp, .. } = self.design.params;
        let ud = self.ud();
        let (r, col) = match self.option {
            Vectorization::FrequencySpace => (k % ud, k / ud),
            Vectorization::SpaceFrequency => (k / m, k % m),
        };
        let tau: Vec<C64> = self
            .design
            .subcarriers
            .iter()
            .zip(&self.pilot_base)
            .map(|(&sc, &c)| c * twiddle(r as u128 * sc as u128, n) * self.scale_tau)
            .collect();
        // conj(Ā_θ[j, col]) = e^{+j2π a_j col / M} / √Mp
        let theta: Vec<C64> = self
            .design
            .antennas
            .iter()
            .map(|&a| twiddle(a as u128 * col as u128, m).conj() * self.scale_theta)
            .collect();
        let mut out = vec![C64::new(0.0, 0.0); np * mp];
        for (i, &t) in tau.iter().enumerate() {
            for (j, &th) in theta.iter().enumerate() {
                out[self.measurement_index(i, j)] = t * th;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{inner, mat_adjoint_vec, mat_vec, norm};
    use rand::Rng;

    fn params(n: usize, m: usize, d: usize, u: usize, np: usize, mp: usize) -> DesignParams {
        DesignParams { n, m, d, u, np, mp }
    }

    fn random_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<C64> {
        (0..len).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
    }

    fn random_base(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
        (0..n).map(|_| C64::from_polar(1.0, rng.random_range(0.0..2.0 * PI))).collect()
    }

    fn rel_err(a: &[C64], b: &[C64]) -> f64 {
        linalg::distance(a, b) / norm(b).max(1e-300)
    }

    #[test]
    fn design_validation() {
        assert!(PilotDesign::generate(params(16, 4, 4, 5, 8, 2), None, 0).is_err());
        assert!(PilotDesign::generate(params(16, 4, 4, 2, 17, 2), None, 0).is_err());
        assert!(PilotDesign::generate(params(16, 4, 4, 2, 8, 5), None, 0).is_err());
        let mut bad = vec![C64::new(1.0, 0.0); 16];
        bad[3] = C64::new(0.9, 0.0);
        assert!(PilotDesign::generate(params(16, 4, 4, 2, 8, 2), Some(bad), 0).is_err());
    }

    #[test]
    fn full_sampling_uses_every_index() {
        let d = PilotDesign::generate(params(1024, 256, 256, 4, 1024, 256), None, 99).unwrap();
        assert_eq!(d.subcarriers(), (0..1024).collect::<Vec<_>>().as_slice());
        assert_eq!(d.antennas(), (0..256).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn seeded_design_is_deterministic() {
        let a = PilotDesign::generate(params(128, 64, 32, 2, 8, 16), None, 5).unwrap();
        let b = PilotDesign::generate(params(128, 64, 32, 2, 8, 16), None, 5).unwrap();
        let c = PilotDesign::generate(params(128, 64, 32, 2, 8, 16), None, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.subcarriers(), c.subcarriers());
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn design_json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = random_base(&mut rng, 32);
        let d = PilotDesign::generate(params(32, 8, 8, 4, 12, 5), Some(base), 11).unwrap();
        let text = d.to_json().unwrap();
        assert!(text.contains("\"Np\": 12"));
        let back = PilotDesign::from_json(&text).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn signature_examples() {
        let d = PilotDesign::generate(params(4, 1, 2, 2, 4, 1), None, 0).unwrap();
        let s = d.signature(1).unwrap();
        let expect = [1.0, -1.0, 1.0, -1.0];
        for (v, e) in s.iter().zip(expect) {
            assert!((v - C64::new(e, 0.0)).norm() < 1e-15);
        }
        assert_eq!(d.signature(0).unwrap(), vec![C64::new(1.0, 0.0); 4]);
        assert!(d.signature(2).is_err());

        let dp = params(8, 1, 2, 4, 3, 1);
        let d = PilotDesign::from_parts(dp, vec![0, 2, 5], vec![0], vec![C64::new(1.0, 0.0); 8], 0).unwrap();
        let s = d.signature(3).unwrap();
        // e^{-j2π·6n/8} at n = 0, 2, 5
        let expect = [C64::new(1.0, 0.0), C64::new(-1.0, 0.0), C64::new(0.0, 1.0)];
        for (v, e) in s.iter().zip(expect) {
            assert!((v - e).norm() < 1e-14, "{v} vs {e}");
        }
    }

    #[test]
    fn full_sampling_gram_is_identity() {
        let d = PilotDesign::generate(params(8, 4, 4, 1, 8, 4), None, 1).unwrap();
        let op = KroneckerSensingOperator::new(d, Vectorization::FrequencySpace);
        let a = op.densify().unwrap();
        let g = a.adjoint() * &a;
        let eye = CMatrix::identity(g.nrows(), g.ncols());
        assert!((g - eye).norm() < 1e-12);
    }

    #[test]
    fn columns_have_unit_norm_and_match_basis_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for option in [Vectorization::FrequencySpace, Vectorization::SpaceFrequency] {
            let base = random_base(&mut rng, 16);
            let d = PilotDesign::generate(params(16, 4, 4, 2, 8, 3), Some(base), 4).unwrap();
            let op = KroneckerSensingOperator::new(d, option);
            let a = op.densify().unwrap();
            for k in 0..a.ncols() {
                let col: Vec<C64> = a.column(k).iter().copied().collect();
                assert!((norm(&col) - 1.0).abs() < 1e-10);
                assert!(rel_err(&op.column(k), &col) < 1e-12);
                let mut e = linalg::zeros(a.ncols());
                e[k] = C64::new(1.0, 0.0);
                assert!(rel_err(&op.apply(&e), &col) < 1e-10);
            }
        }
    }

    #[test]
    fn fast_matches_dense_and_adjoint_identity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let cases = [(16, 4, 4, 2, 8, 3), (32, 8, 8, 4, 5, 8), (12, 6, 3, 3, 12, 1), (20, 5, 4, 5, 7, 4)];
        for (n, m, dd, u, np, mp) in cases {
            for option in [Vectorization::FrequencySpace, Vectorization::SpaceFrequency] {
                let base = random_base(&mut rng, n);
                let seed = rng.random();
                let d = PilotDesign::generate(params(n, m, dd, u, np, mp), Some(base), seed).unwrap();
                let op = KroneckerSensingOperator::new(d, option);
                let a = op.densify().unwrap();
                for _ in 0..10 {
                    let x = random_vec(&mut rng, a.ncols());
                    let y = random_vec(&mut rng, a.nrows());
                    assert!(rel_err(&op.apply(&x), &mat_vec(&a, &x)) < 1e-10);
                    assert!(rel_err(&op.apply_adjoint(&y), &mat_adjoint_vec(&a, &y)) < 1e-10);
                    let lhs = inner(&op.apply(&x), &y);
                    let rhs = inner(&x, &op.apply_adjoint(&y));
                    assert!((lhs - rhs).norm() <= 1e-10 * norm(&x) * norm(&y));
                }
            }
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let d = PilotDesign::generate(params(16, 4, 4, 2, 8, 3), None, 4).unwrap();
        let op = KroneckerSensingOperator::new(d, Vectorization::FrequencySpace);
        assert!(op.apply(&linalg::zeros(32)).iter().all(|v| v.norm() == 0.0));
        assert!(op.apply_adjoint(&linalg::zeros(24)).iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn checked_entry_points_reject_bad_lengths() {
        let d = PilotDesign::generate(params(16, 4, 4, 2, 8, 3), None, 4).unwrap();
        let op = KroneckerSensingOperator::new(d, Vectorization::FrequencySpace);
        let wrong = MultiLevelVector::zeros(BlockShape::new(vec![2, 4, 4]).unwrap());
        assert!(op.forward(&wrong).is_err());
        assert!(op.adjoint(&linalg::zeros(23)).is_err());
        assert!(op.densify_with_cap(16).is_err());
    }

    #[test]
    fn closed_form_tau_factor_matches_per_ue_assembly() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let base = random_base(&mut rng, 32);
        let d = PilotDesign::generate(params(32, 4, 8, 4, 10, 4), Some(base), 21).unwrap();
        let op = KroneckerSensingOperator::new(d, Vectorization::FrequencySpace);
        let per_ue = op.tau_factor();
        let closed = op.tau_factor_closed_form();
        let diff = per_ue.iter().zip(closed.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12);
        let ext = op.tau_factor_extended();
        assert_eq!(ext.ncols(), 32);
        for r in 0..closed.ncols() {
            for i in 0..closed.nrows() {
                assert!((ext[(i, r)] - closed[(i, r)]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn fs_and_sf_are_permutations_of_each_other() {
        // Np·Mp = 16 rows, U·D·M = 24 columns
        let d = PilotDesign::generate(params(8, 6, 2, 2, 4, 4), None, 12).unwrap();
        let fs = KroneckerSensingOperator::new(d.clone(), Vectorization::FrequencySpace);
        let sf = KroneckerSensingOperator::new(d, Vectorization::SpaceFrequency);
        let a_fs = fs.densify().unwrap();
        let a_sf = sf.densify().unwrap();
        assert_eq!(a_fs.shape(), (16, 24));
        for i in 0..4 {
            for j in 0..4 {
                for r in 0..4 {
                    for m in 0..6 {
                        let lhs = a_fs[(fs.measurement_index(i, j), fs.unknown_index(r, m))];
                        let rhs = a_sf[(sf.measurement_index(i, j), sf.unknown_index(r, m))];
                        assert_eq!(lhs, rhs);
                    }
                }
            }
        }
    }
}
