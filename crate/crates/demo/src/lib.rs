//! WebAssembly bindings for the static page in `www/`.
//!
//! Each export is a thin wrapper over a plain function so the logic can be
//! tested on the host.

use hisparse_core::channel::{self, ChannelParams, ChannelPath, Grid};
use hisparse_core::recovery::{self, Algorithm, ModelOrder, RecoveryConfig};
use hisparse_core::sensing::{DesignParams, KroneckerSensingOperator, PilotDesign, Vectorization};
use hisparse_core::{block, sim, BlockShape, MultiLevelVector, SparsityProfile, C64};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

#[wasm_bindgen]
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    hierarchical: Vec<usize>,
    flat: Vec<usize>,
}

#[wasm_bindgen]
impl Selection {
    #[wasm_bindgen(getter)]
    pub fn hierarchical(&self) -> Vec<usize> {
        self.hierarchical.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn flat(&self) -> Vec<usize> {
        self.flat.clone()
    }
}

/// Hierarchical support of `values` on `dims` for profile `s`, next to the
/// flat top-`∏s` support.
pub fn threshold(values: &[f64], dims: &[usize], s: &[usize]) -> Result<Selection, String> {
    let shape = BlockShape::new(dims.to_vec()).map_err(|e| e.to_string())?;
    let profile = SparsityProfile::new(s.to_vec()).map_err(|e| e.to_string())?;
    let x = MultiLevelVector::new(shape, values.iter().map(|&v| C64::new(v, 0.0)).collect()).map_err(|e| e.to_string())?;
    let hi = block::hi_threshold(&x, &profile).map_err(|e| e.to_string())?;
    let k = profile.product().min(values.len());
    let flat_x = MultiLevelVector::new(BlockShape::flat(values.len()).map_err(|e| e.to_string())?, x.values().to_vec())
        .map_err(|e| e.to_string())?;
    let flat = block::hi_threshold(&flat_x, &SparsityProfile::flat(k).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    Ok(Selection { hierarchical: hi.indices().to_vec(), flat: flat.indices().to_vec() })
}

#[wasm_bindgen(js_name = hiThreshold)]
pub fn hi_threshold_js(values: Vec<f64>, dims: Vec<usize>, s: Vec<usize>) -> Result<Selection, JsError> {
    threshold(&values, &dims, &s).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    rows: usize,
    cols: usize,
    full: Vec<f64>,
    sparse: Vec<f64>,
    error: f64,
    bound: f64,
    nnz: usize,
}

#[wasm_bindgen]
impl Heatmap {
    #[wasm_bindgen(getter)]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[wasm_bindgen(getter)]
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `|X|`, row-major.
    #[wasm_bindgen(getter)]
    pub fn full(&self) -> Vec<f64> {
        self.full.clone()
    }

    /// `|X_sp|`, row-major.
    #[wasm_bindgen(getter)]
    pub fn sparse(&self) -> Vec<f64> {
        self.sparse.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn error(&self) -> f64 {
        self.error
    }

    #[wasm_bindgen(getter)]
    pub fn bound(&self) -> f64 {
        self.bound
    }

    #[wasm_bindgen(getter)]
    pub fn nnz(&self) -> usize {
        self.nnz
    }
}

/// Delay-angular leakage of off-grid paths given as `[τ̃, θ, re, im]` quadruples.
pub fn leakage(n: usize, m: usize, paths: &[f64], l1: usize, l2: usize) -> Result<Heatmap, String> {
    if !paths.len().is_multiple_of(4) {
        return Err("paths must be [tau, theta, re, im] quadruples".into());
    }
    let paths: Vec<ChannelPath> = paths
        .chunks(4)
        .map(|p| ChannelPath { tau_norm: p[0], theta: p[1], gain: C64::new(p[2], p[3]) })
        .collect();
    let x = channel::delay_angular_offgrid(&channel::synthesize_transfer_offgrid(&paths, n, m));
    let sa = channel::sparse_approx(&paths, l1, l2, n, m).map_err(|e| e.to_string())?;
    let row_major = |a: &hisparse_core::linalg::CMatrix| -> Vec<f64> {
        (0..n).flat_map(|r| (0..m).map(move |c| (r, c))).map(|(r, c)| a[(r, c)].norm()).collect()
    };
    Ok(Heatmap {
        rows: n,
        cols: m,
        full: row_major(&x),
        sparse: row_major(&sa.x_sp),
        error: (&x - &sa.x_sp).norm(),
        bound: sa.error_bound,
        nnz: sa.nnz(),
    })
}

#[wasm_bindgen(js_name = offgridLeakage)]
pub fn leakage_js(n: usize, m: usize, paths: Vec<f64>, l1: usize, l2: usize) -> Result<Heatmap, JsError> {
    leakage(n, m, &paths, l1, l2).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
#[derive(Clone, Debug, PartialEq)]
pub struct Estimate {
    rows: usize,
    cols: usize,
    truth: Vec<f64>,
    estimate: Vec<f64>,
    mse: f64,
    iterations: usize,
    exact_support: bool,
}

#[wasm_bindgen]
impl Estimate {
    #[wasm_bindgen(getter)]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[wasm_bindgen(getter)]
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `|X|` on the `D × M` grid, row-major.
    #[wasm_bindgen(getter)]
    pub fn truth(&self) -> Vec<f64> {
        self.truth.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn estimate(&self) -> Vec<f64> {
        self.estimate.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn mse(&self) -> f64 {
        self.mse
    }

    #[wasm_bindgen(getter)]
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    #[wasm_bindgen(getter, js_name = exactSupport)]
    pub fn exact_support(&self) -> bool {
        self.exact_support
    }
}

/// Single-UE on-grid estimate with all `M` antennas observed.
#[allow(clippy::too_many_arguments)]
pub fn estimate(
    n: usize,
    m: usize,
    d: usize,
    l: usize,
    np: usize,
    snr_db: f64,
    seed: u64,
    hierarchical: bool,
) -> Result<Estimate, String> {
    let err = |e: hisparse_core::Error| e.to_string();
    let option = Vectorization::FrequencySpace;
    let design = PilotDesign::generate(DesignParams { n, m, d, u: 1, np, mp: m }, None, seed).map_err(err)?;
    let op = KroneckerSensingOperator::new(design, option);
    let params = ChannelParams { n, m, d, u: 1, v: 1, l, k_v: 1, k_l: 1, alpha: 0.25, option, grid: Grid::On };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let realization = channel::gen_ongrid(&params, &mut rng).map_err(err)?;
    let x = realization.unknown_vector(option).map_err(err)?;
    let snr = snr_db.is_finite().then_some(snr_db);
    let y = sim::simulate_measurements(&op, &realization, snr, seed.wrapping_add(1)).map_err(err)?;
    let order = ModelOrder { v: 1, l, k_v: 1, k_l: 1 };
    let cfg = if hierarchical {
        RecoveryConfig::new(Algorithm::HiIHT, order.ongrid_profile(option).map_err(err)?)
    } else {
        RecoveryConfig::new(Algorithm::IHT, SparsityProfile::flat(order.flat_sparsity(None)).map_err(err)?)
    };
    let res = recovery::recover(&y, &op, &cfg).map_err(err)?;
    let grid = |v: &[C64]| -> Vec<f64> {
        (0..d).flat_map(|k| (0..m).map(move |a| (k, a))).map(|(k, a)| v[op.unknown_index(k, a)].norm()).collect()
    };
    let truth_support: Vec<usize> = (0..x.len()).filter(|&i| x[i].norm() > 0.0).collect();
    Ok(Estimate {
        rows: d,
        cols: m,
        truth: grid(&x),
        estimate: grid(res.x_hat.values()),
        mse: hisparse_core::linalg::distance(&x, res.x_hat.values()).powi(2),
        iterations: res.iterations,
        exact_support: res.x_hat.support() == truth_support,
    })
}

#[wasm_bindgen(js_name = estimateChannel)]
#[allow(clippy::too_many_arguments)]
pub fn estimate_js(
    n: usize,
    m: usize,
    d: usize,
    l: usize,
    np: usize,
    snr_db: f64,
    seed: u32,
    hierarchical: bool,
) -> Result<Estimate, JsError> {
    estimate(n, m, d, l, np, snr_db, seed as u64, hierarchical).map_err(|e| JsError::new(&e))
}
