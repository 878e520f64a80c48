//! Randomized property suites behind `verify`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelParams, Grid};
use crate::error::{param_err, Error, Result};
use crate::hirip::{self, Grouping};
use crate::linalg::{self, CMatrix};
use crate::recovery::{self, Algorithm, ModelOrder, RecoveryConfig};
use crate::sensing::{DesignParams, KroneckerSensingOperator, PilotDesign, SensingOperator, Vectorization};
use crate::{BlockShape, SparsityProfile, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Hirip,
    Bounds,
    Operators,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hirip" => Ok(Suite::Hirip),
            "bounds" => Ok(Suite::Bounds),
            "operators" => Ok(Suite::Operators),
            _ => param_err(format!("unknown suite {s:?}")),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Hirip => "hirip",
            Suite::Bounds => "bounds",
            Suite::Operators => "operators",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub instances: usize,
    pub violations: usize,
    /// Worst observed margin or error, human readable.
    pub detail: String,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.instances > 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub suite: Suite,
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<VerifyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let checks = match suite {
        Suite::Operators => vec![operator_check(&mut rng, 50)?],
        Suite::Hirip => vec![
            hierarchical_vs_flat_check(&mut rng, 50)?,
            single_level_check(&mut rng, 50)?,
            kronecker_bound_check(&mut rng, 50)?,
            extension_check(&mut rng, 50)?,
        ],
        Suite::Bounds => vec![
            sparse_approx_check(&mut rng, 200)?,
            dirichlet_check(&mut rng, 1000)?,
            contraction_check(&mut rng, 20)?,
        ],
    };
    Ok(VerifyReport { suite, seed, checks })
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    let scale = 1.0 / (2.0 * rows as f64).sqrt();
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * scale, im * scale)
    })
}

fn gaussian_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
    (0..n)
        .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect()
}

/// Fast operator against its explicit Kronecker matrix.
pub fn operator_check(rng: &mut ChaCha8Rng, instances: usize) -> Result<Check> {
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = [8, 16, 32][rng.random_range(0..3)];
        let m = [2, 4, 8][rng.random_range(0..3)];
        let u = rng.random_range(1..=2);
        let d = rng.random_range(1..=n / u);
        let np = rng.random_range(1..=n);
        let mp = rng.random_range(1..=m);
        let option = if rng.random_bool(0.5) { Vectorization::FrequencySpace } else { Vectorization::SpaceFrequency };
        let design = PilotDesign::generate(DesignParams { n, m, d, u, np, mp }, None, rng.random())?;
        let op = KroneckerSensingOperator::new(design, option);
        let dense = op.densify()?;
        let x = gaussian_vec(op.unknown_shape().total(), rng);
        let y = gaussian_vec(op.measurement_len(), rng);
        let fwd = op.apply(&x);
        let fwd_ref = linalg::mat_vec(&dense, &x);
        let adj = op.apply_adjoint(&y);
        let adj_ref = linalg::mat_adjoint_vec(&dense, &y);
        let e1 = linalg::distance(&fwd, &fwd_ref) / linalg::norm(&fwd_ref).max(f64::MIN_POSITIVE);
        let e2 = linalg::distance(&adj, &adj_ref) / linalg::norm(&adj_ref).max(f64::MIN_POSITIVE);
        let e3 = (linalg::inner(&y, &fwd) - linalg::inner(&adj, &x)).norm() / (linalg::norm(&x) * linalg::norm(&y));
        let e = e1.max(e2).max(e3);
        worst = worst.max(e);
        if e > 1e-10 {
            violations += 1;
        }
    }
    Ok(Check {
        name: "fast operator matches dense Kronecker oracle".into(),
        instances,
        violations,
        detail: format!("worst relative error {worst:.3e}"),
    })
}

fn random_shape(rng: &mut ChaCha8Rng) -> (BlockShape, SparsityProfile) {
    let levels = rng.random_range(2..=3);
    let dims: Vec<usize> = (0..levels).map(|_| rng.random_range(2..=3)).collect();
    let s: Vec<usize> = dims.iter().map(|&n| rng.random_range(1..=n)).collect();
    (BlockShape::new(dims).expect("positive"), SparsityProfile::new(s).expect("positive"))
}

/// The hierarchical constant never exceeds the flat one at the product sparsity.
pub fn hierarchical_vs_flat_check(rng: &mut ChaCha8Rng, instances: usize) -> Result<Check> {
    let mut violations = 0;
    let mut margin = f64::INFINITY;
    let mut done = 0;
    while done < instances {
        let (shape, s) = random_shape(rng);
        let cols = shape.total();
        if crate::combin::binomial(cols, s.product().min(cols)) > 20_000 {
            continue;
        }
        let a = gaussian_matrix(rng.random_range(4..=cols), cols, rng);
        let hi = hirip::hirip_constant(&a, &shape, &s)?.delta;
        let flat = hirip::rip_constant(&a, s.product())?.delta;
        margin = margin.min(flat - hi);
        if hi > flat + 1e-12 {
            violations += 1;
        }
        done += 1;
    }
    Ok(Check {
        name: "hierarchical constant ≤ flat constant".into(),
        instances,
        violations,
        detail: format!("smallest margin {margin:.3e}"),
    })
}

/// One-level profiles reproduce the flat constant.
pub fn single_level_check(rng: &mut ChaCha8Rng, instances: usize) -> Result<Check> {
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let cols = rng.random_range(4..=10);
        let s = rng.random_range(1..=4usize.min(cols));
        let a = gaussian_matrix(rng.random_range(3..=8), cols, rng);
        let flat = hirip::rip_constant(&a, s)?.delta;
        let hi = hirip::hirip_constant(&a, &BlockShape::flat(cols)?, &SparsityProfile::flat(s)?)?.delta;
        worst = worst.max((flat - hi).abs());
        if (flat - hi).abs() > 1e-12 {
            violations += 1;
        }
    }
    Ok(Check {
        name: "single-level hierarchical constant equals flat constant".into(),
        instances,
        violations,
        detail: format!("largest difference {worst:.3e}"),
    })
}

/// Kronecker factor bound dominates the exact hierarchical constant.
pub fn kronecker_bound_check(rng: &mut ChaCha8Rng, instances: usize) -> Result<Check> {
    let mut violations = 0;
    let mut margin = f64::INFINITY;
    let splits = [(2usize, 2usize), (2, 3), (3, 2)];
    for _ in 0..instances {
        for grouping in [Grouping::OuterFirst, Grouping::InnerMerged] {
            let (p, q) = splits[rng.random_range(0..splits.len())];
            let other = rng.random_range(2..=3);
            let (c1, c2, dims) = match grouping {
                Grouping::OuterFirst => (other, p * q, vec![other, p, q]),
                Grouping::InnerMerged => (p * q, other, vec![p, q, other]),
            };
            let a1 = gaussian_matrix(rng.random_range(2..=c1 + 1), c1, rng);
            let a2 = gaussian_matrix(rng.random_range(2..=c2 + 1), c2, rng);
            let s = SparsityProfile::new(dims.iter().map(|&n| rng.random_range(1..=n)).collect())?;
            let exact = hirip::hirip_constant(&a1.kronecker(&a2), &BlockShape::new(dims)?, &s)?.delta;
            let bound = hirip::lemma7_bound(&a1, &a2, &s, grouping)?;
            margin = margin.min(bound - exact);
            if bound < exact - 1e-12 {
                violations += 1;
            }
        }
    }
    Ok(Check {
        name: "Kronecker factor bound dominates (both groupings)".into(),
        instances: 2 * instances,
        violations,
        detail: format!("smallest margin {margin:.3e}"),
    })
}

/// Delay factor constant is at most that of its zero-padded extension.
pub fn extension_check(rng: &mut ChaCha8Rng, instances: usize) -> Result<Check> {
    let mut violations = 0;
    let mut margin = f64::INFINITY;
    for _ in 0..instances {
        let design = PilotDesign::generate(DesignParams { n: 16, m: 2, d: 4, u: 2, np: 8, mp: 2 }, None, rng.random())?;
        let c = hirip::eq21_check(&design, 2)?;
        margin = margin.min(c.delta_extended - c.delta_restricted);
        if !c.holds {
            violations += 1;
        }
    }
    Ok(Check {
        name: "restricted delay factor constant ≤ extended".into(),
        instances,
        violations,
        detail: format!("smallest margin {margin:.3e}"),
    })
}

/// Off-grid sparse approximation error bound and support size.
pub fn sparse_approx_check(rng: &mut ChaCha8Rng, instances: usize) -> Result<Check> {
    let (n, m) = (64, 32);
    let mut violations = 0;
    let mut ratio: f64 = 0.0;
    let pairs = [1usize, 2, 4];
    for _ in 0..instances {
        let l = rng.random_range(1..=4);
        let params = ChannelParams {
            n,
            m,
            d: 16,
            u: 1,
            v: 1,
            l,
            k_v: 1,
            k_l: 1,
            alpha: 0.25,
            option: Vectorization::FrequencySpace,
            grid: Grid::Off,
        };
        let r = channel::gen_offgrid(&params, rng)?;
        let x = channel::delay_angular_offgrid(&channel::synthesize_transfer_offgrid(&r.paths[0], n, m));
        for &l1 in &pairs {
            for &l2 in &pairs {
                let sa = channel::sparse_approx(&r.paths[0], l1, l2, n, m)?;
                let err = (&x - &sa.x_sp).norm();
                ratio = ratio.max(err / sa.error_bound);
                if err > sa.error_bound || sa.nnz() > l * (2 * l1 + 1) * (2 * l2 + 1) {
                    violations += 1;
                }
            }
        }
    }
    Ok(Check {
        name: "sparse approximation error within bound".into(),
        instances: instances * 9,
        violations,
        detail: format!("largest error/bound ratio {ratio:.3}"),
    })
}

/// Unit norm off the grid and canonical vectors on it.
pub fn dirichlet_check(rng: &mut ChaCha8Rng, instances: usize) -> Result<Check> {
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for &k in &[2usize, 16, 256] {
        for _ in 0..instances {
            let u = channel::dirichlet_vector(k, rng.random_range(0.0..1.0))?;
            let dev = (linalg::norm(&u) - 1.0).abs();
            worst = worst.max(dev);
            if dev > 1e-12 {
                violations += 1;
            }
        }
        for i in 0..k {
            let u = channel::dirichlet_vector(k, i as f64 / k as f64)?;
            let exact = u.iter().enumerate().all(|(j, v)| *v == C64::new((i == j) as u8 as f64, 0.0));
            if !exact {
                violations += 1;
            }
        }
    }
    Ok(Check {
        name: "Dirichlet vectors have unit norm".into(),
        instances: 3 * instances + 2 + 16 + 256,
        violations,
        detail: format!("largest norm deviation {worst:.3e}"),
    })
}

/// HiIHT error stays under `κⁱ‖x‖ + τ‖z‖` on instances with a certified
/// constant for the tripled profile. Uncertified draws are skipped.
pub fn contraction_check(rng: &mut ChaCha8Rng, instances: usize) -> Result<Check> {
    let (n, m, d, u) = (16, 4, 4, 1);
    let order = ModelOrder { v: 1, l: 1, k_v: 1, k_l: 1 };
    let profile = order.ongrid_profile(Vectorization::FrequencySpace)?;
    let tripled = SparsityProfile::new(profile.levels().iter().map(|s| 3 * s).collect())?;
    let mut violations = 0;
    let mut done = 0;
    let mut attempts = 0;
    let mut worst_slack = f64::INFINITY;
    while done < instances {
        attempts += 1;
        if attempts > 50 * instances {
            return Err(Error::Unsatisfiable("no certified instance found".into()));
        }
        let design = PilotDesign::generate(DesignParams { n, m, d, u, np: 14, mp: m }, None, rng.random())?;
        let op = KroneckerSensingOperator::new(design, Vectorization::FrequencySpace);
        let delta = hirip::hirip_constant(&op.densify()?, op.unknown_shape(), &tripled)?.delta;
        let Ok(c) = recovery::theorem6_constants(delta, Algorithm::HiIHT) else { continue };
        let params = ChannelParams {
            n,
            m,
            d,
            u,
            v: 1,
            l: 1,
            k_v: 1,
            k_l: 1,
            alpha: 0.25,
            option: Vectorization::FrequencySpace,
            grid: Grid::On,
        };
        let x = channel::gen_ongrid(&params, rng)?.unknown_vector(Vectorization::FrequencySpace)?;
        let z: Vec<C64> = gaussian_vec(op.measurement_len(), rng).into_iter().map(|v| v * 0.01).collect();
        let y: Vec<C64> = op.apply(&x).iter().zip(&z).map(|(a, b)| a + b).collect();
        let cfg = RecoveryConfig::new(Algorithm::HiIHT, profile.clone());
        let res = recovery::recover_traced(&y, &op, &cfg, Some(&x))?;
        let (xn, zn) = (linalg::norm(&x), linalg::norm(&z));
        for (i, err) in res.error_trace.expect("traced").iter().enumerate() {
            let bound = c.kappa.powi(i as i32 + 1) * xn + c.tau * zn;
            worst_slack = worst_slack.min(bound - err);
            if *err > bound {
                violations += 1;
            }
        }
        done += 1;
    }
    Ok(Check {
        name: "HiIHT error contraction on certified instances".into(),
        instances,
        violations,
        detail: format!("smallest slack {worst_slack:.3e}"),
    })
}
