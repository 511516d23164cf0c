//! Data-generating processes: outcome pmf, prediction law given outcome, response mechanism.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rng::{self, UnitDraws};
use crate::baselines::normal_cdf;
use crate::error::{contract, Result};
use crate::tables::{PopulationTables, StratumTable, TableSource, UnitRecord};

const SUM_TOL: f64 = 1e-12;
const CHUNK: usize = 4096;

/// `P(F | Y)` for five levels with `E[F | Y=y]` running evenly from 2.85 to 4.38.
///
/// Row `y` is the maximum-entropy law on `{1..5}` with that mean (`q(f) ∝ exp(λf)`).
pub const POINT_ID_MATRIX: [[f64; 5]; 5] = [
    [0.23114351352915669, 0.21440253413201218, 0.1988740498938126, 0.18447024369970524, 0.17110965874531311],
    [0.15614868971606397, 0.17551877357227258, 0.19729169634617433, 0.22176552772643146, 0.2492753126390577],
    [0.09515143626878252, 0.13116765081659593, 0.18081653094698563, 0.24925824058111085, 0.34360614138652507],
    [0.04798541184735982, 0.08436687129531784, 0.1483319346055034, 0.2607938695130017, 0.45852191273881726],
    [0.01583344298952869, 0.03934949686858696, 0.09779192717812192, 0.24303388307985033, 0.6039912498839122],
];

/// Conditional means used to fit [`POINT_ID_MATRIX`].
pub const POINT_ID_MEANS: [f64; 5] = [2.85, 3.2325, 3.615, 3.9975, 4.38];

/// `P(F | Y)` of the synthetic survey dataset: a noisy ordinal rater, correlation with `Y` near 0.43.
pub const USS_MATRIX: [[f64; 5]; 5] = [
    [0.485, 0.300, 0.156, 0.053, 0.006],
    [0.150, 0.485, 0.256, 0.086, 0.023],
    [0.043, 0.200, 0.491, 0.223, 0.043],
    [0.013, 0.063, 0.283, 0.491, 0.150],
    [0.003, 0.033, 0.129, 0.350, 0.485],
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PmfSpec {
    Explicit(Vec<f64>),
    DiscretizedNormal { mu: f64, sigma: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionalSpec {
    /// `M × M_F` row-stochastic matrix.
    Explicit(Vec<Vec<f64>>),
    /// `F = Y`.
    Identity,
    /// [`POINT_ID_MATRIX`]; needs `M = 5`.
    PointIdPreset,
    /// [`POINT_ID_MATRIX`] with `P(F|Y=1) := P(F|Y=2)` and `P(F|Y=5) := P(F|Y=4)`, rank 3.
    PartialIdPreset,
    /// [`USS_MATRIX`]; needs `M = 5`.
    UssPreset,
}

/// Named response mechanisms for five outcome levels. The vectors are fixed choices of this crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismPreset {
    HigherScoreMissing,
    UShaped,
    LowerScoreMissing,
    /// Low response in the middle and strongly increasing at the top; about 36.6% response
    /// under a discretized normal centred at 3.
    Illustrative,
}

impl MechanismPreset {
    pub fn pi(self) -> [f64; 5] {
        match self {
            MechanismPreset::HigherScoreMissing => [0.9, 0.8, 0.6, 0.4, 0.2],
            MechanismPreset::UShaped => [0.9, 0.5, 0.2, 0.5, 0.9],
            MechanismPreset::LowerScoreMissing => [0.2, 0.4, 0.6, 0.8, 0.9],
            MechanismPreset::Illustrative => [0.30, 0.10, 0.05, 0.70, 0.95],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismSpec {
    Explicit(Vec<f64>),
    Preset(MechanismPreset),
    /// Each `π(y)` drawn independently from `Uniform(lo, hi)`.
    UniformRandom { lo: f64, hi: f64 },
}

impl MechanismSpec {
    /// Resolves to a vector; random mechanisms draw from `(seed, stream)`.
    pub fn resolve(&self, m: usize, seed: u64, stream: u64) -> Result<Vec<f64>> {
        let pi = match self {
            MechanismSpec::Explicit(v) => v.clone(),
            MechanismSpec::Preset(p) => {
                if m != 5 {
                    return contract("mechanism presets are defined for five outcome levels");
                }
                p.pi().to_vec()
            }
            MechanismSpec::UniformRandom { lo, hi } => {
                if !(0.0 < *lo && lo <= hi && *hi <= 1.0) {
                    return contract(format!("uniform mechanism needs 0 < lo ≤ hi ≤ 1, got ({lo}, {hi})"));
                }
                rng::uniforms(seed, stream, m).iter().map(|u| lo + (hi - lo) * u).collect()
            }
        };
        check_mechanism(&pi, m)?;
        Ok(pi)
    }
}

pub(crate) fn check_mechanism(pi: &[f64], m: usize) -> Result<()> {
    if pi.len() != m {
        return contract(format!("mechanism has length {}, expected {m}", pi.len()));
    }
    if pi.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
        return contract("response probabilities must lie in (0, 1]");
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    pub m: usize,
    pub p_y: PmfSpec,
    pub f_given_y: ConditionalSpec,
    pub pi: MechanismSpec,
    pub n: usize,
    pub seed: u64,
}

/// A validated DGP with every component resolved to numbers.
#[derive(Clone, Debug, PartialEq)]
pub struct Dgp {
    pub p: Vec<f64>,
    /// `M × M_F`, row `y` is `P(F | Y = y)`.
    pub f_given_y: DMatrix<f64>,
    pub pi: Vec<f64>,
}

/// A fully labeled unit: prediction and outcome both known.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub stratum: Option<String>,
    pub f: Option<u32>,
    pub y: u32,
}

/// `P(Y=y) ∝ Φ((y+½−μ)/σ) − Φ((y−½−μ)/σ)`, with the end bins taking the tails.
pub fn discretized_normal(m: usize, mu: f64, sigma: f64) -> Result<Vec<f64>> {
    if m == 0 || !(sigma > 0.0) || !mu.is_finite() || !sigma.is_finite() {
        return contract("discretized normal needs m ≥ 1, finite mu and sigma > 0");
    }
    let cut = |k: usize| normal_cdf((k as f64 + 0.5 - mu) / sigma);
    Ok((1..=m)
        .map(|y| {
            let upper = if y == m { 1.0 } else { cut(y) };
            let lower = if y == 1 { 0.0 } else { cut(y - 1) };
            upper - lower
        })
        .collect())
}

/// `σ` such that the discretized normal has response rate `Σ p(y)π(y) = target`, by bisection on `[0.05, 20]`.
pub fn calibrate_sigma(m: usize, mu: f64, pi: &[f64], target: f64) -> Result<f64> {
    check_mechanism(pi, m)?;
    let rate = |s: f64| -> Result<f64> {
        Ok(discretized_normal(m, mu, s)?.iter().zip(pi).map(|(p, q)| p * q).sum::<f64>() - target)
    };
    let (mut a, mut b) = (0.05, 20.0);
    let (fa, fb) = (rate(a)?, rate(b)?);
    if fa.signum() == fb.signum() {
        return contract(format!("response rate {target} not attainable on the sigma bracket"));
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if rate(mid)?.signum() == fa.signum() {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Maximum-entropy law on `{1..k}` with the given mean.
pub fn max_entropy_row(k: usize, mean: f64) -> Result<Vec<f64>> {
    if !(1.0 < mean && mean < k as f64) {
        return contract(format!("mean {mean} must lie strictly inside (1, {k})"));
    }
    let law = |lam: f64| {
        let w: Vec<f64> = (1..=k).map(|f| (lam * f as f64).exp()).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect::<Vec<_>>()
    };
    let mean_of = |q: &[f64]| q.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum::<f64>();
    let (mut a, mut b) = (-50.0, 50.0);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mean_of(&law(mid)) < mean {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(law(0.5 * (a + b)))
}

fn preset_matrix(m: usize, rows: &[[f64; 5]; 5], name: &str) -> Result<DMatrix<f64>> {
    if m != 5 {
        return contract(format!("{name} is defined for five outcome levels"));
    }
    Ok(DMatrix::from_fn(5, 5, |y, f| rows[y][f]))
}

impl ConditionalSpec {
    pub fn resolve(&self, m: usize) -> Result<DMatrix<f64>> {
        let mat = match self {
            ConditionalSpec::Explicit(rows) => {
                if rows.len() != m || rows.is_empty() {
                    return contract(format!("conditional matrix needs {m} rows"));
                }
                let m_f = rows[0].len();
                if m_f == 0 || rows.iter().any(|r| r.len() != m_f) {
                    return contract("conditional matrix rows must share a nonzero length");
                }
                DMatrix::from_fn(m, m_f, |y, f| rows[y][f])
            }
            ConditionalSpec::Identity => DMatrix::identity(m, m),
            ConditionalSpec::PointIdPreset => preset_matrix(m, &POINT_ID_MATRIX, "point_id_preset")?,
            ConditionalSpec::PartialIdPreset => {
                let mut p = preset_matrix(m, &POINT_ID_MATRIX, "partial_id_preset")?;
                let r1 = p.row(1).clone_owned();
                let r3 = p.row(3).clone_owned();
                p.set_row(0, &r1);
                p.set_row(4, &r3);
                p
            }
            ConditionalSpec::UssPreset => preset_matrix(m, &USS_MATRIX, "uss_preset")?,
        };
        Ok(mat)
    }
}

impl DgpConfig {
    pub fn resolve(&self) -> Result<Dgp> {
        let m = self.m;
        if m == 0 {
            return contract("outcome support must be nonempty");
        }
        let p = match &self.p_y {
            PmfSpec::Explicit(p) => p.clone(),
            PmfSpec::DiscretizedNormal { mu, sigma } => discretized_normal(m, *mu, *sigma)?,
        };
        let f_given_y = self.f_given_y.resolve(m)?;
        let pi = self.pi.resolve(m, self.seed, rng::STREAM_MECHANISM)?;
        Dgp::new(p, f_given_y, pi)
    }
}

impl Dgp {
    pub fn new(p: Vec<f64>, f_given_y: DMatrix<f64>, pi: Vec<f64>) -> Result<Self> {
        let m = p.len();
        if m == 0 {
            return contract("outcome support must be nonempty");
        }
        if p.iter().any(|q| !(*q >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > SUM_TOL {
            return contract("outcome pmf must be nonnegative and sum to 1");
        }
        if f_given_y.nrows() != m || f_given_y.ncols() == 0 {
            return contract(format!("conditional matrix must have {m} rows"));
        }
        for y in 0..m {
            let row = f_given_y.row(y);
            if row.iter().any(|q| !(*q >= 0.0)) || (row.sum() - 1.0).abs() > SUM_TOL {
                return contract(format!("row {} of P(F|Y) is not a distribution", y + 1));
            }
        }
        check_mechanism(&pi, m)?;
        Ok(Self { p, f_given_y, pi })
    }

    /// The same outcome and prediction laws under another response mechanism.
    pub fn with_pi(&self, pi: Vec<f64>) -> Result<Self> {
        Self::new(self.p.clone(), self.f_given_y.clone(), pi)
    }

    pub fn m(&self) -> usize {
        self.p.len()
    }

    pub fn m_f(&self) -> usize {
        self.f_given_y.ncols()
    }

    pub fn pmf(&self) -> &[f64] {
        &self.p
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn true_mean(&self) -> f64 {
        self.p.iter().enumerate().map(|(y, q)| (y + 1) as f64 * q).sum()
    }

    pub fn response_rate(&self) -> f64 {
        self.p.iter().zip(&self.pi).map(|(p, q)| p * q).sum()
    }

    /// `H[f][y] = P(F=f, Y=y)`.
    pub fn joint(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.m_f(), self.m(), |f, y| self.p[y] * self.f_given_y[(y, f)])
    }

    /// The population table implied by the DGP.
    pub fn exact_table(&self) -> StratumTable {
        let (m, m_f) = (self.m(), self.m_f());
        let alpha = DMatrix::from_fn(m_f, m, |f, y| self.p[y] * self.f_given_y[(y, f)] * self.pi[y]);
        let beta = (0..m_f)
            .map(|f| (0..m).map(|y| self.p[y] * self.f_given_y[(y, f)] * (1.0 - self.pi[y])).sum())
            .collect();
        StratumTable::new(alpha, beta, TableSource::Exact).expect("a validated DGP yields a valid table")
    }

    pub fn exact_tables(&self) -> PopulationTables {
        PopulationTables::single(self.exact_table())
    }

    /// Draws `n` fully labeled units from stream `(seed, stream)`.
    pub fn generate_labeled(&self, n: usize, seed: u64, stream: u64) -> Vec<LabeledRecord> {
        self.draw(n, seed, stream, |y, f, _| LabeledRecord { stratum: None, f: Some(f), y })
    }

    /// Draws `n` units with the response indicator applied.
    pub fn generate(&self, n: usize, seed: u64, stream: u64) -> Vec<UnitRecord> {
        self.draw(n, seed, stream, |y, f, r| UnitRecord {
            stratum: None,
            f: Some(f),
            r,
            y: r.then_some(y),
            d: None,
        })
    }

    fn draw<T: Send>(&self, n: usize, seed: u64, stream: u64, make: impl Fn(u32, u32, bool) -> T + Sync) -> Vec<T> {
        let cum_y = cumulative(self.p.iter().copied());
        let cum_f: Vec<Vec<f64>> = (0..self.m()).map(|y| cumulative(self.f_given_y.row(y).iter().copied())).collect();
        let chunks: Vec<Vec<T>> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let start = c * CHUNK;
                let end = (start + CHUNK).min(n);
                let mut draws = UnitDraws::new(seed, stream, start as u64);
                (start..end)
                    .map(|_| {
                        let u = draws.next_unit();
                        let y = pick(&cum_y, u[0]);
                        let f = pick(&cum_f[y], u[1]);
                        make(y as u32 + 1, f as u32 + 1, u[2] < self.pi[y])
                    })
                    .collect()
            })
            .collect();
        chunks.into_iter().flatten().collect()
    }
}

fn cumulative(it: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    it.map(|p| {
        acc += p;
        acc
    })
    .collect()
}

/// Inverse-cdf lookup; the last positive-mass category absorbs rounding at the top.
fn pick(cum: &[f64], u: f64) -> usize {
    cum.iter().position(|&c| u < c).unwrap_or_else(|| {
        (0..cum.len())
            .rev()
            .find(|&i| cum[i] > if i == 0 { 0.0 } else { cum[i - 1] })
            .unwrap_or(0)
    })
}

/// Samples `cfg.n` units with `cfg.seed`.
pub fn generate(cfg: &DgpConfig) -> Result<Vec<UnitRecord>> {
    Ok(cfg.resolve()?.generate(cfg.n, cfg.seed, rng::STREAM_GENERATE))
}

/// Population tables of `cfg`.
pub fn exact_tables(cfg: &DgpConfig) -> Result<PopulationTables> {
    Ok(cfg.resolve()?.exact_tables())
}

/// The five-level illustration: discretized normal at 3 with `σ` calibrated to a 36.6%
/// response rate under [`MechanismPreset::Illustrative`].
pub fn illustrative_config(f_given_y: ConditionalSpec, n: usize, seed: u64) -> DgpConfig {
    let pi = MechanismPreset::Illustrative.pi();
    let sigma = calibrate_sigma(5, 3.0, &pi, 0.366).expect("bracket contains the target");
    DgpConfig {
        m: 5,
        p_y: PmfSpec::DiscretizedNormal { mu: 3.0, sigma },
        f_given_y,
        pi: MechanismSpec::Preset(MechanismPreset::Illustrative),
        n,
        seed,
    }
}
