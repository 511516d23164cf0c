//! Completeness diagnostics: singular values, numerical rank and condition numbers of
//! the prediction-outcome joint `H` and the respondent conditional `B`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{contract, Result};
use crate::tables::{StratumTable, UnitRecord};

/// Largest dimension accepted by [`svd_values`].
pub const MAX_SVD_DIM: usize = 64;
const MAX_SWEEPS: usize = 80;

/// Singular values by one-sided Jacobi rotations, sorted descending.
///
/// Always returns `ncols` values; when there are more columns than rows the extra
/// values are (numerically) zero.
pub fn svd_values(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    let (m, d) = a.shape();
    if m > MAX_SVD_DIM || d > MAX_SVD_DIM {
        return contract(format!("svd limited to {MAX_SVD_DIM}x{MAX_SVD_DIM}, got {m}x{d}"));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return contract("matrix entries must be finite");
    }
    let mut u = a.clone();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..d {
            for q in p + 1..d {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..m {
                    let (x, y) = (u[(i, p)], u[(i, q)]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (u[(i, p)], u[(i, q)]);
                    u[(i, p)] = c * x - s * y;
                    u[(i, q)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = (0..d).map(|j| u.column(j).norm()).collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    Ok(sv)
}

/// `max(m, d)·σ_max·1e-12`.
pub fn rank_tol(shape: (usize, usize), sigma_max: f64) -> f64 {
    shape.0.max(shape.1) as f64 * sigma_max * 1e-12
}

/// A condition number that may be infinite. Infinite values serialize as the string `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(from = "KappaRepr")]
pub struct Kappa(pub f64);

#[derive(Deserialize)]
#[serde(untagged)]
enum KappaRepr {
    Finite(f64),
    Tag(String),
}

impl From<KappaRepr> for Kappa {
    fn from(r: KappaRepr) -> Self {
        match r {
            KappaRepr::Finite(v) => Kappa(v),
            KappaRepr::Tag(t) => Kappa(t.parse().unwrap_or(f64::INFINITY)),
        }
    }
}

impl Serialize for Kappa {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_str("inf")
        }
    }
}

impl Kappa {
    pub fn is_finite(&self) -> bool {
        self.0.is_finite()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub singular_values: Vec<f64>,
    pub sigma_min: f64,
    pub kappa: Kappa,
    pub rank: usize,
}

/// Singular values, numerical rank and `σ_max/σ_min` of `a`.
pub fn spectrum(a: &DMatrix<f64>) -> Result<Spectrum> {
    let sv = svd_values(a)?;
    let sigma_max = sv.first().copied().unwrap_or(0.0);
    let sigma_min = sv.last().copied().unwrap_or(0.0);
    let tol = rank_tol(a.shape(), sigma_max);
    let rank = sv.iter().filter(|&&s| s > tol).count();
    let kappa = if sigma_max > 0.0 && sigma_min > tol { sigma_max / sigma_min } else { f64::INFINITY };
    Ok(Spectrum { singular_values: sv, sigma_min, kappa: Kappa(kappa), rank })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    /// `κ(B)`.
    pub lhs: Kappa,
    /// `(p̄_F/p̲_F)·(π̄/π̲)·κ(H)`.
    pub rhs: Kappa,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletenessReport {
    pub h: Option<DMatrix<f64>>,
    pub b: DMatrix<f64>,
    pub h_spectrum: Option<Spectrum>,
    pub b_spectrum: Spectrum,
    /// Prediction levels (1-based) with no respondents; their rows are left out of `B`.
    pub dropped_rows: Vec<usize>,
    /// `rank(B) = M`.
    pub complete: bool,
    pub bound: Option<BoundCheck>,
}

/// `B[f][y] = P(Y=y | F=f, R=1)` from a respondent table, dropping empty rows.
pub fn respondent_conditional(table: &StratumTable) -> (DMatrix<f64>, Vec<usize>) {
    let alpha = table.alpha();
    let mut rows = Vec::new();
    let mut dropped = Vec::new();
    for f in 0..alpha.nrows() {
        let s = alpha.row(f).sum();
        if s > 0.0 {
            rows.push(alpha.row(f) / s);
        } else {
            dropped.push(f + 1);
        }
    }
    let b = if rows.is_empty() { DMatrix::zeros(0, table.m()) } else { DMatrix::from_rows(&rows) };
    (b, dropped)
}

/// `H[f][y] = P(F=f, Y=y)` from fully labeled `(f, y)` pairs.
pub fn joint_from_labeled(pairs: &[(u32, u32)], m: usize, m_f: usize) -> Result<DMatrix<f64>> {
    if pairs.is_empty() {
        return contract("no labeled records");
    }
    let mut h = DMatrix::zeros(m_f, m);
    for (i, &(f, y)) in pairs.iter().enumerate() {
        if f == 0 || f as usize > m_f || y == 0 || y as usize > m {
            return Err(crate::Error::InvalidRecord { index: i, reason: format!("(f, y) = ({f}, {y}) outside support") });
        }
        h[(f as usize - 1, y as usize - 1)] += 1.0;
    }
    Ok(h / pairs.len() as f64)
}

/// `(f, y)` pairs of the observed records, for building `H` from fully observed data.
pub fn labeled_pairs(records: &[UnitRecord]) -> Result<Vec<(u32, u32)>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| match (r.f, r.y) {
            (Some(f), Some(y)) => Ok((f, y)),
            _ => Err(crate::Error::InvalidRecord { index: i, reason: "record lacks f or y".into() }),
        })
        .collect()
}

/// Builds the completeness report for one stratum.
///
/// `h` is the joint `P(F, Y)` when a fully labeled calibration source exists. With
/// `pi_known` (simulation mode) the condition-number inequality is checked as well.
pub fn completeness_report(
    table: &StratumTable,
    h: Option<&DMatrix<f64>>,
    pi_known: Option<&[f64]>,
) -> Result<CompletenessReport> {
    let m = table.m();
    if let Some(h) = h {
        if h.shape() != (table.m_f(), m) {
            return contract(format!("H has shape {:?}, expected {:?}", h.shape(), (table.m_f(), m)));
        }
    }
    let (b, dropped_rows) = respondent_conditional(table);
    let b_spectrum = spectrum(&b)?;
    let h_spectrum = h.map(spectrum).transpose()?;
    let complete = b_spectrum.rank == m;

    let bound = match (pi_known, &h_spectrum) {
        (Some(pi), Some(hs)) if dropped_rows.is_empty() => {
            if pi.len() != m || pi.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
                return contract("known response probabilities must lie in (0, 1] with one per outcome level");
            }
            let p_f: Vec<f64> = (0..table.m_f()).map(|f| table.alpha().row(f).sum()).collect();
            let ratio = |v: &[f64]| {
                let (lo, hi) = crate::bounds::min_max(v);
                hi / lo
            };
            let rhs = ratio(&p_f) * ratio(pi) * hs.kappa.0;
            let lhs = b_spectrum.kappa.0;
            let holds = !lhs.is_finite() && !rhs.is_finite() || lhs <= rhs * (1.0 + 1e-8);
            Some(BoundCheck { lhs: Kappa(lhs), rhs: Kappa(rhs), holds })
        }
        _ => None,
    };
    Ok(CompletenessReport { h: h.cloned(), b, h_spectrum, b_spectrum, dropped_rows, complete, bound })
}

/// Hoffman-type constant `√m/σ⁺_min(A)` bounding `dist(w, {Aw = b}) ≤ K·‖Aw − b‖_∞`.
pub fn hoffman_constant(a: &DMatrix<f64>) -> Result<f64> {
    let sv = svd_values(a)?;
    let tol = rank_tol(a.shape(), sv.first().copied().unwrap_or(0.0));
    let smallest_positive = sv.iter().copied().filter(|&s| s > tol).fold(f64::INFINITY, f64::min);
    Ok((a.nrows() as f64).sqrt() / smallest_positive)
}
