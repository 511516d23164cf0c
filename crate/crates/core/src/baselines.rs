//! Point estimators used for comparison: complete-case, naive imputation,
//! prediction-powered, Heckman two-step, pattern mixture and the raw prediction mean.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tables::UnitRecord;

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;
const PROBIT_MAX_ITER: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Cca,
    NaiveImpute,
    Ppi,
    Heckman,
    PatternMixture,
    LlmRaw,
}

impl Baseline {
    pub const ALL: [Baseline; 6] = [
        Baseline::Cca,
        Baseline::NaiveImpute,
        Baseline::Ppi,
        Baseline::Heckman,
        Baseline::PatternMixture,
        Baseline::LlmRaw,
    ];

    pub fn run(self, records: &[UnitRecord]) -> Result<PointEstimate> {
        match self {
            Baseline::Cca => cca(records),
            Baseline::NaiveImpute => naive_impute(records),
            Baseline::Ppi => ppi(records),
            Baseline::Heckman => heckman(records),
            Baseline::PatternMixture => pattern_mixture(records),
            Baseline::LlmRaw => llm_raw(records),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub value: f64,
    pub stderr: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub method: Baseline,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl PointEstimate {
    fn new(value: f64, stderr: f64, method: Baseline) -> Self {
        let stderr = if stderr.is_finite() { stderr } else { 0.0 };
        Self {
            value,
            stderr,
            ci_lo: value - Z_95 * stderr,
            ci_hi: value + Z_95 * stderr,
            method,
            flags: Vec::new(),
        }
    }

    fn flag(mut self, f: impl Into<String>) -> Self {
        self.flags.push(f.into());
        self
    }
}

/// Mean and unbiased sample variance (0 for a single value).
fn mean_var(xs: impl IntoIterator<Item = f64>) -> (f64, f64, usize) {
    let xs: Vec<f64> = xs.into_iter().collect();
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, 0.0, 0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = if n > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    (mean, var, n)
}

fn observed(records: &[UnitRecord]) -> impl Iterator<Item = &UnitRecord> {
    records.iter().filter(|r| r.r)
}

fn y_of(r: &UnitRecord) -> f64 {
    r.y.expect("observed record carries y") as f64
}

/// Predictions for every record, or a contract error naming the first record without one.
fn predictions(records: &[UnitRecord]) -> Result<Vec<f64>> {
    if records.is_empty() {
        return Err(Error::DegenerateEstimator("no records".into()));
    }
    records
        .iter()
        .enumerate()
        .map(|(i, r)| r.f.map(|f| f as f64).ok_or_else(|| Error::Contract(format!("record {i} has no prediction"))))
        .collect()
}

fn require_observed(records: &[UnitRecord]) -> Result<()> {
    if observed(records).next().is_none() {
        return Err(Error::DegenerateEstimator("no observed outcomes".into()));
    }
    Ok(())
}

/// Mean of the observed outcomes.
pub fn cca(records: &[UnitRecord]) -> Result<PointEstimate> {
    require_observed(records)?;
    let (mean, var, n1) = mean_var(observed(records).map(y_of));
    Ok(PointEstimate::new(mean, (var / n1 as f64).sqrt(), Baseline::Cca))
}

/// Observed outcomes where available, predictions elsewhere.
pub fn naive_impute(records: &[UnitRecord]) -> Result<PointEstimate> {
    let f = predictions(records)?;
    let (mean, var, n) = mean_var(records.iter().zip(&f).map(|(r, &f)| if r.r { y_of(r) } else { f }));
    Ok(PointEstimate::new(mean, (var / n as f64).sqrt(), Baseline::NaiveImpute))
}

/// Prediction mean plus the mean residual among respondents.
///
/// The standard error adds the two sampling variances and ignores their covariance.
pub fn ppi(records: &[UnitRecord]) -> Result<PointEstimate> {
    let f = predictions(records)?;
    require_observed(records)?;
    let (f_mean, f_var, n) = mean_var(f.iter().copied());
    let (rect, rect_var, n1) =
        mean_var(records.iter().zip(&f).filter(|(r, _)| r.r).map(|(r, &f)| y_of(r) - f));
    let se = (f_var / n as f64 + rect_var / n1 as f64).sqrt();
    Ok(PointEstimate::new(f_mean + rect, se, Baseline::Ppi))
}

/// Observed outcomes, with missing ones replaced by the respondent mean in their prediction cell.
pub fn pattern_mixture(records: &[UnitRecord]) -> Result<PointEstimate> {
    let f = predictions(records)?;
    require_observed(records)?;
    let overall = observed(records).map(y_of).sum::<f64>() / observed(records).count() as f64;
    let mut cells: std::collections::BTreeMap<u64, (f64, usize)> = Default::default();
    for (r, &fv) in records.iter().zip(&f).filter(|(r, _)| r.r) {
        let e = cells.entry(fv as u64).or_default();
        e.0 += y_of(r);
        e.1 += 1;
    }
    let mut fallback = std::collections::BTreeSet::new();
    let completed = records.iter().zip(&f).map(|(r, &fv)| {
        if r.r {
            y_of(r)
        } else if let Some((s, c)) = cells.get(&(fv as u64)) {
            s / *c as f64
        } else {
            fallback.insert(fv as u64);
            overall
        }
    });
    let (mean, var, n) = mean_var(completed);
    let mut est = PointEstimate::new(mean, (var / n as f64).sqrt(), Baseline::PatternMixture);
    if !fallback.is_empty() {
        let cells: Vec<String> = fallback.iter().map(u64::to_string).collect();
        est = est.flag(format!("cells without respondents used the overall mean: f = {}", cells.join(",")));
    }
    Ok(est)
}

/// Mean of the predictions, ignoring outcomes altogether.
pub fn llm_raw(records: &[UnitRecord]) -> Result<PointEstimate> {
    let f = predictions(records)?;
    let (mean, var, n) = mean_var(f);
    Ok(PointEstimate::new(mean, (var / n as f64).sqrt(), Baseline::LlmRaw))
}

/// `ln erfc(x)` for `x ≥ 0`, from a Chebyshev-fitted exponent with relative error below 1.2e-7.
fn ln_erfc_nonneg(x: f64) -> f64 {
    let t = 1.0 / (1.0 + 0.5 * x);
    let poly = -1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98 + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77))))))));
    t.ln() - x * x + poly
}

/// `ln Φ(z)`, accurate in relative terms far into the lower tail.
pub fn ln_normal_cdf(z: f64) -> f64 {
    let x = z.abs() / std::f64::consts::SQRT_2;
    let ln_half_erfc = ln_erfc_nonneg(x) - std::f64::consts::LN_2;
    if z < 0.0 {
        ln_half_erfc
    } else {
        (-ln_half_erfc.exp()).ln_1p()
    }
}

/// Standard normal cdf.
pub fn normal_cdf(z: f64) -> f64 {
    ln_normal_cdf(z).exp()
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Inverse Mills ratio `φ(z)/Φ(z)`, computed in log space.
pub fn inverse_mills(z: f64) -> f64 {
    let ln_phi = -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln();
    (ln_phi - ln_normal_cdf(z)).exp()
}

/// Probit MLE of `R` on `(1, F)` by Newton–Raphson.
pub fn probit(f: &[f64], r: &[bool]) -> Result<Vector2<f64>> {
    let mut gamma = Vector2::zeros();
    for _ in 0..PROBIT_MAX_ITER {
        let (grad, info) = probit_score(f, r, &gamma);
        let step = info
            .lu()
            .solve(&grad)
            .ok_or_else(|| Error::EstimatorFailed("probit information matrix is singular".into()))?;
        gamma += step;
        if !gamma.iter().all(|g| g.is_finite()) || gamma.norm() > 1e6 {
            return Err(Error::EstimatorFailed("probit diverged (separation)".into()));
        }
        if step.norm() < 1e-10 * (1.0 + gamma.norm()) {
            return Ok(gamma);
        }
    }
    Err(Error::EstimatorFailed(format!("probit did not converge in {PROBIT_MAX_ITER} iterations")))
}

/// Score and expected-information proxy of the probit log-likelihood at `gamma`.
fn probit_score(f: &[f64], r: &[bool], gamma: &Vector2<f64>) -> (Vector2<f64>, Matrix2<f64>) {
    let mut grad = Vector2::zeros();
    let mut info = Matrix2::zeros();
    for (&fi, &ri) in f.iter().zip(r) {
        let x = Vector2::new(1.0, fi);
        let q = if ri { 1.0 } else { -1.0 };
        let z = q * x.dot(gamma);
        let lam = inverse_mills(z);
        grad += x * (q * lam);
        info += x * x.transpose() * (lam * (lam + z));
    }
    (grad, info)
}

/// Ordinary least squares; returns coefficients and their estimated covariance.
fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (n, k) = x.shape();
    let xtx = x.transpose() * x;
    let inv = xtx
        .try_inverse()
        .ok_or_else(|| Error::EstimatorFailed("outcome regression design is singular".into()))?;
    let beta = &inv * x.transpose() * y;
    let resid = y - x * &beta;
    let dof = n.saturating_sub(k).max(1) as f64;
    let sigma2 = resid.norm_squared() / dof;
    Ok((beta, inv * sigma2))
}

/// Heckman two-step with the prediction as the only regressor in both stages.
///
/// Stage 2 regresses observed `Y` on `(1, F, λ(ẑ))`; the estimate averages
/// `b₀ + b₁F` over all units. Without any missing outcome the selection stage is
/// undefined and plain OLS on `(1, F)` is used instead (flagged). The standard error
/// adds the stage-1 uncertainty through a numerical derivative in the probit
/// coefficients; when selection barely depends on `F`, `λ` is almost linear in `F`
/// and that term dominates.
pub fn heckman(records: &[UnitRecord]) -> Result<PointEstimate> {
    let f = predictions(records)?;
    require_observed(records)?;
    let r: Vec<bool> = records.iter().map(|u| u.r).collect();
    let obs: Vec<usize> = (0..records.len()).filter(|&i| r[i]).collect();
    let y = DVector::from_iterator(obs.len(), obs.iter().map(|&i| y_of(&records[i])));
    let n = records.len() as f64;
    let f_bar = f.iter().sum::<f64>() / n;
    let g = Vector2::new(1.0, f_bar);
    let predict = |beta: &DVector<f64>| beta[0] + beta[1] * f_bar;
    let stage2_var = |cov: &DMatrix<f64>| {
        let cov2 = Matrix2::new(cov[(0, 0)], cov[(0, 1)], cov[(1, 0)], cov[(1, 1)]);
        g.dot(&(cov2 * g)).max(0.0)
    };

    if obs.len() == records.len() {
        let x = DMatrix::from_fn(obs.len(), 2, |i, j| if j == 0 { 1.0 } else { f[obs[i]] });
        let (b, c) = ols(&x, &y)?;
        return Ok(PointEstimate::new(predict(&b), stage2_var(&c).sqrt(), Baseline::Heckman)
            .flag("no missing outcomes: selection stage skipped, plain OLS used"));
    }

    let gamma = probit(&f, &r)?;
    let stage2 = |gamma: &Vector2<f64>| {
        let x = DMatrix::from_fn(obs.len(), 3, |i, j| {
            let fi = f[obs[i]];
            match j {
                0 => 1.0,
                1 => fi,
                _ => inverse_mills(gamma[0] + gamma[1] * fi),
            }
        });
        ols(&x, &y)
    };
    let (beta, cov) = stage2(&gamma)?;
    let value = predict(&beta);

    let (_, info) = probit_score(&f, &r, &gamma);
    let mut var = stage2_var(&cov);
    if let Some(v_gamma) = info.try_inverse() {
        let mut jac = Vector2::zeros();
        for k in 0..2 {
            let h = 1e-5 * (1.0 + gamma[k].abs());
            let mut up = gamma;
            let mut down = gamma;
            up[k] += h;
            down[k] -= h;
            jac[k] = (predict(&stage2(&up)?.0) - predict(&stage2(&down)?.0)) / (2.0 * h);
        }
        var += jac.dot(&(v_gamma * jac)).max(0.0);
    }
    Ok(PointEstimate::new(value, var.sqrt(), Baseline::Heckman))
}
