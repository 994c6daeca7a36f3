//! Parametric copula combiner: fitted marginals feed a fitted copula, and
//! the copula CDF value is the anomaly level.
//!
//! Bivariate families: Frank, Clayton, Gumbel, Plackett. Any dimension:
//! Independent and Normal. Frank/Clayton/Plackett are fitted by
//! golden-section maximum likelihood on their analytic densities, Gumbel by
//! Kendall-tau inversion, Normal by mapping pairwise taus through
//! `sin(pi tau / 2)` (projected to the nearest positive-definite
//! correlation when sampling noise pushes it outside).
//!
//! CDF evaluations run in `f64` internally; the formulas below use
//! `exp_m1` / `ln_1p` and log-domain rewrites so that parameters at the
//! edge of their fitting intervals stay accurate.

use serde::{Deserialize, Serialize};

use crate::combine::{check_vector_len, DetectorFamily};
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::scalar::Real;
use crate::score_data::ScoreMatrix;
use crate::special;

/// Pseudo-observations are clamped into `[EPS, 1 - EPS]` before any density
/// evaluation.
pub const PSEUDO_EPS: f64 = 1e-9;

/// Golden-section tolerance for the likelihood maximizers.
pub const GOLDEN_TOL: f64 = 1e-8;

// ---------------------------------------------------------------------------
// Marginals

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalFamily {
    #[default]
    Uniform,
    Gaussian,
    Beta,
}

impl MarginalFamily {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(MarginalFamily::Uniform),
            "gaussian" => Ok(MarginalFamily::Gaussian),
            "beta" => Ok(MarginalFamily::Beta),
            other => Err(Error::invalid(format!("unknown marginal family {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MarginalFamily::Uniform => "uniform",
            MarginalFamily::Gaussian => "gaussian",
            MarginalFamily::Beta => "beta",
        }
    }
}

/// A fitted one-dimensional marginal distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MarginalFit<T> {
    /// Support `[lo, hi]`, already widened so every fitting sample is
    /// interior.
    Uniform { lo: T, hi: T },
    Gaussian { mean: T, sd: T },
    /// Shape parameters on the rescaled support `[lo, hi]`.
    Beta { alpha: f64, beta: f64, lo: T, hi: T },
}

/// Fits a marginal to one score column. Uniform uses the (widened) sample
/// range, Gaussian maximum likelihood, Beta the method of moments on
/// min-max rescaled samples.
pub fn fit_marginal<T: Real>(family: MarginalFamily, data: &[T]) -> Result<MarginalFit<T>> {
    if data.len() < 2 {
        return Err(Error::FitFailed("marginal fit needs at least 2 samples".into()));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("marginal fit input must be finite"));
    }
    let widened_range = || -> Result<(T, T)> {
        let lo = data.iter().copied().fold(T::infinity(), T::min);
        let hi = data.iter().copied().fold(T::neg_infinity(), T::max);
        if hi <= lo {
            return Err(Error::FitFailed(
                "constant column: range fit has zero spread".into(),
            ));
        }
        let pad = (hi - lo) * T::from_f64_c(1e-6);
        Ok((lo - pad, hi + pad))
    };
    match family {
        MarginalFamily::Uniform => {
            let (lo, hi) = widened_range()?;
            Ok(MarginalFit::Uniform { lo, hi })
        }
        MarginalFamily::Gaussian => {
            let n = T::from_usize(data.len()).unwrap();
            let mean = data.iter().copied().sum::<T>() / n;
            let var = data
                .iter()
                .map(|&x| (x - mean) * (x - mean))
                .sum::<T>()
                / n;
            if var <= T::zero() {
                return Err(Error::FitFailed(
                    "constant column: gaussian fit has zero variance".into(),
                ));
            }
            Ok(MarginalFit::Gaussian {
                mean,
                sd: var.sqrt(),
            })
        }
        MarginalFamily::Beta => {
            let (lo, hi) = widened_range()?;
            let span = (hi - lo).as_f64();
            let z: Vec<f64> = data.iter().map(|&x| (x - lo).as_f64() / span).collect();
            let n = z.len() as f64;
            let mean = z.iter().sum::<f64>() / n;
            let var = z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            if var <= 0.0 || var >= mean * (1.0 - mean) {
                return Err(Error::FitFailed(
                    "beta moment fit outside the feasible region".into(),
                ));
            }
            let common = mean * (1.0 - mean) / var - 1.0;
            let alpha = mean * common;
            let beta = (1.0 - mean) * common;
            if alpha <= 0.0 || beta <= 0.0 {
                return Err(Error::FitFailed("beta moment fit gave nonpositive shapes".into()));
            }
            Ok(MarginalFit::Beta { alpha, beta, lo, hi })
        }
    }
}

/// CDF of a fitted marginal, clamped to `[0, 1]` and nondecreasing in `x`.
pub fn marginal_cdf<T: Real>(fit: &MarginalFit<T>, x: T) -> T {
    match fit {
        MarginalFit::Uniform { lo, hi } => ((x - *lo) / (*hi - *lo)).max(T::zero()).min(T::one()),
        MarginalFit::Gaussian { mean, sd } => {
            T::from_f64_c(special::norm_cdf(((x - *mean) / *sd).as_f64()))
        }
        MarginalFit::Beta { alpha, beta, lo, hi } => {
            let z = ((x - *lo) / (*hi - *lo)).as_f64().clamp(0.0, 1.0);
            T::from_f64_c(special::reg_inc_beta(*alpha, *beta, z))
        }
    }
}

// ---------------------------------------------------------------------------
// Rank correlations

fn check_pair<T: Real>(x: &[T], y: &[T]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::invalid("rank correlation needs equally long inputs"));
    }
    if x.len() < 2 {
        return Err(Error::invalid("rank correlation needs at least 2 samples"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("rank correlation input must be finite"));
    }
    Ok(())
}

/// Kendall's tau with the all-pairs denominator `n(n-1)/2`; pairs tied in
/// either coordinate contribute zero.
pub fn kendall_tau<T: Real>(x: &[T], y: &[T]) -> Result<T> {
    check_pair(x, y)?;
    let n = x.len();
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = x[i].partial_cmp(&x[j]).unwrap();
            let dy = y[i].partial_cmp(&y[j]).unwrap();
            if dx == std::cmp::Ordering::Equal || dy == std::cmp::Ordering::Equal {
                continue;
            }
            if dx == dy {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    Ok(T::from_f64_c((concordant - discordant) as f64 / pairs))
}

/// Midranks (average rank over tied runs), 1-based.
fn midranks<T: Real>(x: &[T]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap());
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && x[order[j]] == x[order[i]] {
            j += 1;
        }
        let midrank = (i + j + 1) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = midrank;
        }
        i = j;
    }
    ranks
}

/// Spearman's rho: Pearson correlation of midranks.
pub fn spearman_rho<T: Real>(x: &[T], y: &[T]) -> Result<T> {
    check_pair(x, y)?;
    let rx = midranks(x);
    let ry = midranks(y);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for i in 0..rx.len() {
        let dx = rx[i] - mx;
        let dy = ry[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::invalid("spearman correlation undefined for constant input"));
    }
    Ok(T::from_f64_c(sxy / (sxx * syy).sqrt()))
}

// ---------------------------------------------------------------------------
// Copula families

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CopulaFamily {
    Independent,
    Frank,
    Clayton,
    Gumbel,
    Plackett,
    Normal,
}

impl CopulaFamily {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "independent" => Ok(CopulaFamily::Independent),
            "frank" => Ok(CopulaFamily::Frank),
            "clayton" => Ok(CopulaFamily::Clayton),
            "gumbel" => Ok(CopulaFamily::Gumbel),
            "plackett" => Ok(CopulaFamily::Plackett),
            "normal" => Ok(CopulaFamily::Normal),
            other => Err(Error::invalid(format!("unknown copula family {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CopulaFamily::Independent => "independent",
            CopulaFamily::Frank => "frank",
            CopulaFamily::Clayton => "clayton",
            CopulaFamily::Gumbel => "gumbel",
            CopulaFamily::Plackett => "plackett",
            CopulaFamily::Normal => "normal",
        }
    }
}

/// A fitted copula. Parameters live in `f64` regardless of the crate
/// scalar; see the module documentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CopulaFit {
    Independent { dim: usize },
    Frank { theta: f64 },
    Clayton { theta: f64 },
    Gumbel { theta: f64 },
    Plackett { theta: f64 },
    Normal { corr: Vec<Vec<f64>> },
}

impl CopulaFit {
    pub fn dim(&self) -> usize {
        match self {
            CopulaFit::Independent { dim } => *dim,
            CopulaFit::Normal { corr } => corr.len(),
            _ => 2,
        }
    }

    pub fn family(&self) -> CopulaFamily {
        match self {
            CopulaFit::Independent { .. } => CopulaFamily::Independent,
            CopulaFit::Frank { .. } => CopulaFamily::Frank,
            CopulaFit::Clayton { .. } => CopulaFamily::Clayton,
            CopulaFit::Gumbel { .. } => CopulaFamily::Gumbel,
            CopulaFit::Plackett { .. } => CopulaFamily::Plackett,
            CopulaFit::Normal { .. } => CopulaFamily::Normal,
        }
    }
}

/// The Normal-copula correlation implied by a Kendall tau.
pub fn normal_correlation_from_tau(tau: f64) -> f64 {
    (std::f64::consts::FRAC_PI_2 * tau).sin()
}

/// Analytic bivariate log densities. Frank, Clayton and Plackett back the
/// likelihood fits; Gumbel is used by grid-search oracles (its fit goes
/// through tau inversion instead).
pub fn copula_log_density(family: CopulaFamily, theta: f64, u: f64, v: f64) -> f64 {
    let u = u.clamp(PSEUDO_EPS, 1.0 - PSEUDO_EPS);
    let v = v.clamp(PSEUDO_EPS, 1.0 - PSEUDO_EPS);
    match family {
        CopulaFamily::Frank => {
            // theta (1 - e^{-theta}) e^{-theta(u+v)} / D^2 with
            // D = (1 - e^{-theta}) - (1 - e^{-theta u})(1 - e^{-theta v}).
            let em = -(-theta).exp_m1();
            let eu = -(-theta * u).exp_m1();
            let ev = -(-theta * v).exp_m1();
            let d = em - eu * ev;
            (theta * em).ln() - theta * (u + v) - 2.0 * d.abs().ln()
        }
        CopulaFamily::Clayton => {
            // (1 + theta) (uv)^{-theta-1} w^{-1/theta - 2},
            // w = u^{-theta} + v^{-theta} - 1 evaluated in log space.
            let ln_w = clayton_ln_w(theta, u, v);
            (1.0 + theta).ln() - (theta + 1.0) * (u.ln() + v.ln()) - (1.0 / theta + 2.0) * ln_w
        }
        CopulaFamily::Plackett => {
            let s = u + v;
            let a = 1.0 + (theta - 1.0) * s;
            let disc = a * a - 4.0 * u * v * theta * (theta - 1.0);
            theta.ln() + (1.0 + (theta - 1.0) * (s - 2.0 * u * v)).ln() - 1.5 * disc.ln()
        }
        CopulaFamily::Gumbel => {
            // c = C(u,v) (ab)^{theta-1} w^{1-2 theta} (w + theta - 1)/(uv)
            // with a = -ln u, b = -ln v, w = (a^theta + b^theta)^{1/theta}.
            let a = -u.ln();
            let b = -v.ln();
            let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
            let ln_w = hi.ln() + (theta * (lo.ln() - hi.ln())).exp().ln_1p() / theta;
            let w = ln_w.exp();
            -w + (theta - 1.0) * (a.ln() + b.ln()) + (a + b) + (1.0 - 2.0 * theta) * ln_w
                + (w + theta - 1.0).ln()
        }
        other => panic!("no analytic density used for {other:?}"),
    }
}

/// `ln(u^{-theta} + v^{-theta} - 1)` without overflow.
fn clayton_ln_w(theta: f64, u: f64, v: f64) -> f64 {
    let a = -theta * u.ln();
    let b = -theta * v.ln();
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + ((lo - hi).exp() - (-hi).exp()).ln_1p()
}

/// Mean log-likelihood of a bivariate copula density over pseudo
/// observations.
pub fn copula_log_likelihood<T: Real>(family: CopulaFamily, theta: f64, pseudo: &Mat<T>) -> f64 {
    pseudo
        .iter_rows()
        .map(|row| copula_log_density(family, theta, row[0].as_f64(), row[1].as_f64()))
        .sum::<f64>()
        / pseudo.rows() as f64
}

/// Golden-section maximizer of a unimodal function on `[lo, hi]`.
pub fn golden_section_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut a = lo;
    let mut b = hi;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

fn validate_pseudo<T: Real>(pseudo: &Mat<T>) -> Result<()> {
    if pseudo.rows() < 2 {
        return Err(Error::FitFailed("copula fit needs at least 2 rows".into()));
    }
    for row in pseudo.iter_rows() {
        for &u in row {
            if !(u.is_finite() && u >= T::zero() && u <= T::one()) {
                return Err(Error::invalid(
                    "pseudo observations must lie in [0, 1]",
                ));
            }
        }
    }
    Ok(())
}

/// Fits `family` to pseudo observations (rows in `[0, 1]^d`, clamped to the
/// open cube internally).
pub fn fit_copula<T: Real>(pseudo: &Mat<T>, family: CopulaFamily) -> Result<CopulaFit> {
    validate_pseudo(pseudo)?;
    let d = pseudo.cols();
    match family {
        CopulaFamily::Independent => Ok(CopulaFit::Independent { dim: d }),
        CopulaFamily::Normal => {
            if d < 2 {
                return Err(Error::invalid("normal copula needs at least 2 columns"));
            }
            let cols: Vec<Vec<T>> = (0..d)
                .map(|c| pseudo.iter_rows().map(|r| r[c]).collect())
                .collect();
            let mut corr = vec![vec![0.0f64; d]; d];
            for i in 0..d {
                corr[i][i] = 1.0;
                for j in (i + 1)..d {
                    let tau = kendall_tau(&cols[i], &cols[j])?.as_f64();
                    let r = normal_correlation_from_tau(tau);
                    corr[i][j] = r;
                    corr[j][i] = r;
                }
            }
            let corr = nearest_positive_definite_correlation(corr);
            Ok(CopulaFit::Normal { corr })
        }
        CopulaFamily::Frank | CopulaFamily::Clayton | CopulaFamily::Gumbel
        | CopulaFamily::Plackett => {
            if d != 2 {
                return Err(Error::invalid(format!(
                    "{} copula is bivariate, got {d} columns",
                    family.name()
                )));
            }
            match family {
                CopulaFamily::Gumbel => {
                    let x: Vec<T> = pseudo.iter_rows().map(|r| r[0]).collect();
                    let y: Vec<T> = pseudo.iter_rows().map(|r| r[1]).collect();
                    let tau = kendall_tau(&x, &y)?.as_f64();
                    if tau >= 1.0 - 1e-12 {
                        return Err(Error::FitFailed(
                            "gumbel inversion diverges at tau = 1".into(),
                        ));
                    }
                    Ok(CopulaFit::Gumbel {
                        theta: (1.0 / (1.0 - tau)).max(1.0),
                    })
                }
                CopulaFamily::Frank => {
                    let ll = |theta: f64| copula_log_likelihood(family, theta, pseudo);
                    let neg = golden_section_max(ll, -50.0, -1e-6, GOLDEN_TOL);
                    let pos = golden_section_max(ll, 1e-6, 50.0, GOLDEN_TOL);
                    let theta = if neg.1 > pos.1 { neg.0 } else { pos.0 };
                    Ok(CopulaFit::Frank { theta })
                }
                CopulaFamily::Clayton => {
                    let ll = |theta: f64| copula_log_likelihood(family, theta, pseudo);
                    let (theta, _) = golden_section_max(ll, 1e-6, 50.0, GOLDEN_TOL);
                    Ok(CopulaFit::Clayton { theta })
                }
                CopulaFamily::Plackett => {
                    let ll = |theta: f64| copula_log_likelihood(family, theta, pseudo);
                    let (mut theta, _) = golden_section_max(ll, 1e-6, 100.0, GOLDEN_TOL);
                    // The family excludes exact independence at theta = 1.
                    if (theta - 1.0).abs() < 1e-9 {
                        theta = 1.0 + 1e-9;
                    }
                    Ok(CopulaFit::Plackett { theta })
                }
                _ => unreachable!(),
            }
        }
    }
}

/// Copula CDF at `u` in `[0, 1]^d`. Boundary coordinates are handled
/// exactly: any zero gives 0, ones drop out.
pub fn copula_cdf<T: Real>(fit: &CopulaFit, u: &[T]) -> Result<T> {
    if u.len() != fit.dim() {
        return Err(Error::invalid(format!(
            "copula expects {} coordinates, got {}",
            fit.dim(),
            u.len()
        )));
    }
    let mut uu = Vec::with_capacity(u.len());
    for &c in u {
        if !(c.is_finite() && c >= T::zero() && c <= T::one()) {
            return Err(Error::invalid("copula argument must lie in [0, 1]"));
        }
        uu.push(c.as_f64());
    }
    Ok(T::from_f64_c(copula_cdf_f64(fit, &uu)))
}

fn copula_cdf_f64(fit: &CopulaFit, u: &[f64]) -> f64 {
    if u.contains(&0.0) {
        return 0.0;
    }
    match fit {
        CopulaFit::Independent { .. } => u.iter().product(),
        CopulaFit::Frank { theta } => bivariate_margin(u, |u, v| {
            let th = *theta;
            -((-th * u).exp_m1() * (-th * v).exp_m1() / (-th).exp_m1()).ln_1p() / th
        }),
        CopulaFit::Clayton { theta } => {
            bivariate_margin(u, |u, v| (-clayton_ln_w(*theta, u, v) / theta).exp())
        }
        CopulaFit::Gumbel { theta } => bivariate_margin(u, |u, v| {
            // exp(-(a^theta + b^theta)^{1/theta}) with a = -ln u, b = -ln v,
            // rewritten around the larger term to avoid overflow.
            let a = -u.ln();
            let b = -v.ln();
            let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
            let ratio_pow = (*theta * (lo.ln() - hi.ln())).exp();
            let s = hi * (ratio_pow.ln_1p() / theta).exp();
            (-s).exp()
        }),
        CopulaFit::Plackett { theta } => bivariate_margin(u, |u, v| {
            // Conjugate form of the closed expression: stable through
            // theta -> 1.
            let th = *theta;
            let a = 1.0 + (th - 1.0) * (u + v);
            let b = 4.0 * u * v * th * (th - 1.0);
            2.0 * u * v * th / (a + (a * a - b).max(0.0).sqrt())
        }),
        CopulaFit::Normal { corr } => {
            // Coordinates at 1 marginalize out exactly: keep the minor.
            let active: Vec<usize> = (0..u.len()).filter(|&i| u[i] < 1.0).collect();
            match active.len() {
                0 => 1.0,
                1 => u[active[0]],
                2 => {
                    let (i, j) = (active[0], active[1]);
                    special::bvn_cdf(
                        special::norm_quantile(u[i]),
                        special::norm_quantile(u[j]),
                        corr[i][j].clamp(-1.0, 1.0),
                    )
                }
                k => {
                    let sub: Vec<Vec<f64>> = active
                        .iter()
                        .map(|&i| active.iter().map(|&j| corr[i][j]).collect())
                        .collect();
                    let chol = cholesky(&sub)
                        .unwrap_or_else(|| cholesky_after_projection(sub));
                    let upper: Vec<f64> = active
                        .iter()
                        .map(|&i| special::norm_quantile(u[i]))
                        .collect();
                    let _ = k;
                    special::mvn_cdf_qmc(&upper, &chol, 8192)
                }
            }
        }
    }
}

/// Applies a bivariate formula after exact margin reduction (a coordinate
/// at 1 returns the other coordinate).
fn bivariate_margin(u: &[f64], f: impl Fn(f64, f64) -> f64) -> f64 {
    let (a, b) = (u[0], u[1]);
    if a == 1.0 {
        return b;
    }
    if b == 1.0 {
        return a;
    }
    f(a, b).clamp(0.0, 1.0)
}

// ---------------------------------------------------------------------------
// Positive-definite projection for the Normal copula

pub(crate) fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= 1e-12 {
                    return None;
                }
                l[i][i] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    Some(l)
}

fn cholesky_after_projection(a: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let projected = nearest_positive_definite_correlation(a);
    cholesky(&projected).expect("projection produces a positive-definite matrix")
}

/// Eigenvalue clipping: symmetric eigendecomposition (cyclic Jacobi),
/// eigenvalues floored at 1e-8, reassembled and rescaled to unit diagonal.
/// Returns the input unchanged when it is already positive definite.
pub fn nearest_positive_definite_correlation(a: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    if cholesky(&a).is_some() {
        return a;
    }
    let n = a.len();
    let (mut eigvals, eigvecs) = jacobi_eigen(&a);
    for v in &mut eigvals {
        *v = v.max(1e-8);
    }
    let mut s = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += eigvecs[i][k] * eigvals[k] * eigvecs[j][k];
            }
            s[i][j] = acc;
        }
    }
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            out[i][j] = s[i][j] / (s[i][i] * s[j][j]).sqrt();
        }
    }
    for (i, row) in out.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    out
}

/// Cyclic Jacobi eigendecomposition for small symmetric matrices.
fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _ in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[i][j] * m[i][j];
            }
        }
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[p][q].abs() < 1e-18 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| m[i][i]).collect(), v)
}

// ---------------------------------------------------------------------------
// The combiner

/// Copula combiner: anomaly level is `C(F_1(x_1), ..., F_d(x_d))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopulaModel<T> {
    detector_names: Vec<String>,
    marginals: Vec<MarginalFit<T>>,
    copula: CopulaFit,
}

impl<T: Real> CopulaModel<T> {
    pub fn marginals(&self) -> &[MarginalFit<T>] {
        &self.marginals
    }

    pub fn copula(&self) -> &CopulaFit {
        &self.copula
    }

    pub fn copula_level(&self, x: &[T]) -> Result<T> {
        check_vector_len(&self.detector_names, x)?;
        let u: Vec<T> = self
            .marginals
            .iter()
            .zip(x)
            .map(|(fit, &xi)| marginal_cdf(fit, xi))
            .collect();
        copula_cdf(&self.copula, &u)
    }
}

impl<T: Real> DetectorFamily<T> for CopulaModel<T> {
    fn detector_names(&self) -> &[String] {
        &self.detector_names
    }

    fn member_at(&self, x: &[T], t: T) -> Result<bool> {
        if !(t >= T::zero() && t <= T::one()) {
            return Err(Error::invalid(format!("family parameter must be in [0, 1], got {t}")));
        }
        Ok(self.copula_level(x)? > t)
    }

    fn level(&self, x: &[T]) -> Result<Option<T>> {
        self.copula_level(x).map(Some)
    }
}

/// Fits marginals per column, maps calibration scores to clamped pseudo
/// observations, and fits the copula. With no explicit family choice, two
/// columns get Frank and any other dimension the Independent copula.
pub fn copula_combiner_fit<T: Real>(
    cal: &ScoreMatrix<T>,
    marginal: MarginalFamily,
    family: Option<CopulaFamily>,
) -> Result<CopulaModel<T>> {
    let d = cal.n_cols();
    let family = family.unwrap_or(if d == 2 {
        CopulaFamily::Frank
    } else {
        CopulaFamily::Independent
    });
    let marginals: Vec<MarginalFit<T>> = (0..d)
        .map(|c| fit_marginal(marginal, &cal.column(c)))
        .collect::<Result<_>>()?;
    let lo = T::from_f64_c(PSEUDO_EPS);
    let hi = T::from_f64_c(1.0 - PSEUDO_EPS);
    let mut pseudo = Vec::with_capacity(cal.n_rows() * d);
    for r in 0..cal.n_rows() {
        for (c, fit) in marginals.iter().enumerate() {
            let u = marginal_cdf(fit, cal.values().get(r, c));
            pseudo.push(u.max(lo).min(hi));
        }
    }
    let pseudo = Mat::from_vec(cal.n_rows(), d, pseudo);
    let copula = fit_copula(&pseudo, family)?;
    Ok(CopulaModel {
        detector_names: cal.detector_names().to_vec(),
        marginals,
        copula,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_marginal_widens_the_sample_range() {
        let fit = fit_marginal(MarginalFamily::Uniform, &[0.0f64, 1.0]).unwrap();
        match fit {
            MarginalFit::Uniform { lo, hi } => {
                assert!(lo < 0.0 && lo > -1e-5);
                assert!(hi > 1.0 && hi < 1.0 + 1e-5);
            }
            _ => panic!(),
        }
        assert!(fit_marginal(MarginalFamily::Uniform, &[2.0f64, 2.0]).is_err());
    }

    #[test]
    fn gaussian_marginal_is_maximum_likelihood() {
        let fit = fit_marginal(MarginalFamily::Gaussian, &[1.0f64, 3.0]).unwrap();
        match fit {
            MarginalFit::Gaussian { mean, sd } => {
                assert_eq!(mean, 2.0);
                assert_eq!(sd, 1.0); // population variance: ((1)^2+(1)^2)/2
            }
            _ => panic!(),
        }
    }

    #[test]
    fn beta_marginal_moment_fit_recovers_symmetric_shapes() {
        // Rescaled samples symmetric around 0.5 give alpha = beta.
        let data = [0.1f64, 0.3, 0.5, 0.7, 0.9];
        let fit = fit_marginal(MarginalFamily::Beta, &data).unwrap();
        match fit {
            MarginalFit::Beta { alpha, beta, .. } => {
                assert!((alpha - beta).abs() < 1e-9, "{alpha} vs {beta}");
                assert!(alpha > 0.0);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn marginal_cdfs_are_monotone_and_clamped() {
        let data: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        for family in [
            MarginalFamily::Uniform,
            MarginalFamily::Gaussian,
            MarginalFamily::Beta,
        ] {
            let fit = fit_marginal(family, &data).unwrap();
            let mut prev = -1.0;
            for i in -20..=20 {
                let x = i as f64 / 10.0;
                let u = marginal_cdf(&fit, x);
                assert!((0.0..=1.0).contains(&u), "{family:?} cdf {u}");
                assert!(u >= prev, "{family:?} not monotone at {x}");
                prev = u;
            }
        }
    }

    #[test]
    fn kendall_matches_hand_counts() {
        let tau = kendall_tau(&[1.0f64, 2.0, 3.0], &[2.0, 1.0, 3.0]).unwrap();
        assert!((tau - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(kendall_tau(&[1.0f64, 2.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(kendall_tau(&[1.0f64, 2.0], &[2.0, 1.0]).unwrap(), -1.0);
        // Ties contribute zero: only the two tie-free pairs count, both
        // concordant, over 3 possible pairs.
        let tau = kendall_tau(&[1.0f64, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((tau - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn spearman_matches_the_rank_formula() {
        let rho = spearman_rho(&[1.0f64, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
        assert!((rho - 0.5).abs() < 1e-15);
        assert!(spearman_rho(&[1.0f64, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn gumbel_inversion_hits_theta_two_at_tau_half() {
        // Construct 4 points with exactly tau = 0.5: 5 concordant,
        // 1 discordant, 6 pairs -> (5-1)/6 = 2/3. Need tau = 0.5 ->
        // (c - d)/6 = 3/6: c = 4.5 impossible; use 8 points instead.
        // Simpler: feed ranks through a grid whose tau is exactly 0.5.
        let x = [1.0f64, 2.0, 3.0, 4.0];
        let y = [2.0f64, 1.0, 4.0, 3.0]; // discordant pairs: (1,2), (3,4)
        let tau = kendall_tau(&x, &y).unwrap(); // (4 - 2)/6 = 1/3
        assert!((tau - 1.0 / 3.0).abs() < 1e-15);
        let pseudo = Mat::from_vec(
            4,
            2,
            vec![0.2, 0.4, 0.4, 0.2, 0.6, 0.8, 0.8, 0.6],
        );
        match fit_copula(&pseudo, CopulaFamily::Gumbel).unwrap() {
            CopulaFit::Gumbel { theta } => {
                assert!((theta - 1.5).abs() < 1e-12); // 1/(1 - 1/3)
            }
            _ => panic!(),
        }
    }

    #[test]
    fn normal_correlation_map_hits_reference_points() {
        assert_eq!(normal_correlation_from_tau(0.0), 0.0);
        assert!((normal_correlation_from_tau(0.5) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(normal_correlation_from_tau(1.0), 1.0);
    }

    #[test]
    fn golden_section_maximizes_a_parabola() {
        let (x, fx) = golden_section_max(|x| -(x - 1.7) * (x - 1.7), -10.0, 10.0, 1e-10);
        assert!((x - 1.7).abs() < 1e-8);
        assert!(fx <= 0.0);
    }

    fn grid(n: usize) -> Vec<f64> {
        (0..=n).map(|i| i as f64 / n as f64).collect()
    }

    #[test]
    fn cdf_margins_are_exact_for_every_family() {
        let fits = [
            CopulaFit::Independent { dim: 2 },
            CopulaFit::Frank { theta: 3.5 },
            CopulaFit::Frank { theta: -12.0 },
            CopulaFit::Clayton { theta: 2.0 },
            CopulaFit::Gumbel { theta: 4.0 },
            CopulaFit::Plackett { theta: 7.0 },
            CopulaFit::Normal {
                corr: vec![vec![1.0, 0.6], vec![0.6, 1.0]],
            },
        ];
        for fit in &fits {
            for &u in &grid(20) {
                let c1 = copula_cdf(fit, &[u, 1.0]).unwrap();
                let c2 = copula_cdf(fit, &[1.0, u]).unwrap();
                assert!((c1 - u).abs() < 1e-9, "{fit:?} C({u},1) = {c1}");
                assert!((c2 - u).abs() < 1e-9, "{fit:?} C(1,{u}) = {c2}");
                assert_eq!(copula_cdf(fit, &[0.0, u]).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn cdf_respects_frechet_bounds_and_rectangles() {
        let fits = [
            CopulaFit::Frank { theta: 8.0 },
            CopulaFit::Clayton { theta: 0.7 },
            CopulaFit::Gumbel { theta: 2.5 },
            CopulaFit::Plackett { theta: 0.3 },
            CopulaFit::Normal {
                corr: vec![vec![1.0, -0.8], vec![-0.8, 1.0]],
            },
        ];
        let g = grid(12);
        for fit in &fits {
            for &u in &g {
                for &v in &g {
                    let c = copula_cdf(fit, &[u, v]).unwrap();
                    let lower = (u + v - 1.0).max(0.0);
                    assert!(c >= lower - 1e-9, "{fit:?} lower bound at ({u},{v})");
                    assert!(c <= u.min(v) + 1e-9, "{fit:?} upper bound at ({u},{v})");
                }
            }
            for ui in 0..g.len() - 1 {
                for vi in 0..g.len() - 1 {
                    let (u1, u2) = (g[ui], g[ui + 1]);
                    let (v1, v2) = (g[vi], g[vi + 1]);
                    let mass = copula_cdf(fit, &[u2, v2]).unwrap()
                        - copula_cdf(fit, &[u1, v2]).unwrap()
                        - copula_cdf(fit, &[u2, v1]).unwrap()
                        + copula_cdf(fit, &[u1, v1]).unwrap();
                    assert!(mass >= -1e-9, "{fit:?} rectangle mass {mass}");
                }
            }
        }
    }

    #[test]
    fn frank_approaches_independence_for_small_theta() {
        let fit = CopulaFit::Frank { theta: 1e-6 };
        for &u in &grid(10) {
            for &v in &grid(10) {
                let c = copula_cdf(&fit, &[u, v]).unwrap();
                assert!((c - u * v).abs() < 1e-5, "C({u},{v}) = {c}");
            }
        }
    }

    #[test]
    fn plackett_is_stable_through_theta_one() {
        for theta in [1.0 - 1e-9, 1.0 + 1e-9, 1.0 - 1e-4, 1.0 + 1e-4] {
            let fit = CopulaFit::Plackett { theta };
            for &(u, v) in &[(0.3f64, 0.7), (0.5, 0.5), (0.9, 0.2)] {
                let c = copula_cdf(&fit, &[u, v]).unwrap();
                assert!((c - u * v).abs() < 1e-3, "theta {theta}: C({u},{v}) = {c}");
            }
        }
    }

    /// Central finite differences of the CDF must match the analytic
    /// density used for likelihood fitting: the two are coded
    /// independently.
    #[test]
    fn densities_match_cdf_finite_differences() {
        let cases = [
            (CopulaFamily::Frank, 4.0),
            (CopulaFamily::Frank, -6.0),
            (CopulaFamily::Clayton, 1.3),
            (CopulaFamily::Plackett, 5.0),
            (CopulaFamily::Plackett, 0.4),
            (CopulaFamily::Gumbel, 1.8),
            (CopulaFamily::Gumbel, 4.0),
        ];
        let h = 1e-4;
        for &(family, theta) in &cases {
            let fit = match family {
                CopulaFamily::Frank => CopulaFit::Frank { theta },
                CopulaFamily::Clayton => CopulaFit::Clayton { theta },
                CopulaFamily::Plackett => CopulaFit::Plackett { theta },
                CopulaFamily::Gumbel => CopulaFit::Gumbel { theta },
                _ => unreachable!(),
            };
            for &(u, v) in &[(0.3, 0.6), (0.5, 0.5), (0.7, 0.2)] {
                let c = |a: f64, b: f64| copula_cdf(&fit, &[a, b]).unwrap();
                let numeric = (c(u + h, v + h) - c(u - h, v + h) - c(u + h, v - h)
                    + c(u - h, v - h))
                    / (4.0 * h * h);
                let analytic = copula_log_density(family, theta, u, v).exp();
                assert!(
                    (numeric - analytic).abs() < 1e-3 * analytic.max(1.0),
                    "{family:?} theta {theta} at ({u},{v}): {numeric} vs {analytic}"
                );
            }
        }
    }

    #[test]
    fn frank_fit_on_independent_samples_is_near_zero() {
        let mut rng = crate::rng::SplitMix64::new(11);
        let n = 400;
        let mut data = Vec::with_capacity(n * 2);
        for _ in 0..n {
            data.push(rng.next_f64());
            data.push(rng.next_f64());
        }
        let pseudo = Mat::from_vec(n, 2, data);
        match fit_copula(&pseudo, CopulaFamily::Frank).unwrap() {
            CopulaFit::Frank { theta } => {
                assert!(theta.abs() < 1.0, "theta {theta}");
                let fit = CopulaFit::Frank { theta };
                for &u in &grid(10) {
                    for &v in &grid(10) {
                        let c = copula_cdf(&fit, &[u, v]).unwrap();
                        assert!((c - u * v).abs() < 0.02);
                    }
                }
            }
            _ => panic!(),
        }
    }

    #[test]
    fn pd_projection_repairs_an_indefinite_tau_matrix() {
        // Pairwise constraints that no correlation matrix satisfies.
        let bad = vec![
            vec![1.0, 0.95, -0.95],
            vec![0.95, 1.0, 0.95],
            vec![-0.95, 0.95, 1.0],
        ];
        let fixed = nearest_positive_definite_correlation(bad);
        assert!(cholesky(&fixed).is_some());
        for (i, row) in fixed.iter().enumerate() {
            assert!((row[i] - 1.0).abs() < 1e-12);
            for (j, &x) in row.iter().enumerate() {
                assert!((x - fixed[j][i]).abs() < 1e-9);
                assert!(x.abs() <= 1.0 + 1e-12);
            }
        }
        let good = vec![vec![1.0, 0.3], vec![0.3, 1.0]];
        assert_eq!(nearest_positive_definite_correlation(good.clone()), good);
    }

    #[test]
    fn combiner_defaults_depend_on_dimension() {
        use crate::score_data::{ScoreMatrix, ID_ORIGIN};
        let mut rng = crate::rng::SplitMix64::new(5);
        let build = |d: usize, n: usize, rng: &mut crate::rng::SplitMix64| {
            let names = (0..d).map(|i| format!("s{}", i + 1)).collect();
            let ids = (0..n).map(|i| format!("r{i}")).collect();
            let origins = vec![ID_ORIGIN.to_string(); n];
            let data: Vec<f64> = (0..n * d).map(|_| rng.next_f64()).collect();
            ScoreMatrix::new(names, ids, origins, Mat::from_vec(n, d, data)).unwrap()
        };
        let m2 = build(2, 60, &mut rng);
        let model = copula_combiner_fit(&m2, MarginalFamily::Uniform, None).unwrap();
        assert_eq!(model.copula().family(), CopulaFamily::Frank);
        let m3 = build(3, 60, &mut rng);
        let model = copula_combiner_fit(&m3, MarginalFamily::Uniform, None).unwrap();
        assert_eq!(model.copula().family(), CopulaFamily::Independent);
        let m1 = build(1, 60, &mut rng);
        let model = copula_combiner_fit(&m1, MarginalFamily::Uniform, None).unwrap();
        assert_eq!(model.copula().family(), CopulaFamily::Independent);
        // d = 1 level reduces to the marginal CDF.
        let level = model.copula_level(&[0.5]).unwrap();
        let expect = marginal_cdf(&model.marginals()[0], 0.5);
        assert_eq!(level, expect);
        // Requesting a bivariate family at the wrong dimension errors.
        assert!(copula_combiner_fit(&m3, MarginalFamily::Uniform, Some(CopulaFamily::Frank))
            .is_err());
    }

    #[test]
    fn copula_level_is_monotone_in_each_coordinate() {
        use crate::score_data::{ScoreMatrix, ID_ORIGIN};
        let mut rng = crate::rng::SplitMix64::new(9);
        let n = 80;
        let names = vec!["a".to_string(), "b".to_string()];
        let ids = (0..n).map(|i| format!("r{i}")).collect();
        let origins = vec![ID_ORIGIN.to_string(); n];
        let data: Vec<f64> = (0..n * 2).map(|_| rng.next_standard_normal()).collect();
        let cal = ScoreMatrix::new(names, ids, origins, Mat::from_vec(n, 2, data)).unwrap();
        for family in [CopulaFamily::Frank, CopulaFamily::Clayton, CopulaFamily::Gumbel] {
            let model =
                copula_combiner_fit(&cal, MarginalFamily::Gaussian, Some(family)).unwrap();
            let mut x = [-0.3f64, 0.4];
            let mut prev = model.copula_level(&x).unwrap();
            for _ in 0..20 {
                x[0] += 0.17;
                let next = model.copula_level(&x).unwrap();
                assert!(next >= prev - 1e-12, "{family:?} dropped");
                prev = next;
            }
        }
    }
}
