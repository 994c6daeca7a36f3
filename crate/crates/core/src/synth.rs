//! Synthetic score generation with known ground truth, plus brute-force
//! reference implementations used as test oracles.
//!
//! The oracles trade asymptotics for obviousness: quadratic pair counting
//! for AUROC, dense grid search for copula likelihoods, and separating
//! directions or exact polygon geometry for hull membership. They are
//! meant for small instances in tests, not production use.

use serde::{Deserialize, Serialize};

use crate::copula::{self, CopulaFamily};
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::rng::SplitMix64;
use crate::scalar::Real;
use crate::score_data::{ScoreMatrix, ID_ORIGIN};

/// Origin label of generated OOD rows.
pub const SYNTH_ORIGIN: &str = "synth";

// ---------------------------------------------------------------------------
// Gaussian score generation

/// Correlated Gaussian score ensemble: ID rows are `N(0, S)`, OOD rows
/// `N(mu_ood, S)`, with `S` built from a correlation matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianScoreSpec {
    pub n_id: usize,
    pub n_ood: usize,
    pub d: usize,
    pub mu_ood: Vec<f64>,
    pub correlation: Vec<Vec<f64>>,
    pub seed: u64,
}

impl GaussianScoreSpec {
    /// Uncorrelated columns with the given mean shifts.
    pub fn independent(n_id: usize, n_ood: usize, mu_ood: Vec<f64>, seed: u64) -> Self {
        let d = mu_ood.len();
        let mut correlation = vec![vec![0.0; d]; d];
        for (i, row) in correlation.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        GaussianScoreSpec {
            n_id,
            n_ood,
            d,
            mu_ood,
            correlation,
            seed,
        }
    }

    fn validate(&self) -> Result<Vec<Vec<f64>>> {
        if self.n_id == 0 || self.n_ood == 0 || self.d == 0 {
            return Err(Error::invalid("score spec needs positive counts and dimension"));
        }
        if self.mu_ood.len() != self.d || self.correlation.len() != self.d {
            return Err(Error::invalid("score spec shapes do not match d"));
        }
        if self.mu_ood.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("mean shifts must be finite"));
        }
        for (i, row) in self.correlation.iter().enumerate() {
            if row.len() != self.d {
                return Err(Error::invalid("correlation matrix is not square"));
            }
            if (row[i] - 1.0).abs() > 1e-12 {
                return Err(Error::invalid("correlation diagonal must be 1"));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || (v - self.correlation[j][i]).abs() > 1e-12 {
                    return Err(Error::invalid("correlation matrix must be symmetric"));
                }
            }
        }
        copula::cholesky(&self.correlation).ok_or_else(|| {
            Error::NotPositiveDefinite("correlation matrix is not positive definite".into())
        })
    }
}

/// Draws the ID matrix first, then the OOD matrix, from one seeded stream.
/// Column names are `s1..sd`.
pub fn gen_gaussian_scores<T: Real>(
    spec: &GaussianScoreSpec,
) -> Result<(ScoreMatrix<T>, ScoreMatrix<T>)> {
    let chol = spec.validate()?;
    let d = spec.d;
    let names: Vec<String> = (1..=d).map(|i| format!("s{i}")).collect();
    let mut rng = SplitMix64::new(spec.seed);
    let zero = vec![0.0; d];
    let mut draw = |n: usize, mu: &[f64], prefix: &str, origin: &str| {
        let mut data = Vec::with_capacity(n * d);
        let mut z = vec![0.0f64; d];
        for _ in 0..n {
            for zi in z.iter_mut() {
                *zi = rng.next_standard_normal();
            }
            for i in 0..d {
                let mut acc = mu[i];
                for j in 0..=i {
                    acc += chol[i][j] * z[j];
                }
                data.push(T::from_f64_c(acc));
            }
        }
        let ids = (0..n).map(|i| format!("{prefix}_{i}")).collect();
        let origins = vec![origin.to_string(); n];
        ScoreMatrix::new(names.clone(), ids, origins, Mat::from_vec(n, d, data))
    };
    let id = draw(spec.n_id, &zero, "id", ID_ORIGIN)?;
    let ood = draw(spec.n_ood, &spec.mu_ood, "ood", SYNTH_ORIGIN)?;
    Ok((id, ood))
}

// ---------------------------------------------------------------------------
// AUROC oracle

/// Quadratic pair-counting AUROC with half credit for ties.
pub fn brute_force_auroc<T: Real>(id: &[T], ood: &[T]) -> Result<T> {
    if id.is_empty() || ood.is_empty() {
        return Err(Error::invalid("auroc needs nonempty score sets"));
    }
    if id.iter().chain(ood).any(|v| !v.is_finite()) {
        return Err(Error::invalid("auroc scores must be finite"));
    }
    let mut acc = 0.0f64;
    for &o in ood {
        for &i in id {
            if o > i {
                acc += 1.0;
            } else if o == i {
                acc += 0.5;
            }
        }
    }
    Ok(T::from_f64_c(acc / (id.len() as f64 * ood.len() as f64)))
}

// ---------------------------------------------------------------------------
// Copula likelihood oracle

/// Dense grid search over the mean log-likelihood; returns the grid point
/// with the highest value (first on ties). Supports the families with an
/// analytic density: Frank, Clayton, Gumbel, Plackett.
pub fn grid_mle_copula<T: Real>(
    pseudo: &Mat<T>,
    family: CopulaFamily,
    grid: &[f64],
) -> Result<f64> {
    if grid.is_empty() || grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("grid must be nonempty and finite"));
    }
    if pseudo.cols() != 2 || pseudo.rows() == 0 {
        return Err(Error::invalid("grid search expects a nonempty 2-column matrix"));
    }
    if !matches!(
        family,
        CopulaFamily::Frank | CopulaFamily::Clayton | CopulaFamily::Gumbel | CopulaFamily::Plackett
    ) {
        return Err(Error::invalid(format!(
            "{} copula has no analytic density to grid-search",
            family.name()
        )));
    }
    let mut best = (f64::NEG_INFINITY, grid[0]);
    for &theta in grid {
        let ll = copula::copula_log_likelihood(family, theta, pseudo);
        if ll > best.0 {
            best = (ll, theta);
        }
    }
    Ok(best.1)
}

// ---------------------------------------------------------------------------
// Hull membership oracle

/// Internal seed for the random separating directions; fixed so the
/// oracle is a deterministic function of its arguments.
const DIRECTION_SEED: u64 = 0x0ddc0de;

/// Convex-hull membership decided without linear programming: exact
/// polygon geometry in 2-D, interval arithmetic in 1-D, and separating
/// directions (axes plus `samples` random unit vectors) in 3-D. The
/// direction test is one-sided, so near-boundary exterior points may be
/// misjudged; keep queries clearly inside or outside.
pub fn brute_force_hull_member<T: Real>(
    points: &[Vec<T>],
    x: &[T],
    samples: usize,
) -> Result<bool> {
    if points.is_empty() {
        return Err(Error::invalid("hull oracle needs at least one point"));
    }
    let d = x.len();
    if d == 0 || d > 3 {
        return Err(Error::invalid("hull oracle supports 1 to 3 dimensions"));
    }
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::invalid("hull oracle dimensions do not match"));
    }
    if points.iter().flatten().chain(x).any(|v| !v.is_finite()) {
        return Err(Error::invalid("hull oracle inputs must be finite"));
    }
    let pts: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.iter().map(|v| v.as_f64()).collect())
        .collect();
    let xq: Vec<f64> = x.iter().map(|v| v.as_f64()).collect();
    let tol = 1e-9;
    match d {
        1 => {
            let lo = pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
            let hi = pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
            Ok(xq[0] >= lo - tol && xq[0] <= hi + tol)
        }
        2 => Ok(polygon_member(&pts, &xq, tol)),
        _ => {
            let mut rng = SplitMix64::new(DIRECTION_SEED);
            let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(2 * d + samples);
            for c in 0..d {
                let mut plus = vec![0.0; d];
                plus[c] = 1.0;
                let mut minus = vec![0.0; d];
                minus[c] = -1.0;
                dirs.push(plus);
                dirs.push(minus);
            }
            for _ in 0..samples {
                let g: Vec<f64> = (0..d).map(|_| rng.next_standard_normal()).collect();
                let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    dirs.push(g.into_iter().map(|v| v / norm).collect());
                }
            }
            for u in &dirs {
                let proj_x: f64 = u.iter().zip(&xq).map(|(a, b)| a * b).sum();
                let max_p = pts
                    .iter()
                    .map(|p| u.iter().zip(p).map(|(a, b)| a * b).sum::<f64>())
                    .fold(f64::NEG_INFINITY, f64::max);
                if proj_x > max_p + tol {
                    return Ok(false);
                }
            }
            Ok(true)
        }
    }
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Monotone-chain convex hull followed by an orientation test against
/// every edge. Degenerate hulls (a point or a segment) fall back to
/// distance checks.
fn polygon_member(pts: &[Vec<f64>], x: &[f64], tol: f64) -> bool {
    let mut sorted: Vec<(f64, f64)> = pts.iter().map(|p| (p[0], p[1])).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted.dedup();
    let query = (x[0], x[1]);
    if sorted.len() == 1 {
        let p = sorted[0];
        return (p.0 - query.0).abs() <= tol && (p.1 - query.1).abs() <= tol;
    }
    // Andrew's monotone chain, strict left turns only, so collinear
    // points collapse onto their supporting edges.
    let mut lower: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
    for &p in &sorted {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0
        {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
    for &p in sorted.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0
        {
            upper.pop();
        }
        upper.push(p);
    }
    let mut hull = lower;
    hull.pop(); // each chain ends on the other's first point
    hull.extend(upper);
    hull.pop();
    if hull.len() <= 2 {
        // All points collinear: membership means lying on the segment
        // between the extremes.
        let (a, b) = (sorted[0], *sorted.last().unwrap());
        let c = cross(a, b, query);
        let len2 = (b.0 - a.0).powi(2) + (b.1 - a.1).powi(2);
        if c.abs() > tol * len2.sqrt().max(1.0) {
            return false;
        }
        let t = ((query.0 - a.0) * (b.0 - a.0) + (query.1 - a.1) * (b.1 - a.1)) / len2;
        return (-tol..=1.0 + tol).contains(&t);
    }
    // Counterclockwise hull: inside iff never to the right of an edge.
    for i in 0..hull.len() {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        if cross(a, b, query) < -tol {
            return false;
        }
    }
    true
}
