//! Center-outward quantile combiner.
//!
//! The pipeline scales calibration scores into the unit cube through a
//! per-coordinate empirical quantile map, samples a reference cloud on
//! nested hyperspheres intersected with the nonnegative orthant, couples
//! the two clouds with entropically regularized optimal transport, and
//! reads off a quantile for every calibration point as the transported
//! mean sphere radius. Queries are generalized either by KNN averaging of
//! calibration quantiles or by membership in monotone-extended convex
//! hulls of low-quantile calibration points.
//!
//! Transport and geometry run in `f64` internally so predictions do not
//! depend on the crate scalar beyond final rounding.

use serde::{Deserialize, Serialize};

use crate::combine::{check_vector_len, DetectorFamily};
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::rng::SplitMix64;
use crate::scalar::Real;
use crate::score_data::ScoreMatrix;

pub const DEFAULT_SPHERES: usize = 100;
pub const DEFAULT_EPSILON: f64 = 0.01;
pub const DEFAULT_SINKHORN_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 10_000;
pub const DEFAULT_KNN_NEIGHBORS: usize = 5;

/// The recursive hull extension multiplies the point count by `2^d`; past
/// this dimension it is refused.
pub const HULL_DIM_CAP: usize = 4;

/// Hull membership tolerance for the LP feasibility test.
pub const HULL_TOL: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Rank transform

/// Per-coordinate empirical quantile map onto `[0, 1]`.
///
/// Each column stores its sorted calibration values together with plotting
/// positions `(i + 0.5) / M` averaged over tied runs; queries interpolate
/// linearly between adjacent distinct values and clamp to 0 below the
/// calibration range and 1 above it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTransform<T> {
    columns: Vec<RankColumn<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RankColumn<T> {
    values: Vec<T>,
    positions: Vec<f64>,
}

pub fn rank_transform_fit<T: Real>(cal: &ScoreMatrix<T>) -> Result<RankTransform<T>> {
    if cal.n_rows() < 2 {
        return Err(Error::FitFailed("rank transform needs at least 2 rows".into()));
    }
    let m = cal.n_rows();
    let mut columns = Vec::with_capacity(cal.n_cols());
    for c in 0..cal.n_cols() {
        let mut values = cal.column(c);
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if values[0] == values[m - 1] {
            return Err(Error::FitFailed(format!(
                "constant column {:?}: rank transform has zero spread",
                cal.detector_names()[c]
            )));
        }
        let mut positions = vec![0.0; m];
        let mut i = 0;
        while i < m {
            let mut j = i;
            while j < m && values[j] == values[i] {
                j += 1;
            }
            // Average of (i + 0.5)/M over the tied block.
            let avg = (i + j) as f64 / (2.0 * m as f64);
            for p in &mut positions[i..j] {
                *p = avg;
            }
            i = j;
        }
        columns.push(RankColumn { values, positions });
    }
    Ok(RankTransform { columns })
}

impl<T: Real> RankTransform<T> {
    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    /// Maps one raw score vector into `[0, 1]^d`.
    pub fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.columns.len() {
            return Err(Error::invalid(format!(
                "rank transform expects {} coordinates, got {}",
                self.columns.len(),
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("rank transform input must be finite"));
        }
        Ok(x.iter()
            .zip(&self.columns)
            .map(|(&xi, col)| T::from_f64_c(col.apply(xi)))
            .collect())
    }
}

impl<T: Real> RankColumn<T> {
    fn apply(&self, x: T) -> f64 {
        let v = &self.values;
        let m = v.len();
        if x < v[0] {
            return 0.0;
        }
        if x > v[m - 1] {
            return 1.0;
        }
        // First index with value >= x.
        let idx = v.partition_point(|e| *e < x);
        if v[idx] == x {
            return self.positions[idx];
        }
        let (x0, x1) = (v[idx - 1].as_f64(), v[idx].as_f64());
        let (p0, p1) = (self.positions[idx - 1], self.positions[idx]);
        p0 + (x.as_f64() - x0) / (x1 - x0) * (p1 - p0)
    }
}

// ---------------------------------------------------------------------------
// Sphere reference cloud

/// Points sampled uniformly on `k` nested hyperspheres of radii `t / k`,
/// `t = 1..k`, intersected with the nonnegative orthant.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereCloud {
    points: Mat<f64>,
    radius_index: Vec<u32>,
    spheres: u32,
}

impl SphereCloud {
    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn spheres(&self) -> usize {
        self.spheres as usize
    }

    pub fn points(&self) -> &Mat<f64> {
        &self.points
    }

    pub fn radius_index(&self) -> &[u32] {
        &self.radius_index
    }

    /// Radius of the sphere the `i`-th point lies on.
    pub fn radius(&self, i: usize) -> f64 {
        self.radius_index[i] as f64 / self.spheres as f64
    }
}

/// Draws `n` reference points: a uniform radius index in `{1..k}` followed
/// by `d` standard normals folded into the nonnegative orthant and
/// normalized onto the sphere. Deterministic given the seed.
pub fn sample_spheres(n: usize, k: usize, d: usize, seed: u64) -> Result<SphereCloud> {
    if n == 0 || k == 0 || d == 0 {
        return Err(Error::invalid("sphere cloud needs n, k, d all positive"));
    }
    if k > u32::MAX as usize {
        return Err(Error::invalid("sphere count too large"));
    }
    let mut rng = SplitMix64::new(seed);
    let mut data = Vec::with_capacity(n * d);
    let mut radius_index = Vec::with_capacity(n);
    let mut g = vec![0.0f64; d];
    for _ in 0..n {
        let idx = rng.next_below(k as u64) as u32 + 1;
        let r = idx as f64 / k as f64;
        loop {
            for gi in g.iter_mut() {
                *gi = rng.next_standard_normal().abs();
            }
            let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                data.extend(g.iter().map(|x| x / norm * r));
                break;
            }
        }
        radius_index.push(idx);
    }
    Ok(SphereCloud {
        points: Mat::from_vec(n, d, data),
        radius_index,
        spheres: k as u32,
    })
}

// ---------------------------------------------------------------------------
// Sinkhorn

/// An entropically regularized coupling between two weighted point sets.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub coupling: Mat<f64>,
    pub epsilon: f64,
    pub iterations: usize,
    /// Max of the two L1 marginal residuals of the returned coupling.
    pub marginal_residual: f64,
    /// False when `max_iter` ran out before the residual reached `tol`.
    pub converged: bool,
}

/// Sinkhorn diagnostics kept in fitted models for reproducibility audits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkhornDiagnostics {
    pub iterations: usize,
    pub marginal_residual: f64,
    pub converged: bool,
}

/// Alternating-scaling solver for the entropic optimal transport problem
/// with kernel `exp(-cost / epsilon)`.
///
/// Runs in the scaling domain with absorption: dual potentials soak up the
/// scaling vectors whenever they grow extreme and the kernel is rebuilt,
/// so small `epsilon` cannot underflow the iteration. The row residual is
/// a byproduct of the next row update, so convergence checks cost no
/// extra passes; columns are exact after every column update.
pub fn sinkhorn(
    cost: &Mat<f64>,
    a: &[f64],
    b: &[f64],
    epsilon: f64,
    tol: f64,
    max_iter: usize,
) -> Result<TransportPlan> {
    let n = cost.rows();
    let m = cost.cols();
    if a.len() != n || b.len() != m {
        return Err(Error::invalid(format!(
            "marginal lengths {}x{} do not match cost {n}x{m}",
            a.len(),
            b.len()
        )));
    }
    if cost.data().iter().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(Error::invalid("cost matrix must be finite and nonnegative"));
    }
    for w in a.iter().chain(b) {
        if !(w.is_finite() && *w > 0.0) {
            return Err(Error::invalid("marginal weights must be positive"));
        }
    }
    for (name, s) in [("a", a.iter().sum::<f64>()), ("b", b.iter().sum::<f64>())] {
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("marginal {name} sums to {s}, expected 1")));
        }
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    if !(tol > 0.0 && tol.is_finite()) || max_iter == 0 {
        return Err(Error::invalid("tol must be positive and max_iter nonzero"));
    }

    let mut f = vec![0.0f64; n];
    let mut g = vec![0.0f64; m];
    let mut u = vec![1.0f64; n];
    let mut v = vec![1.0f64; m];
    let mut kernel = build_kernel(cost, &f, &g, epsilon);
    let mut t = mat_vec(&kernel, &v);

    let mut iterations = 0usize;
    let mut converged = false;
    loop {
        if t.iter().any(|x| *x <= 0.0) {
            // A kernel row underflowed completely: fold v into its
            // potential and recompute the row potentials exactly in log
            // domain.
            absorb(&mut g, &mut v, epsilon);
            log_row_update(cost, &mut f, &g, a, epsilon);
            kernel = build_kernel(cost, &f, &g, epsilon);
            t = mat_vec(&kernel, &v);
        }
        for i in 0..n {
            u[i] = a[i] / t[i];
        }
        let mut s = mat_t_vec(&kernel, &u);
        if s.iter().any(|x| *x <= 0.0) {
            absorb(&mut f, &mut u, epsilon);
            log_col_update(cost, &f, &mut g, b, epsilon);
            kernel = build_kernel(cost, &f, &g, epsilon);
            s = mat_t_vec(&kernel, &u);
        }
        for j in 0..m {
            v[j] = b[j] / s[j];
        }
        iterations += 1;
        if scaling_extreme(&u) || scaling_extreme(&v) {
            // Absorption leaves the implied coupling unchanged.
            absorb(&mut f, &mut u, epsilon);
            absorb(&mut g, &mut v, epsilon);
            kernel = build_kernel(cost, &f, &g, epsilon);
        }
        t = mat_vec(&kernel, &v);
        let row_residual: f64 = (0..n).map(|i| (u[i] * t[i] - a[i]).abs()).sum();
        if row_residual <= tol {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
    }

    let mut coupling = Mat::fill(n, m, 0.0);
    for i in 0..n {
        let krow = kernel.row(i);
        let crow = coupling.row_mut(i);
        for j in 0..m {
            crow[j] = u[i] * krow[j] * v[j];
        }
    }
    let mut row_res = 0.0;
    let mut col_sums = vec![0.0f64; m];
    for i in 0..n {
        let row = coupling.row(i);
        let mut sum = 0.0;
        for j in 0..m {
            sum += row[j];
            col_sums[j] += row[j];
        }
        row_res += (sum - a[i]).abs();
    }
    let col_res: f64 = (0..m).map(|j| (col_sums[j] - b[j]).abs()).sum();
    Ok(TransportPlan {
        coupling,
        epsilon,
        iterations,
        marginal_residual: row_res.max(col_res),
        converged,
    })
}

fn build_kernel(cost: &Mat<f64>, f: &[f64], g: &[f64], epsilon: f64) -> Mat<f64> {
    let n = cost.rows();
    let m = cost.cols();
    let mut kernel = Mat::fill(n, m, 0.0);
    for i in 0..n {
        let crow = cost.row(i);
        let krow = kernel.row_mut(i);
        for j in 0..m {
            krow[j] = ((f[i] + g[j] - crow[j]) / epsilon).exp();
        }
    }
    kernel
}

fn mat_vec(kernel: &Mat<f64>, v: &[f64]) -> Vec<f64> {
    kernel
        .iter_rows()
        .map(|row| row.iter().zip(v).map(|(k, vj)| k * vj).sum())
        .collect()
}

fn mat_t_vec(kernel: &Mat<f64>, u: &[f64]) -> Vec<f64> {
    let mut s = vec![0.0f64; kernel.cols()];
    for (i, row) in kernel.iter_rows().enumerate() {
        let ui = u[i];
        for (sj, k) in s.iter_mut().zip(row) {
            *sj += ui * k;
        }
    }
    s
}

fn scaling_extreme(w: &[f64]) -> bool {
    w.iter().any(|x| *x > 1e100 || *x < 1e-100)
}

fn absorb(potential: &mut [f64], scaling: &mut [f64], epsilon: f64) {
    for (p, s) in potential.iter_mut().zip(scaling.iter_mut()) {
        *p += epsilon * s.ln();
        *s = 1.0;
    }
}

/// Sets `f` so that the coupling rows sum exactly to `a` given `g`.
fn log_row_update(cost: &Mat<f64>, f: &mut [f64], g: &[f64], a: &[f64], epsilon: f64) {
    for (i, fi) in f.iter_mut().enumerate() {
        let crow = cost.row(i);
        let lse = log_sum_exp((0..g.len()).map(|j| (g[j] - crow[j]) / epsilon));
        *fi = epsilon * (a[i].ln() - lse);
    }
}

fn log_col_update(cost: &Mat<f64>, f: &[f64], g: &mut [f64], b: &[f64], epsilon: f64) {
    for (j, gj) in g.iter_mut().enumerate() {
        let lse = log_sum_exp((0..f.len()).map(|i| (f[i] - cost.get(i, j)) / epsilon));
        *gj = epsilon * (b[j].ln() - lse);
    }
}

fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.map(|t| (t - max).exp()).sum::<f64>().ln()
}

// ---------------------------------------------------------------------------
// Quantile assignment

/// Quantile of each target point: the transported mean sphere radius,
/// `q_j = M * sum_i r_i P_ij`. The factor M removes the column marginal
/// mass `1/M`, so `q_j` is a convex combination of radii in `[1/k, 1]`.
pub fn estimate_quantiles(plan: &TransportPlan, cloud: &SphereCloud) -> Result<Vec<f64>> {
    if plan.coupling.rows() != cloud.len() {
        return Err(Error::invalid(format!(
            "plan has {} rows but cloud has {} points",
            plan.coupling.rows(),
            cloud.len()
        )));
    }
    let m = plan.coupling.cols();
    let mut q = vec![0.0f64; m];
    for (i, row) in plan.coupling.iter_rows().enumerate() {
        let r = cloud.radius(i);
        for (qj, p) in q.iter_mut().zip(row) {
            *qj += r * p;
        }
    }
    let lo = 1.0 / cloud.spheres() as f64;
    for qj in &mut q {
        *qj = (*qj * m as f64).clamp(lo, 1.0);
    }
    Ok(q)
}

// ---------------------------------------------------------------------------
// KNN generalization

/// Mean calibration quantile over the `k_neighbors` nearest scaled
/// calibration points (Euclidean distance, ties to the lower index).
pub fn knn_mean_quantile<T: Real>(
    scaled_cal: &Mat<T>,
    q: &[T],
    k_neighbors: usize,
    x: &[f64],
) -> Result<f64> {
    let m = scaled_cal.rows();
    if k_neighbors == 0 || k_neighbors > m {
        return Err(Error::invalid(format!(
            "k_neighbors must be in 1..={m}, got {k_neighbors}"
        )));
    }
    if q.len() != m || x.len() != scaled_cal.cols() {
        return Err(Error::invalid("knn dimensions do not match"));
    }
    let mut dist: Vec<(f64, usize)> = scaled_cal
        .iter_rows()
        .enumerate()
        .map(|(j, row)| {
            let d2 = row
                .iter()
                .zip(x)
                .map(|(c, xi)| {
                    let d = c.as_f64() - xi;
                    d * d
                })
                .sum::<f64>();
            (d2, j)
        })
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| {
        a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1))
    };
    dist.select_nth_unstable_by(k_neighbors - 1, cmp);
    let chosen = &mut dist[..k_neighbors];
    // Fixed summation order keeps predictions bitwise reproducible.
    chosen.sort_unstable_by(cmp);
    Ok(chosen.iter().map(|&(_, j)| q[j].as_f64()).sum::<f64>() / k_neighbors as f64)
}

// ---------------------------------------------------------------------------
// Monotone hull generalization

/// Extends a point set so its convex hull becomes downward-closed in the
/// nonnegative orthant: every point is added back with each subset of its
/// coordinates zeroed, which reproduces the recursive drop-a-dimension
/// projection procedure in closed form.
pub fn monotone_hull_extend<T: Real>(points: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
    if points.is_empty() {
        return Err(Error::invalid("hull extension needs at least one point"));
    }
    let d = points[0].len();
    if d == 0 || d > HULL_DIM_CAP {
        return Err(Error::invalid(format!(
            "hull extension supports 1..={HULL_DIM_CAP} dimensions, got {d}"
        )));
    }
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::invalid("hull points must share one dimension"));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("hull points must be finite"));
    }
    let mut out = Vec::with_capacity(points.len() << d);
    for p in points {
        for mask in 0..(1usize << d) {
            let mut z = p.clone();
            for (i, zi) in z.iter_mut().enumerate() {
                if mask & (1 << i) != 0 {
                    *zi = T::zero();
                }
            }
            out.push(z);
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out.dedup();
    Ok(out)
}

/// True iff `x` is a convex combination of the given points, decided by a
/// phase-1 simplex feasibility test with tolerance [`HULL_TOL`].
pub fn hull_member<T: Real>(points: &[Vec<T>], x: &[T]) -> Result<bool> {
    if points.is_empty() {
        return Err(Error::invalid("hull membership needs at least one point"));
    }
    let d = points[0].len();
    if x.len() != d || points.iter().any(|p| p.len() != d) {
        return Err(Error::invalid("hull membership dimensions do not match"));
    }
    if points.iter().flatten().chain(x).any(|v| !v.is_finite()) {
        return Err(Error::invalid("hull membership inputs must be finite"));
    }
    let pts: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.iter().map(|v| v.as_f64()).collect())
        .collect();
    let xq: Vec<f64> = x.iter().map(|v| v.as_f64()).collect();
    // Bounding-box rejection is exact for convex hulls.
    for c in 0..d {
        let hi = pts.iter().map(|p| p[c]).fold(f64::NEG_INFINITY, f64::max);
        let lo = pts.iter().map(|p| p[c]).fold(f64::INFINITY, f64::min);
        if xq[c] > hi + HULL_TOL || xq[c] < lo - HULL_TOL {
            return Ok(false);
        }
    }
    Ok(lp_convex_member(&pts, &xq, HULL_TOL))
}

/// Phase-1 simplex (Bland's rule) for `sum l_i p_i = x, sum l_i = 1,
/// l >= 0`.
fn lp_convex_member(points: &[Vec<f64>], x: &[f64], tol: f64) -> bool {
    let d = x.len();
    let n = points.len();
    let rows = d + 1;
    let width = n + rows + 1; // structurals, artificials, rhs
    let mut tab = vec![vec![0.0f64; width]; rows];
    for (r, row) in tab.iter_mut().enumerate() {
        let rhs = if r < d { x[r] } else { 1.0 };
        let flip = if rhs < 0.0 { -1.0 } else { 1.0 };
        for (j, p) in points.iter().enumerate() {
            row[j] = flip * if r < d { p[r] } else { 1.0 };
        }
        row[n + r] = 1.0;
        row[width - 1] = flip * rhs;
    }
    // Reduced costs for minimizing the artificial sum.
    let mut z = vec![0.0f64; width];
    for j in 0..n {
        z[j] = -tab.iter().map(|row| row[j]).sum::<f64>();
    }
    z[width - 1] = -tab.iter().map(|row| row[width - 1]).sum::<f64>();
    let mut basis: Vec<usize> = (n..n + rows).collect();

    for _ in 0..10_000 {
        let Some(e) = (0..n + rows).find(|&j| z[j] < -tol) else {
            break;
        };
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for r in 0..rows {
            if tab[r][e] > tol {
                let ratio = tab[r][width - 1] / tab[r][e];
                let better = ratio < best - tol
                    || (ratio < best + tol
                        && leave.is_some_and(|l| basis[r] < basis[l]));
                if better {
                    best = ratio;
                    leave = Some(r);
                }
            }
        }
        let Some(l) = leave else {
            break; // unbounded cannot happen in phase 1; bail defensively
        };
        let piv = tab[l][e];
        for val in tab[l].iter_mut() {
            *val /= piv;
        }
        for r in 0..rows {
            if r != l && tab[r][e].abs() > 0.0 {
                let factor = tab[r][e];
                let (pivot_row, target) = if r < l {
                    let (a, b) = tab.split_at_mut(l);
                    (&b[0], &mut a[r])
                } else {
                    let (a, b) = tab.split_at_mut(r);
                    (&a[l], &mut b[0])
                };
                for (t, p) in target.iter_mut().zip(pivot_row) {
                    *t -= factor * p;
                }
            }
        }
        if z[e].abs() > 0.0 {
            let factor = z[e];
            for (zj, p) in z.iter_mut().zip(&tab[l]) {
                *zj -= factor * p;
            }
        }
        basis[l] = e;
    }
    let infeasibility = -z[width - 1];
    infeasibility <= tol
}

// ---------------------------------------------------------------------------
// Model

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CenterOutwardVariant {
    Knn { k_neighbors: usize },
    Hull,
}

impl Default for CenterOutwardVariant {
    fn default() -> Self {
        CenterOutwardVariant::Knn {
            k_neighbors: DEFAULT_KNN_NEIGHBORS,
        }
    }
}

/// Hyperparameters for [`center_outward_fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterOutwardParams<T> {
    /// Reference cloud size; `None` means `4 * M` for M calibration rows.
    pub n_reference: Option<usize>,
    /// Number of nested spheres.
    pub spheres: usize,
    pub seed: u64,
    pub epsilon: T,
    pub sinkhorn_tol: T,
    pub max_iter: usize,
    pub variant: CenterOutwardVariant,
}

impl<T: Real> Default for CenterOutwardParams<T> {
    fn default() -> Self {
        CenterOutwardParams {
            n_reference: None,
            spheres: DEFAULT_SPHERES,
            seed: 42,
            epsilon: T::from_f64_c(DEFAULT_EPSILON),
            sinkhorn_tol: T::from_f64_c(DEFAULT_SINKHORN_TOL),
            max_iter: DEFAULT_MAX_ITER,
            variant: CenterOutwardVariant::default(),
        }
    }
}

/// Fitted center-outward combiner.
///
/// The KNN variant exposes the predicted quantile as a scalar level with
/// `A_t = {level > t}`. The hull variant's regions are complements of
/// monotone-extended hulls of calibration points with `q <= t`; its level
/// is the smallest calibration quantile whose hull captures the query,
/// with sentinel 2 for points outside even the full hull, which induces
/// the same regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterOutwardModel<T> {
    detector_names: Vec<String>,
    transform: RankTransform<T>,
    scaled_cal: Mat<T>,
    q: Vec<T>,
    params: CenterOutwardParams<T>,
    diagnostics: SinkhornDiagnostics,
}

impl<T: Real> CenterOutwardModel<T> {
    pub fn transform(&self) -> &RankTransform<T> {
        &self.transform
    }

    pub fn scaled_cal(&self) -> &Mat<T> {
        &self.scaled_cal
    }

    pub fn quantiles(&self) -> &[T] {
        &self.q
    }

    pub fn params(&self) -> &CenterOutwardParams<T> {
        &self.params
    }

    pub fn diagnostics(&self) -> &SinkhornDiagnostics {
        &self.diagnostics
    }

    fn scaled_query(&self, x: &[T]) -> Result<Vec<f64>> {
        check_vector_len(&self.detector_names, x)?;
        Ok(self.transform.apply(x)?.iter().map(|v| v.as_f64()).collect())
    }

    /// Calibration indices ordered by (quantile, index).
    fn q_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.q.len()).collect();
        order.sort_by(|&i, &j| self.q[i].partial_cmp(&self.q[j]).unwrap().then(i.cmp(&j)));
        order
    }

    /// Number of calibration points with quantile <= t under `order`.
    fn prefix_len(&self, order: &[usize], t: T) -> usize {
        order.partition_point(|&j| self.q[j] <= t)
    }

    /// Membership of the scaled query in the monotone-extended hull of the
    /// first `len` points of `order`.
    fn inside_prefix_hull(&self, order: &[usize], len: usize, z: &[f64]) -> bool {
        if len == 0 {
            return false;
        }
        let d = self.scaled_cal.cols();
        // Downward closure makes componentwise dominance a certificate.
        'outer: for &j in &order[..len] {
            let row = self.scaled_cal.row(j);
            for c in 0..d {
                if z[c] > row[c].as_f64() + HULL_TOL {
                    continue 'outer;
                }
            }
            return true;
        }
        let raw: Vec<Vec<T>> = order[..len]
            .iter()
            .map(|&j| self.scaled_cal.row(j).to_vec())
            .collect();
        let extended = monotone_hull_extend(&raw).expect("fit enforced the dimension cap");
        hull_member(&extended, &z.iter().map(|&v| T::from_f64_c(v)).collect::<Vec<_>>())
            .expect("extended set is nonempty and finite")
    }

    fn hull_level(&self, z: &[f64]) -> T {
        let order = self.q_order();
        let m = order.len();
        if !self.inside_prefix_hull(&order, m, z) {
            return T::from_f64_c(2.0);
        }
        // Distinct quantile levels: prefixes only change at these.
        let mut cut_points: Vec<usize> = Vec::new();
        for i in 0..m {
            if i + 1 == m || self.q[order[i + 1]] != self.q[order[i]] {
                cut_points.push(i + 1);
            }
        }
        // Smallest cut whose hull contains z; the last one does.
        let mut lo = 0usize;
        let mut hi = cut_points.len() - 1;
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.inside_prefix_hull(&order, cut_points[mid], z) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        self.q[order[cut_points[lo] - 1]]
    }
}

impl<T: Real> DetectorFamily<T> for CenterOutwardModel<T> {
    fn detector_names(&self) -> &[String] {
        &self.detector_names
    }

    fn member_at(&self, x: &[T], t: T) -> Result<bool> {
        if !(t >= T::zero() && t <= T::one()) {
            return Err(Error::invalid(format!(
                "family parameter must be in [0, 1], got {t}"
            )));
        }
        let z = self.scaled_query(x)?;
        match self.params.variant {
            CenterOutwardVariant::Knn { k_neighbors } => {
                let level = knn_mean_quantile(&self.scaled_cal, &self.q, k_neighbors, &z)?;
                Ok(T::from_f64_c(level) > t)
            }
            CenterOutwardVariant::Hull => {
                let order = self.q_order();
                let len = self.prefix_len(&order, t);
                Ok(!self.inside_prefix_hull(&order, len, &z))
            }
        }
    }

    fn level(&self, x: &[T]) -> Result<Option<T>> {
        let z = self.scaled_query(x)?;
        match self.params.variant {
            CenterOutwardVariant::Knn { k_neighbors } => {
                let level = knn_mean_quantile(&self.scaled_cal, &self.q, k_neighbors, &z)?;
                Ok(Some(T::from_f64_c(level)))
            }
            CenterOutwardVariant::Hull => Ok(Some(self.hull_level(&z))),
        }
    }
}

/// Runs the full pipeline: rank transform, sphere sampling, squared
/// Euclidean costs, Sinkhorn, quantile assignment.
pub fn center_outward_fit<T: Real>(
    cal: &ScoreMatrix<T>,
    params: &CenterOutwardParams<T>,
) -> Result<CenterOutwardModel<T>> {
    let m = cal.n_rows();
    let d = cal.n_cols();
    if m < 2 {
        return Err(Error::FitFailed("center-outward fit needs at least 2 rows".into()));
    }
    match params.variant {
        CenterOutwardVariant::Knn { k_neighbors } => {
            if k_neighbors == 0 || k_neighbors > m {
                return Err(Error::invalid(format!(
                    "k_neighbors must be in 1..={m}, got {k_neighbors}"
                )));
            }
        }
        CenterOutwardVariant::Hull => {
            if d > HULL_DIM_CAP {
                return Err(Error::invalid(format!(
                    "hull variant supports at most {HULL_DIM_CAP} columns, got {d}"
                )));
            }
        }
    }
    let n = params.n_reference.unwrap_or(4 * m);
    if n == 0 || params.spheres == 0 {
        return Err(Error::invalid("reference size and sphere count must be positive"));
    }
    let epsilon = params.epsilon.as_f64();
    let tol = params.sinkhorn_tol.as_f64();

    let transform = rank_transform_fit(cal)?;
    let mut scaled = Vec::with_capacity(m * d);
    for r in 0..m {
        scaled.extend(transform.apply(cal.values().row(r))?);
    }
    let scaled_cal = Mat::from_vec(m, d, scaled);

    let cloud = sample_spheres(n, params.spheres, d, params.seed)?;
    let mut cost = Mat::fill(n, m, 0.0);
    for i in 0..n {
        let p = cloud.points().row(i);
        let crow = cost.row_mut(i);
        for j in 0..m {
            let srow = scaled_cal.row(j);
            let mut acc = 0.0;
            for c in 0..d {
                let diff = p[c] - srow[c].as_f64();
                acc += diff * diff;
            }
            crow[j] = acc;
        }
    }
    let a = vec![1.0 / n as f64; n];
    let b = vec![1.0 / m as f64; m];
    let plan = sinkhorn(&cost, &a, &b, epsilon, tol, params.max_iter)?;
    let q64 = estimate_quantiles(&plan, &cloud)?;

    let mut resolved = params.clone();
    resolved.n_reference = Some(n);
    Ok(CenterOutwardModel {
        detector_names: cal.detector_names().to_vec(),
        transform,
        scaled_cal,
        q: q64.into_iter().map(T::from_f64_c).collect(),
        params: resolved,
        diagnostics: SinkhornDiagnostics {
            iterations: plan.iterations,
            marginal_residual: plan.marginal_residual,
            converged: plan.converged,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score_data::ID_ORIGIN;

    fn matrix(rows: &[&[f64]]) -> ScoreMatrix<f64> {
        let d = rows[0].len();
        let names = (0..d).map(|i| format!("s{}", i + 1)).collect();
        let ids = (0..rows.len()).map(|i| format!("r{i}")).collect();
        let origins = vec![ID_ORIGIN.to_string(); rows.len()];
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        ScoreMatrix::new(names, ids, origins, Mat::from_vec(rows.len(), d, data)).unwrap()
    }

    fn uniform_matrix(m: usize, d: usize, seed: u64) -> ScoreMatrix<f64> {
        let mut rng = SplitMix64::new(seed);
        let names = (0..d).map(|i| format!("s{}", i + 1)).collect();
        let ids = (0..m).map(|i| format!("r{i}")).collect();
        let origins = vec![ID_ORIGIN.to_string(); m];
        let data: Vec<f64> = (0..m * d).map(|_| rng.next_f64()).collect();
        ScoreMatrix::new(names, ids, origins, Mat::from_vec(m, d, data)).unwrap()
    }

    #[test]
    fn rank_transform_interpolates_plotting_positions() {
        let cal = matrix(&[&[1.0], &[2.0], &[3.0], &[4.0]]);
        let tr = rank_transform_fit(&cal).unwrap();
        let at = |x: f64| tr.apply(&[x]).unwrap()[0];
        assert_eq!(at(2.5), 0.5); // midpoint of 0.375 and 0.625
        assert_eq!(at(1.0), 0.125);
        assert_eq!(at(4.0), 0.875);
        assert_eq!(at(0.5), 0.0);
        assert_eq!(at(9.0), 1.0);
        assert!((at(1.5) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rank_transform_averages_tied_blocks() {
        let cal = matrix(&[&[1.0], &[2.0], &[2.0], &[3.0]]);
        let tr = rank_transform_fit(&cal).unwrap();
        // Positions 0.125, {0.375, 0.625} -> 0.5, 0.875.
        assert_eq!(tr.apply(&[2.0]).unwrap()[0], 0.5);
        assert_eq!(tr.apply(&[1.0]).unwrap()[0], 0.125);
    }

    #[test]
    fn rank_transform_median_maps_near_half_and_is_monotone() {
        let cal = uniform_matrix(101, 1, 3);
        let tr = rank_transform_fit(&cal).unwrap();
        let mut col = cal.column(0);
        col.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = col[50];
        assert!((tr.apply(&[median]).unwrap()[0] - 0.5).abs() < 1e-12);
        let mut prev = -1.0;
        for i in 0..200 {
            let x = i as f64 / 199.0;
            let u = tr.apply(&[x]).unwrap()[0];
            assert!(u >= prev);
            prev = u;
        }
    }

    #[test]
    fn rank_transform_rejects_constant_columns() {
        let cal = matrix(&[&[1.0, 5.0], &[1.0, 6.0]]);
        assert!(rank_transform_fit(&cal).is_err());
    }

    #[test]
    fn sphere_cloud_lies_on_the_stated_radii() {
        let cloud = sample_spheres(500, 5, 3, 7).unwrap();
        let radii = [0.2, 0.4, 0.6, 0.8, 1.0];
        let mut seen = [false; 5];
        for i in 0..cloud.len() {
            let p = cloud.points().row(i);
            assert!(p.iter().all(|&c| c >= 0.0));
            let norm = p.iter().map(|c| c * c).sum::<f64>().sqrt();
            let idx = cloud.radius_index()[i] as usize;
            assert!((1..=5).contains(&idx));
            assert!((norm - radii[idx - 1]).abs() < 1e-9);
            assert_eq!(cloud.radius(i), radii[idx - 1]);
            seen[idx - 1] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn sphere_cloud_in_one_dimension_is_the_radius_set() {
        let cloud = sample_spheres(50, 5, 1, 1).unwrap();
        for i in 0..cloud.len() {
            let p = cloud.points().get(i, 0);
            assert!((p - cloud.radius(i)).abs() < 1e-12);
        }
    }

    #[test]
    fn sphere_cloud_is_deterministic_in_the_seed() {
        let a = sample_spheres(40, 10, 2, 9).unwrap();
        let b = sample_spheres(40, 10, 2, 9).unwrap();
        let c = sample_spheres(40, 10, 2, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn sinkhorn_one_by_one_is_the_unit_coupling() {
        let cost = Mat::from_vec(1, 1, vec![3.0]);
        let plan = sinkhorn(&cost, &[1.0], &[1.0], 0.5, 1e-9, 100).unwrap();
        assert!((plan.coupling.get(0, 0) - 1.0).abs() < 1e-12);
        assert!(plan.converged);
    }

    #[test]
    fn sinkhorn_zero_cost_uniform_is_the_product_coupling() {
        let cost = Mat::fill(2, 2, 0.0);
        let plan = sinkhorn(&cost, &[0.5, 0.5], &[0.5, 0.5], 0.01, 1e-10, 100).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((plan.coupling.get(i, j) - 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sinkhorn_meets_the_marginals_on_random_costs() {
        let mut rng = SplitMix64::new(21);
        let n = 20;
        let m = 30;
        let data: Vec<f64> = (0..n * m).map(|_| rng.next_f64()).collect();
        let cost = Mat::from_vec(n, m, data);
        let a = vec![1.0 / n as f64; n];
        let b = vec![1.0 / m as f64; m];
        let plan = sinkhorn(&cost, &a, &b, 0.01, 1e-7, 10_000).unwrap();
        assert!(plan.converged, "residual {}", plan.marginal_residual);
        assert!(plan.marginal_residual <= 1e-6);
        assert!(plan.coupling.data().iter().all(|&p| p >= 0.0));
        for j in 0..m {
            let col: f64 = (0..n).map(|i| plan.coupling.get(i, j)).sum();
            assert!((col - b[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn sinkhorn_survives_total_kernel_underflow() {
        // Off-diagonal costs underflow exp(-c/eps) at eps = 0.01; the
        // rescue path must still find the diagonal coupling.
        let cost = Mat::from_vec(2, 2, vec![0.0, 9e3, 9e3, 0.0]);
        let plan = sinkhorn(&cost, &[0.5, 0.5], &[0.5, 0.5], 0.01, 1e-9, 1000).unwrap();
        assert!(plan.converged);
        assert!((plan.coupling.get(0, 0) - 0.5).abs() < 1e-9);
        assert!((plan.coupling.get(1, 1) - 0.5).abs() < 1e-9);
        assert!(plan.coupling.get(0, 1) < 1e-12);
    }

    #[test]
    fn sinkhorn_handles_nonuniform_marginals() {
        let mut rng = SplitMix64::new(33);
        let data: Vec<f64> = (0..12).map(|_| rng.next_f64() * 2.0).collect();
        let cost = Mat::from_vec(3, 4, data);
        let a = [0.2, 0.3, 0.5];
        let b = [0.1, 0.2, 0.3, 0.4];
        let plan = sinkhorn(&cost, &a, &b, 0.05, 1e-8, 10_000).unwrap();
        assert!(plan.converged);
        for i in 0..3 {
            let row: f64 = (0..4).map(|j| plan.coupling.get(i, j)).sum();
            assert!((row - a[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn sinkhorn_reports_nonconvergence_explicitly() {
        let mut rng = SplitMix64::new(5);
        let data: Vec<f64> = (0..100).map(|_| rng.next_f64()).collect();
        let cost = Mat::from_vec(10, 10, data);
        let a = vec![0.1; 10];
        let plan = sinkhorn(&cost, &a, &a, 0.01, 1e-14, 3).unwrap();
        assert!(!plan.converged);
        assert_eq!(plan.iterations, 3);
        assert!(plan.marginal_residual > 1e-14);
    }

    #[test]
    fn sinkhorn_rejects_bad_inputs() {
        let cost = Mat::fill(2, 2, 1.0);
        let u = [0.5, 0.5];
        assert!(sinkhorn(&cost, &[1.0], &u, 0.1, 1e-6, 10).is_err());
        assert!(sinkhorn(&cost, &[0.9, 0.2], &u, 0.1, 1e-6, 10).is_err());
        assert!(sinkhorn(&cost, &[1.0, 0.0], &u, 0.1, 1e-6, 10).is_err());
        assert!(sinkhorn(&cost, &u, &u, -1.0, 1e-6, 10).is_err());
        let neg = Mat::from_vec(2, 2, vec![0.0, -1.0, 0.0, 0.0]);
        assert!(sinkhorn(&neg, &u, &u, 0.1, 1e-6, 10).is_err());
    }

    #[test]
    fn quantiles_from_a_permutation_plan_are_the_matched_radii() {
        let cloud = sample_spheres(3, 5, 2, 4).unwrap();
        let mut coupling = Mat::fill(3, 3, 0.0);
        coupling.set(0, 2, 1.0 / 3.0);
        coupling.set(1, 0, 1.0 / 3.0);
        coupling.set(2, 1, 1.0 / 3.0);
        let plan = TransportPlan {
            coupling,
            epsilon: 0.01,
            iterations: 1,
            marginal_residual: 0.0,
            converged: true,
        };
        let q = estimate_quantiles(&plan, &cloud).unwrap();
        assert!((q[2] - cloud.radius(0)).abs() < 1e-12);
        assert!((q[0] - cloud.radius(1)).abs() < 1e-12);
        assert!((q[1] - cloud.radius(2)).abs() < 1e-12);
    }

    #[test]
    fn quantiles_average_split_column_mass() {
        // k = 5; one target column fed equally from radii 0.2 and 0.4.
        let points = Mat::from_vec(2, 1, vec![0.2, 0.4]);
        let cloud = SphereCloud {
            points,
            radius_index: vec![1, 2],
            spheres: 5,
        };
        let coupling = Mat::from_vec(2, 1, vec![0.5, 0.5]);
        let plan = TransportPlan {
            coupling,
            epsilon: 0.01,
            iterations: 1,
            marginal_residual: 0.0,
            converged: true,
        };
        let q = estimate_quantiles(&plan, &cloud).unwrap();
        assert!((q[0] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn knn_prediction_averages_neighbor_quantiles() {
        let cal = Mat::from_vec(3, 1, vec![0.1, 0.2, 0.9]);
        let q = [0.2, 0.4, 0.6];
        // Exact hit with k = 1.
        let p = knn_mean_quantile(&cal, &q, 1, &[0.2]).unwrap();
        assert_eq!(p, 0.4);
        // k = M ignores the query.
        let p = knn_mean_quantile(&cal, &q, 3, &[100.0]).unwrap();
        assert!((p - 0.4).abs() < 1e-15);
        // Nearest two of a query near the low pair.
        let p = knn_mean_quantile(&cal, &q, 2, &[0.15]).unwrap();
        assert!((p - 0.3).abs() < 1e-15);
        assert!(knn_mean_quantile(&cal, &q, 4, &[0.0]).is_err());
    }

    #[test]
    fn knn_distance_ties_break_toward_lower_index() {
        let cal = Mat::from_vec(3, 1, vec![1.0, 3.0, 2.0]);
        let q = [0.1, 0.9, 0.5];
        // x = 2: distances 1, 1, 0; the k=2 set is {2, 0} by tie rule.
        let p = knn_mean_quantile(&cal, &q, 2, &[2.0]).unwrap();
        assert!((p - 0.3).abs() < 1e-15);
    }

    #[test]
    fn hull_extension_matches_hand_geometry() {
        // d = 1: {0.5} extends to {0, 0.5} covering [0, 0.5].
        let ext = monotone_hull_extend(&[vec![0.5f64]]).unwrap();
        assert_eq!(ext, vec![vec![0.0], vec![0.5]]);
        assert!(hull_member(&ext, &[0.3]).unwrap());
        assert!(hull_member(&ext, &[0.0]).unwrap());
        assert!(!hull_member(&ext, &[0.6]).unwrap());
        // d = 2: the segment (1,0)-(0,1) closes downward to a triangle.
        let ext = monotone_hull_extend(&[vec![1.0f64, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(ext.contains(&vec![0.0, 0.0]));
        assert!(hull_member(&ext, &[0.4, 0.4]).unwrap());
        assert!(!hull_member(&ext, &[0.6, 0.6]).unwrap());
        assert!(monotone_hull_extend::<f64>(&[vec![0.1; 5]]).is_err());
    }

    #[test]
    fn hull_membership_matches_barycentric_checks() {
        let tri = vec![vec![0.0f64, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(hull_member(&tri, &[0.25, 0.25]).unwrap());
        assert!(!hull_member(&tri, &[0.8, 0.8]).unwrap());
        assert!(hull_member(&tri, &[1.0, 0.0]).unwrap());
        assert!(!hull_member(&tri, &[-0.1, 0.2]).unwrap());
        assert!(hull_member(&tri, &[0.5, 0.5]).unwrap()); // edge point
        // Single point: membership means equality.
        let single = vec![vec![0.3f64, 0.7]];
        assert!(hull_member(&single, &[0.3, 0.7]).unwrap());
        assert!(!hull_member(&single, &[0.2, 0.7]).unwrap());
    }

    #[test]
    fn extended_hulls_are_downward_closed() {
        let mut rng = SplitMix64::new(17);
        for d in [2usize, 3] {
            let points: Vec<Vec<f64>> = (0..6)
                .map(|_| (0..d).map(|_| rng.next_f64()).collect())
                .collect();
            let ext = monotone_hull_extend(&points).unwrap();
            for _ in 0..60 {
                // A random convex combination is inside; shrinking any
                // coordinates keeps it inside.
                let mut weights: Vec<f64> =
                    (0..points.len()).map(|_| rng.next_f64() + 1e-3).collect();
                let total: f64 = weights.iter().sum();
                for w in &mut weights {
                    *w /= total;
                }
                let mut inside = vec![0.0; d];
                for (w, p) in weights.iter().zip(&points) {
                    for c in 0..d {
                        inside[c] += w * p[c];
                    }
                }
                assert!(hull_member(&ext, &inside).unwrap());
                let smaller: Vec<f64> =
                    inside.iter().map(|&c| c * rng.next_f64()).collect();
                assert!(hull_member(&ext, &smaller).unwrap());
            }
        }
    }

    fn fit_uniform(
        m: usize,
        d: usize,
        variant: CenterOutwardVariant,
        seed: u64,
    ) -> CenterOutwardModel<f64> {
        let cal = uniform_matrix(m, d, seed);
        let params = CenterOutwardParams {
            variant,
            ..CenterOutwardParams::default()
        };
        center_outward_fit(&cal, &params).unwrap()
    }

    #[test]
    fn fit_converges_and_assigns_quantiles_in_range() {
        let model = fit_uniform(120, 2, CenterOutwardVariant::default(), 11);
        assert!(model.diagnostics().converged);
        assert!(model.diagnostics().marginal_residual <= 1e-6);
        let k = model.params().spheres as f64;
        for &qj in model.quantiles() {
            assert!(qj >= 1.0 / k - 1e-12 && qj <= 1.0 + 1e-12);
        }
        assert_eq!(model.params().n_reference, Some(480));
    }

    #[test]
    fn fit_is_deterministic_in_the_seed() {
        let a = fit_uniform(60, 2, CenterOutwardVariant::default(), 2);
        let b = fit_uniform(60, 2, CenterOutwardVariant::default(), 2);
        assert_eq!(a, b);
        let x = [0.4, 0.6];
        assert_eq!(a.level(&x).unwrap(), b.level(&x).unwrap());
    }

    #[test]
    fn one_dimensional_quantiles_track_the_raw_ranking() {
        let cal = uniform_matrix(80, 1, 6);
        let model =
            center_outward_fit(&cal, &CenterOutwardParams::default()).unwrap();
        let mut pairs: Vec<(f64, f64)> = (0..80)
            .map(|j| (cal.values().get(j, 0), model.quantiles()[j]))
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for w in pairs.windows(2) {
            assert!(w[1].1 >= w[0].1 - 1e-9, "quantiles out of order: {w:?}");
        }
        // Predictions inherit the monotonicity through KNN averaging.
        let mut prev = -1.0;
        for i in 0..50 {
            let x = i as f64 / 49.0;
            let level = model.level(&[x]).unwrap().unwrap();
            assert!(level >= prev - 1e-12);
            prev = level;
        }
    }

    #[test]
    fn calibration_fractions_on_uniform_data_are_roughly_uniform() {
        let model = fit_uniform(300, 2, CenterOutwardVariant::default(), 8);
        let m = model.quantiles().len() as f64;
        for qt in [0.4, 0.6, 0.8] {
            let frac = model.quantiles().iter().filter(|&&q| q <= qt).count() as f64 / m;
            assert!(
                (frac - qt).abs() < 0.12,
                "fraction below {qt} was {frac}"
            );
        }
    }

    #[test]
    fn hull_variant_regions_are_nested_and_match_level() {
        let model = fit_uniform(40, 2, CenterOutwardVariant::Hull, 3);
        let mut rng = SplitMix64::new(77);
        for _ in 0..25 {
            let x = [rng.next_f64() * 1.4 - 0.2, rng.next_f64() * 1.4 - 0.2];
            let level = model.level(&x).unwrap().unwrap();
            let mut prev = true;
            for i in 0..=10 {
                let t = i as f64 / 10.0;
                let member = model.member_at(&x, t).unwrap();
                assert!(member == (level > t), "level disagrees at t = {t}");
                assert!(!member || prev, "region grew at t = {t}");
                prev = member;
            }
        }
    }

    #[test]
    fn hull_variant_rejects_high_dimensions_at_fit() {
        let cal = uniform_matrix(20, 5, 4);
        let params = CenterOutwardParams {
            variant: CenterOutwardVariant::Hull,
            ..CenterOutwardParams::<f64>::default()
        };
        assert!(center_outward_fit(&cal, &params).is_err());
    }

    #[test]
    fn knn_levels_decide_membership() {
        let model = fit_uniform(50, 2, CenterOutwardVariant::default(), 12);
        let x = [0.9, 0.9];
        let level = model.level(&x).unwrap().unwrap();
        assert!(model.member_at(&x, level - 0.01).unwrap());
        assert!(!model.member_at(&x, level).unwrap());
        assert!(model.member_at(&x, 1.5).is_err());
    }
}
