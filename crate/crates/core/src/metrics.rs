//! ROC-style metrics for scalar scores and for one-parameter region
//! families.
//!
//! Scalar AUROC uses the Mann-Whitney midrank statistic (ties count one
//! half). Region families are evaluated point by point on a `t` grid: each
//! `t` yields one (FPR, TPR) pair, the curve is closed with (0,0) and (1,1),
//! and the area comes from the trapezoid rule after sorting by FPR.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::combine::DetectorFamily;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::score_data::ScoreMatrix;

fn check_scores<T: Real>(name: &str, xs: &[T]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::invalid(format!("{name} scores must be nonempty")));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("{name} scores must be finite")));
    }
    Ok(())
}

/// AUROC of scalar scores where higher means more anomalous: the
/// probability that a random anomaly outscores a random ID sample, ties
/// counting one half. Midrank computation, `O((n+m) log(n+m))`.
pub fn auroc_scalar<T: Real>(id: &[T], ood: &[T]) -> Result<T> {
    check_scores("id", id)?;
    check_scores("ood", ood)?;
    let n = id.len();
    let m = ood.len();
    let mut all: Vec<(T, bool)> = Vec::with_capacity(n + m);
    all.extend(id.iter().map(|&v| (v, false)));
    all.extend(ood.iter().map(|&v| (v, true)));
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut rank_sum = T::zero(); // sum of midranks of anomaly samples
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // Run occupies ranks i+1 ..= j, so the midrank is (i + j + 1) / 2.
        let midrank = T::from_usize(i + j + 1).unwrap() / T::from_f64_c(2.0);
        let ood_in_run = all[i..j].iter().filter(|(_, is_ood)| *is_ood).count();
        rank_sum += midrank * T::from_usize(ood_in_run).unwrap();
        i = j;
    }
    let m_t = T::from_usize(m).unwrap();
    let u = rank_sum - m_t * (m_t + T::one()) / T::from_f64_c(2.0);
    Ok(u / (T::from_usize(n).unwrap() * m_t))
}

/// FPR at the loosest threshold that still reaches the requested TPR.
///
/// With `k = ceil(level * m)` anomalies required strictly above the
/// threshold, the threshold sits just below the k-th largest anomaly score
/// `v`, so the FPR is the fraction of ID scores `>= v`.
pub fn fpr_at_tpr<T: Real>(id: &[T], ood: &[T], level: T) -> Result<T> {
    check_scores("id", id)?;
    check_scores("ood", ood)?;
    if !(level > T::zero() && level <= T::one()) {
        return Err(Error::invalid(format!("tpr level must be in (0, 1], got {level}")));
    }
    let m = ood.len();
    let k = (level * T::from_usize(m).unwrap())
        .ceil()
        .to_usize()
        .unwrap()
        .clamp(1, m);
    let mut sorted = ood.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let v = sorted[k - 1];
    let above = id.iter().filter(|&&x| x >= v).count();
    Ok(T::from_usize(above).unwrap() / T::from_usize(id.len()).unwrap())
}

/// TPR at the tightest threshold whose FPR does not exceed the requested
/// level: with `j = floor(level * n)` ID samples allowed above, the
/// threshold is the (j+1)-th largest ID score and the TPR counts anomalies
/// strictly above it.
pub fn tpr_at_fpr<T: Real>(id: &[T], ood: &[T], level: T) -> Result<T> {
    check_scores("id", id)?;
    check_scores("ood", ood)?;
    if !(level >= T::zero() && level < T::one()) {
        return Err(Error::invalid(format!("fpr level must be in [0, 1), got {level}")));
    }
    let n = id.len();
    let j = (level * T::from_usize(n).unwrap())
        .floor()
        .to_usize()
        .unwrap()
        .min(n - 1);
    let mut sorted = id.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let tau = sorted[j];
    let above = ood.iter().filter(|&&x| x > tau).count();
    Ok(T::from_usize(above).unwrap() / T::from_usize(ood.len()).unwrap())
}

/// One point of a region-family ROC curve. Closure points carry no
/// parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint<T> {
    pub t: Option<T>,
    pub fpr: T,
    pub tpr: T,
}

/// ROC curve over a region family, closed with (0,0) and (1,1) and sorted
/// by FPR (TPR as tie-break).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve<T> {
    points: Vec<RocPoint<T>>,
}

impl<T: Real> RocCurve<T> {
    /// Closes and sorts a list of evaluated points.
    pub fn from_points(mut points: Vec<RocPoint<T>>) -> Self {
        points.push(RocPoint {
            t: None,
            fpr: T::zero(),
            tpr: T::zero(),
        });
        points.push(RocPoint {
            t: None,
            fpr: T::one(),
            tpr: T::one(),
        });
        points.sort_by(|a, b| {
            a.fpr
                .partial_cmp(&b.fpr)
                .unwrap()
                .then(a.tpr.partial_cmp(&b.tpr).unwrap())
        });
        RocCurve { points }
    }

    pub fn points(&self) -> &[RocPoint<T>] {
        &self.points
    }

    /// Trapezoid area under the curve.
    pub fn area(&self) -> T {
        let mut area = T::zero();
        let two = T::from_f64_c(2.0);
        for w in self.points.windows(2) {
            area += (w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) / two;
        }
        area
    }

    /// Smallest FPR among curve points reaching the requested TPR.
    pub fn fpr_at_tpr(&self, level: T) -> Result<T> {
        if !(level > T::zero() && level <= T::one()) {
            return Err(Error::invalid(format!("tpr level must be in (0, 1], got {level}")));
        }
        Ok(self
            .points
            .iter()
            .filter(|p| p.tpr >= level)
            .map(|p| p.fpr)
            .fold(T::one(), T::min))
    }

    /// Largest TPR among curve points within the requested FPR budget.
    pub fn tpr_at_fpr(&self, level: T) -> Result<T> {
        if !(level >= T::zero() && level < T::one()) {
            return Err(Error::invalid(format!("fpr level must be in [0, 1), got {level}")));
        }
        Ok(self
            .points
            .iter()
            .filter(|p| p.fpr <= level)
            .map(|p| p.tpr)
            .fold(T::zero(), T::max))
    }

    /// `t,fpr,tpr` rows; closure points leave `t` empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,fpr,tpr\n");
        for p in &self.points {
            match p.t {
                Some(t) => out.push_str(&format!("{},{},{}\n", t, p.fpr, p.tpr)),
                None => out.push_str(&format!(",{},{}\n", p.fpr, p.tpr)),
            }
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        crate::model_doc::write_atomic(path, self.to_csv().as_bytes())
    }
}

/// `k` evenly spaced values covering `[0, 1]` inclusive.
pub fn uniform_grid<T: Real>(k: usize) -> Vec<T> {
    assert!(k >= 2);
    let denom = T::from_usize(k - 1).unwrap();
    (0..k)
        .map(|i| T::from_usize(i).unwrap() / denom)
        .collect()
}

/// Default grid resolution for family curves.
pub const DEFAULT_GRID: usize = 1001;

fn check_names<T: Real>(detector: &dyn DetectorFamily<T>, m: &ScoreMatrix<T>) -> Result<()> {
    if detector.detector_names() != m.detector_names() {
        return Err(Error::NameMismatch(format!(
            "detector expects columns {:?}, matrix has {:?}",
            detector.detector_names(),
            m.detector_names()
        )));
    }
    Ok(())
}

/// Evaluates the detector's region family over `grid`, producing one (FPR,
/// TPR) point per parameter value.
///
/// When the detector exposes a scalar level, membership `level > t` is used
/// directly (identical decisions, far fewer membership calls); otherwise
/// every (row, t) pair goes through `member_at`.
pub fn family_roc<T: Real>(
    detector: &dyn DetectorFamily<T>,
    id_eval: &ScoreMatrix<T>,
    ood_eval: &ScoreMatrix<T>,
    grid: &[T],
) -> Result<RocCurve<T>> {
    check_names(detector, id_eval)?;
    check_names(detector, ood_eval)?;
    if grid.is_empty() {
        return Err(Error::invalid("parameter grid must be nonempty"));
    }
    if grid.iter().any(|t| !(*t >= T::zero() && *t <= T::one())) {
        return Err(Error::invalid("parameter grid values must lie in [0, 1]"));
    }
    let levels = |m: &ScoreMatrix<T>| -> Result<Option<Vec<T>>> {
        let mut out = Vec::with_capacity(m.n_rows());
        for r in 0..m.n_rows() {
            match detector.level(m.row(r))? {
                Some(v) => out.push(v),
                None => return Ok(None),
            }
        }
        Ok(Some(out))
    };
    let id_levels = levels(id_eval)?;
    let mut points = Vec::with_capacity(grid.len());
    match id_levels {
        Some(mut id_l) => {
            let mut ood_l = levels(ood_eval)?.expect("level availability is uniform");
            id_l.sort_by(|a, b| a.partial_cmp(b).unwrap());
            ood_l.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let frac_above = |sorted: &[T], t: T| {
                let above = sorted.partition_point(|&v| v <= t);
                T::from_usize(sorted.len() - above).unwrap() / T::from_usize(sorted.len()).unwrap()
            };
            for &t in grid {
                points.push(RocPoint {
                    t: Some(t),
                    fpr: frac_above(&id_l, t),
                    tpr: frac_above(&ood_l, t),
                });
            }
        }
        None => {
            for &t in grid {
                let count = |m: &ScoreMatrix<T>| -> Result<usize> {
                    let mut c = 0;
                    for r in 0..m.n_rows() {
                        if detector.member_at(m.row(r), t)? {
                            c += 1;
                        }
                    }
                    Ok(c)
                };
                let fp = count(id_eval)?;
                let tp = count(ood_eval)?;
                points.push(RocPoint {
                    t: Some(t),
                    fpr: T::from_usize(fp).unwrap() / T::from_usize(id_eval.n_rows()).unwrap(),
                    tpr: T::from_usize(tp).unwrap() / T::from_usize(ood_eval.n_rows()).unwrap(),
                });
            }
        }
    }
    Ok(RocCurve::from_points(points))
}

/// Area under [`family_roc`] on the given grid.
pub fn auroc_family<T: Real>(
    detector: &dyn DetectorFamily<T>,
    id_eval: &ScoreMatrix<T>,
    ood_eval: &ScoreMatrix<T>,
    grid: &[T],
) -> Result<T> {
    Ok(family_roc(detector, id_eval, ood_eval, grid)?.area())
}
