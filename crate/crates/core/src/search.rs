//! Detector subset search: exhaustive pair ranking, logistic-regression
//! sensitivity analysis, beam search, and proxy-based selection.
//!
//! Every strategy follows the same protocol: fit the requested combiner on
//! the calibration columns of a candidate subset, score it by family AUROC
//! on held-out ID/OOD rows, and break ranking ties lexicographically on
//! the sorted detector names so runs are reproducible regardless of
//! evaluation order.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::combine::CombinerSpec;
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::metrics::{self, DEFAULT_GRID};
use crate::rng::SplitMix64;
use crate::scalar::{lower_quantile, Real};
use crate::score_data::ScoreMatrix;

/// Subsets larger than this are outside every strategy's contract.
pub const MAX_SUBSET: usize = 4;

pub const DEFAULT_SENSITIVITY_SAMPLES: usize = 1000;
pub const DEFAULT_PERCENTILE: f64 = 90.0;
pub const DEFAULT_BEAM_WIDTH: usize = 3;
pub const DEFAULT_BEAM_DEPTH: usize = 4;
pub const DEFAULT_TOP_FRACTION: f64 = 0.05;

// ---------------------------------------------------------------------------
// Candidates and evaluation records

/// A sorted, duplicate-free set of 1 to [`MAX_SUBSET`] detector names.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CandidateSet {
    names: Vec<String>,
}

impl CandidateSet {
    pub fn new(mut names: Vec<String>) -> Result<Self> {
        names.sort();
        if names.is_empty() || names.len() > MAX_SUBSET {
            return Err(Error::invalid(format!(
                "candidate sets hold 1..={MAX_SUBSET} detectors, got {}",
                names.len()
            )));
        }
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("candidate set has duplicate detectors"));
        }
        Ok(CandidateSet { names })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Stable single-string form, used as the CSV key.
    pub fn key(&self) -> String {
        self.names.join("+")
    }
}

impl fmt::Display for CandidateSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

/// Which held-out rows an AUROC was computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Val,
    Proxy,
    Test,
}

impl SplitTag {
    pub fn name(&self) -> &'static str {
        match self {
            SplitTag::Val => "val",
            SplitTag::Proxy => "proxy",
            SplitTag::Test => "test",
        }
    }
}

/// One candidate subset scored on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord<T> {
    pub candidate: CandidateSet,
    pub combiner: String,
    pub auroc: T,
    pub split: SplitTag,
}

/// Fits `spec` on the calibration columns named by `names` and returns the
/// family AUROC over the evaluation rows.
pub fn eval_subset<T: Real>(
    cal: &ScoreMatrix<T>,
    id_eval: &ScoreMatrix<T>,
    ood_eval: &ScoreMatrix<T>,
    spec: &CombinerSpec<T>,
    names: &[String],
    grid: &[T],
) -> Result<T> {
    let detector = spec.fit(&cal.select_columns(names)?)?;
    metrics::auroc_family(
        detector.as_ref(),
        &id_eval.select_columns(names)?,
        &ood_eval.select_columns(names)?,
        grid,
    )
}

fn eval_record<T: Real>(
    cal: &ScoreMatrix<T>,
    id_eval: &ScoreMatrix<T>,
    ood_eval: &ScoreMatrix<T>,
    spec: &CombinerSpec<T>,
    names: Vec<String>,
    grid: &[T],
    split: SplitTag,
) -> Result<EvalRecord<T>> {
    let auroc = eval_subset(cal, id_eval, ood_eval, spec, &names, grid)?;
    Ok(EvalRecord {
        candidate: CandidateSet::new(names)?,
        combiner: spec.name().to_string(),
        auroc,
        split,
    })
}

/// Descending AUROC, ascending candidate names on ties.
fn rank<T: Real>(records: &mut [EvalRecord<T>]) {
    records.sort_by(|a, b| {
        b.auroc
            .partial_cmp(&a.auroc)
            .unwrap()
            .then_with(|| a.candidate.cmp(&b.candidate))
    });
}

// ---------------------------------------------------------------------------
// Exhaustive pairs

/// Evaluates every detector pair and returns the records ranked best
/// first. `C(d, 2)` records for `d` detectors.
pub fn best_pairs<T: Real>(
    cal: &ScoreMatrix<T>,
    val_id: &ScoreMatrix<T>,
    val_ood: &ScoreMatrix<T>,
    spec: &CombinerSpec<T>,
) -> Result<Vec<EvalRecord<T>>> {
    let names = cal.detector_names();
    let d = names.len();
    if d < 2 {
        return Err(Error::invalid("pair search needs at least 2 detectors"));
    }
    let grid = metrics::uniform_grid::<T>(DEFAULT_GRID);
    let mut records = Vec::with_capacity(d * (d - 1) / 2);
    for i in 0..d {
        for j in (i + 1)..d {
            records.push(eval_record(
                cal,
                val_id,
                val_ood,
                spec,
                vec![names[i].clone(), names[j].clone()],
                &grid,
                SplitTag::Val,
            )?);
        }
    }
    rank(&mut records);
    Ok(records)
}

/// First `ceil(frac * len)` records of an already ranked list.
pub fn top_fraction<T: Real>(ranked: &[EvalRecord<T>], frac: f64) -> Result<Vec<EvalRecord<T>>> {
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(Error::invalid(format!("fraction must be in (0, 1], got {frac}")));
    }
    let k = ((frac * ranked.len() as f64).ceil() as usize).min(ranked.len());
    Ok(ranked[..k].to_vec())
}

// ---------------------------------------------------------------------------
// Logistic regression (IRLS)

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    /// Intercept first, then one coefficient per design column.
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

const RIDGE: f64 = 1e-4;
const IRLS_TOL: f64 = 1e-8;
const IRLS_MAX_ITER: usize = 100;

/// L2-regularized logistic regression by iteratively reweighted least
/// squares. The ridge weight 1e-4 applies to every coefficient including
/// the intercept, which also makes each Newton system well posed.
pub fn logistic_regression(x: &Mat<f64>, y: &[bool]) -> Result<LogisticFit> {
    let n = x.rows();
    let d = x.cols();
    if y.len() != n {
        return Err(Error::invalid("label length does not match design rows"));
    }
    if n < d + 1 {
        return Err(Error::FitFailed(format!(
            "logistic regression needs at least {} rows, got {n}",
            d + 1
        )));
    }
    if x.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("design matrix must be finite"));
    }
    let positives = y.iter().filter(|&&b| b).count();
    if positives == 0 || positives == n {
        return Err(Error::FitFailed("labels contain a single class".into()));
    }

    let p = d + 1;
    let mut beta = vec![0.0f64; p];
    let mut features = vec![0.0f64; p];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < IRLS_MAX_ITER {
        iterations += 1;
        let mut normal = vec![vec![0.0f64; p]; p];
        let mut rhs = vec![0.0f64; p];
        for r in 0..n {
            features[0] = 1.0;
            features[1..].copy_from_slice(x.row(r));
            let eta: f64 = features.iter().zip(&beta).map(|(f, b)| f * b).sum();
            let mu = 1.0 / (1.0 + (-eta).exp());
            let w = (mu * (1.0 - mu)).max(1e-10);
            let target = if y[r] { 1.0 } else { 0.0 };
            let z = eta + (target - mu) / w;
            for i in 0..p {
                let wf = w * features[i];
                for j in i..p {
                    normal[i][j] += wf * features[j];
                }
                rhs[i] += wf * z;
            }
        }
        for i in 0..p {
            normal[i][i] += RIDGE;
            for j in 0..i {
                normal[i][j] = normal[j][i];
            }
        }
        let next = solve_symmetric(normal, rhs)?;
        let delta = next
            .iter()
            .zip(&beta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        beta = next;
        if delta < IRLS_TOL {
            converged = true;
            break;
        }
    }
    Ok(LogisticFit {
        coefficients: beta,
        iterations,
        converged,
    })
}

/// Gaussian elimination with partial pivoting for the small IRLS systems.
fn solve_symmetric(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot_row][col].abs() < 1e-12 {
            return Err(Error::FitFailed(
                "rank-deficient design beyond regularization rescue".into(),
            ));
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for r in (col + 1)..n {
            let factor = a[r][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                a[r][c] -= factor * a[col][c];
            }
            b[r] -= factor * b[col];
        }
    }
    let mut x = vec![0.0f64; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for c in (col + 1)..n {
            acc -= a[col][c] * x[c];
        }
        x[col] = acc / a[col][col];
    }
    Ok(x)
}

// ---------------------------------------------------------------------------
// Sensitivity analysis

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport<T> {
    pub detector_names: Vec<String>,
    /// Regression coefficient per detector, aligned with `detector_names`.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// The four detectors with the largest coefficients.
    pub top_detectors: Vec<String>,
    /// All 11 subsets of the top four with size 2 to 4.
    pub candidate_sets: Vec<CandidateSet>,
    pub evaluated: Vec<EvalRecord<T>>,
    pub iterations: usize,
    pub converged: bool,
}

/// Scores random detector subsets, labels the ones whose AUROC beats the
/// `percentile` threshold, regresses the labels on subset membership, and
/// returns candidates built from the four highest-coefficient detectors.
///
/// Subsets have 1 to 4 members (size uniform, then a uniform subset of
/// that size) and are deduplicated by resampling. When fewer distinct
/// subsets exist than requested the whole pool is enumerated instead, so
/// the draw cannot stall.
pub fn sensitivity_search<T: Real>(
    cal: &ScoreMatrix<T>,
    val_id: &ScoreMatrix<T>,
    val_ood: &ScoreMatrix<T>,
    spec: &CombinerSpec<T>,
    n_samples: usize,
    percentile: f64,
    seed: u64,
) -> Result<SensitivityReport<T>> {
    let names = cal.detector_names();
    let d = names.len();
    if d < MAX_SUBSET {
        return Err(Error::invalid(format!(
            "sensitivity search needs at least {MAX_SUBSET} detectors, got {d}"
        )));
    }
    if n_samples < 100 {
        return Err(Error::invalid("sensitivity search needs at least 100 samples"));
    }
    if !(0.0..100.0).contains(&percentile) {
        return Err(Error::invalid(format!(
            "percentile must be in [0, 100), got {percentile}"
        )));
    }

    let pool: usize = (1..=MAX_SUBSET).map(|k| binomial(d, k)).sum();
    let subsets = if pool <= n_samples {
        enumerate_subsets(d)
    } else {
        sample_subsets(d, n_samples, seed)
    };

    let grid = metrics::uniform_grid::<T>(DEFAULT_GRID);
    let mut evaluated = Vec::with_capacity(subsets.len());
    let mut design = Vec::with_capacity(subsets.len() * d);
    let mut z = Vec::with_capacity(subsets.len());
    for subset in &subsets {
        let subset_names: Vec<String> = subset.iter().map(|&i| names[i].clone()).collect();
        let record = eval_record(
            cal,
            val_id,
            val_ood,
            spec,
            subset_names,
            &grid,
            SplitTag::Val,
        )?;
        z.push(record.auroc.as_f64());
        evaluated.push(record);
        let mut row = vec![0.0f64; d];
        for &i in subset {
            row[i] = 1.0;
        }
        design.extend(row);
    }

    let mut sorted_z = z.clone();
    sorted_z.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let threshold = lower_quantile(&sorted_z, percentile / 100.0);
    let labels: Vec<bool> = z.iter().map(|&zi| zi > threshold).collect();

    let design = Mat::from_vec(subsets.len(), d, design);
    let fit = logistic_regression(&design, &labels)?;
    let intercept = fit.coefficients[0];
    let coefficients = fit.coefficients[1..].to_vec();

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        coefficients[j]
            .partial_cmp(&coefficients[i])
            .unwrap()
            .then_with(|| names[i].cmp(&names[j]))
    });
    let mut top_detectors: Vec<String> =
        order[..MAX_SUBSET].iter().map(|&i| names[i].clone()).collect();
    top_detectors.sort();

    let mut candidate_sets = Vec::with_capacity(11);
    for size in 2..=MAX_SUBSET {
        for combo in combinations(top_detectors.len(), size) {
            let set: Vec<String> = combo.iter().map(|&i| top_detectors[i].clone()).collect();
            candidate_sets.push(CandidateSet::new(set)?);
        }
    }

    Ok(SensitivityReport {
        detector_names: names.to_vec(),
        coefficients,
        intercept,
        top_detectors,
        candidate_sets,
        evaluated,
        iterations: fit.iterations,
        converged: fit.converged,
    })
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut acc = 1usize;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// All index combinations of one size, in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(k);
    fn recurse(n: usize, k: usize, start: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        for i in start..n {
            current.push(i);
            recurse(n, k, i + 1, current, out);
            current.pop();
        }
    }
    recurse(n, k, 0, &mut current, &mut out);
    out
}

fn enumerate_subsets(d: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for size in 1..=MAX_SUBSET.min(d) {
        out.extend(combinations(d, size));
    }
    out
}

fn sample_subsets(d: usize, n_samples: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = SplitMix64::new(seed);
    let mut seen: HashSet<Vec<usize>> = HashSet::with_capacity(n_samples);
    let mut out = Vec::with_capacity(n_samples);
    while out.len() < n_samples {
        let size = 1 + rng.next_below(MAX_SUBSET as u64) as usize;
        let mut subset = Vec::with_capacity(size);
        while subset.len() < size {
            let idx = rng.next_below(d as u64) as usize;
            if !subset.contains(&idx) {
                subset.push(idx);
            }
        }
        subset.sort_unstable();
        if seen.insert(subset.clone()) {
            out.push(subset);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Beam search

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamLevel<T> {
    /// Tuple size at this level.
    pub level: usize,
    /// The `width` tuples kept for extension, ranked best first.
    pub kept: Vec<EvalRecord<T>>,
    /// Best tuple of this level.
    pub best: EvalRecord<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamReport<T> {
    pub width: usize,
    pub depth: usize,
    /// Evaluations the beam performed: `d` singletons plus
    /// `kept * (d - i + 1)` extensions at each level `i >= 2`, counting
    /// repeats when different parents extend to the same tuple.
    pub evaluated_count: usize,
    pub levels: Vec<BeamLevel<T>>,
    pub best_overall: EvalRecord<T>,
}

/// Greedy beam search over detector tuples.
///
/// Level 1 ranks all singletons and keeps the top `width`; every further
/// level extends each kept tuple by every absent detector. The best tuple
/// ever evaluated is tracked across levels; a tie on AUROC keeps the
/// lexicographically smaller tuple.
pub fn beam_search<T: Real>(
    cal: &ScoreMatrix<T>,
    val_id: &ScoreMatrix<T>,
    val_ood: &ScoreMatrix<T>,
    spec: &CombinerSpec<T>,
    width: usize,
    depth: usize,
) -> Result<BeamReport<T>> {
    let names = cal.detector_names();
    let d = names.len();
    if width == 0 || depth == 0 {
        return Err(Error::invalid("beam width and depth must be positive"));
    }
    if depth > d {
        return Err(Error::invalid(format!(
            "beam depth {depth} exceeds the {d} available detectors"
        )));
    }
    if depth > MAX_SUBSET {
        return Err(Error::invalid(format!(
            "beam depth {depth} exceeds the maximum subset size {MAX_SUBSET}"
        )));
    }

    let grid = metrics::uniform_grid::<T>(DEFAULT_GRID);
    // Extensions from different parents revisit tuples; cache their AUROC
    // but count every visit toward evaluated_count.
    let mut cache: HashMap<Vec<String>, T> = HashMap::new();
    let mut evaluated_count = 0usize;
    let mut evaluate = |tuple: &[String], count: &mut usize| -> Result<EvalRecord<T>> {
        *count += 1;
        let auroc = match cache.get(tuple) {
            Some(&a) => a,
            None => {
                let a = eval_subset(cal, val_id, val_ood, spec, tuple, &grid)?;
                cache.insert(tuple.to_vec(), a);
                a
            }
        };
        Ok(EvalRecord {
            candidate: CandidateSet::new(tuple.to_vec())?,
            combiner: spec.name().to_string(),
            auroc,
            split: SplitTag::Val,
        })
    };

    let mut levels = Vec::with_capacity(depth);
    let mut records: Vec<EvalRecord<T>> = names
        .iter()
        .map(|n| evaluate(std::slice::from_ref(n), &mut evaluated_count))
        .collect::<Result<_>>()?;
    rank(&mut records);
    let mut best_overall = records[0].clone();
    let mut kept: Vec<EvalRecord<T>> = records.iter().take(width).cloned().collect();
    levels.push(BeamLevel {
        level: 1,
        kept: kept.clone(),
        best: records[0].clone(),
    });

    for level in 2..=depth {
        let mut level_records: Vec<EvalRecord<T>> = Vec::new();
        let mut seen: HashSet<Vec<String>> = HashSet::new();
        for parent in &kept {
            for name in names {
                if parent.candidate.names().contains(name) {
                    continue;
                }
                let mut tuple = parent.candidate.names().to_vec();
                tuple.push(name.clone());
                tuple.sort();
                let record = evaluate(&tuple, &mut evaluated_count)?;
                if seen.insert(tuple) {
                    level_records.push(record);
                }
            }
        }
        rank(&mut level_records);
        let best = level_records[0].clone();
        if best.auroc > best_overall.auroc
            || (best.auroc == best_overall.auroc && best.candidate < best_overall.candidate)
        {
            best_overall = best.clone();
        }
        kept = level_records.iter().take(width).cloned().collect();
        levels.push(BeamLevel {
            level,
            kept: kept.clone(),
            best,
        });
    }

    Ok(BeamReport {
        width,
        depth,
        evaluated_count,
        levels,
        best_overall,
    })
}

// ---------------------------------------------------------------------------
// Proxy selection

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxySelection<T> {
    /// Every candidate ranked by AUROC against the proxy OOD rows.
    pub proxy_ranking: Vec<EvalRecord<T>>,
    /// The `top_k` proxy survivors re-ranked on the validation OOD rows.
    pub val_ranking: Vec<EvalRecord<T>>,
    pub chosen: CandidateSet,
}

/// Ranks candidates against proxy OOD scores, keeps the best `top_k`, and
/// picks the winner among those on real validation OOD scores.
pub fn proxy_select<T: Real>(
    candidates: &[CandidateSet],
    cal: &ScoreMatrix<T>,
    proxy_ood: &ScoreMatrix<T>,
    val_id: &ScoreMatrix<T>,
    val_ood: &ScoreMatrix<T>,
    spec: &CombinerSpec<T>,
    top_k: usize,
) -> Result<ProxySelection<T>> {
    if candidates.is_empty() {
        return Err(Error::invalid("proxy selection needs at least one candidate"));
    }
    if top_k == 0 {
        return Err(Error::invalid("top_k must be positive"));
    }
    if proxy_ood.origins().iter().any(|o| o == crate::score_data::ID_ORIGIN) {
        return Err(Error::invalid("proxy matrix must not contain ID rows"));
    }
    let grid = metrics::uniform_grid::<T>(DEFAULT_GRID);
    let mut proxy_ranking = Vec::with_capacity(candidates.len());
    for candidate in candidates {
        proxy_ranking.push(eval_record(
            cal,
            val_id,
            proxy_ood,
            spec,
            candidate.names().to_vec(),
            &grid,
            SplitTag::Proxy,
        )?);
    }
    rank(&mut proxy_ranking);

    let survivors = &proxy_ranking[..top_k.min(proxy_ranking.len())];
    let mut val_ranking = Vec::with_capacity(survivors.len());
    for record in survivors {
        val_ranking.push(eval_record(
            cal,
            val_id,
            val_ood,
            spec,
            record.candidate.names().to_vec(),
            &grid,
            SplitTag::Val,
        )?);
    }
    rank(&mut val_ranking);
    let chosen = val_ranking[0].candidate.clone();
    Ok(ProxySelection {
        proxy_ranking,
        val_ranking,
        chosen,
    })
}

/// Pareto table rows as CSV: one line per set with its AUROC against the
/// near and far OOD sources.
pub fn pareto_csv<T: Real>(rows: &[(String, T, T)]) -> String {
    let mut out = String::from("set,near_auroc,far_auroc\n");
    for (key, near, far) in rows {
        out.push_str(&format!("{key},{near},{far}\n"));
    }
    out
}
