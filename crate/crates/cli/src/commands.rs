//! Subcommand implementations and the JSON report shapes they emit.
//!
//! Reports are deterministic byte-for-byte given the same inputs and seed:
//! every collection is emitted in a defined order and all files are written
//! atomically.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use oodfuse::center_outward::{CenterOutwardParams, CenterOutwardVariant};
use oodfuse::combine::{CombinerSpec, VoteRule};
use oodfuse::copula::{CopulaFamily, MarginalFamily};
use oodfuse::metrics;
use oodfuse::model_doc::{write_atomic, FittedModel, ModelDocument, SCHEMA_VERSION};
use oodfuse::score_data::{split_id, split_ood, SplitSpec, ID_ORIGIN};
use oodfuse::search::{self, CandidateSet, EvalRecord, SplitTag};
use oodfuse::special::norm_cdf;
use oodfuse::synth::{gen_gaussian_scores, GaussianScoreSpec};
use oodfuse::{CombinerSpec64, ScoreMatrix64};

use crate::config::{CommaList, ConfigFile};
use crate::{CommonArgs, EvalArgs, SearchArgs, SplitArgs, SynthArgs};

// ---------------------------------------------------------------------------
// Shared resolution and report plumbing

/// Every knob `eval` and `search` share, after flag/config/default
/// resolution. Echoed verbatim into reports.
#[derive(Debug, Clone, Serialize)]
struct Settings {
    combiner: String,
    columns: Option<Vec<String>>,
    seed: u64,
    grid: usize,
    id_fractions: Vec<f64>,
    ood_fractions: Vec<f64>,
    vote_rule: String,
    marginal: String,
    copula_family: Option<String>,
    co_n_reference: Option<usize>,
    co_spheres: usize,
    co_epsilon: f64,
    co_variant: String,
    co_k_neighbors: usize,
}

fn resolve_settings(args: &CommonArgs, cfg: &ConfigFile) -> Result<Settings> {
    let co = CenterOutwardParams::<f64>::default();
    let default_k = match co.variant {
        CenterOutwardVariant::Knn { k_neighbors } => k_neighbors,
        CenterOutwardVariant::Hull => unreachable!("default variant is knn"),
    };
    let grid = cfg.resolve(args.grid, "grid", metrics::DEFAULT_GRID)?;
    if grid < 2 {
        bail!("--grid must be at least 2, got {grid}");
    }
    Ok(Settings {
        combiner: cfg.resolve(args.combiner.clone(), "combiner", "ecdf".to_string())?,
        columns: cfg
            .resolve_opt(args.columns.clone(), "columns")?
            .map(|list| list.0),
        seed: cfg.resolve(args.seed, "seed", 42)?,
        grid,
        id_fractions: cfg
            .resolve(
                args.id_fractions.clone(),
                "id-fractions",
                CommaList(vec![0.25, 0.25, 0.5]),
            )?
            .0,
        ood_fractions: cfg
            .resolve(
                args.ood_fractions.clone(),
                "ood-fractions",
                CommaList(vec![0.5, 0.5]),
            )?
            .0,
        vote_rule: cfg.resolve(args.vote_rule.clone(), "vote-rule", "loose".to_string())?,
        marginal: cfg.resolve(args.marginal.clone(), "marginal", "uniform".to_string())?,
        copula_family: cfg.resolve_opt(args.copula_family.clone(), "copula-family")?,
        co_n_reference: cfg.resolve_opt(args.co_n_reference, "co-n-reference")?,
        co_spheres: cfg.resolve(args.co_spheres, "co-spheres", co.spheres)?,
        co_epsilon: cfg.resolve(args.co_epsilon, "co-epsilon", co.epsilon)?,
        co_variant: cfg.resolve(args.co_variant.clone(), "co-variant", "knn".to_string())?,
        co_k_neighbors: cfg.resolve(args.co_k_neighbors, "co-k-neighbors", default_k)?,
    })
}

fn build_combiner(s: &Settings) -> Result<CombinerSpec64> {
    match s.combiner.as_str() {
        "vote" => Ok(CombinerSpec::Vote {
            rule: VoteRule::parse(&s.vote_rule)?,
        }),
        "ecdf" => Ok(CombinerSpec::Ecdf),
        "copula" => Ok(CombinerSpec::Copula {
            marginal: MarginalFamily::parse(&s.marginal)?,
            family: s
                .copula_family
                .as_deref()
                .map(CopulaFamily::parse)
                .transpose()?,
        }),
        "centerout" => {
            let variant = match s.co_variant.as_str() {
                "knn" => CenterOutwardVariant::Knn {
                    k_neighbors: s.co_k_neighbors,
                },
                "hull" => CenterOutwardVariant::Hull,
                other => bail!("unknown center-outward variant {other:?} (expected knn or hull)"),
            };
            let defaults = CenterOutwardParams::<f64>::default();
            Ok(CombinerSpec::CenterOutward(CenterOutwardParams {
                n_reference: s.co_n_reference,
                spheres: s.co_spheres,
                seed: s.seed,
                epsilon: s.co_epsilon,
                sinkhorn_tol: defaults.sinkhorn_tol,
                max_iter: defaults.max_iter,
                variant,
            }))
        }
        other => bail!("unknown combiner {other:?} (expected vote, ecdf, copula, centerout)"),
    }
}

fn load_matrix(path: &Path) -> Result<ScoreMatrix64> {
    ScoreMatrix64::load(path).with_context(|| format!("loading {}", path.display()))
}

fn load_id_file(path: &Path) -> Result<ScoreMatrix64> {
    let m = load_matrix(path)?;
    if !m.is_all_id() {
        bail!(
            "{}: expected an ID score file (every origin {ID_ORIGIN:?})",
            path.display()
        );
    }
    Ok(m)
}

fn load_ood_file(path: &Path) -> Result<ScoreMatrix64> {
    let m = load_matrix(path)?;
    if !m.is_all_ood() {
        bail!("{}: expected an OOD score file, found ID rows", path.display());
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, Serialize)]
struct SplitSizes {
    id_cal: usize,
    id_val: usize,
    id_test: usize,
    ood_val: usize,
    ood_test: usize,
}

struct EvalData {
    cal: ScoreMatrix64,
    id_val: ScoreMatrix64,
    id_test: ScoreMatrix64,
    ood_val: ScoreMatrix64,
    ood_test: ScoreMatrix64,
}

fn split_eval_data(
    id: &ScoreMatrix64,
    ood: &ScoreMatrix64,
    s: &Settings,
) -> Result<(EvalData, SplitSizes)> {
    let id_bundle = split_id(id, &SplitSpec::new(s.id_fractions.clone(), s.seed)?)?;
    let ood_bundle = split_ood(ood, &SplitSpec::new(s.ood_fractions.clone(), s.seed)?)?;
    let data = EvalData {
        cal: id.subset_rows(id_bundle.part("cal")?)?,
        id_val: id.subset_rows(id_bundle.part("val")?)?,
        id_test: id.subset_rows(id_bundle.part("test")?)?,
        ood_val: ood.subset_rows(ood_bundle.part("val")?)?,
        ood_test: ood.subset_rows(ood_bundle.part("test")?)?,
    };
    let sizes = SplitSizes {
        id_cal: data.cal.n_rows(),
        id_val: data.id_val.n_rows(),
        id_test: data.id_test.n_rows(),
        ood_val: data.ood_val.n_rows(),
        ood_test: data.ood_test.n_rows(),
    };
    Ok((data, sizes))
}

#[derive(Serialize)]
struct Report<C: Serialize, R: Serialize> {
    schema_version: u32,
    command: &'static str,
    config: C,
    results: R,
}

fn write_report<R: Serialize>(path: &Path, report: &R) -> Result<()> {
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    write_atomic(path, json.as_bytes())?;
    Ok(())
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

// ---------------------------------------------------------------------------
// split

pub fn cmd_split(args: SplitArgs) -> Result<()> {
    let cfg = ConfigFile::load(args.config.as_deref())?;
    let seed = cfg.resolve(args.seed, "seed", 42)?;
    let (path, is_id) = match (&args.id, &args.ood) {
        (Some(p), None) => (p, true),
        (None, Some(p)) => (p, false),
        _ => bail!("pass exactly one of --id or --ood"),
    };
    let (matrix, spec) = if is_id {
        let fractions = cfg
            .resolve(args.fractions.clone(), "id-fractions", CommaList(vec![0.25, 0.25, 0.5]))?
            .0;
        (load_id_file(path)?, SplitSpec::new(fractions, seed)?)
    } else {
        let fractions = cfg
            .resolve(args.fractions.clone(), "ood-fractions", CommaList(vec![0.5, 0.5]))?
            .0;
        (load_ood_file(path)?, SplitSpec::new(fractions, seed)?)
    };
    let bundle = if is_id {
        split_id(&matrix, &spec)?
    } else {
        split_ood(&matrix, &spec)?
    };
    for (name, rows) in bundle.parts() {
        let out = PathBuf::from(format!("{}_{}.csv", args.out_prefix.display(), name));
        matrix.subset_rows(rows)?.save(&out)?;
        println!("{name}: {} rows -> {}", rows.len(), out.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// eval

#[derive(Serialize)]
struct EvalEcho {
    id: String,
    ood: String,
    out: String,
    roc_out: Option<String>,
    save_model: Option<String>,
    settings: Settings,
}

#[derive(Serialize)]
struct IndividualMetric {
    column: String,
    auroc: f64,
}

#[derive(Serialize)]
struct FamilyMetrics {
    auroc: f64,
    fpr_at_95tpr: f64,
    tpr_at_5fpr: f64,
}

#[derive(Serialize)]
struct EvalResults {
    splits: SplitSizes,
    individual: Vec<IndividualMetric>,
    family: FamilyMetrics,
}

pub fn cmd_eval(args: EvalArgs) -> Result<()> {
    let cfg = ConfigFile::load(args.common.config.as_deref())?;
    let mut settings = resolve_settings(&args.common, &cfg)?;
    let id_full = load_id_file(&args.common.id)?;
    let ood_full = load_ood_file(&args.common.ood)?;
    let columns = settings
        .columns
        .clone()
        .unwrap_or_else(|| id_full.detector_names().to_vec());
    let id_m = id_full.select_columns(&columns)?;
    let ood_m = ood_full.select_columns(&columns)?;
    settings.columns = Some(columns.clone());

    let spec = build_combiner(&settings)?;
    let (data, sizes) = split_eval_data(&id_m, &ood_m, &settings)?;
    let grid = metrics::uniform_grid::<f64>(settings.grid);

    let model = FittedModel::fit(&spec, &data.cal)?;
    let curve = metrics::family_roc(&model, &data.id_test, &data.ood_test, &grid)?;
    let family = FamilyMetrics {
        auroc: curve.area(),
        fpr_at_95tpr: curve.fpr_at_tpr(0.95)?,
        tpr_at_5fpr: curve.tpr_at_fpr(0.05)?,
    };
    let mut individual = Vec::with_capacity(columns.len());
    for (c, column) in columns.iter().enumerate() {
        let auroc =
            metrics::auroc_scalar(&data.id_test.column(c), &data.ood_test.column(c))?;
        individual.push(IndividualMetric {
            column: column.clone(),
            auroc,
        });
    }

    if let Some(path) = &args.roc_out {
        curve.save_csv(path)?;
    }
    if let Some(path) = &args.save_model {
        ModelDocument::new(model).save(path)?;
    }

    let report = Report {
        schema_version: SCHEMA_VERSION,
        command: "eval",
        config: EvalEcho {
            id: display(&args.common.id),
            ood: display(&args.common.ood),
            out: display(&args.out),
            roc_out: args.roc_out.as_deref().map(display),
            save_model: args.save_model.as_deref().map(display),
            settings,
        },
        results: EvalResults {
            splits: sizes,
            individual,
            family,
        },
    };
    write_report(&args.out, &report)?;
    println!(
        "family auroc {:.6}, fpr@95tpr {:.6}, tpr@5fpr {:.6}",
        report.results.family.auroc,
        report.results.family.fpr_at_95tpr,
        report.results.family.tpr_at_5fpr
    );
    println!("report -> {}", args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// search

#[derive(Debug, Clone, Serialize)]
struct SearchSettings {
    strategy: String,
    top_frac: f64,
    beam_width: usize,
    beam_depth: usize,
    samples: usize,
    percentile: f64,
    top_k: usize,
}

#[derive(Serialize)]
struct SearchEcho {
    id: String,
    ood: String,
    proxy: Option<String>,
    out: String,
    pareto_near: Option<String>,
    pareto_far: Option<String>,
    pareto_out: Option<String>,
    final_eval: bool,
    settings: Settings,
    search: SearchSettings,
}

#[derive(Serialize)]
struct PairsOutcome {
    ranked: Vec<EvalRecord<f64>>,
    kept: Vec<EvalRecord<f64>>,
}

#[derive(Serialize)]
struct SelectedOutcome {
    set: Vec<String>,
    key: String,
    val_auroc: f64,
}

#[derive(Serialize)]
struct ParetoEcho {
    near: String,
    far: String,
    out: String,
    rows: usize,
}

#[derive(Serialize)]
struct SearchResults {
    splits: SplitSizes,
    strategy: String,
    /// Survivor subsets in rank order, as `+`-joined keys.
    candidates: Vec<String>,
    pairs: Option<PairsOutcome>,
    sensitivity: Option<search::SensitivityReport<f64>>,
    beam: Option<search::BeamReport<f64>>,
    proxy: Option<search::ProxySelection<f64>>,
    selected: SelectedOutcome,
    pareto: Option<ParetoEcho>,
}

/// Search must never select on test rows. Files whose stem carries a
/// `test` component are refused unless the caller owns up with
/// `--final-eval`.
fn refuse_test_tagged(paths: &[(&str, &Path)], final_eval: bool) -> Result<()> {
    if final_eval {
        return Ok(());
    }
    for (flag, path) in paths {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        if stem
            .split(['_', '-', '.'])
            .any(|part| part.eq_ignore_ascii_case("test"))
        {
            bail!(
                "--{flag} {}: the file name is tagged as test data and search selects models; \
                 pass --final-eval to override",
                path.display()
            );
        }
    }
    Ok(())
}

fn rank_records(records: &mut [EvalRecord<f64>]) {
    records.sort_by(|a, b| {
        b.auroc
            .partial_cmp(&a.auroc)
            .unwrap()
            .then_with(|| a.candidate.cmp(&b.candidate))
    });
}

fn default_pareto_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    out.with_file_name(format!("{stem}_pareto.csv"))
}

pub fn cmd_search(args: SearchArgs) -> Result<()> {
    let cfg = ConfigFile::load(args.common.config.as_deref())?;
    let mut settings = resolve_settings(&args.common, &cfg)?;
    let search_settings = SearchSettings {
        strategy: cfg.resolve(args.strategy.clone(), "strategy", "pairs".to_string())?,
        top_frac: cfg.resolve(args.top_frac, "top-frac", search::DEFAULT_TOP_FRACTION)?,
        beam_width: cfg.resolve(args.beam_width, "beam-width", search::DEFAULT_BEAM_WIDTH)?,
        beam_depth: cfg.resolve(args.beam_depth, "beam-depth", search::DEFAULT_BEAM_DEPTH)?,
        samples: cfg.resolve(args.samples, "samples", search::DEFAULT_SENSITIVITY_SAMPLES)?,
        percentile: cfg.resolve(args.percentile, "percentile", search::DEFAULT_PERCENTILE)?,
        top_k: cfg.resolve(args.top_k, "top-k", 5)?,
    };

    let mut guarded: Vec<(&str, &Path)> = vec![
        ("id", args.common.id.as_path()),
        ("ood", args.common.ood.as_path()),
    ];
    for (flag, path) in [
        ("proxy", &args.proxy),
        ("pareto-near", &args.pareto_near),
        ("pareto-far", &args.pareto_far),
    ] {
        if let Some(p) = path {
            guarded.push((flag, p.as_path()));
        }
    }
    refuse_test_tagged(&guarded, args.final_eval)?;

    let id_full = load_id_file(&args.common.id)?;
    let ood_full = load_ood_file(&args.common.ood)?;
    let columns = settings
        .columns
        .clone()
        .unwrap_or_else(|| id_full.detector_names().to_vec());
    let id_m = id_full.select_columns(&columns)?;
    let ood_m = ood_full.select_columns(&columns)?;
    settings.columns = Some(columns.clone());

    let spec = build_combiner(&settings)?;
    let (data, sizes) = split_eval_data(&id_m, &ood_m, &settings)?;
    let grid = metrics::uniform_grid::<f64>(settings.grid);

    let mut pairs_out = None;
    let mut sensitivity_out = None;
    let mut beam_out = None;
    let survivors: Vec<EvalRecord<f64>> = match search_settings.strategy.as_str() {
        "pairs" => {
            let ranked = search::best_pairs(&data.cal, &data.id_val, &data.ood_val, &spec)?;
            let kept = search::top_fraction(&ranked, search_settings.top_frac)?;
            pairs_out = Some(PairsOutcome {
                ranked,
                kept: kept.clone(),
            });
            kept
        }
        "sensitivity" => {
            let report = search::sensitivity_search(
                &data.cal,
                &data.id_val,
                &data.ood_val,
                &spec,
                search_settings.samples,
                search_settings.percentile,
                settings.seed,
            )?;
            let mut evals = Vec::with_capacity(report.candidate_sets.len());
            for candidate in &report.candidate_sets {
                let auroc = search::eval_subset(
                    &data.cal,
                    &data.id_val,
                    &data.ood_val,
                    &spec,
                    candidate.names(),
                    &grid,
                )?;
                evals.push(EvalRecord {
                    candidate: candidate.clone(),
                    combiner: spec.name().to_string(),
                    auroc,
                    split: SplitTag::Val,
                });
            }
            rank_records(&mut evals);
            sensitivity_out = Some(report);
            evals
        }
        "beam" => {
            let report = search::beam_search(
                &data.cal,
                &data.id_val,
                &data.ood_val,
                &spec,
                search_settings.beam_width,
                search_settings.beam_depth,
            )?;
            let mut kept: Vec<EvalRecord<f64>> = Vec::new();
            for record in report
                .levels
                .iter()
                .flat_map(|level| level.kept.iter())
                .chain(std::iter::once(&report.best_overall))
            {
                if !kept.iter().any(|r| r.candidate == record.candidate) {
                    kept.push(record.clone());
                }
            }
            rank_records(&mut kept);
            beam_out = Some(report);
            kept
        }
        other => bail!("unknown strategy {other:?} (expected pairs, sensitivity, beam)"),
    };
    if survivors.is_empty() {
        bail!("the {} strategy kept no candidates", search_settings.strategy);
    }

    let candidate_sets: Vec<CandidateSet> =
        survivors.iter().map(|r| r.candidate.clone()).collect();
    let (proxy_out, selected) = match &args.proxy {
        Some(path) => {
            let proxy = load_ood_file(path)?.select_columns(&columns)?;
            let top_k = search_settings.top_k.min(candidate_sets.len()).max(1);
            let selection = search::proxy_select(
                &candidate_sets,
                &data.cal,
                &proxy,
                &data.id_val,
                &data.ood_val,
                &spec,
                top_k,
            )?;
            let winner = selection
                .val_ranking
                .iter()
                .find(|r| r.candidate == selection.chosen)
                .expect("chosen candidate is in the validation ranking")
                .clone();
            (Some(selection), winner)
        }
        None => (None, survivors[0].clone()),
    };

    let pareto = match (&args.pareto_near, &args.pareto_far) {
        (Some(near_path), Some(far_path)) => {
            let ood_spec = SplitSpec::new(settings.ood_fractions.clone(), settings.seed)?;
            let val_part = |path: &Path| -> Result<ScoreMatrix64> {
                let full = load_ood_file(path)?.select_columns(&columns)?;
                let bundle = split_ood(&full, &ood_spec)?;
                Ok(full.subset_rows(bundle.part("val")?)?)
            };
            let near_val = val_part(near_path)?;
            let far_val = val_part(far_path)?;
            let mut rows = Vec::with_capacity(survivors.len());
            for record in &survivors {
                let names = record.candidate.names();
                let near_auroc =
                    search::eval_subset(&data.cal, &data.id_val, &near_val, &spec, names, &grid)?;
                let far_auroc =
                    search::eval_subset(&data.cal, &data.id_val, &far_val, &spec, names, &grid)?;
                rows.push((record.candidate.key(), near_auroc, far_auroc));
            }
            let out = args
                .pareto_out
                .clone()
                .unwrap_or_else(|| default_pareto_path(&args.out));
            write_atomic(&out, search::pareto_csv(&rows).as_bytes())?;
            Some(ParetoEcho {
                near: display(near_path),
                far: display(far_path),
                out: display(&out),
                rows: rows.len(),
            })
        }
        _ => None,
    };

    let report = Report {
        schema_version: SCHEMA_VERSION,
        command: "search",
        config: SearchEcho {
            id: display(&args.common.id),
            ood: display(&args.common.ood),
            proxy: args.proxy.as_deref().map(display),
            out: display(&args.out),
            pareto_near: args.pareto_near.as_deref().map(display),
            pareto_far: args.pareto_far.as_deref().map(display),
            pareto_out: pareto.as_ref().map(|p| p.out.clone()),
            final_eval: args.final_eval,
            settings,
            search: search_settings.clone(),
        },
        results: SearchResults {
            splits: sizes,
            strategy: search_settings.strategy,
            candidates: survivors.iter().map(|r| r.candidate.key()).collect(),
            pairs: pairs_out,
            sensitivity: sensitivity_out,
            beam: beam_out,
            proxy: proxy_out,
            selected: SelectedOutcome {
                set: selected.candidate.names().to_vec(),
                key: selected.candidate.key(),
                val_auroc: selected.auroc,
            },
            pareto,
        },
    };
    write_report(&args.out, &report)?;
    println!(
        "selected {} (val auroc {:.6})",
        report.results.selected.key, report.results.selected.val_auroc
    );
    println!("report -> {}", args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// synth

pub fn cmd_synth(args: SynthArgs) -> Result<()> {
    let d = args.mu.len();
    let mut correlation = vec![vec![args.rho; d]; d];
    for (i, row) in correlation.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let spec = GaussianScoreSpec {
        n_id: args.n_id,
        n_ood: args.n_ood,
        d,
        mu_ood: args.mu.0.clone(),
        correlation,
        seed: args.seed,
    };
    let (id, ood) = gen_gaussian_scores::<f64>(&spec)?;
    let id_path = PathBuf::from(format!("{}_id.csv", args.out_prefix.display()));
    let ood_path = PathBuf::from(format!("{}_ood.csv", args.out_prefix.display()));
    id.save(&id_path)?;
    ood.save(&ood_path)?;
    println!("id: {} x {} -> {}", id.n_rows(), id.n_cols(), id_path.display());
    println!("ood: {} x {} -> {}", ood.n_rows(), ood.n_cols(), ood_path.display());
    for (name, shift) in id.detector_names().iter().zip(args.mu.iter()) {
        // Closed-form AUROC of one shifted Gaussian coordinate.
        println!(
            "{name}: shift {shift}, analytic auroc {:.6}",
            norm_cdf(shift / 2.0f64.sqrt())
        );
    }
    Ok(())
}
