//! One function per subcommand.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{self, Cursor, Read, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;
use serde_json::json;
use stance_core::ccm::{self, CcmParams};
use stance_core::classify::{self, ClassifyParams, LeaningClass, LeaningResult, ProbabilityMode};
use stance_core::cohort::{self, AlphaSource, PrecisionModel, UserAggregate};
use stance_core::dynamics::{self, ChangeDirection, MiCurve, StanceChangeSeries};
use stance_core::ingest::{self, Dataset, ParseOptions, Stance};
use stance_core::syngen::{self, GeneratorConfig};
use stance_core::threads::{self, AttributionTarget};
use stance_core::topics::{self, Denominator, TopicLexicon, UserGroup};

use crate::output::Run;
use crate::{AlphaSourceArg, AttributionArg, Command, Common, DenominatorArg, ModeArg, UsageError};

pub fn dispatch(common: &Common, command: &Command) -> Result<()> {
    if let Command::Simulate { config, overrides, users, stdout } = command {
        return simulate(common, config.as_deref(), overrides, *users, *stdout);
    }
    let mut run = Run::new(command.name(), &common.out)?;
    let ds = load_input(common, &mut run)?;
    match command {
        Command::IngestCheck => {}
        Command::Cohort => cohort_cmd(common, &mut run, &ds)?,
        Command::Classify { min_dual_probability } => classify_cmd(common, &mut run, &ds, *min_dual_probability)?,
        Command::SweepEps { from, to, step } => sweep_cmd(common, &mut run, &ds, *from, *to, *step)?,
        Command::Migrate { after, min_dual_probability } => {
            migrate_cmd(common, &mut run, &ds, after, *min_dual_probability)?
        }
        Command::Dynamics { split_day, events } => {
            dynamics_cmd(&mut run, &ds, split_day.as_deref(), events.as_deref())?
        }
        Command::Stationarity { lag } => stationarity_cmd(&mut run, &ds, *lag)?,
        Command::Mi { max_lag, bins, difference } => mi_cmd(&mut run, &ds, *max_lag, *bins, *difference)?,
        Command::Ccm { e, tau, lib_sizes, samples, split_day, exclusion_radius, levels } => {
            let params = CcmParams {
                e: *e,
                tau: *tau,
                library_sizes: lib_sizes.clone().unwrap_or_default(),
                samples: *samples,
                seed: common.seed.unwrap_or(0),
                exclusion_radius: *exclusion_radius,
            };
            ccm_cmd(&mut run, &ds, params, split_day.as_deref(), *levels)?
        }
        Command::Topics { lexicon, denominator, min_dual_probability } => {
            topics_cmd(common, &mut run, &ds, lexicon.as_deref(), *denominator, *min_dual_probability)?
        }
        Command::Threads { attribution, graph_day, reply_min_size, lifespan_min_size } => {
            threads_cmd(&mut run, &ds, *attribution, *graph_day, *reply_min_size, *lifespan_min_size)?
        }
        Command::Simulate { .. } => unreachable!("handled above"),
    }
    run.finish()?;
    Ok(())
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn read_source(path: &str) -> Result<Vec<u8>> {
    if path == "-" {
        let mut buf = Vec::new();
        io::stdin().read_to_end(&mut buf).context("cannot read standard input")?;
        Ok(buf)
    } else {
        fs::read(path).with_context(|| format!("cannot read {path}"))
    }
}

fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| usage(format!("bad date '{s}', expected YYYY-MM-DD")))
}

fn parse_dataset(bytes: &[u8], common: &Common, start: Option<chrono::DateTime<chrono::Utc>>) -> Result<ingest::ParseOutcome> {
    let dataset_start = match (start, &common.start_date) {
        (Some(s), _) => Some(s),
        (None, Some(d)) => Some(parse_date(d)?.and_hms_opt(0, 0, 0).expect("midnight").and_utc()),
        (None, None) => None,
    };
    let opts = ParseOptions { dataset_start, strict: common.strict, min_day_count: 0 };
    Ok(ingest::parse_records(Cursor::new(bytes), &opts)?)
}

/// Reads `--input`, records it in the manifest and reports skipped lines.
/// `ingest-check` finishes here.
fn load_input(common: &Common, run: &mut Run) -> Result<Dataset> {
    let path = common.input.as_deref().ok_or_else(|| usage("--input is required"))?;
    let bytes = read_source(path)?;
    run.input(path, &bytes);
    run.param("strict", common.strict);
    run.param("start_date", &common.start_date);
    let outcome = parse_dataset(&bytes, common, None)?;
    if outcome.skipped_count() > 0 {
        eprintln!("warning: skipped {} malformed line(s)", outcome.skipped_count());
    }
    if run_is("ingest-check", run) {
        ingest_check(run, &outcome)?;
    }
    Ok(outcome.dataset)
}

fn run_is(name: &str, run: &Run) -> bool {
    run.command() == name
}

fn ingest_check(run: &mut Run, outcome: &ingest::ParseOutcome) -> Result<()> {
    let ds = &outcome.dataset;
    let users = ingest::aggregate_users(ds);
    let mut stances = BTreeMap::new();
    let mut kinds = BTreeMap::new();
    for r in ds.records() {
        *stances.entry(r.stance.as_str()).or_insert(0u64) += 1;
        *kinds.entry(r.kind.as_str()).or_insert(0u64) += 1;
    }
    let skipped: Vec<_> = outcome.skipped.iter().map(|s| json!({"line": s.line, "reason": s.reason})).collect();
    let summary = json!({
        "records": ds.len(),
        "users": ds.user_count(),
        "dual_detected_users": users.values().filter(|u| u.is_dual_detected()).count(),
        "dataset_start": ingest::format_timestamp(ds.dataset_start()),
        "day_count": ds.day_count(),
        "stances": stances,
        "kinds": kinds,
        "skipped": outcome.skipped_count(),
        "skipped_lines": skipped,
    });
    println!(
        "{} records, {} users, {} days, {} skipped",
        ds.len(),
        ds.user_count(),
        ds.day_count(),
        outcome.skipped_count()
    );
    run.write_json("ingest_summary.json", &summary)
}

fn precision_model(common: &Common, run: &mut Run) -> Result<Option<PrecisionModel>> {
    let pm = match (&common.precision, common.alpha_anti, common.alpha_pro) {
        (Some(path), _, _) => {
            let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
            run.input(&path.display().to_string(), &bytes);
            PrecisionModel::from_csv_reader(Cursor::new(bytes))?
        }
        (None, Some(a), Some(p)) => PrecisionModel::global_only(a, p).map_err(|e| usage(e.to_string()))?,
        _ => return Ok(None),
    };
    run.param("precision", &pm);
    Ok(Some(pm))
}

fn require_precision(common: &Common, run: &mut Run) -> Result<PrecisionModel> {
    precision_model(common, run)?
        .ok_or_else(|| usage("precisions are required: pass --precision PATH or --alpha-anti X --alpha-pro Y"))
}

fn alpha_source(common: &Common, run: &mut Run) -> AlphaSource {
    let source = match common.alpha_source {
        AlphaSourceArg::Global => AlphaSource::Global,
        AlphaSourceArg::MedianDay => AlphaSource::MedianDayPeriod,
    };
    run.param("alpha_source", source);
    source
}

fn classify_params(common: &Common, run: &mut Run, min_dual_probability: f64) -> Result<ClassifyParams> {
    classify::validate_epsilon(common.epsilon).map_err(|e| usage(e.to_string()))?;
    if !(0.0..=1.0).contains(&min_dual_probability) {
        return Err(usage("--min-dual-probability must lie in [0, 1]"));
    }
    let mode = match common.mode {
        ModeArg::Exact => ProbabilityMode::Exact,
        ModeArg::AsWritten => ProbabilityMode::AsWritten,
    };
    run.param("epsilon", common.epsilon);
    run.param("mode", mode);
    run.param("min_dual_probability", min_dual_probability);
    Ok(ClassifyParams { epsilon: common.epsilon, mode, alpha_source: alpha_source(common, run), min_dual_probability })
}

/// Shortest round-trip text, switching to exponent form for tiny or huge
/// magnitudes.
fn num(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-6..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

fn csv_bytes(write: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    write(&mut w)?;
    w.into_inner().map_err(|e| anyhow!("csv buffer: {e}"))
}

fn cohort_cmd(common: &Common, run: &mut Run, ds: &Dataset) -> Result<()> {
    let pm = require_precision(common, run)?;
    let source = alpha_source(common, run);
    let mut users = ingest::aggregate_users(ds);
    cohort::annotate_dual_probability(&mut users, &pm, source);
    let dual: Vec<UserAggregate> = users.values().filter(|u| u.is_dual_detected()).cloned().collect();
    let estimate = cohort::effective_cohort_size(&dual, &pm, source)?;
    let table = csv_bytes(|w| {
        w.write_record(["user_id", "n_a", "n_p", "p_dual"])?;
        for u in &dual {
            w.write_record([&u.user_id, &u.n_a.to_string(), &u.n_p.to_string(), &num(u.dual_probability)])?;
        }
        Ok(())
    })?;
    run.write("cohort.csv", table)?;
    run.write_json(
        "cohort_summary.json",
        &json!({
            "users": users.len(),
            "dual_detected": estimate.detected,
            "effective_cohort_size": estimate.effective,
            "bounds": estimate.bounds,
        }),
    )?;
    println!("dual-detected {}, effective {:.3}", estimate.detected, estimate.effective);
    Ok(())
}

fn classify_all(
    common: &Common,
    run: &mut Run,
    ds: &Dataset,
    min_dual_probability: f64,
) -> Result<(Vec<LeaningResult>, PrecisionModel, ClassifyParams)> {
    let pm = require_precision(common, run)?;
    let params = classify_params(common, run, min_dual_probability)?;
    let users = ingest::aggregate_users(ds);
    let results = classify::classify_users(&users, &pm, &params)?;
    Ok((results, pm, params))
}

fn class_counts(results: &[LeaningResult]) -> BTreeMap<&'static str, u64> {
    let mut counts: BTreeMap<&'static str, u64> = LeaningClass::LEANING.iter().map(|c| (c.as_str(), 0)).collect();
    for r in results {
        *counts.entry(r.class.as_str()).or_default() += 1;
    }
    counts
}

fn classify_cmd(common: &Common, run: &mut Run, ds: &Dataset, min_dual_probability: f64) -> Result<()> {
    let (results, _, _) = classify_all(common, run, ds, min_dual_probability)?;
    let table = csv_bytes(|w| {
        w.write_record(["user_id", "n_a", "n_p", "p_dual", "pr_pro", "pr_anti", "pr_bal", "class"])?;
        for r in &results {
            let p = &r.probabilities;
            w.write_record([
                r.user_id.as_str(),
                &r.n_a.to_string(),
                &r.n_p.to_string(),
                &num(r.dual_probability),
                &num(p.pr_pro),
                &num(p.pr_anti),
                &num(p.pr_bal),
                r.class.as_str(),
            ])?;
        }
        Ok(())
    })?;
    run.write("classify.csv", table)?;
    let counts = class_counts(&results);
    run.write_json("classify_summary.json", &json!({"classified": results.len(), "classes": counts}))?;
    println!("classified {} users: {:?}", results.len(), counts);
    Ok(())
}

fn sweep_cmd(common: &Common, run: &mut Run, ds: &Dataset, from: f64, to: f64, step: f64) -> Result<()> {
    if !(step > 0.0) || !(from >= 0.0) || !(to <= 0.5) || from >= to {
        return Err(usage("sweep needs 0 <= --from < --to <= 0.5 and --step > 0"));
    }
    let (results, _, params) = classify_all(common, run, ds, 0.0)?;
    run.param("from", from);
    run.param("to", to);
    run.param("step", step);
    let grid = classify::epsilon_grid(from, to, step);
    let probs: Vec<_> = results.iter().map(|r| r.probabilities).collect();
    let rows = classify::sweep_epsilon(&probs, &grid)?;
    let mut s = String::from("epsilon,pro,anti,bal\n");
    for r in &rows {
        s.push_str(&format!("{},{},{},{}\n", r.epsilon, r.pro, r.anti, r.bal));
    }
    run.write("sweep.csv", s)?;
    println!("swept {} tolerances over {} users ({} mode)", rows.len(), probs.len(), params.mode);
    Ok(())
}

fn migrate_cmd(common: &Common, run: &mut Run, ds: &Dataset, after: &Path, min_dual_probability: f64) -> Result<()> {
    let (results, pm, params) = classify_all(common, run, ds, min_dual_probability)?;
    let bytes = fs::read(after).with_context(|| format!("cannot read {}", after.display()))?;
    run.input(&after.display().to_string(), &bytes);
    let later = parse_dataset(&bytes, common, Some(ds.dataset_start()))?.dataset;
    let before: BTreeMap<String, LeaningResult> = results.into_iter().map(|r| (r.user_id.clone(), r)).collect();
    let matrix = classify::migration_matrix(&before, &ingest::aggregate_users(&later), &pm, &params)?;
    run.write("migration.csv", matrix.to_csv_string())?;
    run.write_json("migration_summary.json", &json!({"classified_before": before.len(), "missing_after": matrix.missing}))?;
    println!("{}", matrix.to_csv_string().trim_end());
    Ok(())
}

fn change_series(ds: &Dataset) -> Result<(Vec<dynamics::UserChanges>, StanceChangeSeries)> {
    let changes = dynamics::dataset_changes(ds);
    let series = dynamics::aggregate_series(&changes, ds.day_count())?;
    Ok((changes, series))
}

/// Accepts a day index or a calendar date.
fn resolve_day(ds: &Dataset, s: &str) -> Result<usize> {
    let day = match s.parse::<u32>() {
        Ok(d) => d,
        Err(_) => {
            let ts = parse_date(s)?.and_hms_opt(0, 0, 0).expect("midnight").and_utc();
            ds.day_of(ts).ok_or_else(|| usage(format!("split day {s} precedes the dataset start")))?
        }
    };
    if day == 0 || day >= ds.day_count() {
        return Err(usage(format!("split day {s} must fall strictly inside the {} days of data", ds.day_count())));
    }
    Ok(day as usize)
}

fn direction_str(d: ChangeDirection) -> &'static str {
    match d {
        ChangeDirection::IntoPro => "into-pro",
        ChangeDirection::IntoAnti => "into-anti",
    }
}

fn dynamics_cmd(run: &mut Run, ds: &Dataset, split_day: Option<&str>, events: Option<&Path>) -> Result<()> {
    let (changes, series) = change_series(ds)?;
    run.write("series.csv", series.to_csv_string(0))?;
    let all = dynamics::all_events(&changes);
    let table = csv_bytes(|w| {
        w.write_record(["user_id", "tweet_id", "day", "direction", "kind", "parent_id"])?;
        for e in &all {
            w.write_record([
                e.user_id.as_str(),
                &e.tweet_id,
                &e.day_index.to_string(),
                direction_str(e.direction),
                e.kind.as_str(),
                e.parent_id.as_deref().unwrap_or(""),
            ])?;
        }
        Ok(())
    })?;
    run.write("change_events.csv", table)?;

    let mut summary = json!({
        "day_count": series.day_count(),
        "users": changes.len(),
        "users_with_changes": changes.iter().filter(|c| !c.events.is_empty()).count(),
        "into_pro": series.delta_plus.iter().sum::<u64>(),
        "into_anti": series.delta_minus.iter().sum::<u64>(),
        "final_cumulative": series.cumulative.last().copied().unwrap_or(0),
    });
    if let Some(s) = split_day {
        let day = resolve_day(ds, s)?;
        run.param("split_day", day);
        run.write("series_pre.csv", series.window(0, day).to_csv_string(0))?;
        run.write("series_post.csv", series.window(day, series.day_count()).to_csv_string(day))?;
        summary["split_day"] = json!(day);
    }
    if let Some(path) = events {
        let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        run.input(&path.display().to_string(), &bytes);
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes.as_slice());
        let mut inside = Vec::new();
        let mut outside = 0u64;
        for row in rdr.records() {
            let row = row?;
            let (Some(date), Some(label)) = (row.get(0), row.get(1)) else {
                bail!("event file rows need date,label");
            };
            let ts = parse_date(date)?.and_hms_opt(0, 0, 0).expect("midnight").and_utc();
            match ds.day_of(ts).filter(|&d| d < ds.day_count()) {
                Some(d) => inside.push((d, date.to_string(), label.to_string())),
                None => outside += 1,
            }
        }
        let table = csv_bytes(|w| {
            w.write_record(["day", "date", "label"])?;
            for (d, date, label) in &inside {
                w.write_record([d.to_string().as_str(), date, label])?;
            }
            Ok(())
        })?;
        run.write("event_markers.csv", table)?;
        summary["events_outside_window"] = json!(outside);
    }
    run.write_json("dynamics_summary.json", &summary)?;
    println!("{} changes into pro, {} into anti", summary["into_pro"], summary["into_anti"]);
    Ok(())
}

fn stationarity_cmd(run: &mut Run, ds: &Dataset, lag: Option<usize>) -> Result<()> {
    run.param("lag", lag);
    let (_, series) = change_series(ds)?;
    let plus = series.plus_f64();
    let minus = series.minus_f64();
    let candidates = [
        ("delta_plus", plus.clone()),
        ("delta_minus", minus.clone()),
        ("delta_plus_diff", dynamics::first_difference(&plus)?),
        ("delta_minus_diff", dynamics::first_difference(&minus)?),
    ];
    let mut report = serde_json::Map::new();
    for (name, x) in &candidates {
        let adf = dynamics::adf_test(x, lag).with_context(|| format!("ADF on {name}"))?;
        let kpss = dynamics::kpss_test(x, None).with_context(|| format!("KPSS on {name}"))?;
        println!(
            "{name}: ADF {:.3} ({}), KPSS {:.3} ({})",
            adf.statistic,
            if adf.stationary { "stationary" } else { "unit root" },
            kpss.statistic,
            if kpss.stationary { "stationary" } else { "non-stationary" }
        );
        report.insert(name.to_string(), json!({"adf": adf, "kpss": kpss}));
    }
    run.write_json("stationarity.json", &report)
}

fn mi_cmd(run: &mut Run, ds: &Dataset, max_lag: usize, bins: usize, difference: bool) -> Result<()> {
    run.param("max_lag", max_lag);
    run.param("bins", bins);
    run.param("difference", difference);
    let (_, series) = change_series(ds)?;
    let (mut x, mut y) = (series.plus_f64(), series.minus_f64());
    if difference {
        x = dynamics::first_difference(&x)?;
        y = dynamics::first_difference(&y)?;
    }
    let curve = MiCurve::compute(&x, &y, max_lag, bins)?;
    run.write("mi.csv", curve.to_csv_string())?;
    run.write_json(
        "mi_summary.json",
        &json!({"x": "delta_plus", "y": "delta_minus", "argmin": curve.argmin, "argmax": curve.argmax}),
    )?;
    println!("MI minimum at lag {}, maximum at lag {}", curve.argmin, curve.argmax);
    Ok(())
}

fn ccm_cmd(run: &mut Run, ds: &Dataset, params: CcmParams, split_day: Option<&str>, levels: bool) -> Result<()> {
    if params.e == 0 || params.tau == 0 || params.samples == 0 {
        return Err(usage("--e, --tau and --samples must be positive"));
    }
    run.param("e", params.e);
    run.param("tau", params.tau);
    run.param("samples", params.samples);
    run.param("seed", params.seed);
    run.param("exclusion_radius", params.exclusion_radius);
    run.param("lib_sizes", &params.library_sizes);
    run.param("levels", levels);
    let (_, series) = change_series(ds)?;
    let n = series.day_count();
    let windows: Vec<(&str, usize, usize)> = match split_day {
        Some(s) => {
            let day = resolve_day(ds, s)?;
            run.param("split_day", day);
            vec![("pre", 0, day), ("post", day, n)]
        }
        None => vec![("all", 0, n)],
    };
    let mut reports = Vec::new();
    for (name, start, end) in windows {
        let w = series.window(start, end);
        let (mut x, mut y) = (w.plus_f64(), w.minus_f64());
        if !levels {
            x = dynamics::first_difference(&x)?;
            y = dynamics::first_difference(&y)?;
        }
        let mut p = params.clone();
        if p.library_sizes.is_empty() {
            p.library_sizes = ccm::default_library_sizes(ccm::embedded_points(x.len(), p.e, p.tau), p.e, 10);
        }
        let result = ccm::skill_curve(&x, &y, &p).with_context(|| format!("CCM on the {name} window"))?;
        let verdict = ccm::causal_compare(&result);
        let file = if name == "all" { "ccm.csv".to_string() } else { format!("ccm_{name}.csv") };
        run.write(&file, result.to_csv_string())?;
        println!("{name} (days {start}..{end}): {} (margin {:.3})", verdict.driven.as_str(), verdict.margin);
        reports.push(json!({
            "window": name,
            "first_day": start,
            "end_day": end,
            "file": file,
            "verdict": verdict.driven.as_str(),
            "margin": verdict.margin,
            "result": result,
        }));
    }
    run.write_json(
        "ccm.json",
        &json!({
            "x": if levels { "delta_plus" } else { "delta_plus_diff" },
            "y": if levels { "delta_minus" } else { "delta_minus_diff" },
            "windows": reports,
        }),
    )
}

fn topics_cmd(
    common: &Common,
    run: &mut Run,
    ds: &Dataset,
    lexicon_path: Option<&Path>,
    denominator: DenominatorArg,
    min_dual_probability: f64,
) -> Result<()> {
    let lexicon = match lexicon_path {
        Some(path) => {
            let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
            run.input(&path.display().to_string(), &bytes);
            TopicLexicon::from_csv_reader(bytes.as_slice())?
        }
        None => TopicLexicon::demo(),
    };
    let denominator = match denominator {
        DenominatorArg::Dataset => Denominator::Dataset,
        DenominatorArg::Dual => Denominator::Dual,
    };
    run.param("lexicon", lexicon_path.map(|p| p.display().to_string()).unwrap_or_else(|| "demo".into()));
    run.param("denominator", denominator.as_str());
    let tagged = topics::tag_corpus(ds.records(), &lexicon);

    let mut users = ingest::aggregate_users(ds);
    let report = match denominator {
        Denominator::Dataset => {
            if !(0.0..=1.0).contains(&min_dual_probability) {
                return Err(usage("--min-dual-probability must lie in [0, 1]"));
            }
            run.param("min_dual_probability", min_dual_probability);
            match precision_model(common, run)? {
                Some(pm) => cohort::annotate_dual_probability(&mut users, &pm, alpha_source(common, run)),
                None if min_dual_probability > 0.0 => {
                    return Err(usage("--min-dual-probability needs precisions"));
                }
                None => {}
            }
            let dual: HashSet<String> = users
                .values()
                .filter(|u| u.is_dual_detected() && u.dual_probability >= min_dual_probability)
                .map(|u| u.user_id.clone())
                .collect();
            let other: HashSet<String> = users.keys().filter(|u| !dual.contains(*u)).cloned().collect();
            let groups = [
                UserGroup { name: "dual-stance".into(), users: dual },
                UserGroup { name: "other".into(), users: other },
            ];
            topics::topic_report(&tagged, &lexicon, &groups, |_| true)
        }
        Denominator::Dual => {
            let (results, _, _) = classify_all(common, run, ds, 0.0)?;
            let groups: Vec<UserGroup> = LeaningClass::LEANING
                .iter()
                .map(|&c| UserGroup {
                    name: c.as_str().into(),
                    users: results.iter().filter(|r| r.class == c).map(|r| r.user_id.clone()).collect(),
                })
                .collect();
            let population: HashSet<&str> = results.iter().map(|r| r.user_id.as_str()).collect();
            topics::topic_report(&tagged, &lexicon, &groups, |u| population.contains(u))
        }
    };
    run.write("topics.csv", report.to_csv_string())?;
    run.write("veracity.csv", report.veracity_csv_string())?;
    let shares: BTreeMap<&str, _> = report.shares.iter().map(|(g, s)| (g.as_str(), s)).collect();
    let with_topic = tagged.iter().filter(|t| !t.topics.is_empty()).count();
    let non_neutral = tagged.iter().filter(|t| t.stance != Stance::Neutral).count();
    run.write_json(
        "topics_summary.json",
        &json!({"non_neutral_tweets": non_neutral, "tagged_tweets": with_topic, "shares": shares}),
    )?;
    println!("{with_topic} of {non_neutral} non-neutral tweets carry a topic");
    Ok(())
}

fn threads_cmd(
    run: &mut Run,
    ds: &Dataset,
    attribution: AttributionArg,
    graph_day: Option<u32>,
    reply_min_size: u64,
    lifespan_min_size: u64,
) -> Result<()> {
    let target = match attribution {
        AttributionArg::Root => AttributionTarget::ThreadRoot,
        AttributionArg::Parent => AttributionTarget::ImmediateParent,
    };
    run.param("attribution", target);
    run.param("graph_day", graph_day);
    run.param("reply_min_size", reply_min_size);
    run.param("lifespan_min_size", lifespan_min_size);

    let (changes, _) = change_series(ds)?;
    let events = dynamics::all_events(&changes);
    let composition = threads::change_tweet_composition(&events).ok();
    let attr = threads::attribute_changes(&events, ds, target);
    let buckets = threads::originator_buckets(&attr.counts);
    let stats = threads::build_threads(&events, ds);
    let graph_events: Vec<_> =
        events.iter().filter(|e| graph_day.is_none_or(|d| e.day_index == d)).cloned().collect();
    let graph = threads::build_signed_reply_graph(&graph_events, ds);
    let components = graph.components();

    run.write("threads.csv", threads::threads_csv_string(&stats))?;
    run.write("buckets.csv", buckets.to_csv_string())?;
    run.write("edges.csv", graph.edges_csv_string())?;
    let mut comp = String::from("component,nodes,edges,roots,positive,negative\n");
    for (i, c) in components.iter().enumerate() {
        comp.push_str(&format!("{i},{},{},{},{},{}\n", c.nodes.len(), c.edges, c.roots, c.positive, c.negative));
    }
    run.write("components.csv", comp)?;
    let replies = threads::reply_composition(&stats, reply_min_size);
    let mut s = String::from("thread_id,pro_ratio\n");
    for (id, r) in &replies {
        s.push_str(&format!("{id},{r}\n"));
    }
    run.write("reply_composition.csv", s)?;
    let lifespans = threads::thread_lifespan(&stats, lifespan_min_size);
    let mut s = String::from("thread_id,size,lifespan_days\n");
    for (id, size, days) in &lifespans {
        s.push_str(&format!("{id},{size},{days}\n"));
    }
    run.write("lifespans.csv", s)?;

    let concentration: BTreeMap<String, usize> = if attr.counts.is_empty() {
        BTreeMap::new()
    } else {
        [0.08, 0.25, 0.5, 0.75, 0.9]
            .iter()
            .map(|&q| Ok((q.to_string(), threads::concentration(&attr.counts, q)?)))
            .collect::<Result<_>>()?
    };
    let ratios: Vec<f64> = replies.iter().map(|(_, r)| *r).collect();
    let spans: Vec<f64> = lifespans.iter().map(|(_, _, d)| *d as f64).collect();
    run.write_json(
        "threads_summary.json",
        &json!({
            "change_events": events.len(),
            "composition": composition,
            "originators": attr.counts.len(),
            "attributed": attr.attributed(),
            "unresolved": attr.unresolved,
            "concentration": concentration,
            "threads": stats.len(),
            "reply_pro_ratio": threads::summarize(&ratios),
            "lifespan_days": threads::summarize(&spans),
            "graph_nodes": graph.nodes.len(),
            "graph_edges": graph.edges.len(),
            "graph_skipped": graph.skipped,
            "components": components.len(),
        }),
    )?;
    println!(
        "{} change events, {} originators, {} unresolved, {} threads",
        events.len(),
        attr.counts.len(),
        attr.unresolved,
        stats.len()
    );
    Ok(())
}

fn simulate(
    common: &Common,
    config: Option<&Path>,
    overrides: &[String],
    users: Option<usize>,
    to_stdout: bool,
) -> Result<()> {
    let (mut cfg, config_bytes) = match config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            (GeneratorConfig::from_kv_str(&text).map_err(|e| usage(e.to_string()))?, Some(text))
        }
        None => (GeneratorConfig::default(), None),
    };
    for kv in overrides {
        let (k, v) = kv.split_once('=').ok_or_else(|| usage(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.set(k.trim(), v.trim()).map_err(|e| usage(e.to_string()))?;
    }
    if let Some(n) = users {
        cfg.n_users = n;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let (ds, truth) = syngen::generate_stream(&cfg, &TopicLexicon::demo())?;

    if to_stdout {
        let stdout = io::stdout();
        let mut out = io::BufWriter::new(stdout.lock());
        ingest::write_records(&ds, &mut out)?;
        out.flush()?;
        return Ok(());
    }
    let mut run = Run::new("simulate", &common.out)?;
    if let (Some(path), Some(text)) = (config, &config_bytes) {
        run.input(&path.display().to_string(), text.as_bytes());
    }
    run.param("config", &cfg);
    let mut records = Vec::new();
    ingest::write_records(&ds, &mut records)?;
    run.write("records.jsonl", records)?;
    run.write("truth_users.csv", truth.users_csv_string())?;
    run.write("truth_tweets.csv", truth.tweets_csv_string())?;
    run.write("implied_precision.csv", truth.implied.to_precision_csv())?;
    run.write("generator.conf", cfg.to_kv_string())?;
    run.write_json(
        "simulate_summary.json",
        &json!({
            "records": ds.len(),
            "users": ds.user_count(),
            "truly_dual": truth.truly_dual.len(),
            "implied_precision": truth.implied,
        }),
    )?;
    run.finish()?;
    println!(
        "{} records from {} users; implied precision anti {:.4}, pro {:.4}",
        ds.len(),
        ds.user_count(),
        truth.implied.empirical_anti,
        truth.implied.empirical_pro
    );
    Ok(())
}
