//! The `n400` command-line tool.
//!
//! Every subcommand reads explicit input files, writes its report files to
//! `--out`, and records input digests plus every effective setting in
//! `manifest.json`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::ingest::{
    self, build_analysis_table, parse_epochs, parse_lm_output, parse_stimuli, parse_trials, reduce_epochs,
    AnalysisTable, Condition, PredictorRecipe, Roi, StimulusFormat, Window,
};
use crate::lmm::{build_design, fit_ml, ModelSpec, Term};
use crate::metrics::LogBase;
use crate::pipeline::report::{summary_markdown, BundleWriter, Manifest};
use crate::pipeline::{
    corr_analysis, holdout_eval, run_ladders, variance_partition_spec, ContrastPlan, CorrelationReport, HoldoutReport,
    HoldoutSpec, LadderReport, LadderSpec,
};
use crate::stats::{self, FdrMethod, TestResult};
use crate::synth::{self, PredictorTruth, SynthSpec};

#[derive(Debug, Parser)]
#[command(name = "n400", version, about = "Language-model predictors of N400 amplitude")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Join stimuli, LM output and EEG into an analysis table.
    Metrics(MetricsArgs),
    /// Fit one mixed model and write its summary.
    Fit(FitArgs),
    /// Fit nested-model ladders and compare them by LRT and AIC.
    Compare(CompareArgs),
    /// Evaluate models on a held-out split with condition contrasts.
    Holdout(HoldoutArgs),
    /// Correlate stimulus-level predictor columns.
    Corr(CorrArgs),
    /// Generate a planted-truth dataset in the input file formats.
    Synth(SynthArgs),
    /// Run ladders, holdout and correlations with one joint FDR family.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Prebuilt analysis table (CSV); replaces the raw inputs below.
    #[arg(long, conflicts_with_all = ["stimuli", "lm", "eeg", "epochs"])]
    pub table: Option<PathBuf>,
    /// Stimulus file (tab-separated).
    #[arg(long)]
    pub stimuli: Option<PathBuf>,
    /// Language-model output (JSON lines); repeat once per model.
    #[arg(long = "lm")]
    pub lm: Vec<PathBuf>,
    /// Window-mean EEG measurements (CSV).
    #[arg(long, conflicts_with = "epochs")]
    pub eeg: Option<PathBuf>,
    /// Per-sample EEG epochs (CSV), reduced to window means.
    #[arg(long)]
    pub epochs: Option<PathBuf>,
    /// Averaging window in ms, inclusive.
    #[arg(long, num_args = 2, value_names = ["START", "END"], allow_negative_numbers = true)]
    pub window: Option<Vec<f64>>,
    /// Predictor recipe: surprisal:<model>, cossim:<model>, cosdist:<model> or cloze.
    /// Defaults to surprisal and cossim for every model.
    #[arg(long = "predictor")]
    pub predictors: Vec<String>,
    /// Surprisal log base: e, 2, 10 or any positive number.
    #[arg(long, default_value = "e")]
    pub base: String,
}

#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Fixed-effect term, e.g. `roi`, `surprisal_gpt2` or `surprisal_gpt2:roi`.
    #[arg(long = "term", default_values_t = vec!["roi".to_string()])]
    pub terms: Vec<String>,
    #[command(flatten)]
    pub random: RandomArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct RandomArgs {
    /// Random-intercept grouping factor.
    #[arg(long = "random", default_values_t = vec!["subject".to_string(), "frame_id".to_string(), "electrode".to_string()])]
    pub random: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct LadderArgs {
    /// A predictor column (ladder roi -> +p -> +p:roi) or `label=term,term,...`
    /// for additions on top of the roi baseline. Defaults to one ladder per
    /// predictor column.
    #[arg(long = "ladder")]
    pub ladders: Vec<String>,
    /// `base+added`: test adding a predictor over base and base:roi.
    #[arg(long = "partition")]
    pub partitions: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct FdrArgs {
    #[arg(long, default_value = "by")]
    pub fdr: FdrMethod,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub ladder: LadderArgs,
    #[command(flatten)]
    pub random: RandomArgs,
    #[command(flatten)]
    pub fdr: FdrArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct HoldoutOptions {
    /// A predictor column (model roi + p + p:roi) or `label=term,term,...`.
    /// Defaults to one model per predictor column.
    #[arg(long = "model")]
    pub models: Vec<String>,
    #[arg(long = "holdout-fraction", default_value_t = 0.15)]
    pub fraction: f64,
    /// Hold out the same fraction of every condition.
    #[arg(long)]
    pub stratify: bool,
    /// ROIs whose held-out rows enter the contrasts.
    #[arg(long = "roi", default_values_t = vec!["central".to_string(), "posterior".to_string()])]
    pub rois: Vec<String>,
}

#[derive(Debug, Args)]
pub struct HoldoutArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub holdout: HoldoutOptions,
    #[command(flatten)]
    pub random: RandomArgs,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub fdr: FdrArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PairArgs {
    /// `x,y` column pair. Defaults to surprisal_<m>,cossim_<m> for every model m.
    #[arg(long = "pair")]
    pub pairs: Vec<String>,
}

#[derive(Debug, Args)]
pub struct CorrArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub pairs: PairArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Full generator spec as JSON; overrides the counts below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub subjects: usize,
    #[arg(long, default_value_t = 50)]
    pub frames: usize,
    #[arg(long, default_value_t = 8)]
    pub electrodes: usize,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub ladder: LadderArgs,
    #[command(flatten)]
    pub holdout: HoldoutOptions,
    #[command(flatten)]
    pub pairs: PairArgs,
    #[command(flatten)]
    pub random: RandomArgs,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub fdr: FdrArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Metrics(a) => cmd_metrics(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Holdout(a) => cmd_holdout(a),
        Command::Corr(a) => cmd_corr(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn open(path: &Path) -> Result<File, Error> {
    File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn input_err(path: &Path) -> impl FnOnce(ingest::IngestError) -> Error + '_ {
    move |source| Error::Input {
        path: path.to_path_buf(),
        source,
    }
}

fn digest(manifest: &mut Manifest, role: &str, path: &Path) -> Result<(), Error> {
    manifest.input(role, path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_base(s: &str) -> Result<LogBase, Error> {
    let v = match s {
        "e" => std::f64::consts::E,
        other => other
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("log base `{other}` is not a number")))?,
    };
    LogBase::new(v).map_err(|e| Error::Config(e.to_string()))
}

/// Load or build the analysis table and record the inputs in the manifest.
pub fn load_table(args: &InputArgs, manifest: &mut Manifest) -> Result<AnalysisTable, Error> {
    if let Some(path) = &args.table {
        digest(manifest, "table", path)?;
        return AnalysisTable::read_csv(BufReader::new(open(path)?)).map_err(input_err(path));
    }
    let stim_path = args
        .stimuli
        .as_ref()
        .ok_or_else(|| Error::Config("--stimuli is required unless --table is given".into()))?;
    let window = match args.window.as_deref() {
        Some([a, b]) if a <= b => Window::new(*a, *b),
        Some(w) => {
            return Err(Error::Config(format!(
                "window {w:?} must be START END with START <= END"
            )))
        }
        None => Window::default(),
    };
    let base = parse_base(&args.base)?;
    manifest.set("window_ms", format!("{} {}", window.start, window.end));
    manifest.set("log_base", &args.base);

    digest(manifest, "stimuli", stim_path)?;
    let stimuli = parse_stimuli(open(stim_path)?, &StimulusFormat::default()).map_err(input_err(stim_path))?;

    let mut records = Vec::new();
    let mut model_ids: Vec<String> = Vec::new();
    for path in &args.lm {
        digest(manifest, "lm", path)?;
        let recs = parse_lm_output(BufReader::new(open(path)?)).map_err(input_err(path))?;
        for r in &recs {
            if !model_ids.contains(&r.model_id) {
                model_ids.push(r.model_id.clone());
            }
        }
        records.extend(recs);
    }

    let trials = match (&args.eeg, &args.epochs) {
        (Some(path), _) => {
            digest(manifest, "eeg", path)?;
            parse_trials(open(path)?).map_err(input_err(path))?
        }
        (None, Some(path)) => {
            digest(manifest, "epochs", path)?;
            let samples = parse_epochs(open(path)?).map_err(input_err(path))?;
            reduce_epochs(&samples, window).map_err(input_err(path))?
        }
        (None, None) => return Err(Error::Config("one of --eeg or --epochs is required".into())),
    };

    let recipes: Vec<PredictorRecipe> = if args.predictors.is_empty() {
        PredictorRecipe::standard(&model_ids)
    } else {
        args.predictors
            .iter()
            .map(|s| s.parse().map_err(Error::Config))
            .collect::<Result<_, _>>()?
    };
    manifest.set(
        "predictors",
        recipes.iter().map(ToString::to_string).collect::<Vec<_>>().join(","),
    );
    Ok(build_analysis_table(&stimuli, &records, &trials, &recipes, base)?)
}

fn predictor_columns(table: &AnalysisTable) -> Vec<String> {
    table.predictor_names().map(str::to_string).collect()
}

fn parse_terms(list: &str) -> Result<Vec<Term>, Error> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.parse::<Term>().map_err(Error::from))
        .collect()
}

fn ladder_specs(args: &LadderArgs, random: &RandomArgs, table: &AnalysisTable) -> Result<Vec<LadderSpec>, Error> {
    let mut out = Vec::new();
    let defaults = args.ladders.is_empty() && args.partitions.is_empty();
    let ladders: Vec<String> = if defaults {
        predictor_columns(table)
    } else {
        args.ladders.clone()
    };
    for l in &ladders {
        let spec = match l.split_once('=') {
            Some((label, terms)) => LadderSpec::new(label.trim(), parse_terms(terms)?),
            None => LadderSpec::for_predictor(l.trim()),
        };
        out.push(spec);
    }
    for p in &args.partitions {
        let (base, added) = p
            .split_once('+')
            .ok_or_else(|| Error::Config(format!("partition `{p}` should look like base+added")))?;
        out.push(variance_partition_spec(base.trim(), added.trim()));
    }
    if out.is_empty() {
        return Err(Error::Config(
            "no ladders to fit (the table has no predictor columns)".into(),
        ));
    }
    for l in &mut out {
        l.random = random.random.clone();
    }
    Ok(out)
}

fn holdout_models(
    opts: &HoldoutOptions,
    random: &RandomArgs,
    table: &AnalysisTable,
) -> Result<Vec<(String, ModelSpec)>, Error> {
    let entries: Vec<String> = if opts.models.is_empty() {
        predictor_columns(table)
    } else {
        opts.models.clone()
    };
    if entries.is_empty() {
        return Err(Error::Config(
            "no models to evaluate (the table has no predictor columns)".into(),
        ));
    }
    entries
        .iter()
        .map(|m| {
            let (label, fixed) = match m.split_once('=') {
                Some((label, terms)) => (label.trim().to_string(), parse_terms(terms)?),
                None => {
                    let p = m.trim();
                    (
                        p.to_string(),
                        vec![Term::main("roi"), Term::main(p), Term::interaction(p, "roi")],
                    )
                }
            };
            Ok((
                label,
                ModelSpec {
                    outcome: "amplitude".into(),
                    fixed,
                    random: random.random.clone(),
                },
            ))
        })
        .collect()
}

fn contrast_plan(opts: &HoldoutOptions) -> Result<ContrastPlan, Error> {
    let rois = opts
        .rois
        .iter()
        .map(|r| r.parse::<Roi>().map_err(|e| Error::Config(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ContrastPlan {
        rois,
        ..ContrastPlan::default()
    })
}

fn corr_pairs(args: &PairArgs, table: &AnalysisTable) -> Result<Vec<(String, String)>, Error> {
    if !args.pairs.is_empty() {
        return args
            .pairs
            .iter()
            .map(|p| {
                p.split_once(',')
                    .map(|(x, y)| (x.trim().to_string(), y.trim().to_string()))
                    .ok_or_else(|| Error::Config(format!("pair `{p}` should look like x,y")))
            })
            .collect();
    }
    let cols: BTreeSet<String> = predictor_columns(table).into_iter().collect();
    let pairs: Vec<(String, String)> = predictor_columns(table)
        .iter()
        .filter_map(|c| c.strip_prefix("surprisal_"))
        .filter(|m| cols.contains(&format!("cossim_{m}")))
        .map(|m| (format!("surprisal_{m}"), format!("cossim_{m}")))
        .collect();
    if pairs.is_empty() {
        return Err(Error::Config(
            "no surprisal_<m>/cossim_<m> column pairs; pass --pair x,y".into(),
        ));
    }
    Ok(pairs)
}

fn correlations(pairs: &[(String, String)], table: &AnalysisTable) -> Result<Vec<CorrelationReport>, Error> {
    pairs
        .iter()
        .map(|(x, y)| corr_analysis(table, x, y).map_err(Error::from))
        .collect()
}

fn cmd_metrics(args: MetricsArgs) -> Result<(), Error> {
    let mut manifest = Manifest::new("metrics");
    let table = load_table(&args.input, &mut manifest)?;
    let mut out = BundleWriter::create(&args.out.out)?;
    out.file("table.csv", |w| Ok(table.write_csv(w)?))?;

    // one value per stimulus: predictors do not vary over subjects or electrodes
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(stdout, "{} rows", table.len());
    for name in predictor_columns(&table) {
        let values = table.numeric(&name).expect("listed column");
        let mut cells: BTreeMap<(String, Condition), f64> = BTreeMap::new();
        for (k, v) in table.keys().iter().zip(values) {
            cells.insert((k.frame_id.clone(), k.condition), *v);
        }
        for c in Condition::ALL {
            let xs: Vec<f64> = cells.iter().filter(|(k, _)| k.1 == c).map(|(_, v)| *v).collect();
            match stats::mean_sd(&xs) {
                Ok((m, sd)) => {
                    let _ = writeln!(stdout, "{name}\t{c}\tn={}\tmean={m:.4}\tsd={sd:.4}", xs.len());
                }
                Err(_) => {
                    let _ = writeln!(stdout, "{name}\t{c}\tn={}", xs.len());
                }
            }
        }
    }
    out.finish(manifest)?;
    Ok(())
}

fn cmd_fit(args: FitArgs) -> Result<(), Error> {
    let mut manifest = Manifest::new("fit");
    let table = load_table(&args.input, &mut manifest)?;
    let spec = ModelSpec {
        outcome: "amplitude".into(),
        fixed: args
            .terms
            .iter()
            .map(|t| t.parse::<Term>().map_err(Error::from))
            .collect::<Result<_, _>>()?,
        random: args.random.random.clone(),
    };
    manifest.set("model", &spec);
    let model = fit_ml(&build_design(&table, &spec)?)?;
    let text = model.summary_text();
    let mut out = BundleWriter::create(&args.out.out)?;
    out.text("model_summary.txt", &text)?;
    out.finish(manifest)?;
    print!("{text}");
    Ok(())
}

fn ladder_report(
    table: &AnalysisTable,
    args: &LadderArgs,
    random: &RandomArgs,
    fdr: FdrMethod,
    manifest: &mut Manifest,
) -> Result<LadderReport, Error> {
    let specs = ladder_specs(args, random, table)?;
    for s in &specs {
        manifest.set(
            &format!("ladder.{}", s.label),
            format!(
                "baseline [{}] additions [{}] compare {:?} random [{}]",
                s.baseline
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join(", "),
                s.additions
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join(", "),
                s.comparison,
                s.random.join(", ")
            ),
        );
    }
    Ok(run_ladders(table, &specs, fdr)?)
}

fn cmd_compare(args: CompareArgs) -> Result<(), Error> {
    let mut manifest = Manifest::new("compare");
    manifest.set("fdr", args.fdr.fdr.as_str());
    let table = load_table(&args.input, &mut manifest)?;
    let report = ladder_report(&table, &args.ladder, &args.random, args.fdr.fdr, &mut manifest)?;
    let summary = summary_markdown(Some(&report), None, &[]);
    let mut out = BundleWriter::create(&args.out.out)?;
    out.ladder(&report)?;
    out.text("summary.md", &summary)?;
    out.finish(manifest)?;
    print!("{summary}");
    Ok(())
}

fn holdout_report(
    table: &AnalysisTable,
    opts: &HoldoutOptions,
    random: &RandomArgs,
    seed: u64,
    fdr: FdrMethod,
    manifest: &mut Manifest,
) -> Result<HoldoutReport, Error> {
    let mut spec = HoldoutSpec::new(opts.fraction, seed)?;
    spec.stratify = opts.stratify;
    let plan = contrast_plan(opts)?;
    let models = holdout_models(opts, random, table)?;
    manifest.set("holdout_fraction", opts.fraction);
    manifest.set("holdout_stratify", opts.stratify);
    manifest.set("holdout_split", "measurement");
    manifest.set("prediction_mode", "conditional");
    manifest.set(
        "contrast_rois",
        plan.rois.iter().map(|r| r.as_str()).collect::<Vec<_>>().join(","),
    );
    for (label, spec) in &models {
        manifest.set(&format!("model.{label}"), spec);
    }
    Ok(holdout_eval(table, &models, &spec, &plan, fdr)?)
}

fn cmd_holdout(args: HoldoutArgs) -> Result<(), Error> {
    let mut manifest = Manifest::new("holdout");
    manifest.seed = Some(args.seed);
    manifest.set("fdr", args.fdr.fdr.as_str());
    let table = load_table(&args.input, &mut manifest)?;
    let report = holdout_report(
        &table,
        &args.holdout,
        &args.random,
        args.seed,
        args.fdr.fdr,
        &mut manifest,
    )?;
    let summary = summary_markdown(None, Some(&report), &[]);
    let mut out = BundleWriter::create(&args.out.out)?;
    out.holdout(&report)?;
    out.text("summary.md", &summary)?;
    out.finish(manifest)?;
    print!("{summary}");
    Ok(())
}

fn cmd_corr(args: CorrArgs) -> Result<(), Error> {
    let mut manifest = Manifest::new("corr");
    let table = load_table(&args.input, &mut manifest)?;
    let pairs = corr_pairs(&args.pairs, &table)?;
    manifest.set(
        "pairs",
        pairs
            .iter()
            .map(|(x, y)| format!("{x},{y}"))
            .collect::<Vec<_>>()
            .join(";"),
    );
    manifest.set("dedup", "frame_id,condition");
    let reports = correlations(&pairs, &table)?;
    let summary = summary_markdown(None, None, &reports);
    let mut out = BundleWriter::create(&args.out.out)?;
    out.correlations(&reports)?;
    out.text("summary.md", &summary)?;
    out.finish(manifest)?;
    print!("{summary}");
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), Error> {
    let mut manifest = Manifest::new("report");
    manifest.seed = Some(args.seed);
    manifest.set("fdr", args.fdr.fdr.as_str());
    manifest.set("fdr_family", "all ladder LRTs and holdout contrasts");
    let table = load_table(&args.input, &mut manifest)?;
    let fdr = args.fdr.fdr;
    let mut ladder = ladder_report(&table, &args.ladder, &args.random, fdr, &mut manifest)?;
    let mut holdout = holdout_report(&table, &args.holdout, &args.random, args.seed, fdr, &mut manifest)?;
    {
        let mut family: Vec<&mut TestResult> = ladder.tests_mut();
        family.extend(holdout.contrasts.iter_mut());
        stats::adjust_family(&mut family, fdr)?;
    }
    let pairs = corr_pairs(&args.pairs, &table)?;
    let reports = correlations(&pairs, &table)?;
    let summary = summary_markdown(Some(&ladder), Some(&holdout), &reports);
    let mut out = BundleWriter::create(&args.out.out)?;
    out.ladder(&ladder)?;
    out.holdout(&holdout)?;
    out.correlations(&reports)?;
    out.text("summary.md", &summary)?;
    out.finish(manifest)?;
    print!("{summary}");
    Ok(())
}

/// Two-model generator used when no `--config` is given: amplitude depends
/// on model `a`'s surprisal only; model `b`'s surprisal is correlated with
/// it. Within a condition, similarity correlates with surprisal at -0.48 for
/// `a` and -0.20 for `b`.
pub fn default_synth_spec(subjects: usize, frames: usize, electrodes: usize, seed: u64) -> SynthSpec {
    let mut s = SynthSpec::new(subjects, frames, electrodes, seed);
    s.intercept = 1.0;
    s.roi_effects = [0.4, 0.2, 0.0, -0.3, 0.1, 0.1];
    s.subject_sd = 1.0;
    s.frame_sd = 0.5;
    s.electrode_sd = 0.2;
    s.residual_sd = 2.0;
    s.predictors = vec![
        PredictorTruth::new("surprisal_a", [3.0, 5.0, 7.0, 9.0], 1.5, 0.6),
        PredictorTruth::new("cossim_a", [0.5, 0.4, 0.3, 0.2], 0.1, 0.0).linked(0, -0.48),
        PredictorTruth::new("surprisal_b", [3.0, 4.5, 6.0, 7.5], 1.5, 0.0).linked(0, 0.6),
        PredictorTruth::new("cossim_b", [0.5, 0.4, 0.3, 0.2], 0.1, 0.0).linked(2, -0.2),
    ];
    s
}

fn cmd_synth(args: SynthArgs) -> Result<(), Error> {
    let mut manifest = Manifest::new("synth");
    manifest.seed = Some(args.seed);
    let spec = match &args.config {
        Some(path) => {
            digest(&mut manifest, "config", path)?;
            let mut spec: SynthSpec = serde_json::from_reader(BufReader::new(open(path)?))
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            spec.seed = args.seed;
            spec
        }
        None => default_synth_spec(args.subjects, args.frames, args.electrodes, args.seed),
    };
    manifest.set("subjects", spec.subjects);
    manifest.set("frames", spec.frames);
    manifest.set("electrodes", spec.electrodes);
    let (table, truth) = synth::generate(&spec)?;
    let models: Vec<String> = spec
        .predictors
        .iter()
        .filter_map(|p| p.name.strip_prefix("surprisal_").map(str::to_string))
        .collect();
    let mut stimuli = None;
    let mut records = Vec::new();
    for m in &models {
        let (s, r) = synth::emit_lm_fixture(&truth, m)?;
        stimuli.get_or_insert(s);
        records.extend(r);
    }
    let mut out = BundleWriter::create(&args.out.out)?;
    if let Some(stimuli) = &stimuli {
        out.file("stimuli.tsv", |w| Ok(ingest::write_stimuli(w, stimuli)?))?;
        out.file("lm_output.jsonl", |w| Ok(ingest::write_lm_output(w, &records)?))?;
    }
    out.file("eeg.csv", |w| Ok(ingest::write_trials(w, &synth::trials_of(&table))?))?;
    out.file("table.csv", |w| Ok(table.write_csv(w)?))?;
    let json = serde_json::to_string_pretty(&truth).map_err(crate::pipeline::PipelineError::from)?;
    out.text("truth.json", &(json + "\n"))?;
    out.finish(manifest)?;
    println!("{} rows, models: {}", table.len(), models.join(", "));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parses_flags() {
        let cli = Cli::try_parse_from([
            "n400",
            "compare",
            "--stimuli",
            "s.tsv",
            "--lm",
            "a.jsonl",
            "--lm",
            "b.jsonl",
            "--eeg",
            "e.csv",
            "--window",
            "250",
            "450",
            "--fdr",
            "bh",
            "--out",
            "o",
        ])
        .unwrap();
        let Command::Compare(a) = cli.command else { panic!() };
        assert_eq!(a.input.lm.len(), 2);
        assert_eq!(a.input.window, Some(vec![250.0, 450.0]));
        assert_eq!(a.fdr.fdr, FdrMethod::Bh);
        assert_eq!(a.random.random, vec!["subject", "frame_id", "electrode"]);
        assert!(Cli::try_parse_from(["n400", "holdout", "--table", "t.csv", "--out", "o"]).is_err());
        assert!(Cli::try_parse_from(["n400", "fit", "--eeg", "a", "--epochs", "b", "--out", "o"]).is_err());
    }

    #[test]
    fn log_base() {
        assert_eq!(parse_base("e").unwrap(), LogBase::NATS);
        assert_eq!(parse_base("2").unwrap(), LogBase::BITS);
        assert!(parse_base("1").is_err());
        assert!(matches!(parse_base("ten"), Err(Error::Config(_))));
    }
}
