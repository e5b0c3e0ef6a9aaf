//! Argument parsing and the subcommand implementations.

use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use stratwelfare::audit::{
    check_offset_equivalence, check_safety_alignment, check_taylor_exactness, realizability,
    reproduce_example, AnalyticFunction, AuditReport, Example, GridSpec, PolicyFamily,
};
use stratwelfare::data::split;
use stratwelfare::models::QuadraticLabeler;
use stratwelfare::models::ModelDocument;
use stratwelfare::response::{
    build_response_dataset, random_policies, train_learned_response, LearnedArch, LearnedConfig,
};
use stratwelfare::welfare::evaluate;
use stratwelfare::welfare::SwfComponents;
use stratwelfare::{Algorithm, CostModel, DomainBox, LabelingModel, Policy, ResponseModel};

use crate::config::{DatasetKind, ExperimentConfig, LabelerKind, ResponseKindSpec};
use crate::output::{self, ResultRow};
use crate::pipeline;
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "stratwelfare", version, about = "Welfare-aware strategic classification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic population and write it as CSV.
    GenSynthetic(Common),
    /// Train the labeling model on each seed's training split.
    TrainH(Common),
    /// Fit a learned agent response on oracle responses to random policies.
    LearnResponse {
        #[command(flatten)]
        common: Common,
        /// Samples per policy used to build the response table.
        #[arg(long, default_value_t = 500)]
        samples: usize,
        /// Unseen policies for the final error report.
        #[arg(long, default_value_t = 5)]
        eval_policies: usize,
    },
    /// Train a policy per seed and evaluate it on the test split.
    Train(Common),
    /// Evaluate a saved policy on each seed's test split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        policy: PathBuf,
    },
    /// Train over a list of lambda values.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: Axis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Run the built-in alignment audits, plus Taylor exactness of a policy.
    Audit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Grid points per axis.
        #[arg(long, default_value_t = 41)]
        grid: usize,
    },
    /// Recompute one of the worked one-dimensional examples.
    ReproduceExample {
        #[arg(value_parser = parse_example)]
        which: Example,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Axis {
    Lambda1,
    Lambda2,
}

/// Flags shared by the experiment subcommands. Each overrides the config.
#[derive(Debug, Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Use seeds 0..N.
    #[arg(long, conflicts_with = "seed")]
    seeds: Option<u64>,
    /// Use a single seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    dataset: Option<DatasetArg>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Synthetic population size.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_parser = parse_algorithm)]
    algo: Option<Algorithm>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    /// Social-welfare terms: imp, sf or imp,sf.
    #[arg(long, value_parser = parse_components)]
    components: Option<SwfComponents>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, value_enum)]
    response: Option<ResponseArg>,
    /// Information level K.
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    cost_scale: Option<f64>,
    #[arg(long)]
    response_model: Option<PathBuf>,
    #[arg(long, value_enum)]
    labeler: Option<LabelerArg>,
    #[arg(long)]
    labeler_model: Option<PathBuf>,
    /// Select hyperparameters by cross-validation first.
    #[arg(long)]
    cv: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DatasetArg {
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ResponseArg {
    ClosedForm,
    Numeric,
    Learned,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LabelerArg {
    Mlp,
    Oracle,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    Algorithm::parse(s).ok_or_else(|| format!("unknown algorithm `{s}` (stwf, erm, safe, ei, be)"))
}

fn parse_components(s: &str) -> Result<SwfComponents, String> {
    SwfComponents::parse(s).ok_or_else(|| format!("unknown components `{s}` (imp, sf, imp,sf)"))
}

fn parse_example(s: &str) -> Result<Example, String> {
    Example::parse(s).ok_or_else(|| format!("unknown example `{s}` (ex1, ex2)"))
}

impl Common {
    fn resolve(&self) -> Result<(ExperimentConfig, PathBuf), CliError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(n) = self.seeds {
            cfg.seeds = (0..n).collect();
        }
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(d) = self.dataset {
            cfg.dataset.kind = match d {
                DatasetArg::Synthetic => DatasetKind::Synthetic,
                DatasetArg::Csv => DatasetKind::Csv,
            };
        }
        if self.csv.is_some() {
            cfg.dataset.csv.clone_from(&self.csv);
            if self.dataset.is_none() {
                cfg.dataset.kind = DatasetKind::Csv;
            }
        }
        if self.schema.is_some() {
            cfg.dataset.schema.clone_from(&self.schema);
        }
        if let Some(n) = self.n {
            cfg.dataset.n = n;
        }
        if let Some(a) = self.algo {
            cfg.algorithm = a;
        }
        if let Some(v) = self.lambda1 {
            cfg.train.lambda1 = v;
        }
        if let Some(v) = self.lambda2 {
            cfg.train.lambda2 = v;
        }
        if let Some(c) = self.components {
            cfg.train.swf_components = c;
        }
        if let Some(v) = self.lr {
            cfg.train.learning_rate = v;
        }
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.train.batch_size = v;
        }
        if let Some(r) = self.response {
            cfg.response.kind = match r {
                ResponseArg::ClosedForm => ResponseKindSpec::ClosedForm,
                ResponseArg::Numeric => ResponseKindSpec::Numeric,
                ResponseArg::Learned => ResponseKindSpec::Learned,
            };
        }
        if let Some(k) = self.order {
            cfg.response.order = k;
        }
        if self.cost_scale.is_some() {
            cfg.response.cost_scale = self.cost_scale;
        }
        if self.response_model.is_some() {
            cfg.response.model.clone_from(&self.response_model);
            if self.response.is_none() {
                cfg.response.kind = ResponseKindSpec::Learned;
            }
        }
        if let Some(l) = self.labeler {
            cfg.labeler.kind = match l {
                LabelerArg::Mlp => LabelerKind::Mlp,
                LabelerArg::Oracle => LabelerKind::Oracle,
            };
        }
        if self.labeler_model.is_some() {
            cfg.labeler.model.clone_from(&self.labeler_model);
        }
        if self.cv {
            cfg.cv.enabled = true;
        }
        let out = output::resolve_output_dir(self.out_dir.as_deref(), &cfg);
        cfg.output_dir.clone_from(&out);
        cfg.validate()?;
        output::ensure_dir(&out)?;
        Ok((cfg, out))
    }
}

/// Parses `argv` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I: IntoIterator<Item = String>>(argv: I) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => {
                    eprintln!("\n{}", Cli::command().render_usage());
                    1
                }
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::GenSynthetic(c) => gen_synthetic(&c),
        Command::TrainH(c) => train_h(&c),
        Command::LearnResponse {
            common,
            samples,
            eval_policies,
        } => learn_response(&common, samples, eval_policies),
        Command::Train(c) => train_cmd(&c),
        Command::Evaluate { common, policy } => evaluate_cmd(&common, &policy),
        Command::Sweep { common, axis, values } => sweep(&common, axis, &values),
        Command::Audit { common, policy, grid } => audit(&common, policy.as_deref(), grid),
        Command::ReproduceExample { which, out_dir } => reproduce(which, out_dir.as_deref()),
    }
}

fn attach_provenance(doc: &mut ModelDocument, prov: Value) {
    match &mut doc.extra {
        Some(Value::Object(map)) => {
            map.insert("provenance".into(), prov);
        }
        _ => doc.extra = Some(json!({ "provenance": prov })),
    }
}

fn save_model(path: &Path, mut doc: ModelDocument, prov: Value) -> Result<(), CliError> {
    attach_provenance(&mut doc, prov);
    doc.save(path)?;
    Ok(())
}

fn gen_synthetic(c: &Common) -> Result<(), CliError> {
    let (cfg, out) = c.resolve()?;
    if cfg.dataset.kind != DatasetKind::Synthetic {
        return Err(CliError::Validation("gen-synthetic needs --dataset synthetic".into()));
    }
    for &seed in &cfg.seeds {
        let data = pipeline::load_dataset(&cfg, seed)?;
        let path = out.join(format!("synthetic_seed{seed}.csv"));
        data.write_csv(&path)?;
        let mut prov = output::provenance("gen-synthetic", &cfg);
        prov["seed"] = json!(seed);
        prov["spec"] = serde_json::to_value(pipeline::synthetic_spec(&cfg, seed))?;
        output::prepend_comment(&path, &format!("# {prov}"))?;
        let [n0, n1] = data.group_counts();
        println!("seed {seed}: {} samples ({n0} in group 0, {n1} in group 1) -> {}", data.len(), path.display());
    }
    let schema = pipeline::load_dataset(&cfg, cfg.seeds[0])?.cache_schema();
    let schema_path = out.join("synthetic_schema.json");
    std::fs::write(&schema_path, serde_json::to_string_pretty(&schema)? + "\n")?;
    Ok(())
}

fn train_h(c: &Common) -> Result<(), CliError> {
    let (cfg, out) = c.resolve()?;
    let mut summary = Vec::new();
    for &seed in &cfg.seeds {
        let data = pipeline::load_dataset(&cfg, seed)?;
        let (train, test) = split(&data, cfg.dataset.train_frac, seed)?;
        let h = pipeline::build_labeler(&cfg, &train, seed)?;
        let (train_acc, test_acc) = (h.accuracy(&train), h.accuracy(&test));
        let path = out.join(format!("labeler_seed{seed}.json"));
        let mut prov = output::provenance("train-h", &cfg);
        prov["seed"] = json!(seed);
        save_model(&path, h.to_document(), prov)?;
        println!("seed {seed}: train accuracy {train_acc:.4}, test accuracy {test_acc:.4} -> {}", path.display());
        summary.push(json!({"seed": seed, "train_accuracy": train_acc, "test_accuracy": test_acc}));
    }
    output::write_json(&out.join("labeler_summary.json"), "train-h", &cfg, "labelers", &summary)
}

fn learn_response(c: &Common, samples: usize, eval_policies: usize) -> Result<(), CliError> {
    let (cfg, out) = c.resolve()?;
    if samples == 0 || eval_policies == 0 {
        return Err(CliError::Validation("--samples and --eval-policies must be positive".into()));
    }
    let seed = cfg.seeds[0];
    let data = pipeline::load_dataset(&cfg, seed)?;
    let (train, _) = split(&data, cfg.dataset.train_frac, seed)?;
    let take: Vec<usize> = (0..samples.min(train.len())).collect();
    let experiments = train.subset(&take);
    let cost = CostModel::new(cfg.cost_scale(), train.improvable_mask().to_vec())?;
    let oracle = ResponseModel::closed_form(cfg.response.order, cost);

    let policies = random_policies(cfg.response.policies, &experiments, seed)?;
    let rows = build_response_dataset(&experiments, &policies, cfg.response.order, &oracle)?;
    let lcfg = LearnedConfig {
        epochs: cfg.response.epochs,
        seed,
        ..LearnedConfig::default()
    };
    let (model, fit) = train_learned_response(&rows, &LearnedArch::default(), &lcfg)?;

    let unseen = random_policies(eval_policies, &experiments, seed.wrapping_add(0x9e37_79b9))?;
    let unseen_rows = build_response_dataset(&experiments, &unseen, cfg.response.order, &oracle)?;
    let errors = model.errors(&unseen_rows)?;

    let comment = output::provenance_comment("learn-response", &cfg);
    rows.write_csv(out.join("response_rows.csv"), Some(&comment))?;
    save_model(
        &out.join("learned_response.json"),
        model.to_document(),
        output::provenance("learn-response", &cfg),
    )?;
    output::write_json(
        &out.join("learned_response_report.json"),
        "learn-response",
        &cfg,
        "report",
        &json!({ "fit": fit, "unseen_policies": eval_policies, "unseen": errors }),
    )?;
    println!(
        "learned response: {} rows, holdout median relative error {:.4}, unseen median relative error {:.4}",
        rows.len(),
        fit.holdout_median_rel_error,
        errors.median_rel_error
    );
    Ok(())
}

fn train_cmd(c: &Common) -> Result<(), CliError> {
    let (cfg, out) = c.resolve()?;
    let algo = cfg.algorithm.name();
    let train_cfg = if cfg.cv.enabled {
        let cv = pipeline::select_hyperparameters(&cfg)?;
        output::write_json(&out.join(format!("cv_{algo}.json")), "train", &cfg, "cv", &cv)?;
        println!(
            "cross-validation picked lr={} lambda1={} lambda2={}",
            cv.best.learning_rate, cv.best.lambda1, cv.best.lambda2
        );
        cv.best
    } else {
        cfg.train.clone()
    };

    let mut rows = Vec::new();
    let mut runs = Vec::new();
    let mut errors = Vec::new();
    for (seed, run) in pipeline::run_seeds(&cfg, &train_cfg) {
        runs.push(match &run {
            Ok(r) => json!({"seed": seed, "welfare": r.evaluation.welfare, "fairness": r.evaluation.fairness}),
            Err(e) => json!({"seed": seed, "error": e.to_string()}),
        });
        let outcome = match &run {
            Ok(r) => {
                let mut prov = output::provenance("train", &cfg);
                prov["seed"] = json!(seed);
                save_model(&out.join(format!("policy_{algo}_seed{seed}.json")), r.policy.to_document(), prov)?;
                let mut prov = output::provenance("train", &cfg);
                prov["seed"] = json!(seed);
                let comment = format!("# {prov}");
                r.trace
                    .write_csv(out.join(format!("trace_{algo}_seed{seed}.csv")), Some(&comment))?;
                Ok(&r.evaluation)
            }
            Err(e) => {
                log::warn!("seed {seed}: {e}");
                Err(e.to_string())
            }
        };
        rows.push(ResultRow::detail(algo, train_cfg.lambda1, train_cfg.lambda2, seed, outcome));
        if let Err(e) = run {
            errors.push(e);
        }
    }
    let agg = ResultRow::aggregate(&rows).expect("at least one seed");
    print_aggregate(&agg);
    rows.push(agg);
    output::write_rows(
        &out.join(format!("results_{algo}.csv")),
        &output::provenance_comment("train", &cfg),
        &rows,
    )?;
    output::write_json(
        &out.join(format!("run_{algo}.json")),
        "train",
        &cfg,
        "runs",
        &json!({"training": train_cfg, "seeds": runs}),
    )?;
    all_failed(errors, cfg.seeds.len())
}

/// Error for a command whose every run failed. Bad input keeps its own
/// error so the exit code still says so.
fn all_failed(mut errors: Vec<CliError>, runs: usize) -> Result<(), CliError> {
    if errors.is_empty() || errors.len() < runs {
        return Ok(());
    }
    let first = errors.remove(0);
    if first.exit_code() == 1 {
        Err(first)
    } else {
        Err(CliError::Runtime(format!("all runs failed: {first}")))
    }
}

fn print_aggregate(agg: &ResultRow) {
    let show = |name: &str| {
        let k = stratwelfare::welfare::METRIC_COLUMNS
            .iter()
            .position(|c| *c == name)
            .expect("known metric");
        match (agg.metrics[k], agg.stds[k]) {
            (Some(m), Some(s)) => format!("{name} {m:.4}±{s:.4}"),
            (Some(m), None) => format!("{name} {m:.4}"),
            _ => format!("{name} n/a"),
        }
    };
    let line: Vec<String> = ["total", "dw", "swf", "aw", "imp", "sf"].iter().map(|m| show(m)).collect();
    println!(
        "{} lambda1={} lambda2={}: {}",
        agg.algorithm,
        agg.lambda1,
        agg.lambda2,
        line.join(", ")
    );
    if !agg.error.is_empty() {
        println!("  {}", agg.error);
    }
}

fn evaluate_cmd(c: &Common, policy_path: &Path) -> Result<(), CliError> {
    let (cfg, out) = c.resolve()?;
    let policy = Policy::from_document(&ModelDocument::load(policy_path)?)?;
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let prep = pipeline::prepare(&cfg, seed)?;
        let ev = evaluate(&policy, &prep.test, &prep.labeler, &prep.response)?;
        let mut doc = output::provenance("evaluate", &cfg);
        doc["seed"] = json!(seed);
        doc["policy"] = json!(policy_path);
        doc["welfare"] = serde_json::to_value(ev.welfare)?;
        doc["fairness"] = serde_json::to_value(ev.fairness)?;
        std::fs::write(
            out.join(format!("evaluation_seed{seed}.json")),
            serde_json::to_string_pretty(&doc)? + "\n",
        )?;
        rows.push(ResultRow::detail("policy", f64::NAN, f64::NAN, seed, Ok(&ev)));
        let w = &ev.welfare;
        println!(
            "seed {seed}: total {:.4}, dw {:.4}, swf {:.4}, aw {:.4}, imp {:.4}, sf {:.4}",
            w.total, w.dw, w.swf, w.aw, w.imp, w.sf
        );
    }
    output::write_rows(
        &out.join("evaluation.csv"),
        &output::provenance_comment("evaluate", &cfg),
        &rows,
    )
}

fn sweep(c: &Common, axis: Axis, values: &[f64]) -> Result<(), CliError> {
    let (cfg, out) = c.resolve()?;
    if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(CliError::Validation("sweep values must be finite and >= 0".into()));
    }
    let algo = cfg.algorithm.name();
    let mut detail = Vec::new();
    let mut aggregates = Vec::new();
    let mut errors = Vec::new();
    for &v in values {
        let mut tc = cfg.train.clone();
        match axis {
            Axis::Lambda1 => tc.lambda1 = v,
            Axis::Lambda2 => tc.lambda2 = v,
        }
        let mut rows = Vec::new();
        for (seed, run) in pipeline::run_seeds(&cfg, &tc) {
            let outcome = match &run {
                Ok(r) => Ok(&r.evaluation),
                Err(e) => {
                    log::warn!("value {v} seed {seed}: {e}");
                    Err(e.to_string())
                }
            };
            rows.push(ResultRow::detail(algo, tc.lambda1, tc.lambda2, seed, outcome));
            if let Err(e) = run {
                errors.push(e);
            }
        }
        let agg = ResultRow::aggregate(&rows).expect("at least one seed");
        print_aggregate(&agg);
        aggregates.push(agg);
        detail.extend(rows);
    }
    detail.extend(aggregates);
    let name = match axis {
        Axis::Lambda1 => "lambda1",
        Axis::Lambda2 => "lambda2",
    };
    output::write_rows(
        &out.join(format!("sweep_{name}.csv")),
        &output::provenance_comment("sweep", &cfg),
        &detail,
    )?;
    all_failed(errors, cfg.seeds.len() * values.len())
}

fn audit(c: &Common, policy_path: Option<&Path>, grid_n: usize) -> Result<(), CliError> {
    let (cfg, out) = c.resolve()?;
    if grid_n < 2 {
        return Err(CliError::Validation("--grid needs at least 2 points per axis".into()));
    }
    let mut reports: Vec<(String, AuditReport)> = Vec::new();
    let line = GridSpec::uniform(1, 0.0, 1.0, grid_n)?;

    let ex1 = reproduce_example(Example::Ex1)?;
    let slope = ex1.value("imp_max_slope").unwrap_or(0.0);
    let intercept = ex1.value("imp_max_intercept").unwrap_or(0.0);
    let imp_line = Policy::linear_raw(vec![slope], intercept).with_domain_box(DomainBox::unit(1))?;
    let bump = stratwelfare::audit::bump_labeler();
    reports.push((
        "improvement-maximizing line vs bump labeler".into(),
        check_safety_alignment(&bump, &imp_line, 1, &line, 1e-12)?,
    ));
    let h_lin = LabelingModel::ClosedQuadratic(QuadraticLabeler::new(1, vec![0.2, 0.6, 0.0])?);
    let f_lin = Policy::linear_raw(vec![0.6], 0.2);
    reports.push((
        "policy equal to a linear labeler".into(),
        check_safety_alignment(&h_lin, &f_lin, 1, &line, 1e-12)?,
    ));
    let exp = AnalyticFunction::exp_minus_linear();
    let half_square = Policy::polynomial(1, 2, vec![0.5, 0.0, 0.5])?;
    let origin = GridSpec::new(vec![0.0], vec![0.0], vec![1])?;
    reports.push((
        "e^x - x - 1 vs x^2/2 + 1/2 at the origin".into(),
        check_offset_equivalence(&exp, &half_square, 2, &origin, 1e-9)?,
    ));
    if let Some(p) = policy_path {
        let policy = Policy::from_document(&ModelDocument::load(p)?)?;
        let b = policy.domain_box().clone();
        let d = policy.feature_dim();
        let per_axis = ((4096f64).powf(1.0 / (2.0 * d as f64)).floor() as usize).clamp(2, grid_n);
        let (lo, hi): (Vec<f64>, Vec<f64>) = (0..d)
            .map(|i| {
                let (l, h) = (b.lo[i], b.hi[i]);
                if l.is_finite() && h.is_finite() {
                    (l, h)
                } else {
                    (-1.0, 1.0)
                }
            })
            .unzip();
        let grid = GridSpec::new(lo, hi, vec![per_axis; d])?;
        reports.push((
            format!("policy {}", p.display()),
            check_taylor_exactness(&policy, cfg.response.order, &grid, 1e-9)?,
        ));
    }

    let h_syn = LabelingModel::ClosedQuadratic(pipeline::synthetic_spec(&cfg, 0).labeling_model()?);
    let square = GridSpec::uniform(2, 0.0, 1.0, grid_n.min(21))?;
    let mut families = Vec::new();
    for fam in [PolicyFamily::LinearSigmoid, PolicyFamily::Polynomial(2)] {
        families.push(realizability(&h_syn, fam, &square)?);
    }

    for (name, r) in &reports {
        println!("{} [{name}]", r.summary_line());
    }
    for r in &families {
        println!(
            "{} synthetic labeler in {:?}: residual {:.3e}",
            if r.realizable { "realizable" } else { "not realizable" },
            r.family,
            r.residual
        );
    }
    let body: Vec<Value> = reports
        .iter()
        .map(|(name, r)| json!({"name": name, "report": r}))
        .collect();
    output::write_json(
        &out.join("audit.json"),
        "audit",
        &cfg,
        "audits",
        &json!({"checks": body, "realizability": families}),
    )
}

/// Twelve decimals without trailing zeros; the JSON keeps full precision.
fn rounded(v: f64) -> String {
    let s = format!("{v:.12}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn reproduce(which: Example, out_dir: Option<&Path>) -> Result<(), CliError> {
    let report = reproduce_example(which)?;
    for c in &report.checks {
        let status = if c.pass { "ok" } else { "MISMATCH" };
        match c.expected {
            Some(e) => println!("{} = {} (expected {e}) {status}", c.name, rounded(c.value)),
            None => println!("{} = {} {status}", c.name, rounded(c.value)),
        }
    }
    let cfg = ExperimentConfig::default();
    let dir = output::resolve_output_dir(out_dir, &cfg);
    output::ensure_dir(&dir)?;
    let name = match which {
        Example::Ex1 => "ex1",
        Example::Ex2 => "ex2",
    };
    let doc = json!({"command": "reproduce-example", "example": name, "report": report});
    std::fs::write(dir.join(format!("example_{name}.json")), serde_json::to_string_pretty(&doc)? + "\n")?;
    if report.pass {
        Ok(())
    } else {
        Err(CliError::Runtime(format!("example {name} did not reproduce")))
    }
}
