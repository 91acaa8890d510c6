//! `triz-engine`: the TRIZ reasoning pipeline, its evaluation harness and
//! the heat-pipe battery model from the command line.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use triz_btms::{celsius, sweep_contact_angle, BtmsError, ExecutionMode, ModuleGeometry, SimulationOptions};
use triz_core::evaluation::{self, CaseRecord, EvalError};
use triz_core::kb::{validate_knowledge_base, KbError, RawKnowledgeBase};
use triz_core::llm::{ENV_MODE, ENV_TRANSCRIPT_DIR};
use triz_core::pipeline::{FailedRun, PipelineError};
use triz_core::reporting::{self, Format, Templates};
use triz_core::{
    Contradiction, Gateway, GatewayError, KnowledgeBase, Pipeline, PipelineOverrides, ProblemInput, ProviderConfig,
    SolutionReport,
};
use triz_service::{AppState, ServiceConfig, ServiceError};

#[derive(Parser)]
#[command(name = "triz-engine", version, about = "TRIZ problem solving with language models")]
struct Cli {
    /// Print machine-readable JSON on stdout
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline on one problem and print the report
    Solve(SolveArgs),
    /// Repeat contradiction identification and tally the outcomes
    Trials(TrialsArgs),
    /// Score repeated trials against a case's reference contradiction
    Evaluate(EvaluateArgs),
    /// Knowledge-base maintenance
    #[command(subcommand)]
    Kb(KbCommand),
    /// Render stored reports
    #[command(subcommand)]
    Report(ReportCommand),
    /// Heat-pipe battery thermal management model
    #[command(subcommand)]
    Btms(BtmsCommand),
    /// Run the HTTP job service
    Serve(ServeArgs),
}

#[derive(Args)]
struct ProblemSource {
    /// Problem statement file, or `-` for stdin
    #[arg(long, conflicts_with = "case", required_unless_present = "case")]
    input: Option<PathBuf>,
    /// Use the problem statement of a case from the case base
    #[arg(long)]
    case: Option<String>,
    /// Case base directory (default: the bundled cases)
    #[arg(long)]
    cases_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DocFormat {
    Md,
    Tex,
    Json,
}

impl DocFormat {
    fn rendered(self) -> Option<Format> {
        match self {
            DocFormat::Md => Some(Format::Markdown),
            DocFormat::Tex => Some(Format::Latex),
            DocFormat::Json => None,
        }
    }
}

#[derive(Clone, Debug)]
struct PrincipleList(Vec<u8>);

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    source: ProblemSource,
    /// Skip identification and use this contradiction, as IMPROVING:WORSENING
    #[arg(long, value_name = "I:W", value_parser = parse_contradiction)]
    override_contradiction: Option<Contradiction>,
    /// Skip the matrix lookup and use these principles, comma separated
    #[arg(long, value_name = "A,B,...", value_parser = parse_principles)]
    override_principles: Option<PrincipleList>,
    #[arg(long, value_enum, default_value = "md")]
    format: DocFormat,
    /// Write `<report id>.<ext>` here instead of printing the document
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Directory holding `report.md` / `report.tex` templates
    #[arg(long, value_name = "DIR")]
    templates: Option<PathBuf>,
}

#[derive(Args)]
struct TrialsArgs {
    #[command(flatten)]
    source: ProblemSource,
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// How many of the most frequent contradictions to list
    #[arg(long, default_value_t = 3)]
    k: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    case: String,
    #[arg(long)]
    cases_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Write `<case>.json` and `<case>.csv` here
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum KbCommand {
    /// Check every knowledge-base invariant
    Validate {
        /// Bundle directory (default: the bundled knowledge base)
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ReportCommand {
    /// Render a JSON report as Markdown or LaTeX
    Render {
        /// Report JSON file, or `-` for stdin
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value = "md", value_parser = parse_format)]
        format: Format,
        #[arg(long, value_name = "DIR")]
        templates: Option<PathBuf>,
        /// Output file (default: stdout)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum BtmsCommand {
    /// Grouping efficiency and volumetric energy density of a module
    Metrics {
        /// Battery volume, L
        #[arg(long)]
        v_batt: f64,
        /// Module volume, L
        #[arg(long)]
        v_module: f64,
        /// Module energy, Wh
        #[arg(long)]
        e_batt: f64,
    },
    /// Simulate one constant-rate discharge
    Simulate {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        c_rate: f64,
        /// Contact angle in degrees (default: the spec's)
        #[arg(long)]
        theta: Option<f64>,
        /// Seconds (default: a full discharge)
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, default_value_t = 0.25)]
        dt: f64,
        #[arg(long, default_value_t = 10.0)]
        sample_interval: f64,
        /// Write the temperature trace as CSV
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Final temperatures over a grid of contact angles and C-rates
    Sweep {
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Degrees
        #[arg(long, value_delimiter = ',', default_value = "10,20,30,45")]
        thetas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,2,3")]
        c_rates: Vec<f64>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, default_value_t = 0.25)]
        dt: f64,
        /// Run the grid on one thread
        #[arg(long)]
        sequential: bool,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    max_concurrent_jobs: Option<usize>,
    #[arg(long)]
    queue_capacity: Option<usize>,
    #[arg(long)]
    cases_dir: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Run(#[from] FailedRun),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Btms(#[from] BtmsError),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error("{0}")]
    Invalid(String),
    /// Already described on stdout.
    #[error("{0}")]
    Reported(String),
}

type Result<T, E = CliError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn parse_contradiction(s: &str) -> Result<Contradiction, String> {
    let (i, w) = s.split_once(':').ok_or_else(|| format!("expected IMPROVING:WORSENING, got {s:?}"))?;
    let num = |t: &str| t.trim().parse::<i64>().map_err(|_| format!("{t:?} is not a parameter index"));
    Contradiction::new(num(i)?, num(w)?).map_err(|e| e.to_string())
}

fn parse_principles(s: &str) -> Result<PrincipleList, String> {
    s.split(',')
        .map(|t| t.trim().parse::<u8>().map_err(|_| format!("{t:?} is not a principle index")))
        .collect::<Result<Vec<_>, _>>()
        .map(PrincipleList)
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let msg = e.render().to_string();
            eprint!("{msg}");
            if !msg.contains("Usage:") {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            return ExitCode::from(2);
        }
        Err(e) => e.exit(),
    };
    let json = cli.json;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if json && !matches!(e, CliError::Reported(_)) {
                println!("{}", json!({ "error": e.to_string() }));
            }
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

/// Prints `value` as JSON, or the human-readable text.
fn emit(json: bool, value: Value, human: impl FnOnce() -> String) {
    if json {
        println!("{}", serde_json::to_string_pretty(&value).expect("JSON values serialize"));
    } else {
        let text = human();
        print!("{text}");
        if !text.ends_with('\n') {
            println!();
        }
    }
}

/// Replays the bundled transcripts unless the gateway environment says
/// otherwise, so nothing needs credentials by default.
fn gateway() -> Result<Gateway> {
    let configured = [ENV_MODE, ENV_TRANSCRIPT_DIR].iter().any(|k| std::env::var_os(k).is_some_and(|v| !v.is_empty()));
    let gw = if configured {
        Gateway::from_env()?
    } else {
        Gateway::replay(ProviderConfig::fixture(), triz_core::bundled_assets_dir().join("transcripts"))?
    };
    Ok(gw)
}

fn cases(dir: Option<&Path>) -> Result<Vec<CaseRecord>> {
    let dir = dir.map_or_else(|| triz_core::bundled_assets_dir().join("cases"), Path::to_path_buf);
    Ok(evaluation::load_case_base(dir)?)
}

fn find_case(dir: Option<&Path>, id: &str) -> Result<CaseRecord> {
    let all = cases(dir)?;
    let known: Vec<&str> = all.iter().map(|c| c.id.as_str()).collect();
    let hint = known.join(", ");
    all.iter()
        .find(|c| c.id == id)
        .cloned()
        .ok_or_else(|| CliError::Invalid(format!("unknown case {id:?} (known: {hint})")))
}

fn read_text(path: &Path) -> Result<String> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s).map_err(io_err(path))?;
        Ok(s)
    } else {
        std::fs::read_to_string(path).map_err(io_err(path))
    }
}

impl ProblemSource {
    fn read(&self) -> Result<ProblemInput> {
        let text = match (&self.input, &self.case) {
            (Some(p), _) => read_text(p)?,
            (None, Some(id)) => find_case(self.cases_dir.as_deref(), id)?.problem_statement,
            (None, None) => unreachable!("clap requires --input or --case"),
        };
        ProblemInput::new(text).ok_or_else(|| CliError::Invalid("problem statement is empty".into()))
    }
}

fn templates(dir: Option<&Path>) -> Result<Templates> {
    match dir {
        Some(d) => Templates::load(d).map_err(CliError::Invalid),
        None => Ok(Templates::default()),
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    std::fs::write(path, text).map_err(io_err(path))
}

fn run(cli: Cli) -> Result<()> {
    let json = cli.json;
    match cli.command {
        Command::Solve(a) => solve(json, a),
        Command::Trials(a) => trials(json, a),
        Command::Evaluate(a) => evaluate(json, a),
        Command::Kb(KbCommand::Validate { dir }) => kb_validate(json, dir),
        Command::Report(ReportCommand::Render { report, format, templates: t, out }) => {
            let report: SolutionReport =
                serde_json::from_str(&read_text(&report)?).map_err(|e| CliError::Invalid(format!("report: {e}")))?;
            let kb = KnowledgeBase::bundled();
            let doc = templates(t.as_deref())?.render(&reporting::content(&kb, &report), format);
            if let Some(path) = &out {
                write_file(path, &doc)?;
            }
            emit(json, json!({ "report_id": report.id, "document": doc, "path": out }), || match &out {
                Some(p) => format!("{}\n", p.display()),
                None => doc.clone(),
            });
            Ok(())
        }
        Command::Btms(cmd) => btms(json, cmd),
        Command::Serve(a) => serve(a),
    }
}

fn solve(json: bool, a: SolveArgs) -> Result<()> {
    let input = a.source.read()?;
    let overrides = PipelineOverrides {
        problem: None,
        contradiction: a.override_contradiction,
        principles: a.override_principles.map(|p| p.0),
    };
    overrides.validate()?;
    let gw = gateway()?;
    let kb = KnowledgeBase::bundled();
    let report = Pipeline::new(&gw, &kb).run(&input, &overrides)?;

    let (doc, ext) = match a.format.rendered() {
        Some(fmt) => {
            (templates(a.templates.as_deref())?.render(&reporting::content(&kb, &report), fmt), fmt.extension())
        }
        None => (serde_json::to_string_pretty(&report).expect("reports serialize") + "\n", "json"),
    };
    let path = match &a.out {
        Some(dir) => {
            let p = dir.join(format!("{}.{ext}", report.id));
            write_file(&p, &doc)?;
            Some(p)
        }
        None => None,
    };
    let rendered = a.format.rendered().is_some().then_some(doc.as_str());
    emit(json, json!({ "report": report, "document": rendered, "path": path }), || match &path {
        Some(p) => format!("{}\n", p.display()),
        None => doc.clone(),
    });
    Ok(())
}

fn trials(json: bool, a: TrialsArgs) -> Result<()> {
    if a.n == 0 || a.k == 0 {
        return Err(CliError::Invalid("--n and --k must be at least 1".into()));
    }
    let input = a.source.read()?;
    let gw = gateway()?;
    let kb = KnowledgeBase::bundled();
    let d = Pipeline::new(&gw, &kb).run_trials(&input, a.n)?;
    let h = evaluation::entropy(&d)?;
    let top: Vec<Value> = evaluation::top_k(&d, a.k)?
        .into_iter()
        .map(|(c, p)| json!({ "contradiction": c, "count": d.count(c), "proportion": p }))
        .collect();
    emit(json, json!({ "n": a.n, "entropy": h, "top": top, "distribution": d }), || {
        let mut s = format!(
            "{} trials: {} counted, {} failed, {} distinct, entropy {h:.3} bits\n",
            a.n,
            d.counted(),
            d.failures(),
            d.distinct()
        );
        for (c, n) in d.ranked().into_iter().take(a.k) {
            s.push_str(&format!("  {c}  {n}\n"));
        }
        s
    });
    Ok(())
}

fn evaluate(json: bool, a: EvaluateArgs) -> Result<()> {
    if a.n == 0 || a.k == 0 {
        return Err(CliError::Invalid("--n and --k must be at least 1".into()));
    }
    let case = find_case(a.cases_dir.as_deref(), &a.case)?;
    let input = ProblemInput::new(case.problem_statement.clone())
        .ok_or_else(|| CliError::Invalid(format!("case {} has no problem statement", case.id)))?;
    let gw = gateway()?;
    let kb = KnowledgeBase::bundled();
    let d = Pipeline::new(&gw, &kb).run_trials(&input, a.n)?;
    let eval = evaluation::evaluate_case(&case, &d, a.k)?;
    let files = match &a.out {
        Some(dir) => {
            let (j, c) = evaluation::write_evaluation(dir, &case, &eval, &d)?;
            vec![j, c]
        }
        None => Vec::new(),
    };
    emit(json, json!({ "evaluation": eval, "distribution": d, "files": files }), || {
        let mut s = format!(
            "case {}: reference {}, entropy {:.3} bits, best top-{} match {}\n",
            eval.case_id, eval.reference, eval.entropy, eval.k, eval.best
        );
        for r in &eval.top {
            s.push_str(&format!("  {}  {:>5.1}%  {}\n", r.contradiction, 100.0 * r.proportion, r.category));
        }
        for f in &files {
            s.push_str(&format!("wrote {}\n", f.display()));
        }
        s
    });
    Ok(())
}

fn kb_validate(json: bool, dir: Option<PathBuf>) -> Result<()> {
    let dir = dir.unwrap_or_else(|| triz_core::bundled_assets_dir().join("kb"));
    let report = validate_knowledge_base(&RawKnowledgeBase::read_dir(&dir)?);
    emit(json, json!({ "valid": report.is_valid(), "violations": report.violations }), || {
        if report.is_valid() {
            format!("{}: ok\n", dir.display())
        } else {
            report.violations.iter().map(|v| format!("{v}\n")).collect()
        }
    });
    if report.is_valid() {
        Ok(())
    } else {
        Err(CliError::Reported(format!("{} violation(s)", report.violations.len())))
    }
}

fn btms(json: bool, cmd: BtmsCommand) -> Result<()> {
    match cmd {
        BtmsCommand::Metrics { v_batt, v_module, e_batt } => {
            let g = ModuleGeometry::new(v_batt, v_module, e_batt)?;
            let e_g = triz_btms::metrics::grouping_efficiency(&g);
            let se_v = triz_btms::metrics::volumetric_energy_density(&g);
            emit(json, json!({ "grouping_efficiency": e_g, "volumetric_energy_density_wh_per_l": se_v }), || {
                format!("e_g  = {:.0}% ({e_g:.4})\nSE_V = {se_v:.0} Wh/L ({se_v:.2})\n", 100.0 * e_g)
            });
            Ok(())
        }
        BtmsCommand::Simulate { spec, c_rate, theta, duration, dt, sample_interval, csv } => {
            let spec = triz_btms::assembly::load_or_bundled(spec.as_deref())?;
            let mut opts = SimulationOptions::new(c_rate).dt(dt).sample_interval(sample_interval);
            if let Some(t) = theta {
                opts = opts.theta_degrees(t);
            }
            if let Some(d) = duration {
                opts = opts.duration(d);
            }
            let label = triz_btms::assembly::describe(&spec, &opts);
            let r = spec.simulate(&opts)?;
            if let Some(path) = &csv {
                let f = std::fs::File::create(path).map_err(io_err(path))?;
                r.write_csv(std::io::BufWriter::new(f))?;
            }
            emit(
                json,
                json!({
                    "label": label,
                    "final_max_temp_c": celsius(r.final_max_temp),
                    "max_temp_c": celsius(r.max_temp),
                    "max_temp_diff_k": r.max_temp_diff,
                    "result": r,
                }),
                || {
                    format!(
                        "{label}\nfinal max temperature {:.2} °C, peak {:.2} °C, largest spread {:.3} K\n\
                         dt {} s (stability bound {:.3} s)\n",
                        celsius(r.final_max_temp),
                        celsius(r.max_temp),
                        r.max_temp_diff,
                        r.dt,
                        r.stability_bound
                    )
                },
            );
            Ok(())
        }
        BtmsCommand::Sweep { spec, thetas, c_rates, duration, dt, sequential, csv } => {
            let spec = triz_btms::assembly::load_or_bundled(spec.as_deref())?;
            let mut template = SimulationOptions::new(1.0).dt(dt);
            template.duration = duration;
            let radians: Vec<f64> = thetas.iter().map(|d| d.to_radians()).collect();
            let mode = if sequential { ExecutionMode::Sequential } else { ExecutionMode::Parallel };
            let rows = sweep_contact_angle(&spec, &radians, &c_rates, &template, mode)?;
            if let Some(path) = &csv {
                let f = std::fs::File::create(path).map_err(io_err(path))?;
                triz_btms::sweep::write_sweep_csv(&rows, std::io::BufWriter::new(f))?;
            }
            let out: Vec<Value> = rows
                .iter()
                .map(|r| {
                    json!({
                        "theta_deg": r.theta.to_degrees(),
                        "c_rate": r.c_rate,
                        "final_max_temp_c": celsius(r.final_max_temp),
                        "max_temp_diff_k": r.max_temp_diff,
                    })
                })
                .collect();
            emit(json, json!({ "rows": out }), || {
                let mut s = String::from("theta_deg  c_rate  final_max_c  spread_k\n");
                for r in &rows {
                    s.push_str(&format!(
                        "{:>9.1}  {:>6.2}  {:>11.2}  {:>8.4}\n",
                        r.theta.to_degrees(),
                        r.c_rate,
                        celsius(r.final_max_temp),
                        r.max_temp_diff
                    ));
                }
                s
            });
            Ok(())
        }
    }
}

fn serve(a: ServeArgs) -> Result<()> {
    let mut config = ServiceConfig::from_env()?;
    if let Some(d) = a.data_dir {
        config.data_dir = d;
    }
    if let Some(p) = a.port {
        config.port = p;
    }
    if let Some(n) = a.max_concurrent_jobs {
        config.max_concurrent_jobs = n;
    }
    if let Some(n) = a.queue_capacity {
        config.queue_capacity = n;
    }
    config.cases_dir = a.cases_dir;
    // The blocking HTTP client must be built, and finally dropped, outside
    // the async runtime; `state` outlives the runtime for that reason.
    let state = AppState::new(&config, gateway()?, KnowledgeBase::bundled())?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Invalid(format!("starting the runtime: {e}")))?;
    let result = rt.block_on(triz_service::serve(config, state.clone()));
    drop(rt);
    drop(state);
    Ok(result?)
}
