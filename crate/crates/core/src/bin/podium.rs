use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use podium::api::views::{self, report_for_view, to_body, Span};
use podium::api::{ApiError, AppState, ErrorCode};
use podium::corpus::{CorpusSnapshot, CorpusStore};
use podium::effectiveness::{fit, EffectivenessError, EffectivenessModel, FitOptions};
use podium::feature::{load_bundle, serialize_bundle, synth_bundle, FeatureBundle, SynthProfile};
use podium::recommend::{Direction, Granularity, Mode, RecommendationQuery};
use podium::report;
use podium::summary::GmmOptions;

const DEFAULT_CORPUS: &str = "corpus";
const DEFAULT_HOST: &str = "127.0.0.1";
const DEFAULT_PORT: u16 = 8080;

#[derive(Debug, Parser)]
#[command(name = "podium", version, about = "Analyze, score and compare recorded speeches")]
struct Cli {
    /// Corpus directory [default: ./corpus]
    #[arg(long, global = true, value_name = "DIR")]
    corpus: Option<PathBuf>,
    /// Effectiveness model file [default: the built-in reference model]
    #[arg(long, global = true, value_name = "FILE")]
    model: Option<PathBuf>,
    /// TOML file with defaults for corpus, model, host, port and ui_dir
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Add a bundle file, or every *.json bundle in a directory, to the corpus
    Ingest {
        path: PathBuf,
        /// Replace speeches whose id is already stored
        #[arg(long)]
        force: bool,
    },
    /// Report factors and their effectiveness for a stored speech or a bundle file
    Analyze {
        /// Speech id, or path to a bundle file
        target: String,
        #[command(flatten)]
        span: SpanArg,
        #[arg(long, value_enum, default_value_t = ReportFormat::Md)]
        format: ReportFormat,
    },
    /// Fit per-factor ordinal models on the corpus levels
    Fit {
        /// Write the fitted model file here
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Rank speeches or sentences by distance to a query speech
    Recommend {
        id: String,
        #[command(flatten)]
        span: SpanArg,
        #[arg(long, value_enum, default_value_t = ModeArg::Factor)]
        mode: ModeArg,
        #[arg(long, value_enum, default_value_t = GranularityArg::Speech)]
        granularity: GranularityArg,
        /// Comma-separated factor ids [default: the model's significant factors]
        #[arg(long, value_name = "IDS")]
        factors: Option<String>,
        #[arg(short, long, default_value_t = 5)]
        k: usize,
        #[arg(long, value_enum, default_value_t = DirectionArg::Similar)]
        direction: DirectionArg,
        /// Keep the query speech or its own sentences among the candidates
        #[arg(long)]
        include_self: bool,
        #[arg(long, value_enum, default_value_t = TableFormat::Table)]
        format: TableFormat,
    },
    /// Generate synthetic bundles and ingest them, or write them with --out
    Synth {
        /// Seed of the first bundle; bundle i uses seed + i
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        n: usize,
        /// Generator profile, TOML or JSON
        #[arg(long, value_name = "FILE")]
        profile: Option<PathBuf>,
        /// Override the profile's level effect
        #[arg(long)]
        level_effect: Option<f64>,
        /// Write bundle files to this directory instead of ingesting
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Serve the HTTP API, and optionally a built UI
    Serve {
        #[arg(long)]
        host: Option<IpAddr>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, value_name = "DIR")]
        ui_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct SpanArg {
    /// Time span START:END in seconds; either side may be empty
    #[arg(long, value_name = "START:END", value_parser = parse_span)]
    span: Option<Span>,
}

impl SpanArg {
    fn get(&self) -> Span {
        self.span.unwrap_or_default()
    }
}

fn parse_span(s: &str) -> Result<Span, String> {
    let (a, b) = s.split_once(':').ok_or("expected START:END")?;
    let side = |v: &str| -> Result<Option<f64>, String> {
        let v = v.trim();
        if v.is_empty() {
            return Ok(None);
        }
        v.parse::<f64>().map(Some).map_err(|e| format!("`{v}`: {e}"))
    };
    Ok(Span {
        start: side(a)?,
        end: side(b)?,
    })
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReportFormat {
    Md,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TableFormat {
    Table,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Factor,
    Script,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GranularityArg {
    Speech,
    Sentence,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DirectionArg {
    Similar,
    Different,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Config {
    corpus: Option<PathBuf>,
    model: Option<PathBuf>,
    host: Option<IpAddr>,
    port: Option<u16>,
    ui_dir: Option<PathBuf>,
}

impl Config {
    fn load(path: &Path) -> Result<Self, ApiError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        let mut c: Config =
            toml::from_str(&text).map_err(|e| ApiError::invalid(format!("config {}: {}", path.display(), e.message())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut c.corpus, &mut c.model, &mut c.ui_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(c)
    }
}

/// Flags merged over the optional config file.
struct Settings {
    corpus: PathBuf,
    model: Option<PathBuf>,
    host: IpAddr,
    port: u16,
    ui_dir: Option<PathBuf>,
}

fn io_error(path: &Path, e: std::io::Error) -> ApiError {
    let code = if e.kind() == std::io::ErrorKind::NotFound {
        ErrorCode::NotFound
    } else {
        ErrorCode::StorageError
    };
    ApiError::new(code, format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.render().to_string();
            let text = text.strip_prefix("error: ").unwrap_or(&text).trim_end();
            eprintln!("error[{}]: {text}", ErrorCode::InvalidArgument);
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.code, e.message);
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), ApiError> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let (host, port, ui_dir) = match &cli.command {
        Command::Serve { host, port, ui_dir } => (*host, *port, ui_dir.clone()),
        _ => (None, None, None),
    };
    let settings = Settings {
        corpus: cli.corpus.or(config.corpus).unwrap_or_else(|| DEFAULT_CORPUS.into()),
        model: cli.model.or(config.model),
        host: host.or(config.host).unwrap_or_else(|| DEFAULT_HOST.parse().expect("valid address")),
        port: port.or(config.port).unwrap_or(DEFAULT_PORT),
        ui_dir: ui_dir.or(config.ui_dir),
    };
    match cli.command {
        Command::Ingest { path, force } => cmd_ingest(&settings, &path, force),
        Command::Analyze { target, span, format } => cmd_analyze(&settings, &target, span.get(), format),
        Command::Fit { out } => cmd_fit(&settings, out.as_deref()),
        Command::Recommend {
            id,
            span,
            mode,
            granularity,
            factors,
            k,
            direction,
            include_self,
            format,
        } => {
            let model = load_model(&settings)?;
            let factors = match factors {
                Some(list) => views::parse_factor_list(&list)?,
                None => {
                    let f = model.significant_factors();
                    if f.is_empty() && matches!(mode, ModeArg::Factor) {
                        return Err(ApiError::new(
                            ErrorCode::NoFactorsSelected,
                            "the model marks no factor significant; pass --factors",
                        ));
                    }
                    f
                }
            };
            let span = span.get();
            let query = RecommendationQuery {
                speech_id: id,
                start_s: span.start,
                end_s: span.end,
                granularity: match granularity {
                    GranularityArg::Speech => Granularity::Speech,
                    GranularityArg::Sentence => Granularity::Sentence,
                },
                mode: match mode {
                    ModeArg::Factor => Mode::Factor,
                    ModeArg::Script => Mode::Script,
                },
                factors,
                k,
                direction: match direction {
                    DirectionArg::Similar => Direction::MostSimilar,
                    DirectionArg::Different => Direction::MostDifferent,
                },
                include_self,
            };
            cmd_recommend(&settings, &query, format)
        }
        Command::Synth {
            seed,
            n,
            profile,
            level_effect,
            out,
            force,
        } => cmd_synth(&settings, seed, n, profile.as_deref(), level_effect, out.as_deref(), force),
        Command::Serve { .. } => cmd_serve(&settings),
    }
}

fn open_store(s: &Settings) -> Result<CorpusStore, ApiError> {
    Ok(CorpusStore::open(&s.corpus)?)
}

fn snapshot(s: &Settings) -> Result<Arc<CorpusSnapshot>, ApiError> {
    Ok(open_store(s)?.snapshot()?)
}

fn load_model(s: &Settings) -> Result<EffectivenessModel, ApiError> {
    match &s.model {
        Some(p) => {
            let bytes = std::fs::read(p).map_err(|e| io_error(p, e))?;
            Ok(EffectivenessModel::from_json(&bytes)?)
        }
        None => Ok(EffectivenessModel::reference()),
    }
}

fn read_bundle(path: &Path) -> Result<FeatureBundle, ApiError> {
    let bytes = std::fs::read(path).map_err(|e| io_error(path, e))?;
    load_bundle(&bytes).map_err(|e| {
        let mut e = ApiError::from(e);
        e.message = format!("{}: {}", path.display(), e.message);
        e
    })
}

fn out(bytes: &[u8]) -> Result<(), ApiError> {
    let mut stdout = std::io::stdout().lock();
    stdout
        .write_all(bytes)
        .and_then(|_| stdout.flush())
        .map_err(|e| views::internal(format!("stdout: {e}")))
}

fn json_line(body: Vec<u8>) -> Vec<u8> {
    let mut body = body;
    body.push(b'\n');
    body
}

fn bundle_files(dir: &Path) -> Result<Vec<PathBuf>, ApiError> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| io_error(dir, e))? {
        let p = entry.map_err(|e| io_error(dir, e))?.path();
        if p.is_file() && p.extension().is_some_and(|x| x == "json") {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

fn cmd_ingest(s: &Settings, path: &Path, force: bool) -> Result<(), ApiError> {
    let files = if path.is_dir() {
        let f = bundle_files(path)?;
        if f.is_empty() {
            return Err(ApiError::new(
                ErrorCode::EmptyCorpus,
                format!("{} holds no *.json bundles", path.display()),
            ));
        }
        f
    } else {
        vec![path.to_path_buf()]
    };
    let store = open_store(s)?;
    for f in files {
        let o = store.ingest(read_bundle(&f)?, force)?;
        if o.replaced {
            eprintln!("replaced {}", o.id);
        }
        out(format!("{}\n", o.id).as_bytes())?;
    }
    Ok(())
}

fn cmd_analyze(s: &Settings, target: &str, span: Span, format: ReportFormat) -> Result<(), ApiError> {
    let model = load_model(s)?;
    let path = Path::new(target);
    let report = if path.is_file() {
        let bundle = read_bundle(path)?;
        let view = span.view_of(&bundle)?;
        report_for_view(&model, &view, None)
    } else {
        views::factor_report(&*snapshot(s)?, &model, target, span)?
    };
    match format {
        ReportFormat::Json => out(&json_line(to_body(report))),
        ReportFormat::Md => out(report::factor_report_markdown(&report).as_bytes()),
    }
}

fn cmd_fit(s: &Settings, out_path: Option<&Path>) -> Result<(), ApiError> {
    let snap = snapshot(s)?;
    let corpus: Vec<_> = snap.records().iter().map(|r| (r.factors.clone(), r.meta().level)).collect();
    if corpus.is_empty() {
        return Err(EffectivenessError::EmptyCorpus.into());
    }
    let outcome = fit(&corpus, &FitOptions::default())?;
    for w in &outcome.warnings {
        let (code, msg) = report::fit_warning(w);
        eprintln!("warning[{code}]: {msg}");
    }
    if let Some(p) = out_path {
        std::fs::write(p, outcome.model.to_json()).map_err(|e| io_error(p, e))?;
    }
    out(report::model_table(&outcome.model, &outcome.diagnostics).as_bytes())
}

fn cmd_recommend(s: &Settings, query: &RecommendationQuery, format: TableFormat) -> Result<(), ApiError> {
    let snap = snapshot(s)?;
    match format {
        TableFormat::Json => {
            let r = views::recommend_with_twins(&snap, &GmmOptions::default(), query)?;
            out(&json_line(to_body(r)))
        }
        TableFormat::Table => {
            views::require_nonempty(&snap)?;
            let r = podium::recommend::recommend(query, snap.records())?;
            out(report::recommendation_table(&r).as_bytes())
        }
    }
}

fn load_profile(path: &Path) -> Result<SynthProfile, ApiError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let profile = if path.extension().is_some_and(|x| x == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.message().to_string())
    };
    profile.map_err(|m| ApiError::invalid(format!("profile {}: {m}", path.display())))
}

fn cmd_synth(
    s: &Settings,
    seed: u64,
    n: usize,
    profile: Option<&Path>,
    level_effect: Option<f64>,
    out_dir: Option<&Path>,
    force: bool,
) -> Result<(), ApiError> {
    if n == 0 {
        return Err(ApiError::new(ErrorCode::EmptyCorpus, "--n 0 generates no speeches"));
    }
    let mut p = match profile {
        Some(path) => load_profile(path)?,
        None => SynthProfile::default(),
    };
    if let Some(e) = level_effect {
        p.level_effect = e;
    }
    p.validate()?;
    let prefix = p.speech_id.take();
    let store = match out_dir {
        Some(d) => {
            std::fs::create_dir_all(d).map_err(|e| io_error(d, e))?;
            None
        }
        None => Some(open_store(s)?),
    };
    for i in 0..n {
        let seed_i = seed
            .checked_add(i as u64)
            .ok_or_else(|| ApiError::invalid("seed + n overflows"))?;
        let mut bundle = synth_bundle(seed_i, &p)?;
        if let Some(prefix) = &prefix {
            bundle.meta.speech_id = format!("{prefix}-{i}");
        }
        let id = match (&store, out_dir) {
            (Some(store), _) => store.ingest(bundle, force)?.id,
            (None, Some(d)) => {
                let path = d.join(format!("{}.json", bundle.meta.speech_id));
                std::fs::write(&path, serialize_bundle(&bundle)).map_err(|e| io_error(&path, e))?;
                bundle.meta.speech_id
            }
            (None, None) => unreachable!("store is opened unless --out is set"),
        };
        out(format!("{id}\n").as_bytes())?;
    }
    Ok(())
}

fn cmd_serve(s: &Settings) -> Result<(), ApiError> {
    let state = AppState {
        store: Arc::new(open_store(s)?),
        model: Arc::new(load_model(s)?),
        gmm: GmmOptions::default(),
    };
    if let Some(d) = &s.ui_dir {
        if !d.is_dir() {
            return Err(ApiError::new(
                ErrorCode::NotFound,
                format!("UI directory {} not found", d.display()),
            ));
        }
    }
    let runtime = tokio::runtime::Runtime::new().map_err(|e| views::internal(format!("runtime: {e}")))?;
    let addr = SocketAddr::new(s.host, s.port);
    runtime
        .block_on(podium::api::serve(addr, state, s.ui_dir.clone()))
        .map_err(|e| ApiError::new(ErrorCode::StorageError, format!("serve {addr}: {e}")))
}
