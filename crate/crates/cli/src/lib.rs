//! `qilink` command line: link, harvest, estimate, scrub, simulate, score
//! and serve. Results go to the output stream, diagnostics to the error
//! stream.
//!
//! Exit codes: 0 success, 1 validation failure, 2 I/O failure, 3 internal
//! error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use qilink::demographics::{BirthDate, Gender, ZipCode};
use qilink::harvester::{
    findings_to_candidates, harvest_tree, write_findings, HarvestConfig, StopList,
};
use qilink::identifiability::{risk_report, RiskQuery, RiskReport};
use qilink::ingestion::{
    read_population, read_profiles, read_registry, write_diagnostics, Diagnostic, Severity,
};
use qilink::linkage::{
    build_index, combine, group_by_source, link, overlap_matrix, read_match_candidates, read_truth,
    score, write_combined, write_outcomes, MatchOutcome, MatchStatus, Source,
};
use qilink::names::{MatchMode, NicknameTable};
use qilink::remediation::{ccr_set_birth, BirthEdit, CcrDocument};
use qilink::simulation::{
    generate_world, run_experiment, run_sweep, snapshot_seed, write_sweep, SnapshotConfig,
    SweepConfig, WorldConfig,
};
use qilink::{canonical::format_float, Error};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "qilink",
    version,
    about = "Quasi-identifier linkage, risk estimation and scrubbing"
)]
pub struct Cli {
    /// TOML file with one table per subcommand; flags on the command line win.
    #[arg(long, global = true, env = "QILINK_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[command(args_override_self = true)]
pub enum Command {
    /// Join profiles to a named registry on (dob, gender, zip).
    Link {
        profiles: PathBuf,
        registry: PathBuf,
        #[arg(long, default_value = "voter_data")]
        source: String,
        /// Match CSV; written to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Row diagnostics as CSV.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Extract embedded names from archive member filenames under a directory.
    Harvest {
        root: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the names as a match CSV (source embedded_name).
        #[arg(long)]
        candidates: Option<PathBuf>,
        #[arg(long)]
        stoplist: Option<PathBuf>,
        /// Accept tokens that are not capitalized.
        #[arg(long)]
        allow_lowercase: bool,
    },
    /// Uniqueness risk grid for one person.
    Estimate {
        #[arg(long)]
        zip: String,
        #[arg(long)]
        gender: String,
        #[arg(long)]
        dob: String,
        #[arg(long)]
        population: PathBuf,
        #[arg(long)]
        window: Option<u32>,
        /// Reference year for ages (default: this year).
        #[arg(long)]
        as_of: Option<i32>,
        #[arg(long)]
        json: bool,
    },
    /// Reduce or remove the patient's date of birth in a CCR document.
    Scrub {
        input: PathBuf,
        #[arg(long, default_value = "year")]
        mode: String,
        /// Scrubbed document; written to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthetic linkage experiments over several seeds.
    Simulate {
        #[arg(long, default_value_t = 10_000)]
        pop: usize,
        #[arg(long, default_value_t = 1.0)]
        f: f64,
        #[arg(long, default_value_t = 0.0)]
        m: f64,
        #[arg(long, default_value_t = 0.0)]
        nick: f64,
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// First world seed; runs use seed, seed+1, ...
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "exact")]
        mode: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for experiment.json, overlap.csv and score.csv of the first seed.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Score match CSVs against ground truth.
    Score {
        #[arg(long = "matches", required = true, num_args = 1..)]
        matches: Vec<PathBuf>,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value = "exact")]
        mode: String,
        /// Nickname pairs CSV (default: bundled table).
        #[arg(long)]
        nicknames: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        overlap: Option<PathBuf>,
        #[arg(long)]
        combined: Option<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, env = "QILINK_POPULATION")]
        population: Option<PathBuf>,
        #[arg(long, env = "QILINK_ADDR", default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long, env = "QILINK_UI_DIR")]
        ui_dir: Option<PathBuf>,
        #[arg(long, default_value_t = qilink_service::DEFAULT_UPLOAD_CAP)]
        upload_cap: usize,
        #[arg(long)]
        as_of: Option<i32>,
    },
}

/// A failed command with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) | Error::RootUnreadable { .. } => EXIT_IO,
            Error::Csv(c) if c.is_io_error() => EXIT_IO,
            _ => EXIT_VALIDATION,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            code: EXIT_IO,
            message: e.to_string(),
        }
    }
}

type Outcome = Result<i32, Failure>;

fn open(path: &Path) -> Result<File, Failure> {
    File::open(path).map_err(|e| Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    })
}

/// Writes to `path`, or to `out` when there is none.
fn emit(
    path: Option<&Path>,
    out: &mut dyn Write,
    write: impl FnOnce(&mut dyn Write) -> qilink::Result<()>,
) -> Result<(), Failure> {
    match path {
        Some(p) => {
            let mut f = create(p)?;
            write(&mut f)?;
            f.flush()?;
        }
        None => write(out)?,
    }
    Ok(())
}

fn report_diagnostics(
    err: &mut dyn Write,
    what: &str,
    diags: &[Diagnostic],
) -> std::io::Result<bool> {
    let mut failed = false;
    for d in diags {
        failed |= d.severity == Severity::Error;
        writeln!(err, "{what}:{}: {}: {}", d.line, d.severity, d.message)?;
    }
    Ok(failed)
}

/// Merges `[subcommand]` keys of the config file into `args` ahead of the
/// user's own flags so the latter take precedence.
pub fn merge_config(args: Vec<OsString>) -> Result<Vec<OsString>, Failure> {
    let text: Vec<String> = args
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let mut path = None;
    for (i, a) in text.iter().enumerate() {
        if a == "--config" {
            path = text.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let path = match path.or_else(|| std::env::var("QILINK_CONFIG").ok()) {
        Some(p) => p,
        None => return Ok(args),
    };
    const COMMANDS: [&str; 7] = [
        "link", "harvest", "estimate", "scrub", "simulate", "score", "serve",
    ];
    let Some(pos) = text.iter().position(|a| COMMANDS.contains(&a.as_str())) else {
        return Ok(args);
    };
    let raw = std::fs::read_to_string(&path).map_err(|e| Failure {
        code: EXIT_IO,
        message: format!("{path}: {e}"),
    })?;
    let doc: toml::Table = raw
        .parse()
        .map_err(|e| Failure::validation(format!("{path}: {e}")))?;
    let Some(section) = doc.get(&text[pos]) else {
        return Ok(args);
    };
    let section = section
        .as_table()
        .ok_or_else(|| Failure::validation(format!("{path}: [{}] must be a table", text[pos])))?;
    let mut injected: Vec<OsString> = Vec::new();
    for (key, value) in section {
        let flag = format!("--{}", key.replace('_', "-"));
        let scalar = |v: &toml::Value| -> Result<String, Failure> {
            match v {
                toml::Value::String(s) => Ok(s.clone()),
                toml::Value::Integer(i) => Ok(i.to_string()),
                toml::Value::Float(f) => Ok(f.to_string()),
                other => Err(Failure::validation(format!(
                    "{path}: unsupported value for {key}: {other}"
                ))),
            }
        };
        match value {
            toml::Value::Boolean(true) => injected.push(flag.into()),
            toml::Value::Boolean(false) => {}
            toml::Value::Array(items) => {
                for item in items {
                    injected.push(flag.clone().into());
                    injected.push(scalar(item)?.into());
                }
            }
            v => {
                injected.push(flag.into());
                injected.push(scalar(v)?.into());
            }
        }
    }
    let mut merged = args[..=pos].to_vec();
    merged.extend(injected);
    merged.extend_from_slice(&args[pos + 1..]);
    Ok(merged)
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match merge_config(args) {
        Ok(a) => a,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            return f.code;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let rendered = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{rendered}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{rendered}");
                    EXIT_VALIDATION
                }
            };
        }
    };
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
        dispatch(cli.command, out, err)
    }));
    match result {
        Ok(Ok(code)) => code,
        Ok(Err(f)) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
        Err(_) => {
            let _ = writeln!(err, "error: internal failure");
            EXIT_INTERNAL
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    match command {
        Command::Link {
            profiles,
            registry,
            source,
            out: path,
            diagnostics,
        } => cmd_link(
            &profiles,
            &registry,
            &source,
            path.as_deref(),
            diagnostics.as_deref(),
            out,
            err,
        ),
        Command::Harvest {
            root,
            out: path,
            candidates,
            stoplist,
            allow_lowercase,
        } => cmd_harvest(
            &root,
            path.as_deref(),
            candidates.as_deref(),
            stoplist.as_deref(),
            allow_lowercase,
            out,
            err,
        ),
        Command::Estimate {
            zip,
            gender,
            dob,
            population,
            window,
            as_of,
            json,
        } => cmd_estimate(&zip, &gender, &dob, &population, window, as_of, json, out),
        Command::Scrub {
            input,
            mode,
            out: path,
        } => cmd_scrub(&input, &mode, path.as_deref(), out, err),
        Command::Simulate {
            pop,
            f,
            m,
            nick,
            seeds,
            seed,
            mode,
            out: path,
            report,
        } => cmd_simulate(
            pop,
            f,
            m,
            nick,
            seeds,
            seed,
            &mode,
            path.as_deref(),
            report.as_deref(),
            out,
        ),
        Command::Score {
            matches,
            truth,
            mode,
            nicknames,
            out: path,
            overlap,
            combined,
        } => cmd_score(
            &matches,
            &truth,
            &mode,
            nicknames.as_deref(),
            path.as_deref(),
            overlap.as_deref(),
            combined.as_deref(),
            out,
        ),
        Command::Serve {
            population,
            addr,
            ui_dir,
            upload_cap,
            as_of,
        } => cmd_serve(population.as_deref(), addr, ui_dir, upload_cap, as_of, err),
    }
}

fn cmd_link(
    profiles: &Path,
    registry: &Path,
    source: &str,
    path: Option<&Path>,
    diag_path: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Outcome {
    let source = Source::parse(source)?;
    let profiles_in = read_profiles(open(profiles)?)?;
    let registry_in = read_registry(open(registry)?)?;
    let (index, index_diags) = build_index(&registry_in.records);
    let linked = link(&profiles_in.records, &index, source)?;

    let mut failed = report_diagnostics(
        err,
        &profiles.display().to_string(),
        &profiles_in.diagnostics,
    )?;
    failed |= report_diagnostics(
        err,
        &registry.display().to_string(),
        &registry_in.diagnostics,
    )?;
    report_diagnostics(err, &registry.display().to_string(), &index_diags)?;
    report_diagnostics(err, &profiles.display().to_string(), &linked.diagnostics)?;
    if let Some(p) = diag_path {
        let all: Vec<Diagnostic> = profiles_in
            .diagnostics
            .iter()
            .chain(&registry_in.diagnostics)
            .chain(&index_diags)
            .chain(&linked.diagnostics)
            .cloned()
            .collect();
        let mut f = create(p)?;
        write_diagnostics(&mut f, &all)?;
        f.flush()?;
    }

    emit(path, out, |w| write_outcomes(w, &linked.outcomes, source))?;
    let counts = format!(
        "unique={} ambiguous={} none={} skipped={}",
        linked.count(|s| matches!(s, MatchStatus::Unique(_))),
        linked.count(|s| matches!(s, MatchStatus::Ambiguous(_))),
        linked.count(|s| matches!(s, MatchStatus::NoMatch)),
        profiles_in.records.len() - linked.outcomes.len(),
    );
    if path.is_some() {
        writeln!(out, "{counts}")?;
    } else {
        writeln!(err, "{counts}")?;
    }
    Ok(if failed { EXIT_VALIDATION } else { EXIT_OK })
}

fn cmd_harvest(
    root: &Path,
    path: Option<&Path>,
    candidates_path: Option<&Path>,
    stoplist: Option<&Path>,
    allow_lowercase: bool,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Outcome {
    let stoplist = match stoplist {
        Some(p) => StopList::from_reader(open(p)?)?,
        None => StopList::bundled(),
    };
    let cfg = HarvestConfig {
        stoplist,
        require_capitalized: !allow_lowercase,
    };
    let harvest = harvest_tree(root, &cfg)?;
    for e in &harvest.errors {
        writeln!(err, "{}: {}", e.path.display(), e.message)?;
    }
    emit(path, out, |w| write_findings(w, &harvest.findings))?;
    let candidates = findings_to_candidates(&harvest.findings);
    if let Some(p) = candidates_path {
        let outcomes: Vec<MatchOutcome> = candidates
            .iter()
            .map(|c| MatchOutcome {
                profile_id: c.profile_id.clone(),
                status: MatchStatus::Unique(c.name.clone()),
            })
            .collect();
        let mut f = create(p)?;
        write_outcomes(&mut f, &outcomes, Source::EmbeddedName)?;
        f.flush()?;
    }
    let summary = format!(
        "members={} named={} profiles={} unreadable={}",
        harvest.findings.len(),
        harvest
            .findings
            .iter()
            .filter(|f| f.extracted.is_some())
            .count(),
        candidates.len(),
        harvest.errors.len()
    );
    if path.is_some() {
        writeln!(out, "{summary}")?;
    } else {
        writeln!(err, "{summary}")?;
    }
    Ok(EXIT_OK)
}

/// Builds the same query the service builds from its request body.
pub fn estimate_query(
    zip: &str,
    gender: &str,
    dob: &str,
    window: Option<u32>,
    as_of: Option<i32>,
) -> Result<RiskQuery, Failure> {
    let birth = BirthDate::parse(dob)?;
    if birth.year().is_none() {
        return Err(Failure::validation("--dob needs at least a year"));
    }
    let mut q = RiskQuery::new(ZipCode::zip5(zip.trim())?, Gender::parse(gender)?, birth);
    q.window_years = window;
    if let Some(y) = as_of {
        q.as_of_year = y;
    }
    Ok(q)
}

pub fn render_grid(report: &RiskReport) -> String {
    let mut s = format!(
        "selected {}  window {}y  as of {}\n",
        report.selected, report.window_years, report.as_of_year
    );
    for (level, cell) in &report.cells {
        let mark = if *level == report.selected { '*' } else { ' ' };
        s.push_str(&format!(
            "{mark} {:<18} population={:<8} date_values={:<6} expected_bin={:<12} p_unique={:<12} {}\n",
            level.label(),
            cell.population,
            cell.date_values,
            format_float(cell.expected_bin),
            format_float(cell.p_unique),
            cell.flag.label()
        ));
    }
    s
}

#[allow(clippy::too_many_arguments)]
fn cmd_estimate(
    zip: &str,
    gender: &str,
    dob: &str,
    population: &Path,
    window: Option<u32>,
    as_of: Option<i32>,
    json: bool,
    out: &mut dyn Write,
) -> Outcome {
    let query = estimate_query(zip, gender, dob, window, as_of)?;
    let table = read_population(open(population)?)?;
    let report = risk_report(&query, &table)?;
    if json {
        writeln!(out, "{}", report.to_canonical_json())?;
    } else {
        write!(out, "{}", render_grid(&report))?;
    }
    Ok(EXIT_OK)
}

fn cmd_scrub(
    input: &Path,
    mode: &str,
    path: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Outcome {
    let mode = BirthEdit::parse(mode)?;
    let raw = std::fs::read(input).map_err(|e| Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", input.display()),
    })?;
    let doc = CcrDocument::parse(raw)?;
    let edit = ccr_set_birth(&doc, mode)?;
    let line = match edit.summary.span {
        Some((s, e)) => format!(
            "edited bytes {s}..{e} ({} bytes written)",
            edit.summary.replacement_len
        ),
        None => "no birth element; document unchanged".to_string(),
    };
    match path {
        Some(p) => {
            let mut f = create(p)?;
            f.write_all(&edit.output)?;
            f.flush()?;
            writeln!(out, "{line}")?;
        }
        None => {
            out.write_all(&edit.output)?;
            writeln!(err, "{line}")?;
        }
    }
    Ok(EXIT_OK)
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    pop: usize,
    f: f64,
    m: f64,
    nick: f64,
    seeds: u64,
    seed: u64,
    mode: &str,
    path: Option<&Path>,
    report: Option<&Path>,
    out: &mut dyn Write,
) -> Outcome {
    SnapshotConfig::new(f, m, nick, 0)?;
    if seeds == 0 {
        return Err(Failure::validation("--seeds must be at least 1"));
    }
    let mode = MatchMode::parse(mode)?;
    let nicknames = NicknameTable::bundled();
    let cfg = SweepConfig {
        population: pop,
        f: vec![f],
        m: vec![m],
        nickname_rate: vec![nick],
        seeds: (seed..seed + seeds).collect(),
        mode,
    };
    let rows = run_sweep(&cfg, &nicknames)?;
    if let Some(p) = path {
        let mut file = create(p)?;
        write_sweep(&mut file, &rows)?;
        file.flush()?;
    }
    if let Some(dir) = report {
        std::fs::create_dir_all(dir)?;
        let world = generate_world(&WorldConfig::standard(pop, seed))?;
        let snap = SnapshotConfig::new(f, m, nick, snapshot_seed(seed))?;
        let result = run_experiment(&world, &[(Source::VoterData, snap)], mode, &nicknames)?;
        std::fs::write(
            dir.join("experiment.json"),
            result.to_canonical_json() + "\n",
        )?;
        let mut o = create(&dir.join("overlap.csv"))?;
        result.overlap.write_csv(&mut o)?;
        o.flush()?;
        let mut s = create(&dir.join("score.csv"))?;
        result.score.write_csv(&mut s)?;
        s.flush()?;
    }
    let precision: Vec<f64> = rows.iter().filter_map(|r| r.precision).collect();
    let recall: Vec<f64> = rows.iter().map(|r| r.recall).collect();
    let kept: Vec<f64> = rows.iter().map(|r| r.kept_fraction).collect();
    for (label, xs) in [
        ("precision", &precision),
        ("recall", &recall),
        ("kept_fraction", &kept),
    ] {
        let (mean, sd) = mean_sd(xs);
        writeln!(out, "{label}: {mean:.6} ± {sd:.6} (n={})", xs.len())?;
    }
    Ok(EXIT_OK)
}

#[allow(clippy::too_many_arguments)]
fn cmd_score(
    matches: &[PathBuf],
    truth: &Path,
    mode: &str,
    nicknames: Option<&Path>,
    path: Option<&Path>,
    overlap: Option<&Path>,
    combined: Option<&Path>,
    out: &mut dyn Write,
) -> Outcome {
    let mode = MatchMode::parse(mode)?;
    let table = match nicknames {
        Some(p) => NicknameTable::from_csv(open(p)?)?,
        None => NicknameTable::bundled(),
    };
    let truth = read_truth(open(truth)?)?;
    let mut all = Vec::new();
    for m in matches {
        all.extend(read_match_candidates(open(m)?)?);
    }
    let lists = group_by_source(all);
    let report = score(&lists, &truth, mode, &table);
    emit(path, out, |w| report.write_csv(w))?;
    if let Some(p) = overlap {
        let mut f = create(p)?;
        overlap_matrix(&lists).write_csv(&mut f)?;
        f.flush()?;
    }
    if let Some(p) = combined {
        let mut f = create(p)?;
        write_combined(&mut f, &combine(&lists, &table))?;
        f.flush()?;
    }
    Ok(EXIT_OK)
}

fn cmd_serve(
    population: Option<&Path>,
    addr: SocketAddr,
    ui_dir: Option<PathBuf>,
    upload_cap: usize,
    as_of: Option<i32>,
    err: &mut dyn Write,
) -> Outcome {
    let table = match population {
        Some(p) => Some(read_population(open(p)?)?),
        None => {
            writeln!(
                err,
                "warning: no population table; /api/estimate will answer 503"
            )?;
            None
        }
    };
    let mut cfg = qilink_service::ServiceConfig::new(table);
    cfg.upload_cap = upload_cap;
    cfg.as_of_year = as_of;
    cfg.ui_dir = ui_dir;
    writeln!(err, "listening on {addr}")?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(qilink_service::serve(addr, cfg))?;
    Ok(EXIT_OK)
}
