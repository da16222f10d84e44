//! Command-line front end: `verify`, `demo` and `dump-traces`.
//!
//! Exit codes: 0 success, 1 property regression or pipeline failure, 2 usage
//! or configuration error.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::adversary::RevealKind;
use crate::demo::run_demo;
use crate::store::FileStore;
use crate::term::Theory;
use crate::trace::report::{dump_traces, suite_report};
use crate::trace::{
    builtin_lemmas, check_suite, find_lemma, Bounds, CheckOptions, Expectation, Lemma, LemmaKind,
    Scenario,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_REGRESSION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Symbolic,
    Concrete,
}

/// A lemma selected by name, or written out in full. A full lemma whose name
/// matches a built-in one replaces it.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum LemmaSpec {
    Name(String),
    Custom(CustomLemma),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomLemma {
    pub name: String,
    #[serde(default = "all_traces")]
    pub kind: LemmaKind,
    pub formula: String,
    #[serde(default)]
    pub reveals: Vec<RevealKind>,
    #[serde(default = "holds")]
    pub expect: Expectation,
    #[serde(default)]
    pub description: String,
}

fn all_traces() -> LemmaKind {
    LemmaKind::AllTraces
}
fn holds() -> Expectation {
    Expectation::Holds
}

/// The JSON configuration file. Every field is optional; flags override it.
#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub bounds: Bounds,
    pub backend: Backend,
    /// Shorthand for `bounds.reveals`.
    pub reveals: Option<BTreeSet<RevealKind>>,
    pub lemmas: Vec<LemmaSpec>,
    pub out: Option<PathBuf>,
    /// Report store for `demo`.
    pub store: Option<PathBuf>,
    pub seed: u64,
    pub jobs: Option<usize>,
    pub symmetry_reduction: bool,
    pub ecdh_canonicalization: bool,
    /// Adds `elapsed_ms` to verdict reports, which makes them vary between runs.
    pub record_timing: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            bounds: Bounds::default(),
            backend: Backend::Symbolic,
            reveals: None,
            lemmas: Vec::new(),
            out: None,
            store: None,
            seed: 1,
            jobs: None,
            symmetry_reduction: true,
            ecdh_canonicalization: true,
            record_timing: false,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "findmy-verif",
    version,
    about = "Bounded verification of the offline-finding protocol"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check lemmas at the configured bounds and write a verdict report.
    Verify(Common),
    /// Run the concrete pipeline once and print its transcript.
    Demo {
        #[command(flatten)]
        common: Common,
        /// JSONL report store to append to.
        #[arg(long, value_name = "PATH")]
        store: Option<PathBuf>,
    },
    /// Write every trace within the bounds as JSONL.
    DumpTraces(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Lemma to check; repeatable.
    #[arg(long = "lemma", value_name = "NAME")]
    lemmas: Vec<String>,
    /// Bound override such as `epochs=2` or `reveals=LtkReveal_d0+Reveal_di`; repeatable.
    #[arg(long = "bounds", value_name = "KEY=VAL")]
    bounds: Vec<String>,
    #[arg(long, value_enum)]
    backend: Option<Backend>,
    /// Seed for the concrete backend.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Worker threads for lemma checks.
    #[arg(long, env = "FINDMY_VERIF_JOBS")]
    jobs: Option<usize>,
    /// Explore every interchangeable agent instead of the lowest one.
    #[arg(long)]
    no_symmetry_reduction: bool,
    /// Include wall-clock time in verdict reports.
    #[arg(long)]
    record_timing: bool,
}

#[derive(Debug)]
struct UsageError(String);

fn usage(msg: impl Into<String>) -> UsageError {
    UsageError(msg.into())
}

/// Reads the config file (if any) and applies the flags on top.
fn resolve(c: &Common) -> Result<ScenarioConfig, UsageError> {
    let mut cfg = match &c.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<ScenarioConfig>(&text)
                .map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(r) = cfg.reveals.take() {
        cfg.bounds.reveals = Some(r);
    }
    for kv in &c.bounds {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| usage(format!("--bounds expects KEY=VAL, got '{kv}'")))?;
        cfg.bounds.set(k.trim(), v.trim()).map_err(usage)?;
    }
    if !c.lemmas.is_empty() {
        let custom = std::mem::take(&mut cfg.lemmas);
        cfg.lemmas = c
            .lemmas
            .iter()
            .map(|name| {
                custom
                    .iter()
                    .find(|s| matches!(s, LemmaSpec::Custom(x) if x.name == *name))
                    .cloned()
                    .unwrap_or_else(|| LemmaSpec::Name(name.clone()))
            })
            .collect();
    }
    if let Some(b) = c.backend {
        cfg.backend = b;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out = Some(o.clone());
    }
    if c.jobs.is_some() {
        cfg.jobs = c.jobs;
    }
    if c.no_symmetry_reduction {
        cfg.symmetry_reduction = false;
    }
    if c.record_timing {
        cfg.record_timing = true;
    }
    if cfg.jobs == Some(0) {
        return Err(usage("jobs must be at least 1"));
    }
    Ok(cfg)
}

fn selected_lemmas(cfg: &ScenarioConfig) -> Result<Vec<Lemma>, UsageError> {
    if cfg.lemmas.is_empty() {
        return Ok(builtin_lemmas());
    }
    cfg.lemmas
        .iter()
        .map(|s| match s {
            LemmaSpec::Name(n) => {
                find_lemma(n).ok_or_else(|| usage(format!("unknown lemma '{n}'")))
            }
            LemmaSpec::Custom(c) => {
                let mut l = Lemma::new(&c.name, c.kind, &c.formula, &c.reveals, &c.description)
                    .map_err(|e| usage(format!("lemma {}: {e}", c.name)))?;
                l = l.expecting(c.expect);
                Ok(l)
            }
        })
        .collect()
}

fn options(cfg: &ScenarioConfig) -> CheckOptions {
    let mut theory = Theory::default();
    if !cfg.ecdh_canonicalization {
        theory = Theory::without_ecdh();
    }
    CheckOptions {
        theory,
        symmetry_reduction: cfg.symmetry_reduction,
    }
}

fn write_output(path: Option<&Path>, bytes: &[u8], out: &mut dyn Write) -> io::Result<()> {
    match path {
        Some(p) => fs::write(p, bytes),
        None => out.write_all(bytes),
    }
}

fn verify(
    cfg: &ScenarioConfig,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, UsageError> {
    if cfg.backend == Backend::Concrete {
        return Err(usage(
            "lemma checks are symbolic; the concrete backend only runs `demo`",
        ));
    }
    let lemmas = selected_lemmas(cfg)?;
    let jobs = cfg
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let results = check_suite(&lemmas, &cfg.bounds, &options(cfg), jobs);
    for r in &results {
        let status = if r.matches_expectation() {
            "ok"
        } else {
            "REGRESSION"
        };
        let verdict = serde_json::to_value(r.verdict).expect("verdict serialises");
        let _ = write!(
            out,
            "{:<22} {:<15} traces={:<7} {status}",
            r.lemma.name,
            verdict.as_str().unwrap_or_default(),
            r.stats.maximal_traces
        );
        if let Some(a) = r.annotation() {
            let _ = write!(out, "  ({a})");
        }
        let _ = writeln!(out);
    }
    let report = suite_report(&results, cfg.record_timing);
    if let Some(path) = &cfg.out {
        let mut text = serde_json::to_string_pretty(&report).expect("report serialises");
        text.push('\n');
        if let Err(e) = fs::write(path, text) {
            let _ = writeln!(err, "error: {}: {e}", path.display());
            return Ok(EXIT_REGRESSION);
        }
    }
    let bad = results.iter().filter(|r| !r.matches_expectation()).count();
    let _ = writeln!(
        out,
        "{} lemma(s), {} as expected, {bad} regression(s)",
        results.len(),
        results.len() - bad
    );
    Ok(if bad == 0 { EXIT_OK } else { EXIT_REGRESSION })
}

fn dump(cfg: &ScenarioConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, UsageError> {
    if cfg.backend == Backend::Concrete {
        return Err(usage("trace dumps need the symbolic backend"));
    }
    let reveals = cfg.bounds.reveals.clone().unwrap_or_default();
    let mut sc = Scenario::new(cfg.bounds.clone(), reveals);
    let opts = options(cfg);
    sc.theory = opts.theory;
    sc.symmetry_reduction = opts.symmetry_reduction;
    let written = match cfg.out.as_deref() {
        Some(p) => fs::File::create(p).and_then(|f| {
            let mut w = io::BufWriter::new(f);
            let st = dump_traces(&sc, &mut w)?;
            w.flush()?;
            Ok(st)
        }),
        None => dump_traces(&sc, out),
    };
    let stats = match written {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return Ok(EXIT_REGRESSION);
        }
    };
    let _ = writeln!(
        err,
        "{} trace(s), {} record(s)",
        stats.traces, stats.records
    );
    Ok(EXIT_OK)
}

fn demo(
    cfg: &ScenarioConfig,
    store: Option<PathBuf>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, UsageError> {
    let path = store
        .or_else(|| cfg.store.clone())
        .unwrap_or_else(|| std::env::temp_dir().join("findmy-verif-reports.jsonl"));
    let mut fs_store = match FileStore::open(&path) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "error: stage open store: {e}");
            return Ok(EXIT_REGRESSION);
        }
    };
    match run_demo(cfg.seed, cfg.bounds.epochs, &mut fs_store) {
        Ok(tx) => {
            if let Err(e) = write_output(cfg.out.as_deref(), tx.to_string().as_bytes(), out) {
                let _ = writeln!(err, "error: {e}");
                return Ok(EXIT_REGRESSION);
            }
            let _ = writeln!(err, "report stored in {}", path.display());
            Ok(EXIT_OK)
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            Ok(EXIT_REGRESSION)
        }
    }
}

/// Runs the tool on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Verify(c) => resolve(c).and_then(|cfg| verify(&cfg, out, err)),
        Command::DumpTraces(c) => resolve(c).and_then(|cfg| dump(&cfg, out, err)),
        Command::Demo { common, store } => {
            resolve(common).and_then(|cfg| demo(&cfg, store.clone(), out, err))
        }
    };
    match result {
        Ok(code) => code,
        Err(UsageError(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_str(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(
            std::iter::once("findmy-verif").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_str(&["verify", "--bounds", "epochs"]).0, EXIT_USAGE);
        assert_eq!(run_str(&["verify", "--bounds", "bogus=1"]).0, EXIT_USAGE);
        assert_eq!(run_str(&["verify", "--lemma", "nope"]).0, EXIT_USAGE);
        assert_eq!(run_str(&["verify", "--backend", "concrete"]).0, EXIT_USAGE);
        assert_eq!(run_str(&["frobnicate"]).0, EXIT_USAGE);
        assert_eq!(
            run_str(&["verify", "--config", "/nonexistent/cfg.json"]).0,
            EXIT_USAGE
        );
        assert_eq!(run_str(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn single_lemma_verify() {
        let (code, out, _) = run_str(&[
            "verify",
            "--lemma",
            "sanity_check",
            "--bounds",
            "epochs=1",
            "--jobs",
            "1",
        ]);
        assert_eq!(code, EXIT_OK, "{out}");
        assert_eq!(out.lines().count(), 2);
        assert!(out.starts_with("sanity_check") && out.contains("witness_found"));
    }

    #[test]
    fn config_parsing() {
        let cfg: ScenarioConfig = serde_json::from_str(
            r#"{"bounds": {"epochs": 2}, "reveals": ["LtkReveal_d0"],
                "lemmas": ["d0_sec", {"name": "x", "formula": "All #i. KeyEst(a, b, c, d) @ #i ==> #i = #i"}]}"#,
        )
        .unwrap();
        assert_eq!(cfg.bounds.epochs, 2);
        assert_eq!(cfg.bounds.sessions, 1);
        assert!(cfg.symmetry_reduction);
        assert_eq!(selected_lemmas(&cfg).unwrap().len(), 2);
        assert!(serde_json::from_str::<ScenarioConfig>(r#"{"bogus": 1}"#).is_err());
        assert!(serde_json::from_str::<ScenarioConfig>(r#"{"reveals": ["nope"]}"#).is_err());
    }
}
