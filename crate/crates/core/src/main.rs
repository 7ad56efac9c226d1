use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use dcjoris::extension::{build_family, pm_verify, ApproximantFamily};
use dcjoris::gallery::{flat_majorant_report, sharp_class_demo, verify_blowup, GALLERY_PRECISION};
use dcjoris::geometry::{boundary_gap, build_cover};
use dcjoris::io::{write_atomic, write_json, Report, RunManifest};
use dcjoris::joris::{run_pipeline, PipelineConfig};
use dcjoris::model::SmoothFunctionModel;
use dcjoris::selftest::{run_selftest, Golden};
use dcjoris::weights::{log_grid, SequenceFile};
use dcjoris::{Condition, Error, Result, WeightSequence};

/// Weight sequences, holomorphic approximation on ellipses and the
/// reconstruction of f from two of its powers.
#[derive(Parser)]
#[command(name = "dcjoris", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Growth conditions and the associated function of a weight sequence.
    Weights(WeightsArgs),
    /// Disk cover of the ellipse `Ω_{ε/2}` with its checks.
    Cover(CoverArgs),
    /// Disk Cauchy-transform golden test.
    DbarSelftest(GoldenArgs),
    /// Builds and saves a family of holomorphic approximants.
    PmBuild(PmBuildArgs),
    /// Verifies a saved family.
    PmVerify(PmVerifyArgs),
    /// Reconstructs f from f^p and f^q and verifies every stage.
    JorisRun(JorisArgs),
    /// Flat majorant, blow-up certificate and sharp-class demos.
    Gallery(GalleryArgs),
    /// Golden values and reduced-scale invariants.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct SequenceArg {
    /// `gevrey:A[,B]`, `qgevrey:L` or `table:M0,M1,...`; with
    /// `--sequence-file`, a name defined in that file.
    #[arg(long, default_value = "gevrey:1,0")]
    sequence: String,
    /// TOML or JSON file of named sequences.
    #[arg(long)]
    sequence_file: Option<PathBuf>,
}

impl SequenceArg {
    fn resolve(&self) -> Result<WeightSequence> {
        match &self.sequence_file {
            Some(p) => SequenceFile::load(p)?.build(&self.sequence),
            None => WeightSequence::from_spec(&self.sequence),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CheckArg {
    All,
    ModerateGrowth,
    Snqa,
    StabDer,
}

#[derive(Args)]
struct WeightsArgs {
    #[command(flatten)]
    seq: SequenceArg,
    #[arg(long, value_enum)]
    check: Option<CheckArg>,
    /// Largest index scanned by the growth checks.
    #[arg(long, default_value_t = 64)]
    scan: usize,
    /// Tabulate `h_M` on a log grid.
    #[arg(long)]
    hm: bool,
    #[arg(long, default_value_t = 1e-6)]
    tmin: f64,
    #[arg(long, default_value_t = 10.0)]
    tmax: f64,
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// CSV destination for the `h_M` table (stdout when omitted).
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CoverArgs {
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GoldenArgs {
    /// Replacement golden file.
    #[arg(long)]
    golden: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelftestArgs {
    /// Run one group only: dbar, frobenius, breakpoint, gallery, geometry, pipeline.
    #[arg(long)]
    filter: Option<String>,
    #[command(flatten)]
    golden: GoldenArgs,
}

#[derive(Args)]
struct PmBuildArgs {
    /// Built-in model name.
    #[arg(long)]
    f: String,
    #[command(flatten)]
    seq: SequenceArg,
    #[arg(long, default_value_t = 1.0)]
    eps0: f64,
    #[arg(long, default_value_t = 5)]
    depth: usize,
    #[arg(long)]
    dir: PathBuf,
}

#[derive(Args)]
struct PmVerifyArgs {
    #[arg(long)]
    dir: PathBuf,
    /// Built-in model to compare against (defaults to the family's source).
    #[arg(long)]
    f: Option<String>,
    /// Half-width of the reconstruction interval.
    #[arg(long, default_value_t = 0.5)]
    b: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct JorisArgs {
    #[arg(long)]
    p: u32,
    #[arg(long)]
    q: u32,
    /// Built-in model name; the construction only sees its powers.
    #[arg(long)]
    f: String,
    #[command(flatten)]
    seq: SequenceArg,
    #[arg(long, default_value_t = 1.0)]
    eps0: f64,
    #[arg(long, default_value_t = 4)]
    depth: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Demo {
    SharpClass,
    Blowup,
    Eta,
}

#[derive(Args)]
struct GalleryArgs {
    #[arg(long, value_enum)]
    demo: Demo,
    #[command(flatten)]
    seq: SequenceArg,
    /// `λ` of the sharp-class demo.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 2)]
    p: u32,
    #[arg(long, default_value_t = 2)]
    m: u32,
    #[arg(long, default_value_t = 6)]
    l_max: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Outcome of a command that ran to completion.
enum Outcome {
    Pass,
    Fail(String),
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Domain(_) => 2,
        Error::Precondition(_) | Error::Bound { .. } => 3,
        Error::Io(_) | Error::Data(_) => 4,
    }
}

fn emit<T: Serialize>(out: Option<&Path>, config: serde_json::Value, sequences: Vec<String>, result: T) -> Result<()> {
    emit_with(out, RunManifest::new(std::env::args().collect(), config, sequences), result)
}

fn emit_with<T: Serialize>(out: Option<&Path>, manifest: RunManifest, result: T) -> Result<()> {
    let report = Report { manifest, result };
    match out {
        Some(p) => write_json(p, &report),
        None => {
            let text = serde_json::to_string_pretty(&report).map_err(|e| Error::Data(e.to_string()))?;
            println!("{text}");
            Ok(())
        }
    }
}

fn seq_def(m: &WeightSequence) -> Vec<String> {
    vec![format!("{} = {}", m.name(), serde_json::to_string(m.kind()).unwrap_or_default())]
}

fn verdict(pass: bool, what: impl FnOnce() -> String) -> Outcome {
    if pass {
        Outcome::Pass
    } else {
        Outcome::Fail(what())
    }
}

fn cmd_weights(a: &WeightsArgs) -> Result<Outcome> {
    let m = a.seq.resolve()?;
    let conditions: Vec<Condition> = match a.check {
        None => vec![],
        Some(CheckArg::All) => Condition::all().to_vec(),
        Some(CheckArg::ModerateGrowth) => vec![Condition::ModerateGrowth],
        Some(CheckArg::Snqa) => vec![Condition::Snqa],
        Some(CheckArg::StabDer) => vec![Condition::StabDer],
    };
    if a.hm {
        if !(a.tmin > 0.0 && a.tmax > a.tmin && a.n >= 2) {
            return Err(Error::domain("need 0 < tmin < tmax and n >= 2"));
        }
        let mut csv = String::from("t,h_m\n");
        for t in log_grid(a.tmin, a.tmax, a.n) {
            csv.push_str(&format!("{t:e},{:e}\n", m.h_m(t)?));
        }
        match &a.csv {
            Some(p) => write_atomic(p, csv.as_bytes())?,
            None => std::io::stdout().write_all(csv.as_bytes())?,
        }
    }
    if conditions.is_empty() {
        return Ok(Outcome::Pass);
    }
    let reports = conditions.iter().map(|&c| m.check_growth(c, a.scan)).collect::<Result<Vec<_>>>()?;
    let failing: Vec<String> = reports.iter().filter(|r| !r.holds).map(|r| format!("{:?}", r.condition)).collect();
    let pass = failing.is_empty();
    emit(
        a.out.as_deref(),
        json!({ "sequence": m.name(), "scan": a.scan }),
        seq_def(&m),
        json!({ "checks": reports, "log_convex": m.check_log_convex(a.scan).is_none(), "pass": pass }),
    )?;
    Ok(verdict(pass, || format!("{} fails {}", m.name(), failing.join(", "))))
}

fn cmd_cover(a: &CoverArgs) -> Result<Outcome> {
    if !(a.eps > 0.0 && a.eps <= 1.0) {
        return Err(Error::domain("eps must lie in (0, 1]"));
    }
    let cover = build_cover(a.eps);
    let check = cover.verify(a.samples);
    let gap = boundary_gap(a.eps);
    let pass = check.covering_ok && check.safety_ok && gap >= a.eps * a.eps / 4.0;
    emit(
        a.out.as_deref(),
        json!({ "eps": a.eps, "samples": a.samples }),
        vec![],
        json!({ "cover": cover.to_json(), "check": check, "boundary_gap": gap, "pass": pass }),
    )?;
    Ok(verdict(pass, || "cover checks failed".into()))
}

fn load_golden(g: &GoldenArgs) -> Result<Golden> {
    match &g.golden {
        Some(p) => Golden::load(p),
        None => Ok(Golden::default()),
    }
}

fn cmd_selftest(filter: Option<&str>, g: &GoldenArgs) -> Result<Outcome> {
    let golden = load_golden(g)?;
    let checks = run_selftest(&golden, filter)?;
    for c in &checks {
        eprintln!("{} [{}] {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.group, c.name, c.detail);
    }
    let first = checks.iter().find(|c| !c.pass).map(|c| format!("[{}] {}: {}", c.group, c.name, c.detail));
    let pass = first.is_none();
    if g.out.is_some() {
        emit(g.out.as_deref(), json!({ "filter": filter }), vec![], json!({ "checks": checks, "pass": pass }))?;
    }
    Ok(match first {
        None => Outcome::Pass,
        Some(f) => Outcome::Fail(f),
    })
}

fn cmd_pm_build(a: &PmBuildArgs) -> Result<Outcome> {
    let m = a.seq.resolve()?;
    let f = SmoothFunctionModel::builtin(&a.f)?;
    let fam = build_family(&f, &m, a.eps0, a.depth)?;
    fam.save(&a.dir)?;
    let man = RunManifest::new(std::env::args().collect(), json!({ "f": a.f, "eps0": a.eps0, "depth": a.depth }), seq_def(&m));
    write_json(&a.dir.join("run.json"), &man)?;
    eprintln!("saved {} rungs to {}", fam.rungs.len(), a.dir.display());
    Ok(Outcome::Pass)
}

fn cmd_pm_verify(a: &PmVerifyArgs) -> Result<Outcome> {
    let fam = ApproximantFamily::load(&a.dir)?;
    let name = a.f.clone().unwrap_or_else(|| fam.source.clone());
    let f = SmoothFunctionModel::builtin(&name)?;
    let v = pm_verify(&fam, &f, a.b)?;
    let first = v.failures.first().cloned();
    emit(a.out.as_deref(), json!({ "dir": a.dir, "f": name, "b": a.b }), seq_def(&fam.sequence), &v)?;
    Ok(verdict(v.pass, || first.unwrap_or_default()))
}

fn cmd_joris(a: &JorisArgs) -> Result<Outcome> {
    let m = a.seq.resolve()?;
    let cfg = PipelineConfig::new(a.p, a.q, m.clone(), a.eps0, a.depth)?;
    let f = SmoothFunctionModel::builtin(&a.f)?;
    let (_, report) = run_pipeline(&f.powi(a.p), &f.powi(a.q), &f, &cfg)?;
    let v = &report.verdict;
    if !v.decay.pass {
        eprintln!("note: interval error decay not established: {}", v.decay.note);
    }
    let outcome = verdict(v.checks_pass, || v.failures.first().cloned().unwrap_or_default());
    emit(a.out.as_deref(), json!({ "f": a.f }), seq_def(&m), &report)?;
    Ok(outcome)
}

fn cmd_gallery(a: &GalleryArgs) -> Result<Outcome> {
    let cmd: Vec<String> = std::env::args().collect();
    match a.demo {
        Demo::Eta => {
            let m = a.seq.resolve()?;
            let r = flat_majorant_report(&m)?;
            emit(a.out.as_deref(), json!({ "demo": "eta" }), seq_def(&m), &r)?;
            Ok(Outcome::Pass)
        }
        Demo::Blowup => {
            let m = a.seq.resolve()?;
            if a.l_max < 1 {
                return Err(Error::domain("l-max must be at least 1"));
            }
            let cert = verify_blowup(&m, a.p, a.m, 1..=a.l_max)?;
            let mut man = RunManifest::new(cmd, json!({ "demo": "blowup", "p": a.p, "m": a.m, "l_max": a.l_max }), seq_def(&m));
            man.precision_bits = GALLERY_PRECISION;
            let pass = cert.pass;
            emit_with(a.out.as_deref(), man, &cert)?;
            Ok(verdict(pass, || "blow-up certificate failed".into()))
        }
        Demo::SharpClass => {
            let r = sharp_class_demo(a.lambda, a.p)?;
            let pass = r.pass;
            emit(a.out.as_deref(), json!({ "demo": "sharp-class", "lambda": a.lambda, "p": a.p }), vec![], &r)?;
            Ok(verdict(pass, || "sharp-class classification failed".into()))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Weights(a) => cmd_weights(a),
        Cmd::Cover(a) => cmd_cover(a),
        Cmd::DbarSelftest(g) => cmd_selftest(Some("dbar"), g),
        Cmd::PmBuild(a) => cmd_pm_build(a),
        Cmd::PmVerify(a) => cmd_pm_verify(a),
        Cmd::JorisRun(a) => cmd_joris(a),
        Cmd::Gallery(a) => cmd_gallery(a),
        Cmd::Selftest(a) => cmd_selftest(a.filter.as_deref(), &a.golden),
    };
    match res {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail(msg)) => {
            eprintln!("fail: {msg}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
