use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ecgauth::ecgio::{read_record, RecordManifest};
use ecgauth::enroll::{enroll_subject, write_provenance, PipelineParams};
use ecgauth::evaluation::{leave_one_out, parameter_sweep, Dataset};
use ecgauth::pipeline::{verify_record, EventKind};
use ecgauth::svm::SvmConfig;
use ecgauth::synth::{default_cohort, write_cohort, CohortConfig};
use ecgauth::{enroll::SubjectModel, Error, Result};

/// Continuous ECG-based user verification.
#[derive(Debug, Parser, Serialize)]
#[command(name = "ecgauth", version)]
struct Cli {
    /// Seed for every random draw the command makes.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case", tag = "command")]
enum Command {
    /// Generate a synthetic cohort with ground-truth R peaks and a manifest.
    Synth(SynthArgs),
    /// Build one model per subject that has enrollment and test sessions.
    Enroll(EnrollArgs),
    /// Stream one record through a model and write its login timeline.
    Verify(VerifyArgs),
    /// Leave-one-out evaluation with unseen intruders.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    subjects: usize,
    /// Enrollment session length in seconds.
    #[arg(long, default_value_t = 600.0)]
    enroll_s: f64,
    /// Test session length in seconds.
    #[arg(long, default_value_t = 600.0)]
    test_s: f64,
    #[arg(long, default_value_t = 512)]
    fs: u32,
    /// White-noise standard deviation in ADC units.
    #[arg(long, default_value_t = 20.0)]
    noise: f64,
}

#[derive(Debug, Args, Serialize)]
struct ParamArgs {
    /// Averaging window in seconds.
    #[arg(long, default_value_t = 18.0)]
    t_avg: f64,
    /// DCT coefficients kept.
    #[arg(long, default_value_t = 40)]
    m: usize,
    /// Minimum correlation with the template.
    #[arg(long, default_value_t = 0.9)]
    r_min: f64,
    /// Decision window in seconds.
    #[arg(long, default_value_t = 30.0)]
    t_v: f64,
    /// Positive verifications needed inside the decision window.
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Kaiser window shape.
    #[arg(long, default_value_t = 6.0)]
    beta: f64,
}

impl ParamArgs {
    fn resolve(&self) -> Result<PipelineParams> {
        let p = PipelineParams {
            t_avg: self.t_avg,
            m: self.m,
            r_min: self.r_min,
            t_v: self.t_v,
            n: self.n,
            beta: self.beta,
            ..PipelineParams::default()
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Args, Serialize)]
struct EnrollArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Enroll only these subjects.
    #[arg(long = "subject")]
    subjects: Vec<String>,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Debug, Args, Serialize)]
struct VerifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    record: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    params: ParamArgs,
    /// Grid to sweep, e.g. `--sweep t_avg=6,12,18 m=10,20,40`.
    #[arg(long, num_args = 1..=2, value_name = "AXIS=LIST")]
    sweep: Option<Vec<String>>,
}

#[derive(Debug, Serialize)]
struct RunRecord<'a> {
    version: &'static str,
    #[serde(flatten)]
    cli: &'a Cli,
    resolved_params: Option<PipelineParams>,
    svm: Option<SvmConfig>,
}

fn write_run_json(
    dir: &Path,
    cli: &Cli,
    params: Option<PipelineParams>,
    svm: Option<SvmConfig>,
) -> Result<()> {
    let record = RunRecord {
        version: env!("CARGO_PKG_VERSION"),
        cli,
        resolved_params: params,
        svm,
    };
    let path = dir.join("run.json");
    let text = serde_json::to_string_pretty(&record)? + "\n";
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Parses `t_avg=a,b,c m=x,y,z` (as one or two arguments).
fn parse_sweep(parts: &[String]) -> Result<(Vec<f64>, Vec<usize>)> {
    let bad = |msg: String| Error::Contract(format!("--sweep: {msg}"));
    let mut t_avg = None;
    let mut m = None;
    for item in parts.iter().flat_map(|p| p.split_whitespace()) {
        let (axis, list) = item
            .split_once('=')
            .ok_or_else(|| bad(format!("expected AXIS=LIST, found {item:?}")))?;
        let values: Vec<&str> = list.split(',').filter(|s| !s.is_empty()).collect();
        match axis {
            "t_avg" => {
                let v = values
                    .iter()
                    .map(|s| {
                        s.parse::<f64>()
                            .map_err(|_| bad(format!("bad t_avg {s:?}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                t_avg = Some(v);
            }
            "m" | "M" => {
                let v = values
                    .iter()
                    .map(|s| s.parse::<usize>().map_err(|_| bad(format!("bad M {s:?}"))))
                    .collect::<Result<Vec<_>>>()?;
                m = Some(v);
            }
            other => return Err(bad(format!("unknown axis {other:?}"))),
        }
    }
    match (t_avg, m) {
        (Some(t), Some(m)) if !t.is_empty() && !m.is_empty() => Ok((t, m)),
        _ => Err(bad("both t_avg and m need at least one value".into())),
    }
}

fn synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    create_dir(&a.out)?;
    let cfg = CohortConfig {
        enroll_s: a.enroll_s,
        test_s: a.test_s,
        fs: a.fs,
        noise: a.noise,
        ..CohortConfig::default()
    };
    let subjects = default_cohort(a.subjects, cli.seed, &cfg)?;
    let manifest = write_cohort(&subjects, &a.out)?;
    write_run_json(&a.out, cli, None, None)?;
    println!(
        "wrote {} records for {} subjects to {}",
        manifest.entries.len(),
        subjects.len(),
        a.out.display()
    );
    Ok(())
}

fn enroll(cli: &Cli, a: &EnrollArgs) -> Result<()> {
    let params = a.params.resolve()?;
    let svm = SvmConfig::default();
    let manifest = RecordManifest::load(&a.manifest)?;
    let subjects = if a.subjects.is_empty() {
        manifest.multi_session_subjects()
    } else {
        a.subjects.clone()
    };
    if subjects.is_empty() {
        return Err(Error::contract(
            "no subject has both enroll and test sessions",
        ));
    }
    create_dir(&a.out)?;
    use rayon::prelude::*;
    let enrollments = subjects
        .par_iter()
        .map(|s| enroll_subject(&manifest, s, &params, &svm))
        .collect::<Result<Vec<_>>>()?;
    let mut provenance = Vec::new();
    for e in &enrollments {
        let path = a.out.join(format!("{}.model.json", e.model.subject_id));
        e.model.save(&path)?;
        provenance.extend(e.provenance.iter().cloned());
        println!("enrolled {} -> {}", e.model.subject_id, path.display());
    }
    let path = a.out.join("provenance.csv");
    let mut buf = Vec::new();
    write_provenance(&provenance, &mut buf).map_err(|e| Error::io(&path, e))?;
    std::fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
    write_run_json(&a.out, cli, Some(params), Some(svm))
}

fn verify(cli: &Cli, a: &VerifyArgs) -> Result<()> {
    let model = SubjectModel::load(&a.model)?;
    let record = read_record(&a.record)?;
    let timeline = verify_record(&model, &record)?;
    create_dir(&a.out)?;
    timeline.save_csv(&a.out.join("timeline.csv"))?;
    write_run_json(&a.out, cli, Some(model.params.clone()), None)?;
    let verified = timeline
        .events
        .iter()
        .filter(|e| e.kind != EventKind::BeatRejectedPrescreen)
        .count();
    let rate = if verified == 0 {
        "N/A".to_string()
    } else {
        format!(
            "{:.2}%",
            100.0 * timeline.positives() as f64 / verified as f64
        )
    };
    println!("model:                  {}", model.subject_id);
    println!(
        "record:                 {}/{}",
        record.subject_id, record.session_id
    );
    println!("duration_s:             {:.1}", timeline.end_s);
    println!(
        "authenticated_s:        {:.1}",
        timeline.authenticated_seconds(0.0, timeline.end_s)
    );
    println!("lockouts:               {}", timeline.lockouts());
    println!("beats:                  {}", timeline.events.len());
    println!("positive_rate:          {rate}");
    println!("final_state:            {}", timeline.final_state());
    Ok(())
}

fn evaluate(cli: &Cli, a: &EvaluateArgs) -> Result<()> {
    let params = a.params.resolve()?;
    let svm = SvmConfig::default();
    let sweep = a.sweep.as_deref().map(parse_sweep).transpose()?;
    let manifest = RecordManifest::load(&a.manifest)?;
    let data = Dataset::load(&manifest)?;
    create_dir(&a.out)?;
    let eval = leave_one_out(&data, &params, &svm)?;
    eval.save(&a.out)?;
    if let Some((t_avg, m)) = &sweep {
        let result = parameter_sweep(&data, &params, t_avg, m, &svm)?;
        result.save(&a.out)?;
        if let Some(best) = result.best.map(|i| &result.cells[i]) {
            println!(
                "best sweep cell: t_avg={} M={} avg_bar={:.4}%",
                best.t_avg,
                best.m,
                100.0 * best.avg_bar.unwrap_or(f64::NAN)
            );
        }
    }
    write_run_json(&a.out, cli, Some(params), Some(svm))?;
    let access = eval.metrics.total_intruder_access_s;
    println!(
        "{} classifiers for {} subjects; intruder access {:.1} s",
        eval.cells.len(),
        eval.reports.len(),
        access
    );
    println!("report: {}", a.out.join("report.csv").display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs as usize)
        .build()
        .map_err(|e| Error::Contract(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Synth(a) => synth(cli, a),
        Command::Enroll(a) => enroll(cli, a),
        Command::Verify(a) => verify(cli, a),
        Command::Evaluate(a) => evaluate(cli, a),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
