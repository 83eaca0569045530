use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dsr_core::bench::{format_db, run_bench, BenchConfig};
use dsr_core::io::{read_measurements, read_volume, write_measurements, write_volume};
use dsr_core::scene::{parse_objects, synth_scene, SceneSpec};
use dsr_core::solver::select_lambda;
use dsr_core::sparse::sparse_split;
use dsr_core::{
    add_noise, apply_sampling, per_frame_snr_db, run_pipeline, snr_db, Algorithm, DsrError,
    FrameDims, IntensityVolume, PatchGeometry, SamplingOperator, SearchWindow, SolverConfig,
};

#[derive(Parser)]
#[command(
    name = "dsr",
    version,
    about = "Guided depth superresolution experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic RGB-D sequence to depth.dsrv and guide.dsrv.
    Simulate(SimulateArgs),
    /// Decimate a depth volume and add Gaussian noise at a target SNR.
    Degrade(DegradeArgs),
    /// Random sparse sampling split into recon/ and valid/ measurement sets.
    Sparse(SparseArgs),
    /// Reconstruct a depth volume from measurements.
    Solve(SolveArgs),
    /// SNR of an estimate against a reference volume or measurement set.
    Eval(EvalArgs),
    /// Run an experiment grid from a JSON config.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    w: usize,
    #[arg(long, default_value_t = 64)]
    h: usize,
    #[arg(long, default_value_t = 16)]
    t: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `x,y,w,h,depth,contrast,vx,vy` per object, separated by `;`.
    #[arg(long)]
    objects: Option<String>,
}

#[derive(Args)]
struct DegradeArgs {
    #[arg(long)]
    depth: PathBuf,
    #[arg(long)]
    factor: usize,
    /// Input SNR in dB; `inf` for noise-free.
    #[arg(long, default_value_t = 30.0)]
    snr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SparseArgs {
    #[arg(long)]
    depth: PathBuf,
    #[arg(long)]
    rate: f64,
    #[arg(long, default_value_t = 0.5)]
    split: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    algo: Algorithm,
    #[arg(long)]
    meas: PathBuf,
    #[arg(long)]
    guide: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.01")]
    lambda: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value_t = 0.02)]
    nu: f64,
    #[arg(long, default_value_t = 5)]
    patch: usize,
    #[arg(long, default_value = "11x11x3", value_parser = parse_window)]
    window: SearchWindow,
    #[arg(long, default_value_t = 3)]
    stride: usize,
    #[arg(long, default_value_t = 10)]
    group_size: usize,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Accepted for uniformity; reconstruction is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Ground truth for SNR reporting and λ selection.
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    est: PathBuf,
    #[arg(long)]
    per_frame: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn parse_window(s: &str) -> Result<SearchWindow, String> {
    let parts: Vec<&str> = s.split(['x', 'X']).collect();
    let nums: Vec<usize> = parts
        .iter()
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| format!("window '{s}' must look like 11x11x3"))?;
    match nums[..] {
        [wx, wy, wt] => Ok(SearchWindow { wx, wy, wt }),
        _ => Err(format!("window '{s}' must look like 11x11x3")),
    }
}

enum Failure {
    Usage(String),
    Core(DsrError),
}

impl From<DsrError> for Failure {
    fn from(e: DsrError) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(DsrError::Io(e))
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) | Failure::Core(DsrError::InvalidArgument(_)) => 1,
            Failure::Core(DsrError::Numeric(_)) => 3,
            Failure::Core(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => f.write_str(m),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn read_guide(path: &Path) -> Result<IntensityVolume, Failure> {
    Ok(IntensityVolume::try_from(read_volume(path)?)?)
}

fn simulate(a: SimulateArgs) -> CmdResult {
    let mut spec = SceneSpec {
        dims: FrameDims::new(a.w, a.h, a.t)?,
        seed: a.seed,
        ..SceneSpec::default()
    };
    if let Some(objects) = &a.objects {
        spec.objects = parse_objects(objects)?;
    } else if spec.validate().is_err() {
        // default rectangle does not fit the requested frame
        spec.objects.clear();
    }
    let (guide, depth) = synth_scene(&spec)?;
    fs::create_dir_all(&a.out)?;
    write_volume(&depth, a.out.join("depth.dsrv"))?;
    write_volume(guide.as_volume(), a.out.join("guide.dsrv"))?;
    fs::write(
        a.out.join("scene.json"),
        serde_json::to_string_pretty(&spec).unwrap() + "\n",
    )?;
    println!(
        "wrote {} scene with {} object(s) to {}",
        spec.dims,
        spec.objects.len(),
        a.out.display()
    );
    Ok(())
}

fn degrade(a: DegradeArgs) -> CmdResult {
    let depth = read_volume(&a.depth)?;
    let op = SamplingOperator::decimation(depth.dims(), a.factor)?;
    let clean = apply_sampling(&op, &depth)?;
    let psi = add_noise(&clean, a.snr, a.seed)?;
    write_measurements(&psi, &a.out)?;
    println!(
        "{} measurements at factor {} and {} dB",
        psi.len(),
        a.factor,
        a.snr
    );
    Ok(())
}

fn sparse(a: SparseArgs) -> CmdResult {
    let depth = read_volume(&a.depth)?;
    let (recon, valid) = sparse_split(&depth, a.rate, a.split, a.seed)?;
    write_measurements(&recon, a.out.join("recon"))?;
    write_measurements(&valid, a.out.join("valid"))?;
    println!(
        "{} reconstruction and {} validation points",
        recon.len(),
        valid.len()
    );
    Ok(())
}

fn solve(a: SolveArgs) -> CmdResult {
    let psi = read_measurements(&a.meas)?;
    let guide = a.guide.as_deref().map(read_guide).transpose()?;
    let reference = a.reference.as_deref().map(read_volume).transpose()?;
    if a.lambda.len() > 1 && reference.is_none() {
        return Err(Failure::Usage(
            "several --lambda values need --ref to choose between them".into(),
        ));
    }
    if a.algo.guide_mode() == Some(dsr_core::GuideMode::Intensity) && guide.is_none() {
        return Err(Failure::Usage(format!(
            "--algo {} needs --guide",
            a.algo.name()
        )));
    }
    let cfg = SolverConfig {
        algo: a.algo,
        lambda: a.lambda[0],
        rho: a.rho,
        nu: a.nu,
        max_iter: a.max_iter,
        tol: a.tol,
        geometry: PatchGeometry {
            patch_side: a.patch,
            stride: a.stride,
            window: a.window,
            group_size: a.group_size,
        },
        track_objective: false,
    };
    let (est, report) = match &reference {
        Some(r) => {
            let (_, est, report) = select_lambda(&psi, guide.as_ref(), &cfg, &a.lambda, r)?;
            (est, report)
        }
        None => run_pipeline(&psi, guide.as_ref(), &cfg)?,
    };
    if est.values().iter().any(|v| !v.is_finite()) {
        return Err(DsrError::Numeric("reconstruction is not finite".into()).into());
    }
    fs::create_dir_all(&a.out)?;
    write_volume(&est, a.out.join("depth.dsrv"))?;
    let mut json = serde_json::to_value(&report).unwrap();
    if let Some(r) = &reference {
        let snr = snr_db(r.values(), est.values())?;
        json["snr_db"] = serde_json::json!(format_db(snr));
        print!("snr_db={} ", format_db(snr));
    }
    fs::write(
        a.out.join("report.json"),
        serde_json::to_string_pretty(&json).unwrap() + "\n",
    )?;
    println!(
        "algo={} lambda={} iterations={} stop={:?}",
        report.algo.name(),
        report.lambda,
        report.iterations,
        report.stop_reason
    );
    Ok(())
}

fn eval(a: EvalArgs) -> CmdResult {
    if a.per_frame.is_some() && a.reference.is_dir() {
        return Err(Failure::Usage(
            "--per-frame needs a reference volume, not a measurement set".into(),
        ));
    }
    let est = read_volume(&a.est)?;
    let (reference, estimate): (Vec<f64>, Vec<f64>) = if a.reference.is_dir() {
        let m = read_measurements(&a.reference)?;
        let sampled = apply_sampling(m.operator(), &est)?;
        (m.values().to_vec(), sampled.values().to_vec())
    } else {
        let r = read_volume(&a.reference)?;
        if let Some(path) = &a.per_frame {
            let curve = per_frame_snr_db(&r, &est)?;
            let mut csv = String::from("frame,snr_db\n");
            for (t, v) in curve.iter().enumerate() {
                let cell = if v.is_finite() {
                    format!("{v:.4}")
                } else {
                    format_db(*v)
                };
                csv.push_str(&format!("{t},{cell}\n"));
            }
            fs::write(path, csv)?;
        }
        (r.values().to_vec(), est.values().to_vec())
    };
    let snr = snr_db(&reference, &estimate)?;
    println!("snr_db={}", format_db(snr));
    Ok(())
}

fn bench(a: BenchArgs) -> CmdResult {
    let text = fs::read_to_string(&a.config)?;
    let cfg = BenchConfig::from_json(&text)?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    let (truth, guide) = cfg.load_inputs(base)?;
    let summary = run_bench(&cfg, &truth, guide.as_ref(), &a.out)?;
    print!("{}", fs::read_to_string(a.out.join("table.csv"))?);
    let failed = summary.runs.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!("{failed} run(s) failed; see run.json");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Degrade(a) => degrade(a),
        Command::Sparse(a) => sparse(a),
        Command::Solve(a) => solve(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dsr: {e}");
            ExitCode::from(e.code())
        }
    }
}
