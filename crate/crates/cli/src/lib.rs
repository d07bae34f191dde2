//! `cfrecon` command-line driver.
//!
//! Every command that writes `--out PATH` also writes `PATH.manifest.json`
//! recording the command line, every parsed parameter, the seed and the
//! resulting metrics.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cfrecon_core::alloc;
use cfrecon_core::dataset::{
    generate_mask, generate_phantom, read_mask, read_tensor, write_mask, write_tensor, MaskKind, MaskSpec,
    PhantomSpec,
};
use cfrecon_core::hankel::{explicit_hankel_capped, gram_matrix, HankelOperator, EXPLICIT_CAP};
use cfrecon_core::metrics::{error_map_pgm, image_snr_db, kspace_snr_db, ssos_image, EvalReport};
use cfrecon_core::nullspace::hermitian_eig;
use cfrecon_core::solver::{
    cadzow_baseline, cf_reconstruct, cf_reconstruct_with_acs, AcsBox, ObservedData, ReconConfig, ReconResult,
};
use cfrecon_core::tensor::{ConvKind, ConvSpec, Shape5, DIM_NAMES};
use cfrecon_core::CfError;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "cfrecon", version, about = "Calibrationless k-space reconstruction with convolutional annihilating filters")]
struct Cli {
    /// Worker threads for convolutions; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a multi-coil phantom with exact cross-coil annihilation.
    Simulate(SimulateArgs),
    /// Generate an undersampling mask.
    Mask(MaskArgs),
    /// Reconstruct missing k-space samples.
    Recon(ReconArgs),
    /// Compare a reconstruction with a reference.
    Eval(EvalArgs),
    /// Check the implicit Gram matrix against the explicit Hankel product.
    GramCheck(GramCheckArgs),
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    /// Data shape nx,ny,nz,nc,nt.
    #[arg(long, value_parser = parse_shape)]
    shape: Shape5,
    /// Coil k-space support cx,cy,cz.
    #[arg(long, value_parser = parse_triple, default_value = "2,2,1")]
    coil_support: [usize; 3],
    /// Kernel used to measure the true rank; defaults to 5,5,1,nc,1 (3 taps in t when nt > 1).
    #[arg(long, value_parser = parse_shape)]
    kernel: Option<Shape5>,
    /// Convolution type per dim, e.g. t=circular (repeatable).
    #[arg(long = "conv", value_parser = parse_conv)]
    conv: Vec<(usize, ConvKind)>,
    #[arg(long, default_value_t = 6)]
    ellipses: usize,
    /// Logistic edge width of the ellipses in normalized coordinates.
    #[arg(long, default_value_t = cfrecon_core::dataset::phantom::DEFAULT_EDGE_WIDTH)]
    edge_width: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output tensor path (.cfk).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Pattern {
    #[value(name = "uniform2d")]
    Uniform2d,
    #[value(name = "uniform2d_acs")]
    Uniform2dAcs,
    #[value(name = "lines1d_acs")]
    Lines1dAcs,
    #[value(name = "vardens_t")]
    VardensT,
}

impl From<Pattern> for MaskKind {
    fn from(p: Pattern) -> Self {
        match p {
            Pattern::Uniform2d => MaskKind::Uniform2d,
            Pattern::Uniform2dAcs => MaskKind::Uniform2dAcs,
            Pattern::Lines1dAcs => MaskKind::Lines1dAcs,
            Pattern::VardensT => MaskKind::VardensT,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct MaskArgs {
    #[arg(long, value_enum)]
    pattern: Pattern,
    /// Data shape nx,ny,nz,nc,nt; alternatively take it from --like.
    #[arg(long, value_parser = parse_shape, conflicts_with = "like")]
    shape: Option<Shape5>,
    /// Tensor whose shape the mask should match.
    #[arg(long)]
    like: Option<PathBuf>,
    /// Acceleration factor R (> 1).
    #[arg(long)]
    accel: f64,
    /// Central fully sampled extents ax,ay,az.
    #[arg(long, value_parser = parse_triple, default_value = "0,0,0")]
    acs_extent: [usize; 3],
    /// Gaussian density width for vardens_t, as a fraction of ny.
    #[arg(long, default_value_t = 0.2)]
    density_sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
enum Method {
    Cf,
    CfAcs,
    Cadzow,
}

#[derive(Args, Debug, Serialize)]
struct ReconArgs {
    /// Input k-space; samples outside the mask are ignored.
    #[arg(long)]
    data: PathBuf,
    /// Sampling mask (u8, 1 = observed).
    #[arg(long)]
    mask: PathBuf,
    /// Kernel shape fx,fy,fz,nc,ft; the coil extent must equal nc.
    #[arg(long, value_parser = parse_shape)]
    kernel: Shape5,
    /// Signal-subspace rank r, 0 < r < product of kernel extents.
    #[arg(long)]
    rank: usize,
    /// Stop once the relative change between outer iterates is at most this.
    #[arg(long, default_value_t = cfrecon_core::solver::DEFAULT_TOL)]
    tol: f64,
    /// Maximum outer iterations.
    #[arg(long, default_value_t = cfrecon_core::solver::DEFAULT_MAX_OUTER)]
    max_iters: usize,
    /// Maximum inner descent steps per outer iteration.
    #[arg(long, default_value_t = cfrecon_core::solver::DEFAULT_INNER_MAX)]
    inner_max: usize,
    /// Convolution type per dim, e.g. t=circular (repeatable).
    #[arg(long = "conv", value_parser = parse_conv)]
    conv: Vec<(usize, ConvKind)>,
    /// ACS box x0:x1,y0:y1[,z0:z1] (half-open) for --method cf-acs.
    #[arg(long, value_parser = parse_acs)]
    acs: Option<AcsBox>,
    #[arg(long, value_enum, default_value = "cf")]
    method: Method,
    /// Output k-space (.cfk).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    /// Reference (fully sampled) k-space.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Reconstructed k-space; its manifest is read when present.
    #[arg(long)]
    rec: PathBuf,
    /// Optional 16-bit PGM error map of one SSoS frame.
    #[arg(long)]
    error_map: Option<PathBuf>,
    /// Error-map magnification.
    #[arg(long, default_value_t = 10.0)]
    scale: f64,
    /// Frame for the error map.
    #[arg(long, default_value_t = 0)]
    frame: usize,
    /// Report path (.json).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct GramCheckArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_parser = parse_shape)]
    kernel: Shape5,
    #[arg(long = "conv", value_parser = parse_conv)]
    conv: Vec<(usize, ConvKind)>,
    /// Optional JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_list(s: &str, n: usize) -> Result<Vec<usize>, String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("'{p}': {e}")))
        .collect::<Result<_, _>>()?;
    if v.len() != n {
        return Err(format!("expected {n} comma-separated integers, got {}", v.len()));
    }
    Ok(v)
}

fn parse_shape(s: &str) -> Result<Shape5, String> {
    let v = parse_list(s, 5)?;
    Shape5::new(v[0], v[1], v[2], v[3], v[4]).map_err(|e| e.to_string())
}

fn parse_triple(s: &str) -> Result<[usize; 3], String> {
    let v = parse_list(s, 3)?;
    Ok([v[0], v[1], v[2]])
}

fn dim_index(name: &str) -> Option<usize> {
    match name {
        "x" => Some(0),
        "y" => Some(1),
        "z" => Some(2),
        "c" => Some(3),
        _ => DIM_NAMES.iter().position(|&d| d == name),
    }
}

fn parse_conv(s: &str) -> Result<(usize, ConvKind), String> {
    let (dim, kind) = s
        .split_once('=')
        .ok_or_else(|| format!("expected DIM=valid|circular, got '{s}'"))?;
    let d = dim_index(dim.trim()).ok_or_else(|| format!("unknown dim '{dim}' (kx, ky, kz, coil or t)"))?;
    let k = match kind.trim() {
        "valid" => ConvKind::Valid,
        "circular" => ConvKind::Circular,
        other => return Err(format!("unknown convolution type '{other}'")),
    };
    Ok((d, k))
}

fn parse_acs(s: &str) -> Result<AcsBox, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if !(2..=3).contains(&parts.len()) {
        return Err(format!("expected x0:x1,y0:y1[,z0:z1], got '{s}'"));
    }
    let mut r = [(0usize, 1usize); 3];
    for (d, p) in parts.iter().enumerate() {
        let (a, b) = p
            .split_once(':')
            .ok_or_else(|| format!("range '{p}' is not of the form a:b"))?;
        let a = a.trim().parse::<usize>().map_err(|e| format!("'{a}': {e}"))?;
        let b = b.trim().parse::<usize>().map_err(|e| format!("'{b}': {e}"))?;
        if a >= b {
            return Err(format!("range {a}:{b} is empty"));
        }
        r[d] = (a, b);
    }
    Ok(AcsBox {
        x: r[0],
        y: r[1],
        z: r[2],
    })
}

/// Errors surfaced to the user, one line each.
#[derive(Debug)]
enum CliError {
    Read(PathBuf, CfError),
    Write(PathBuf, CfError),
    Config(CfError),
    Other(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Read(p, CfError::Io(e)) if e.kind() == std::io::ErrorKind::NotFound => {
                write!(f, "missing file: '{}' does not exist", p.display())
            }
            CliError::Read(p, e) => write!(f, "cannot read '{}': {e}", p.display()),
            CliError::Write(p, e) => write!(f, "cannot write '{}': {e}", p.display()),
            CliError::Config(e) => write!(f, "invalid configuration: {e}"),
            CliError::Other(s) => f.write_str(s),
        }
    }
}

impl From<CfError> for CliError {
    fn from(e: CfError) -> Self {
        CliError::Config(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn load_tensor(p: &Path) -> CliResult<cfrecon_core::KTensor> {
    read_tensor(p).map_err(|e| CliError::Read(p.to_path_buf(), e))
}

fn load_mask(p: &Path) -> CliResult<cfrecon_core::Mask> {
    read_mask(p).map_err(|e| CliError::Read(p.to_path_buf(), e))
}

/// Path of the run-manifest written next to `out`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn write_json(path: &Path, v: &Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| CliError::Write(path.to_path_buf(), e.into()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::Write(path.to_path_buf(), e.into()))
}

fn write_manifest(out: &Path, command: &str, argv: &[String], params: Value, seed: Option<u64>, threads: usize, metrics: Value) -> CliResult<()> {
    let manifest = json!({
        "command": command,
        "args": argv,
        "params": params,
        "seed": seed,
        "threads": threads,
        "versions": {
            "cfrecon": env!("CARGO_PKG_VERSION"),
            "cfk_format": cfrecon_core::dataset::io::FORMAT_VERSION,
        },
        "metrics": metrics,
    });
    write_json(&manifest_path(out), &manifest)
}

fn to_value<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).unwrap_or(Value::Null)
}

fn conv_spec(kernel: Shape5, data: Shape5, overrides: &[(usize, ConvKind)]) -> ConvSpec {
    overrides
        .iter()
        .fold(ConvSpec::for_data(kernel, data), |s, &(d, k)| s.with_kind(d, k))
}

fn simulate(a: &SimulateArgs, argv: &[String], threads: usize) -> CliResult<()> {
    let s = a.shape;
    let kernel = a.kernel.unwrap_or_else(|| {
        let ft = if s.nt > 1 { 3.min(s.nt) } else { 1 };
        Shape5 {
            nx: 5.min(s.nx),
            ny: 5.min(s.ny),
            nz: 5.min(s.nz),
            nc: s.nc,
            nt: ft,
        }
    });
    let spec = conv_spec(kernel, s, &a.conv);
    let mut ps = PhantomSpec::new(s, a.coil_support, a.seed);
    ps.num_ellipses = a.ellipses;
    ps.edge_width = a.edge_width;
    let ph = generate_phantom(&ps, &spec)?;
    write_tensor(&a.out, &ph.d_full).map_err(|e| CliError::Write(a.out.clone(), e))?;
    println!("wrote {} {}; true rank {} of {} taps", a.out.display(), s, ph.true_rank, spec.taps());
    write_manifest(
        &a.out,
        "simulate",
        argv,
        json!({"args": to_value(a), "kernel_spec": to_value(&spec)}),
        Some(a.seed),
        threads,
        json!({"true_rank": ph.true_rank, "taps": spec.taps()}),
    )
}

fn mask(a: &MaskArgs, argv: &[String], threads: usize) -> CliResult<()> {
    let shape = match (&a.shape, &a.like) {
        (Some(s), _) => *s,
        (None, Some(p)) => load_tensor(p)?.shape(),
        (None, None) => return Err(CliError::Other("mask needs --shape or --like".into())),
    };
    let mut spec = MaskSpec::new(a.pattern.into(), a.accel, a.acs_extent, a.seed);
    spec.density_sigma = a.density_sigma;
    let m = generate_mask(&spec, shape)?;
    write_mask(&a.out, &m).map_err(|e| CliError::Write(a.out.clone(), e))?;
    println!(
        "wrote {} {}; observed fraction {:.4}",
        a.out.display(),
        shape,
        m.fraction()
    );
    write_manifest(
        &a.out,
        "mask",
        argv,
        json!({"args": to_value(a), "shape": to_value(&shape)}),
        Some(a.seed),
        threads,
        json!({"observed": m.observed(), "fraction": m.fraction()}),
    )
}

fn run_method(method: Method, obs: &ObservedData, cfg: &ReconConfig) -> cfrecon_core::Result<ReconResult> {
    match method {
        Method::Cf => cf_reconstruct(obs, cfg),
        Method::CfAcs => cf_reconstruct_with_acs(obs, cfg),
        Method::Cadzow => cadzow_baseline(obs, cfg),
    }
}

fn recon(a: &ReconArgs, argv: &[String], threads: usize) -> CliResult<()> {
    let data = load_tensor(&a.data)?;
    let m = load_mask(&a.mask)?;
    if data.shape() != m.shape() {
        return Err(CfError::ShapeMismatch(format!("data {} vs mask {}", data.shape(), m.shape())).into());
    }
    let spec = conv_spec(a.kernel, data.shape(), &a.conv);
    let mut cfg = ReconConfig::new(spec, a.rank);
    cfg.tol = a.tol;
    cfg.max_outer = a.max_iters;
    cfg.inner_max = a.inner_max;
    match (a.method, a.acs) {
        (Method::CfAcs, None) => {
            return Err(CfError::Acs("--method cf-acs needs --acs x0:x1,y0:y1[,z0:z1]".into()).into())
        }
        (Method::CfAcs, acs) => cfg.acs_region = acs,
        (_, Some(_)) => return Err(CfError::Acs("--acs is only used by --method cf-acs".into()).into()),
        _ => {}
    }
    cfg.validate(data.shape())?;
    let obs = ObservedData::from_full(&data, m)?;
    drop(data);
    let start = Instant::now();
    let (res, peak) = alloc::measure(|| run_method(a.method, &obs, &cfg));
    let res = res?;
    let wall = start.elapsed().as_secs_f64();
    write_tensor(&a.out, &res.d_hat).map_err(|e| CliError::Write(a.out.clone(), e))?;
    println!(
        "wrote {}; outer iterations {}, inner steps {}, final delta {:.3e}, {:.2} s",
        a.out.display(),
        res.outer_iters,
        res.inner_iters,
        res.delta_history.last().copied().unwrap_or(0.0),
        wall
    );
    write_manifest(
        &a.out,
        "recon",
        argv,
        json!({"args": to_value(a), "config": to_value(&cfg)}),
        None,
        threads,
        json!({
            "outer_iters": res.outer_iters,
            "inner_iters": res.inner_iters,
            "delta_history": res.delta_history,
            "objective_history": res.objective_history,
            "wall_time_s": wall,
            "peak_bytes": peak,
        }),
    )
}

#[derive(Deserialize, Default)]
struct ReconMetrics {
    #[serde(default)]
    outer_iters: usize,
    #[serde(default)]
    wall_time_s: f64,
    #[serde(default)]
    peak_bytes: usize,
    #[serde(default)]
    delta_history: Vec<f64>,
}

fn read_recon_metrics(rec: &Path) -> CliResult<ReconMetrics> {
    let p = manifest_path(rec);
    if !p.exists() {
        return Ok(ReconMetrics::default());
    }
    let text = std::fs::read_to_string(&p).map_err(|e| CliError::Read(p.clone(), e.into()))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Read(p.clone(), e.into()))?;
    Ok(serde_json::from_value(v["metrics"].clone()).unwrap_or_default())
}

fn eval(a: &EvalArgs, argv: &[String], threads: usize) -> CliResult<()> {
    let reference = load_tensor(&a.reference)?;
    let rec = load_tensor(&a.rec)?;
    let k = kspace_snr_db(&reference, &rec)?;
    let img = image_snr_db(&reference, &rec)?;
    let rm = read_recon_metrics(&a.rec)?;
    let report = EvalReport {
        kspace_snr_db: k,
        image_snr_db: img,
        outer_iters: rm.outer_iters,
        wall_time_s: rm.wall_time_s,
        peak_bytes: rm.peak_bytes,
        delta_history: rm.delta_history,
    };
    if let Some(p) = &a.error_map {
        let r = ssos_image(&reference, a.frame)?;
        let x = ssos_image(&rec, a.frame)?;
        error_map_pgm(&r, &x, a.scale, p).map_err(|e| CliError::Write(p.clone(), e))?;
    }
    println!("k-space SNR {k:.2} dB; image (SSoS) SNR {img:.2} dB");
    write_json(&a.out, &to_value(&report))?;
    write_manifest(&a.out, "eval", argv, to_value(a), None, threads, to_value(&report))
}

fn gram_check(a: &GramCheckArgs, argv: &[String], threads: usize) -> CliResult<()> {
    let data = load_tensor(&a.data)?;
    let spec = conv_spec(a.kernel, data.shape(), &a.conv);
    let g = gram_matrix(&data, &spec)?;
    let op = HankelOperator::new(&data, spec)?;
    let h = explicit_hankel_capped(&op, EXPLICIT_CAP)?;
    let explicit = h.adjoint() * &h;
    let diff = (g.matrix() - &explicit).norm() / explicit.norm().max(f64::MIN_POSITIVE);
    let eig = hermitian_eig(&g)?;
    let min_eig = eig.values.first().copied().unwrap_or(0.0);
    let rank = eig.numerical_rank(cfrecon_core::dataset::phantom::RANK_THRESHOLD);
    println!(
        "gram vs explicit: relative difference {diff:.3e}; hermitian defect {:.3e}; min eigenvalue {min_eig:.3e}; rank {rank} of {}",
        g.hermitian_defect(),
        g.side()
    );
    let metrics = json!({
        "relative_difference": diff,
        "hermitian_defect": g.hermitian_defect(),
        "min_eigenvalue": min_eig,
        "numerical_rank": rank,
        "eigenvalues": eig.values,
    });
    if let Some(out) = &a.out {
        write_json(out, &metrics)?;
        write_manifest(out, "gram-check", argv, to_value(a), None, threads, metrics)?;
    }
    Ok(())
}

fn dispatch(cli: &Cli, argv: &[String]) -> CliResult<()> {
    let t = cli.threads;
    match &cli.command {
        Command::Simulate(a) => simulate(a, argv, t),
        Command::Mask(a) => mask(a, argv, t),
        Command::Recon(a) => recon(a, argv, t),
        Command::Eval(a) => eval(a, argv, t),
        Command::GramCheck(a) => gram_check(a, argv, t),
    }
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn run_cli<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let argv: Vec<String> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    if cli.threads == 0 {
        eprintln!("error: invalid configuration: --threads must be at least 1");
        return 2;
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return 1;
        }
    };
    match pool.install(|| dispatch(&cli, &argv)) {
        Ok(()) => {
            let _ = std::io::stdout().flush();
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
