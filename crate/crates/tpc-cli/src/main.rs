//! `tpc` — scripted access to the simulated accelerator stack: enumerate
//! devices, compose designs, run jobs, and write benchmark CSVs.
//!
//! Exit codes form a total mapping from failure classes:
//!
//! | code | meaning                        |
//! |------|--------------------------------|
//! | 0    | success                        |
//! | 2    | usage, I/O, or parse error     |
//! | 3    | composition validation failure |
//! | 4    | kernel fault                   |
//! | 5    | device busy                    |
//!
//! Results go to stdout, diagnostics to stderr.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use tpc::bench::{self, BenchDirection};
use tpc::{
    compose, enumerate_devices, Arg, Composition, Device, DesignArtifact, KernelRegistry,
    MemoryHandle, PlatformRegistry, SyncMode,
};

/// Registry override, read when `--registry` is absent.
const REGISTRY_ENV: &str = "TPC_REGISTRY";

/// Fixed benchmark shapes; the library takes these as parameters, the CLI
/// deliberately does not.
const THROUGHPUT_REPETITIONS: u32 = 3;
const LATENCY_SAMPLES: usize = 1000;

#[derive(Parser)]
#[command(name = "tpc", about = "Simulated FPGA accelerator toolkit", version)]
struct Cli {
    /// Platform registry JSON (default: $TPC_REGISTRY, then the builtin set)
    #[arg(long, global = true, value_name = "PATH")]
    registry: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List devices: id, platform, device memory bytes
    Enumerate,
    /// Validate a composition against a platform and write a design artifact
    Compose {
        /// Composition JSON
        #[arg(short, long, value_name = "PATH")]
        file: PathBuf,
        /// Target platform name
        #[arg(short, long)]
        platform: String,
        /// Where to write the design artifact
        #[arg(short, long, value_name = "PATH")]
        output: PathBuf,
    },
    /// Load a design on a device and run a single job
    Run {
        /// Design artifact JSON
        design: PathBuf,
        /// Device id from `enumerate`
        #[arg(long, default_value_t = 0)]
        device: usize,
        /// Kernel id to launch
        #[arg(long)]
        kernel: u32,
        /// Scalar argument binding, e.g. --arg 1=100
        #[arg(long = "arg", value_name = "IDX=INT")]
        args: Vec<String>,
        /// Buffer argument binding, e.g. --buffer 0=zeros:1024,
        /// 0=seq32:START:COUNT, or 0=file:PATH
        #[arg(long = "buffer", value_name = "IDX=GEN")]
        buffers: Vec<String>,
        /// Launch non-blocking and wait explicitly
        #[arg(long)]
        nonblocking: bool,
    },
    /// Run a benchmark and write its CSV
    Bench {
        what: BenchKind,
        /// Device id from `enumerate`
        #[arg(long, default_value_t = 0)]
        device: usize,
        /// Seed for the latency sampler (default: the library seed)
        #[arg(long)]
        seed: Option<u64>,
        /// CSV destination (default: stdout)
        #[arg(short, long, value_name = "PATH")]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchKind {
    Throughput,
    Latency,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Lib(tpc::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => f.write_str(msg),
            CliError::Lib(err) => write!(f, "{err}"),
        }
    }
}

impl From<tpc::Error> for CliError {
    fn from(err: tpc::Error) -> Self {
        CliError::Lib(err)
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Lib(tpc::Error::Io(err))
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// The documented exit-code mapping. Composition structure problems count
/// as validation failures alongside budget/unknown-kernel reports.
fn exit_code(err: &CliError) -> u8 {
    match err {
        CliError::Usage(_) => 2,
        CliError::Lib(e) => match e {
            tpc::Error::KernelFault(_) => 4,
            tpc::Error::DeviceBusy => 5,
            tpc::Error::ValidationFailed(_)
            | tpc::Error::EmptyComposition
            | tpc::Error::ZeroPECount(_)
            | tpc::Error::DuplicateKernel(_) => 3,
            _ => 2,
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let registry = load_registry(cli.registry.as_deref())?;
    match cli.command {
        Command::Enumerate => cmd_enumerate(&registry),
        Command::Compose {
            file,
            platform,
            output,
        } => cmd_compose(&registry, &file, &platform, &output),
        Command::Run {
            design,
            device,
            kernel,
            args,
            buffers,
            nonblocking,
        } => cmd_run(&registry, &design, device, kernel, &args, &buffers, nonblocking),
        Command::Bench {
            what,
            device,
            seed,
            output,
        } => cmd_bench(&registry, what, device, seed, output.as_deref()),
    }
}

/// Precedence: --registry flag, then $TPC_REGISTRY, then the builtin set.
fn load_registry(flag: Option<&Path>) -> Result<PlatformRegistry, CliError> {
    let path = flag
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(REGISTRY_ENV).map(PathBuf::from));
    match path {
        Some(p) => Ok(PlatformRegistry::from_path(&p)?),
        None => Ok(PlatformRegistry::builtin()),
    }
}

fn cmd_enumerate(registry: &PlatformRegistry) -> Result<(), CliError> {
    let mut stdout = std::io::stdout().lock();
    for info in enumerate_devices(registry) {
        writeln!(
            stdout,
            "{}\t{}\t{}",
            info.device_id, info.platform_name, info.device_memory_size
        )?;
    }
    Ok(())
}

fn cmd_compose(
    registry: &PlatformRegistry,
    file: &Path,
    platform: &str,
    output: &Path,
) -> Result<(), CliError> {
    let text = std::fs::read_to_string(file)?;
    let composition = Composition::from_json(&text)?;
    let kernels = KernelRegistry::with_builtins();
    let artifact = compose(&composition, registry.model(platform)?, &kernels)?;
    artifact.write_to(output)?;
    eprintln!("wrote {}", output.display());
    Ok(())
}

fn cmd_run(
    registry: &PlatformRegistry,
    design: &Path,
    device_id: usize,
    kernel: u32,
    scalar_specs: &[String],
    buffer_specs: &[String],
    nonblocking: bool,
) -> Result<(), CliError> {
    let kernels = KernelRegistry::with_builtins();
    let artifact = DesignArtifact::from_path(design)?;
    let device = Device::open(device_id, registry)?;
    device.load_design(&artifact, &kernels)?;

    // Bind arguments by slot index; every index may be bound exactly once.
    let mut bindings: BTreeMap<usize, Arg> = BTreeMap::new();
    let mut owned: Vec<MemoryHandle> = Vec::new();
    let bind = |index: usize, arg: Arg, bindings: &mut BTreeMap<usize, Arg>| {
        if bindings.insert(index, arg).is_some() {
            return Err(usage(format!("argument index {index} bound twice")));
        }
        Ok(())
    };
    for spec in scalar_specs {
        let (index, value) = parse_binding(spec)?;
        let value: u64 = value
            .parse()
            .map_err(|_| usage(format!("scalar argument {spec:?} must be IDX=INT")))?;
        bind(index, Arg::from_u64(value), &mut bindings)?;
    }
    for spec in buffer_specs {
        let (index, generator) = parse_binding(spec)?;
        let payload = build_payload(generator)?;
        let handle = device.alloc(payload.len() as u64)?;
        owned.push(handle);
        device.copy_to(&payload, handle, SyncMode::Blocking)?;
        bind(index, Arg::Handle(handle), &mut bindings)?;
    }

    let result = run_job_with(&device, kernel, &bindings, nonblocking);
    for handle in owned {
        let _ = device.free(handle);
    }
    let value = result?;
    println!("result of job: {value}");
    Ok(())
}

fn run_job_with(
    device: &Device,
    kernel: u32,
    bindings: &BTreeMap<usize, Arg>,
    nonblocking: bool,
) -> Result<u64, CliError> {
    let job = device.acquire_job_id(kernel)?;
    let outcome = (|| {
        for (&index, arg) in bindings {
            device.job_set_arg(job, index, arg)?;
        }
        if nonblocking {
            device.job_launch(job, SyncMode::NonBlocking)?;
            device.job_wait(job)?;
        } else {
            device.job_launch(job, SyncMode::Blocking)?;
        }
        device.job_return_value(job)
    })();
    if !matches!(device.job_state(job), Ok(tpc::JobState::Launched)) {
        let _ = device.release_job_id(job);
    }
    Ok(outcome?)
}

/// Split `IDX=REST` and parse the index.
fn parse_binding(spec: &str) -> Result<(usize, &str), CliError> {
    let (index, rest) = spec
        .split_once('=')
        .ok_or_else(|| usage(format!("binding {spec:?} must look like IDX=VALUE")))?;
    let index = index
        .parse()
        .map_err(|_| usage(format!("binding {spec:?} has a non-numeric index")))?;
    Ok((index, rest))
}

/// Buffer generators: `zeros:N`, `seq32:START:COUNT` (little-endian u32
/// sequence), `file:PATH`.
fn build_payload(generator: &str) -> Result<Vec<u8>, CliError> {
    if let Some(n) = generator.strip_prefix("zeros:") {
        let n: usize = n
            .parse()
            .map_err(|_| usage(format!("zeros generator needs a byte count, got {n:?}")))?;
        return Ok(vec![0; n]);
    }
    if let Some(spec) = generator.strip_prefix("seq32:") {
        let (start, count) = spec
            .split_once(':')
            .ok_or_else(|| usage(format!("seq32 generator must be seq32:START:COUNT, got {generator:?}")))?;
        let start: u32 = start
            .parse()
            .map_err(|_| usage(format!("seq32 start {start:?} is not a 32-bit integer")))?;
        let count: u32 = count
            .parse()
            .map_err(|_| usage(format!("seq32 count {count:?} is not a 32-bit integer")))?;
        let mut payload = Vec::with_capacity(count as usize * 4);
        for i in 0..count {
            payload.extend_from_slice(&start.wrapping_add(i).to_le_bytes());
        }
        return Ok(payload);
    }
    if let Some(path) = generator.strip_prefix("file:") {
        return Ok(std::fs::read(path)?);
    }
    Err(usage(format!(
        "unknown buffer generator {generator:?} (want zeros:N, seq32:START:COUNT, or file:PATH)"
    )))
}

fn cmd_bench(
    registry: &PlatformRegistry,
    what: BenchKind,
    device_id: usize,
    seed: Option<u64>,
    output: Option<&Path>,
) -> Result<(), CliError> {
    let device = match seed {
        Some(seed) => Device::open_seeded(device_id, registry, seed)?,
        None => Device::open(device_id, registry)?,
    };
    let mut csv: Vec<u8> = Vec::new();
    match what {
        BenchKind::Throughput => {
            let rows = bench::run_throughput(
                &device,
                &bench::default_chunk_sweep(),
                THROUGHPUT_REPETITIONS,
                &BenchDirection::ALL,
            )?;
            bench::write_throughput_csv(&mut csv, &rows)?;
        }
        BenchKind::Latency => {
            let kernels = KernelRegistry::with_builtins();
            let report = bench::run_latency_default(&device, &kernels, LATENCY_SAMPLES)?;
            bench::write_latency_csv(&mut csv, &[report])?;
        }
    }
    match output {
        Some(path) => {
            std::fs::write(path, &csv)?;
            eprintln!("wrote {}", path.display());
        }
        None => std::io::stdout().lock().write_all(&csv)?,
    }
    Ok(())
}
