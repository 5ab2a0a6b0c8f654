use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stereo_kit::parallel::{threads_from_env, with_threads};
use stereo_kit::synth::{Rig, SceneSpec, Texture};
use stereo_kit::CostKind;

mod artifacts;
mod commands;

/// Failure of a command, mapped onto the process exit code.
#[derive(Debug)]
pub struct CmdError {
    pub code: u8,
    pub message: String,
}

impl CmdError {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<stereo_kit::Error> for CmdError {
    fn from(e: stereo_kit::Error) -> Self {
        Self::input(e.to_string())
    }
}

/// Outcome of a successful command.
pub struct CommandResult {
    pub message: String,
    pub artifacts: Vec<PathBuf>,
    /// Exit code 1 although every artifact was written (a failed check).
    pub failed: bool,
}

#[derive(Parser)]
#[command(name = "stereo-kit", version, about = "Stereo cost volumes, rectification positional encoding and homography tooling")]
struct Cli {
    /// Worker threads for the operators (defaults to STEREO_KIT_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Similarity maps of an image pair at one roll offset.
    Simmap(SimmapArgs),
    /// Time the cost-volume operators over a shape grid.
    Bench(BenchArgs),
    /// Disparity from the multi-head cost volume with and without RPE.
    Demo(DemoArgs),
    /// Render a synthetic stereo pair with ground truth.
    Synth(SynthArgs),
    /// Run the acceptance suite and print a pass/fail table.
    Check(CheckArgs),
}

#[derive(Args)]
pub struct SimmapArgs {
    #[arg(long)]
    pub left: PathBuf,
    #[arg(long)]
    pub right: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub offset: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value = "simmap")]
    pub out: PathBuf,
}

fn parse_kind(s: &str) -> Result<CostKind, String> {
    s.parse().map_err(|e: stereo_kit::Error| e.to_string())
}

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long, default_value = "bench.json")]
    pub json: PathBuf,
    #[arg(long, default_value = "bench.csv")]
    pub csv: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    #[arg(long, default_value_t = 2)]
    pub warmup: usize,
    /// Comma-separated subset of cosine, lnd, multihead.
    #[arg(long, value_delimiter = ',', value_parser = parse_kind, default_value = "cosine,lnd,multihead")]
    pub kinds: Vec<CostKind>,
    /// Comma-separated disparity ranges.
    #[arg(long, value_delimiter = ',', default_value = "4,8,16,32")]
    pub d: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub batch: usize,
    #[arg(long, default_value_t = 32)]
    pub channels: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum TextureArg {
    Checker,
    ValueNoise,
    RandomDots,
}

impl From<TextureArg> for Texture {
    fn from(t: TextureArg) -> Self {
        match t {
            TextureArg::Checker => Texture::Checker,
            TextureArg::ValueNoise => Texture::ValueNoise,
            TextureArg::RandomDots => Texture::RandomDots,
        }
    }
}

/// Scene overrides shared by `demo` and `synth`.
#[derive(Args)]
pub struct SceneArgs {
    #[arg(long, value_enum, default_value = "value-noise")]
    pub texture: TextureArg,
    #[arg(long, default_value_t = 3.0)]
    pub texture_scale: f64,
    #[arg(long, default_value_t = 96)]
    pub width: usize,
    #[arg(long, default_value_t = 96)]
    pub height: usize,
    #[arg(long, default_value_t = 3)]
    pub channels: usize,
    /// Roll of the right camera about its optical axis, in degrees.
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    pub roll: f64,
    /// Disparity of the plane in pixels; sets the baseline.
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    pub disparity: f64,
    #[arg(long, default_value_t = 10.0)]
    pub plane_depth: f64,
    #[arg(long, default_value_t = 64.0)]
    pub focal: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SceneArgs {
    pub fn spec(&self) -> SceneSpec {
        let baseline = self.disparity * self.plane_depth / self.focal;
        let rig = Rig::rectified(self.focal, self.width, self.height, baseline).with_roll(self.roll);
        SceneSpec {
            width: self.width,
            height: self.height,
            channels: self.channels,
            texture: self.texture.into(),
            texture_scale: self.texture_scale,
            plane_depth: self.plane_depth,
            rig,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RpeMode {
    On,
    Off,
    Both,
}

#[derive(Args)]
pub struct DemoArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[arg(long, value_enum, default_value = "both")]
    pub rpe: RpeMode,
    #[arg(long, default_value_t = 16)]
    pub max_disparity: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value = "demo")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[arg(long, default_value = "sample")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct CheckArgs {
    /// Also write the outcomes as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

fn dispatch(cli: Cli) -> Result<CommandResult, CmdError> {
    let threads = cli.threads.or_else(threads_from_env);
    if threads == Some(0) {
        return Err(CmdError::input("--threads must be >= 1"));
    }
    with_threads(threads, move || match cli.command {
        Command::Simmap(a) => commands::simmap(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::Demo(a) => commands::demo(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::Check(a) => commands::check(&a),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = panic::catch_unwind(AssertUnwindSafe(|| dispatch(cli)))
        .unwrap_or_else(|_| Err(CmdError::internal("internal error")));
    match outcome {
        Ok(r) => {
            println!("{}", r.message);
            for p in &r.artifacts {
                println!("wrote {}", p.display());
            }
            if r.failed { ExitCode::from(1) } else { ExitCode::SUCCESS }
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
