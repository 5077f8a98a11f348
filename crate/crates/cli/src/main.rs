//! Command line front end: synthetic dataset generation, training,
//! rendering, and evaluation. Exit codes: 0 success, 1 usage, 2 file
//! format/io, 3 numerical failure.

use clap::{Parser, Subcommand, ValueEnum};
use dpgs_core::deform::FieldConfig;
use dpgs_core::io::{
    atomic_write, write_dpfl, write_pfm, write_png_mask, write_png_rgb,
};
use dpgs_core::loss::{apply_brightness, brightness_activation};
use dpgs_core::metrics::evaluate;
use dpgs_core::pipeline::{forward_frame, FrameContext, Stage};
use dpgs_core::render::RenderSettings;
use dpgs_core::synth::{generate, SceneScript};
use dpgs_core::train::{checkpoint, train, TrainConfig, TrainState};
use dpgs_core::{load_dataset, Error};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dpgs", version, about = "Differentiable Gaussian splatting with probabilistic scene decomposition")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset from a scene script (JSON).
    Synth {
        /// Scene script; an empty JSON object selects every default.
        #[arg(long)]
        config: PathBuf,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        /// Override the script's random seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a decomposition model on a dataset.
    Train {
        /// Training config (JSON); must name the dataset directory.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for checkpoints and the loss log.
        #[arg(long)]
        out: PathBuf,
        /// Resume from this checkpoint instead of initializing.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Override the config's random seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render one dataset frame from a trained checkpoint.
    Render {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Training config; supplies the dataset and field architecture.
        #[arg(long)]
        config: PathBuf,
        /// Frame index into the dataset.
        #[arg(long)]
        frame: usize,
        #[arg(long, value_enum)]
        mode: Mode,
        /// Output image: .png, or .pfm for float output (flow always
        /// writes the dataset flow format).
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on the held-out frames and write a JSON report.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Training config; supplies the dataset and the holdout cadence.
        #[arg(long)]
        config: PathBuf,
        /// Report path (JSON). The table is printed to stdout.
        #[arg(long)]
        out: PathBuf,
    },
}

/// What to render: the full composite, one hard-gated category (background
/// includes its brightness modulation), the raw brightness map, or the
/// composited flow toward the next frame.
#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Mode {
    Composite,
    Bg,
    Obj,
    Hand,
    Brightness,
    Flow,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = !matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::InvalidInput(_) => 1,
                Error::Io(_) | Error::Format(_) => 2,
                Error::Numerical(_) | Error::Contract(_) => 3,
            })
        }
    }
}

fn load_checkpoint(path: &Path, field: &FieldConfig) -> Result<TrainState, Error> {
    if !path.exists() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("checkpoint {} does not exist", path.display()),
        )));
    }
    checkpoint::load(path, field)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.cmd {
        Cmd::Synth { config, out, seed } => {
            let text = std::fs::read_to_string(&config)?;
            let mut script: SceneScript = serde_json::from_str(&text)
                .map_err(|e| Error::format(format!("{}: {e}", config.display())))?;
            if let Some(s) = seed {
                script.seed = s;
            }
            generate(&script, &out)?;
            println!(
                "wrote {} frames ({}x{}) to {}",
                script.frames,
                script.width,
                script.height,
                out.display()
            );
        }
        Cmd::Train { config, out, checkpoint, seed } => {
            let mut cfg = TrainConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(ckpt) = &checkpoint {
                if !ckpt.exists() {
                    return Err(Error::Io(std::io::Error::new(
                        std::io::ErrorKind::NotFound,
                        format!("checkpoint {} does not exist", ckpt.display()),
                    )));
                }
            }
            let state = train(&cfg, &out, checkpoint.as_deref())?;
            println!("finished {} steps; wrote {}", state.step, out.join("final.dpgs").display());
        }
        Cmd::Render { checkpoint, config, frame, mode, out } => {
            let cfg = TrainConfig::load(&config)?;
            let state = load_checkpoint(&checkpoint, &cfg.field)?;
            let data = load_dataset(&cfg.dataset)?;
            let fr = data.frames.get(frame).ok_or_else(|| {
                Error::invalid(format!(
                    "frame {frame} out of range, dataset has {} frames",
                    data.frames.len()
                ))
            })?;
            let next = data.frames.get(frame + 1);
            if mode == Mode::Flow && next.is_none() {
                return Err(Error::invalid(format!(
                    "frame {frame} is the last frame, flow has no target"
                )));
            }
            let ctx = FrameContext {
                cam: &fr.camera,
                cam_next: next.map(|n| &n.camera),
                t: fr.t,
                t_next: next.map(|n| n.t),
            };
            let fwd =
                forward_frame(&state.scene, &state.field, &ctx, Stage::Hard, &RenderSettings::default())?;
            let (w, h) = (data.width, data.height);
            let pfm = out.extension().is_some_and(|e| e.eq_ignore_ascii_case("pfm"));
            let write_rgb = |path: &Path, rgb: &[f64]| -> Result<(), Error> {
                if pfm {
                    write_pfm(path, w, h, 3, rgb)
                } else {
                    write_png_rgb(path, w, h, rgb)
                }
            };
            match mode {
                Mode::Composite => write_rgb(&out, &fwd.composite.rgb)?,
                Mode::Bg => {
                    let (gain, _) = brightness_activation(&fwd.cat[0].brightness);
                    let rgb = apply_brightness(&fwd.cat[0].rgb, &gain)?;
                    write_rgb(&out, &rgb)?;
                }
                Mode::Obj => write_rgb(&out, &fwd.cat[1].rgb)?,
                Mode::Hand => write_rgb(&out, &fwd.cat[2].rgb)?,
                Mode::Brightness => {
                    if pfm {
                        write_pfm(&out, w, h, 1, &fwd.cat[0].brightness)?;
                    } else {
                        write_png_mask(&out, w, h, &fwd.cat[0].brightness)?;
                    }
                }
                Mode::Flow => write_dpfl(&out, w, h, &fwd.composite.flow)?,
            }
            println!("wrote {}", out.display());
        }
        Cmd::Eval { checkpoint, config, out } => {
            let cfg = TrainConfig::load(&config)?;
            let state = load_checkpoint(&checkpoint, &cfg.field)?;
            let data = load_dataset(&cfg.dataset)?;
            let report = evaluate(
                &state.scene,
                &state.field,
                &data,
                cfg.holdout_every,
                cfg.dilation_px(data.height),
                &RenderSettings::default(),
            )?;
            let json = serde_json::to_vec_pretty(&report).expect("report serializes");
            atomic_write(&out, &json)?;
            print!("{}", report.table());
        }
    }
    Ok(())
}
