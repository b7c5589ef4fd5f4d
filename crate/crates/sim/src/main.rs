use std::fs;
use std::io::{BufReader, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use oisac_core::controller::{error_bounds, lyapunov_check};
use oisac_core::{Twist, VelocityGate};
use oisac_link::channel::apply_channel_raster;
use oisac_link::synth::{view_angle_homography, warp_frame};
use oisac_link::{decode_frame, render_frame, ChannelConfig, FrameLayout, FrameRaster, Modulation, PayloadCodec};
use oisac_sim::config::{preset, EstimatorKind, Preset, ScenarioConfig, SensingMode, BRAKING_LEVELS};
use oisac_sim::emit::{braking_csv, emit};
use oisac_sim::run::stream_rng;
use oisac_sim::{braking_experiment, run};

#[derive(Parser)]
#[command(
    name = "oisac",
    version,
    about = "Leader-follower formation over a screen-camera link"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write CSV, metrics and plots.
    Run {
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// JSON scenario file; flags below override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        estimator: Option<EstimatorKind>,
        #[arg(long, value_enum)]
        sensing: Option<SensingMode>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Braking distance table over six speed levels and both estimators.
    BrakingSweep {
        #[arg(long, default_value_t = 10)]
        reps: usize,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Encode, decode or round-trip velocity frames as PGM images.
    Codec {
        #[command(subcommand)]
        op: CodecOp,
    },
    /// Packet-loss curves as CSV.
    DumpTables {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo check of the Lyapunov decay bound.
    LyapunovCheck {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 1.05)]
        margin: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write every failing sample here as JSON lines.
        #[arg(long)]
        failures: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModArg {
    Fft,
    Direct,
}

impl From<ModArg> for Modulation {
    fn from(m: ModArg) -> Self {
        match m {
            ModArg::Fft => Modulation::Fft,
            ModArg::Direct => Modulation::Direct,
        }
    }
}

#[derive(Subcommand)]
enum CodecOp {
    Encode {
        #[arg(long)]
        v: f64,
        #[arg(long, allow_hyphen_values = true)]
        omega: f64,
        #[arg(long, default_value_t = 0)]
        seq: u16,
        #[arg(long, value_enum, default_value = "fft")]
        mode: ModArg,
        #[arg(long)]
        out: PathBuf,
    },
    Decode {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "fft")]
        mode: ModArg,
    },
    /// Encode, view at an angle, blur and add noise, then decode.
    Roundtrip {
        #[arg(long)]
        v: f64,
        #[arg(long, allow_hyphen_values = true)]
        omega: f64,
        #[arg(long, value_enum, default_value = "fft")]
        mode: ModArg,
        /// View angle in degrees.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        angle: f64,
        /// Acceleration driving the motion blur, m/s^2.
        #[arg(long, default_value_t = 0.0)]
        accel: f64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Save the corrupted capture.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn open_out(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn write_pgm(img: &FrameRaster, path: &PathBuf) -> Result<()> {
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    img.write_pgm(std::io::BufWriter::new(f))
        .with_context(|| format!("writing {}", path.display()))
}

fn codec(op: CodecOp) -> Result<()> {
    let codec = PayloadCodec::for_bounds(&oisac_core::Bounds::experimental());
    let layout = FrameLayout::default();
    match op {
        CodecOp::Encode {
            v,
            omega,
            seq,
            mode,
            out,
        } => {
            let p = codec.encode(&Twist::new(v, omega), seq, 0);
            write_pgm(&render_frame(&p, &layout, mode.into())?, &out)?;
            println!("{p:?}");
        }
        CodecOp::Decode { input, mode } => {
            let f = fs::File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let img =
                FrameRaster::read_pgm(BufReader::new(f)).with_context(|| format!("reading {}", input.display()))?;
            let d = decode_frame(&img, &layout, mode.into())?;
            let u = codec.decode(&d.payload);
            println!("v={} omega={} seq={} margin={}", u.v, u.omega, d.payload.seq, d.margin);
        }
        CodecOp::Roundtrip {
            v,
            omega,
            mode,
            angle,
            accel,
            noise,
            seed,
            out,
        } => {
            let p = codec.encode(&Twist::new(v, omega), 0, 0);
            let frame = render_frame(&p, &layout, mode.into())?;
            let (w, h) = (640, 480);
            let hom = view_angle_homography(&layout, angle.to_radians(), 500.0, w, h)?;
            let view = warp_frame(&frame, &hom, w, h, oisac_link::synth::SCENE_BACKGROUND);
            let ch = ChannelConfig {
                noise_sigma: noise,
                ..ChannelConfig::default()
            };
            let img = apply_channel_raster(&view, accel, &ch, &mut stream_rng(seed, 0));
            if let Some(path) = &out {
                write_pgm(&img, path)?;
            }
            match decode_frame(&img, &layout, mode.into()) {
                Ok(d) if d.payload == p => {
                    let u = codec.decode(&d.payload);
                    println!("ok v={} omega={} margin={}", u.v, u.omega, d.margin);
                }
                Ok(d) => bail!("decoded a different payload: {:?}", d.payload),
                Err(e) => bail!("decode failed: {e}"),
            }
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Command::Run {
            preset: p,
            config,
            estimator,
            sensing,
            seed,
            out,
        } => {
            let mut cfg = match (config, p) {
                (Some(path), _) => {
                    ScenarioConfig::from_json_file(&path).with_context(|| format!("{}", path.display()))?
                }
                (None, Some(p)) => preset(p),
                (None, None) => bail!("give --preset or --config"),
            };
            if let Some(e) = estimator {
                cfg.estimator = e;
            }
            if let Some(s) = sensing {
                cfg.sensing = s;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let result = run(&cfg)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let cfg_path = out.join("config.json");
            fs::write(&cfg_path, serde_json::to_string_pretty(&cfg)? + "\n")
                .with_context(|| format!("writing {}", cfg_path.display()))?;
            for path in emit(&result.records, &result.metrics, &out)? {
                eprintln!("wrote {}", path.display());
            }
            println!("{}", serde_json::to_string_pretty(&result.metrics)?);
        }
        Command::BrakingSweep { reps, out } => {
            let cells = braking_experiment(&BRAKING_LEVELS, reps)?;
            braking_csv(&cells, open_out(&out)?)?;
        }
        Command::Codec { op } => codec(op)?,
        Command::DumpTables { out } => {
            let table = oisac_link::PlrTable::default();
            let mut w = csv::Writer::from_writer(open_out(&out)?);
            w.write_record(["axis", "value", "loss"])?;
            for i in 0..=130 {
                let d = 0.3 + 0.01 * i as f64;
                w.write_record([
                    "distance_m".to_string(),
                    format!("{d:.2}"),
                    table.distance_loss(d).to_string(),
                ])?;
            }
            for deg in 0..=60 {
                let a = f64::from(deg).to_radians();
                w.write_record([
                    "angle_deg".to_string(),
                    deg.to_string(),
                    table.angle_loss(a).to_string(),
                ])?;
            }
            w.flush()?;
        }
        Command::LyapunovCheck {
            samples,
            margin,
            seed,
            failures,
        } => {
            let bounds = oisac_core::Bounds::experimental();
            let codec = PayloadCodec::for_bounds(&bounds);
            let gate = VelocityGate::new(5, 0.1, bounds);
            let consts = error_bounds(&bounds, &gate, &codec.v, &codec.omega);
            let report = lyapunov_check(&consts, samples, margin, 1e-9, &mut stream_rng(seed, 0));
            println!(
                "passed {}/{} ({:.2}%) at {margin} x gain floor",
                report.passed,
                report.samples,
                100.0 * report.pass_fraction()
            );
            if let Some(path) = failures {
                let mut w = std::io::BufWriter::new(
                    fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?,
                );
                for f in &report.failures {
                    writeln!(w, "{}", serde_json::to_string(f)?)?;
                }
            }
        }
    }
    Ok(())
}
