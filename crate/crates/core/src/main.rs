use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use repseg::dump;
use repseg::evaluation::{self, accuracy, GroundTruth};
use repseg::frequency;
use repseg::pipeline::{run_pipeline, run_pipeline_traced, PipelineConfig, PipelineOutcome};
use repseg::sequence::SkeletonSequence;
use repseg::synth::{generate, MotionScript, NoiseProfile};
use repseg::ukf;
use repseg::Error;

#[derive(Parser)]
#[command(name = "repseg", version, about = "Segment repetitive skeletal motion into repetitions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment one sequence and print the result as JSON.
    Segment {
        sequence: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Ground truth to score against; the accuracy goes to stderr.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Write the result here instead of stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Directory for dump files, named after the sequence.
        #[arg(long, default_value = ".")]
        dump_dir: PathBuf,
        #[arg(long)]
        dump_candidates: bool,
        #[arg(long)]
        dump_clusters: bool,
        #[arg(long)]
        dump_spectra: bool,
        /// Per-frame detected vs. true segment table (needs --truth for the truth columns).
        #[arg(long)]
        dump_timeline: bool,
    },
    /// Score every `sequence,truth` entry of a manifest and print a CSV table.
    Evaluate {
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Generate sequences and ground truth from a motion script.
    Synth {
        script: PathBuf,
        #[arg(long, value_enum, default_value_t = Profile::Clean)]
        profile: Profile,
        /// Override the profile's position noise, metres.
        #[arg(long)]
        sigma: Option<f64>,
        /// Number of sequences, with consecutive seeds from the script's.
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Print the normalised spectra of the filtered parameters as CSV.
    Spectrum {
        sequence: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Clean,
    Mocap,
    Kinect,
}

fn load_config(path: Option<&Path>) -> repseg::Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "sequence".into())
}

fn write_or_print(path: Option<&Path>, text: &str) -> repseg::Result<()> {
    match path {
        Some(p) => Ok(fs::write(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> repseg::Result<()> {
    match cli.command {
        Command::Segment {
            sequence,
            config,
            truth,
            output,
            dump_dir,
            dump_candidates,
            dump_clusters,
            dump_spectra,
            dump_timeline,
        } => {
            let cfg = load_config(config.as_deref())?;
            let seq = SkeletonSequence::load(&sequence)?;
            let truth = truth.map(GroundTruth::load).transpose()?;
            let (outcome, trace) = run_pipeline_traced(&seq, &cfg)?;
            write_or_print(output.as_deref(), &outcome.to_json())?;

            let name = stem(&sequence);
            let dump_path = |kind: &str| dump_dir.join(format!("{name}.{kind}.csv"));
            if dump_spectra {
                if let Some(s) = &trace.spectra {
                    fs::write(dump_path("spectra"), dump::spectra_csv(s))?;
                }
            }
            if dump_candidates {
                if let Some(d) = &trace.detection {
                    fs::write(dump_path("candidates"), dump::candidates_csv(d))?;
                }
            }
            if dump_clusters {
                if let (Some(d), Some(c), Some(s), PipelineOutcome::Segmented(r)) =
                    (&trace.detection, &trace.clusters, &trace.selection, &outcome)
                {
                    fs::write(dump_path("clusters"), dump::clusters_csv(d, c, s.cluster, &r.selected))?;
                }
            }
            if dump_timeline {
                let csv = dump::timeline_csv(seq.frame_count(), &outcome.segments(), truth.as_ref());
                fs::write(dump_path("timeline"), csv)?;
            }
            if let Some(t) = &truth {
                let report = accuracy(&outcome.segments(), t)?;
                match report.alpha {
                    Some(a) => eprintln!("alpha={a} detected={} manual={}", report.detected_segments, report.manual_segments),
                    None => eprintln!("alpha=undefined detected=0 manual={}", report.manual_segments),
                }
            }
            Ok(())
        }
        Command::Evaluate {
            manifest,
            config,
            output,
        } => {
            let cfg = load_config(config.as_deref())?;
            let text = fs::read_to_string(&manifest)?;
            let base = manifest.parent().unwrap_or(Path::new("."));
            let entries = evaluation::parse_manifest(&text, base)?;
            let table = evaluation::batch_evaluate(&entries, |path| {
                let seq = SkeletonSequence::load(path)?;
                Ok(run_pipeline(&seq, &cfg)?.segments())
            })?;
            write_or_print(output.as_deref(), &table.to_csv())
        }
        Command::Synth {
            script,
            profile,
            sigma,
            count,
            out_dir,
        } => {
            let mut script = MotionScript::load(&script)?;
            let mut noise = match profile {
                Profile::Clean => NoiseProfile::none(),
                Profile::Mocap => NoiseProfile::mocap(),
                Profile::Kinect => NoiseProfile::kinect(),
            };
            if let Some(s) = sigma {
                noise.sigma = s;
            }
            fs::create_dir_all(&out_dir)?;
            let mut manifest = String::from("sequence,truth\n");
            let first_seed = script.seed;
            for i in 0..count {
                script.seed = first_seed + i as u64;
                let g = generate(&script, &noise)?;
                let name = if count == 1 {
                    format!("{}_{}", script.label, noise.label)
                } else {
                    format!("{}_{}_{i:03}", script.label, noise.label)
                };
                g.sequence.save(out_dir.join(format!("{name}.seq")))?;
                g.truth.save(out_dir.join(format!("{name}.truth")))?;
                manifest.push_str(&format!("{name}.seq,{name}.truth\n"));
            }
            fs::write(out_dir.join("manifest.csv"), manifest)?;
            Ok(())
        }
        Command::Spectrum { sequence, config } => {
            let cfg = load_config(config.as_deref())?;
            let seq = SkeletonSequence::load(&sequence)?;
            let seq = if cfg.canonicalize { seq.canonicalized() } else { seq };
            let tracks = ukf::four_pass_filter(&seq, &cfg.ukf_config(seq.rate()))?.tracks;
            let spectra = frequency::compute_spectra(&tracks)?;
            print!("{}", dump::spectra_csv(&spectra));
            match frequency::primary_frequency(&spectra) {
                Ok(w) => eprintln!("primary_frequency={w}"),
                Err(Error::NoPeriodicity) => eprintln!("primary_frequency=none"),
                Err(e) => return Err(e),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
