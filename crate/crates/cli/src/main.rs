//! `neurowave`: batch driver for synthesis, preprocessing, training with
//! evaluation and Mapper graphs. Every command writes files under `--out`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use neurowave::classifier::write_params;
use neurowave::ica::write_ica_model;
use neurowave::io::{read_epochs, read_recording, read_track, write_epochs, write_recording, write_toml, write_track};
use neurowave::mapper::{export_graph, read_cloud, run_mapper, write_cloud, ExportFormat, PURITY_LEVEL};
use neurowave::pipeline::{band_power_cloud, preprocess, train_eval, PipelineConfig, SplitKind, SynthConfig};
use neurowave::synth::{interleaved_cloud, separated_cloud, CloudSpec};
use neurowave::{Error, Result};

#[derive(Parser)]
#[command(name = "neurowave", version, about = "EEG real-vs-fake analysis pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Versioned TOML configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic session: recording plus label track.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Baseline, filter, re-reference, ICA, resample, segment and label a recording.
    Preprocess {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        recording: PathBuf,
        #[arg(long)]
        track: PathBuf,
        /// Leave the ICA stage out of the chain.
        #[arg(long)]
        skip_ica: bool,
    },
    /// Train on one side of a split and report per-class metrics on the other.
    TrainEval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: PathBuf,
        /// `random` or `ordered`; overrides the configuration.
        #[arg(long)]
        split: Option<SplitKind>,
    },
    /// Build one Mapper graph per point cloud and compare separation.
    Mapper {
        #[command(flatten)]
        common: Common,
        /// Point-cloud header; give two to get a comparison.
        #[arg(long = "cloud", required = true)]
        clouds: Vec<PathBuf>,
        /// Density-region mass kept after graph construction; 1 keeps everything.
        #[arg(long)]
        mass_threshold: Option<f64>,
        /// `dot` or `toml`.
        #[arg(long, default_value = "dot")]
        format: ExportFormat,
    },
    /// Write a separated and an interleaved labeled point cloud.
    SynthCloud {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        points_per_class: usize,
    },
    /// Print the built-in pipeline configuration, or the synthesis one with `--synth`.
    DefaultConfig {
        #[arg(long)]
        synth: bool,
    },
    /// Log band-power features of every epoch as a labeled point cloud.
    EpochCloud {
        #[arg(long)]
        epochs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn pipeline_config(common: &Common) -> Result<PipelineConfig> {
    let cfg = match &common.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    Ok(match common.seed {
        Some(seed) => cfg.with_seed(seed),
        None => cfg,
    })
}

/// Prefixes a TOML file with a provenance comment; parsers skip it.
fn stamp(path: &Path, checksum: &str) -> Result<()> {
    let io_err = |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let body = fs::read_to_string(path).map_err(io_err)?;
    fs::write(path, format!("# config-sha256 = \"{checksum}\"\n{body}")).map_err(io_err)
}

fn synth(common: &Common) -> Result<()> {
    let mut cfg = match &common.config {
        Some(path) => SynthConfig::load(path)?,
        None => SynthConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.session.seed = seed;
    }
    let checksum = cfg.checksum();
    let (rec, track) = cfg.generate()?;
    create_dir(&common.out)?;
    let header = common.out.join("recording.toml");
    let track_path = common.out.join("track.toml");
    write_recording(&header, &rec)?;
    write_track(&track_path, &track)?;
    stamp(&header, &checksum)?;
    stamp(&track_path, &checksum)?;
    log::info!(
        "{} channels × {} samples at {} Hz, {} intervals",
        rec.n_channels(),
        rec.n_samples(),
        rec.sample_rate_hz(),
        track.intervals().len()
    );
    Ok(())
}

fn preprocess_cmd(common: &Common, recording: &Path, track: &Path, skip_ica: bool) -> Result<()> {
    let cfg = pipeline_config(common)?;
    let rec = read_recording(recording)?;
    let track = read_track(track)?;
    let out = preprocess(&rec, &track, &cfg, skip_ica)?;
    create_dir(&common.out)?;
    write_epochs(&common.out.join("epochs.toml"), &out.epochs)?;
    if let Some(model) = &out.ica {
        write_ica_model(&common.out.join("ica.toml"), model)?;
    }
    write_toml(&common.out.join("preprocess_report.toml"), &out.report)?;
    log::info!(
        "{} epochs ({} real, {} fake) from {} windows",
        out.report.epochs,
        out.report.real,
        out.report.fake,
        out.report.windows
    );
    Ok(())
}

#[derive(Serialize)]
struct Timing {
    format_version: u32,
    epoch_wall_s: Vec<f64>,
}

fn train_eval_cmd(common: &Common, epochs: &Path, split: Option<SplitKind>) -> Result<()> {
    let mut cfg = pipeline_config(common)?;
    if let Some(kind) = split {
        cfg.split.kind = kind;
    }
    let set = read_epochs(epochs)?;
    let (params, mut report) = train_eval(&set, &cfg)?;
    create_dir(&common.out)?;
    write_params(&common.out.join("model.toml"), &params)?;
    // Wall times go to their own file so the metrics report is reproducible.
    let timing = Timing {
        format_version: neurowave::io::FORMAT_VERSION,
        epoch_wall_s: std::mem::take(&mut report.training.epoch_wall_s),
    };
    write_toml(&common.out.join("timing.toml"), &timing)?;
    write_toml(&common.out.join("metrics.toml"), &report)?;
    let table = report.metrics.table();
    fs::write(common.out.join("metrics.txt"), &table).map_err(|e| Error::Io {
        path: common.out.join("metrics.txt"),
        source: e,
    })?;
    print!("{table}");
    Ok(())
}

#[derive(Serialize)]
struct GraphSummary {
    cloud: String,
    source: String,
    points: usize,
    nodes: usize,
    edges: usize,
    separation_score: f64,
    graph_file: String,
}

#[derive(Serialize)]
struct Comparison {
    first: String,
    second: String,
    first_score: f64,
    second_score: f64,
    first_more_separated: bool,
}

#[derive(Serialize)]
struct MapperReport {
    format_version: u32,
    config_checksum: String,
    purity_level: f64,
    graphs: Vec<GraphSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<Comparison>,
}

fn mapper_cmd(common: &Common, clouds: &[PathBuf], mass: Option<f64>, format: ExportFormat) -> Result<()> {
    let mut cfg = pipeline_config(common)?;
    if let Some(m) = mass {
        cfg.mapper.mass_threshold = Some(m);
    }
    if clouds.len() > 2 {
        return Err(Error::InvalidArgument("at most two clouds can be compared".into()));
    }
    create_dir(&common.out)?;
    let ext = match format {
        ExportFormat::Dot => "dot",
        ExportFormat::Toml => "graph.toml",
    };
    let mut graphs = Vec::new();
    for (i, path) in clouds.iter().enumerate() {
        let cloud = read_cloud(path)?;
        let graph = run_mapper(&cloud, &cfg.mapper)?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("cloud{i}"));
        let name = format!("{i}-{stem}.{ext}");
        let bytes = export_graph(&graph, format)?;
        fs::write(common.out.join(&name), bytes).map_err(|e| Error::Io {
            path: common.out.join(&name),
            source: e,
        })?;
        graphs.push(GraphSummary {
            cloud: path.display().to_string(),
            source: cloud.source.clone(),
            points: cloud.len(),
            nodes: graph.nodes.len(),
            edges: graph.edges.len(),
            separation_score: graph.separation_score(PURITY_LEVEL),
            graph_file: name,
        });
    }
    let comparison = match graphs.as_slice() {
        [a, b] => Some(Comparison {
            first: a.source.clone(),
            second: b.source.clone(),
            first_score: a.separation_score,
            second_score: b.separation_score,
            first_more_separated: a.separation_score > b.separation_score,
        }),
        _ => None,
    };
    for g in &graphs {
        println!(
            "{}: {} nodes, {} edges, separation {:.3}",
            g.source, g.nodes, g.edges, g.separation_score
        );
    }
    let report = MapperReport {
        format_version: neurowave::io::FORMAT_VERSION,
        config_checksum: cfg.checksum(),
        purity_level: PURITY_LEVEL,
        graphs,
        comparison,
    };
    write_toml(&common.out.join("mapper_report.toml"), &report)
}

fn synth_cloud(seed: Option<u64>, out: &Path, points_per_class: usize) -> Result<()> {
    let spec = CloudSpec {
        points_per_class,
        seed: seed.unwrap_or(0),
        ..CloudSpec::default()
    };
    create_dir(out)?;
    write_cloud(&out.join("eeg.toml"), &separated_cloud(&spec)?)?;
    write_cloud(&out.join("audio.toml"), &interleaved_cloud(&spec)?)
}

fn epoch_cloud(epochs: &Path, out: &Path) -> Result<()> {
    let set = read_epochs(epochs)?;
    let cloud = band_power_cloud(&set)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_cloud(out, &cloud)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common } => synth(&common),
        Command::Preprocess {
            common,
            recording,
            track,
            skip_ica,
        } => preprocess_cmd(&common, &recording, &track, skip_ica),
        Command::TrainEval { common, epochs, split } => train_eval_cmd(&common, &epochs, split),
        Command::Mapper {
            common,
            clouds,
            mass_threshold,
            format,
        } => mapper_cmd(&common, &clouds, mass_threshold, format),
        Command::SynthCloud {
            seed,
            out,
            points_per_class,
        } => synth_cloud(seed, &out, points_per_class),
        Command::EpochCloud { epochs, out } => epoch_cloud(&epochs, &out),
        Command::DefaultConfig { synth } => {
            if synth {
                print!("{}", SynthConfig::default().to_toml());
            } else {
                print!("{}", PipelineConfig::default().to_toml());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NEUROWAVE_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            // Messages already embed their causes.
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
