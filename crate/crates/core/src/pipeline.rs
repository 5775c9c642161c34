//! End-to-end configuration and stage runner: preprocessing, training with
//! evaluation, and band-power point clouds for Mapper.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::{predict, train, ModelConfig, ModelParams, TrainHyper, TrainReport};
use crate::error::{Error, Result};
use crate::evaluation::{compute_metrics, split_ordered, split_random, MetricsReport, Split};
use crate::ica::{
    component_report, effective_rank, fit_ica_with, label_components, remove_and_reconstruct, removed_components,
    Category, ComponentRow, IcaModel, IcaOptions, LabelerConfig,
};
use crate::io::{self, FORMAT_VERSION};
use crate::mapper::{MapperConfig, PointCloud};
use crate::signal::{
    bandpass_filter, baseline_correct, label_epochs, rereference_common_average, rereference_mastoid, resample,
    segment, EpochSet, Label, LabelTrack, Recording,
};
use crate::spectral::{preset_band_power, Band, Spectrum, SpectrumPlan, Taper};
use crate::synth::{gen_recording, gen_schedule, SessionSpec, SignatureSpec};

/// Processing steps ahead of segmentation, in configurable order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Baseline,
    Filter,
    Reference,
    Ica,
    Resample,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Baseline => "baseline",
            Stage::Filter => "filter",
            Stage::Reference => "reference",
            Stage::Ica => "ica",
            Stage::Resample => "resample",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    Mastoid,
    CommonAverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcaStage {
    pub components: usize,
    pub seed: u64,
    /// Categories removed when they are a component's argmax with at least `threshold`.
    pub remove: Vec<Category>,
    pub threshold: f64,
    /// Add back the signal outside the retained principal subspace.
    pub keep_residual: bool,
    /// Fit on an evenly strided subsample of at most this many samples.
    pub fit_max_samples: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Continue with the last iterate when FastICA hits `max_iter`.
    pub accept_unconverged: bool,
    pub labeler: LabelerConfig,
}

impl Default for IcaStage {
    fn default() -> Self {
        Self {
            components: 20,
            seed: 0,
            remove: vec![
                Category::Muscle,
                Category::Heartbeat,
                Category::LineNoise,
                Category::ChannelNoise,
                Category::EyeBlink,
            ],
            threshold: 0.5,
            keep_residual: true,
            fit_max_samples: 100_000,
            tol: 1e-6,
            max_iter: 500,
            accept_unconverged: true,
            labeler: LabelerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub order: Vec<Stage>,
    pub low_hz: f64,
    pub high_hz: f64,
    /// Applied in sequence by the `reference` stage.
    pub reference: Vec<Reference>,
    pub mastoids: [String; 2],
    pub ica: IcaStage,
    pub target_hz: f64,
    pub window_s: f64,
    pub overlap: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            order: vec![
                Stage::Baseline,
                Stage::Filter,
                Stage::Reference,
                Stage::Ica,
                Stage::Resample,
            ],
            low_hz: 0.5,
            high_hz: 80.0,
            reference: vec![Reference::Mastoid, Reference::CommonAverage],
            mastoids: ["TP9".into(), "TP10".into()],
            ica: IcaStage::default(),
            target_hz: 256.0,
            window_s: 0.5,
            overlap: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    Random,
    Ordered,
}

impl std::str::FromStr for SplitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(SplitKind::Random),
            "ordered" => Ok(SplitKind::Ordered),
            other => Err(Error::invalid(format!(
                "unknown split `{other}` (expected random or ordered)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub kind: SplitKind,
    pub test_fraction: f64,
    pub seed: u64,
    /// Ordered split only: drop test epochs overlapping the last training window.
    pub drop_boundary: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            kind: SplitKind::Random,
            test_fraction: 0.2,
            seed: 0,
            drop_boundary: false,
        }
    }
}

/// Every module default in one versioned file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub format_version: u32,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    /// `window_len` and `channels` are taken from the epoch archive at training time.
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainHyper,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub mapper: MapperConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            format_version: FORMAT_VERSION,
            preprocess: PreprocessConfig::default(),
            model: ModelConfig::default(),
            train: TrainHyper::default(),
            split: SplitConfig::default(),
            mapper: MapperConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: PipelineConfig = io::read_toml(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = io::parse_toml(text, Path::new("<config>"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.preprocess;
        let mut seen = BTreeSet::new();
        for s in &p.order {
            if !seen.insert(s.name()) {
                return Err(Error::invalid(format!(
                    "stage `{}` listed twice in preprocess.order",
                    s.name()
                )));
            }
        }
        for c in &p.ica.remove {
            if matches!(c, Category::Brain | Category::Other) {
                return Err(Error::invalid(format!(
                    "preprocess.ica.remove may not contain `{c}`: non-artifact components are kept"
                )));
            }
        }
        if p.ica.components == 0 {
            return Err(Error::invalid("preprocess.ica.components must be ≥ 1"));
        }
        if !(p.overlap >= 0.0 && p.overlap < 1.0) || !(p.window_s > 0.0) {
            return Err(Error::invalid(
                "preprocess.window_s must be positive and overlap in [0, 1)",
            ));
        }
        if !(p.target_hz > 0.0) {
            return Err(Error::invalid("preprocess.target_hz must be positive"));
        }
        self.model.validate()?;
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            return Err(Error::invalid("split.test_fraction must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Overrides every seed in the configuration.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.preprocess.ica.seed = seed;
        self.model.seed = seed;
        self.train.seed = seed;
        self.split.seed = seed;
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn checksum(&self) -> String {
        sha256_hex(&self.to_toml())
    }
}

fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub stage: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub format_version: u32,
    pub config_checksum: String,
    pub stages: Vec<StageEntry>,
    pub windows: usize,
    pub epochs: usize,
    pub real: usize,
    pub fake: usize,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub components: Vec<ComponentRow>,
}

#[derive(Debug)]
pub struct Preprocessed {
    pub epochs: EpochSet,
    pub ica: Option<IcaModel>,
    pub report: PreprocessReport,
}

fn run_ica(rec: &Recording, cfg: &IcaStage) -> Result<(Recording, IcaModel, Vec<usize>, String)> {
    let stride = rec.n_samples().div_ceil(cfg.fit_max_samples.max(1)).max(1);
    let rank = effective_rank(rec, stride);
    let k = cfg.components.min(rank);
    if k < cfg.components {
        log::info!("ica: data rank {rank} caps {} requested components", cfg.components);
    }
    let opts = IcaOptions {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        fit_stride: stride,
        accept_unconverged: cfg.accept_unconverged,
    };
    let model = fit_ica_with(rec, k, cfg.seed, &opts)?;
    let model = label_components(&model, rec, &cfg.labeler)?;
    let remove: BTreeSet<Category> = cfg.remove.iter().copied().collect();
    let removed = removed_components(&model, &remove, cfg.threshold);
    let out = remove_and_reconstruct(&model, rec, &remove, cfg.threshold, cfg.keep_residual)?;
    let detail = format!(
        "{k} components, {} iterations{}, removed {:?}",
        model.iterations,
        if model.converged { "" } else { " (not converged)" },
        removed
    );
    Ok((out, model, removed, detail))
}

/// Runs the configured stages, segments, labels and drops silence/baseline epochs.
pub fn preprocess(rec: &Recording, track: &LabelTrack, cfg: &PipelineConfig, skip_ica: bool) -> Result<Preprocessed> {
    let p = &cfg.preprocess;
    let mut rec = rec.clone();
    let mut stages = Vec::new();
    let mut ica = None;
    let mut components = Vec::new();
    for &stage in &p.order {
        if stage == Stage::Ica && skip_ica {
            continue;
        }
        let detail = match stage {
            Stage::Baseline => {
                rec = baseline_correct(&rec, track).map_err(|e| e.in_stage("baseline"))?;
                let b = track.baseline();
                format!("mean of [{}, {}) s subtracted", b.start_s, b.end_s)
            }
            Stage::Filter => {
                rec = bandpass_filter(&rec, p.low_hz, p.high_hz).map_err(|e| e.in_stage("filter"))?;
                format!("{}–{} Hz zero-phase Butterworth", p.low_hz, p.high_hz)
            }
            Stage::Reference => {
                for r in &p.reference {
                    rec = match r {
                        Reference::Mastoid => rereference_mastoid(&rec, &p.mastoids[0], &p.mastoids[1]),
                        Reference::CommonAverage => rereference_common_average(&rec),
                    }
                    .map_err(|e| e.in_stage("reference"))?;
                }
                format!("{:?}", p.reference)
            }
            Stage::Ica => {
                let (out, model, removed, detail) = run_ica(&rec, &p.ica).map_err(|e| e.in_stage("ica"))?;
                rec = out;
                components = component_report(&model, &removed);
                ica = Some(model);
                detail
            }
            Stage::Resample => {
                let from = rec.sample_rate_hz();
                rec = resample(&rec, p.target_hz).map_err(|e| e.in_stage("resample"))?;
                format!("{from} Hz → {} Hz", p.target_hz)
            }
        };
        log::info!("{}: {detail}", stage.name());
        stages.push(StageEntry {
            stage: stage.name().into(),
            detail,
        });
    }
    let windows = segment(&rec, p.window_s, p.overlap).map_err(|e| e.in_stage("segment"))?;
    let epochs = label_epochs(&windows, track).map_err(|e| e.in_stage("label"))?;
    stages.push(StageEntry {
        stage: "segment".into(),
        detail: format!("{} windows of {} s, overlap {}", windows.len(), p.window_s, p.overlap),
    });
    stages.push(StageEntry {
        stage: "label".into(),
        detail: format!("{} epochs kept", epochs.len()),
    });
    let report = PreprocessReport {
        format_version: FORMAT_VERSION,
        config_checksum: cfg.checksum(),
        stages,
        windows: windows.len(),
        epochs: epochs.len(),
        real: epochs.count(Label::Real),
        fake: epochs.count(Label::Fake),
        components,
    };
    Ok(Preprocessed { epochs, ica, report })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub config_checksum: String,
    pub split: SplitKind,
    pub train_epochs: usize,
    pub test_epochs: usize,
    pub train_fake: usize,
    pub test_fake: usize,
    pub metrics: MetricsReport,
    pub training: TrainReport,
}

impl EvalReport {
    pub fn fake_f1(&self) -> f64 {
        self.metrics.class(Label::Fake).f1
    }
}

pub fn make_split(set: &EpochSet, cfg: &SplitConfig) -> Result<Split> {
    match cfg.kind {
        SplitKind::Random => split_random(set, cfg.test_fraction, cfg.seed),
        SplitKind::Ordered => split_ordered(set, 1.0 - cfg.test_fraction, cfg.drop_boundary),
    }
}

/// Splits, trains a fresh model on the training side and scores the test side.
pub fn train_eval(set: &EpochSet, cfg: &PipelineConfig) -> Result<(ModelParams, EvalReport)> {
    let split = make_split(set, &cfg.split)?;
    let train_set = set.subset(&split.train);
    let test_set = set.subset(&split.test);
    let model_cfg = ModelConfig {
        window_len: set.window_len(),
        channels: set.n_channels(),
        ..cfg.model.clone()
    };
    let (params, training) = train(&model_cfg, &train_set, &cfg.train)?;
    let predicted: Vec<Label> = predict(&params, &test_set)?
        .iter()
        .map(|p| p.label().unwrap_or(Label::Fake))
        .collect();
    let actual = test_set.labels()?;
    let metrics = compute_metrics(&predicted, &actual)?;
    let report = EvalReport {
        format_version: FORMAT_VERSION,
        config_checksum: cfg.checksum(),
        split: cfg.split.kind,
        train_epochs: train_set.len(),
        test_epochs: test_set.len(),
        train_fake: train_set.count(Label::Fake),
        test_fake: test_set.count(Label::Fake),
        metrics,
        training,
    };
    Ok((params, report))
}

/// Log band power per canonical band, averaged over channels: one point per epoch.
pub fn band_power_cloud(set: &EpochSet) -> Result<PointCloud> {
    let plan = SpectrumPlan::new(set.window_len(), Taper::None)?;
    let bands = Band::ALL;
    let bin_hz = set.sample_rate_hz / set.window_len() as f64;
    let mut points = ndarray::Array2::zeros((set.len(), bands.len()));
    for (mut row, e) in points.rows_mut().into_iter().zip(&set.epochs) {
        let spec = Spectrum {
            magnitudes: plan.magnitudes(&e.window)?,
            bin_hz,
        };
        for (slot, band) in row.iter_mut().zip(bands) {
            let (lo, _) = band.edges();
            if lo >= set.sample_rate_hz / 2.0 {
                continue;
            }
            let powers = preset_band_power(&spec, band)?;
            *slot = (powers.iter().sum::<f64>() / powers.len() as f64).ln_1p();
        }
    }
    let labels = set.labels()?;
    PointCloud::new(points, labels, "eeg")
}

/// Synthetic session description: schedule plus signal content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub format_version: u32,
    #[serde(default)]
    pub session: SessionSpec,
    #[serde(default)]
    pub signature: SignatureSpec,
    #[serde(default = "default_channels")]
    pub channels: usize,
    #[serde(default = "default_rate")]
    pub rate_hz: f64,
}

fn default_channels() -> usize {
    64
}

fn default_rate() -> f64 {
    5000.0
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            format_version: FORMAT_VERSION,
            session: SessionSpec::default(),
            signature: SignatureSpec::default(),
            channels: default_channels(),
            rate_hz: default_rate(),
        }
    }
}

impl SynthConfig {
    pub fn load(path: &Path) -> Result<Self> {
        io::read_toml(path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn checksum(&self) -> String {
        sha256_hex(&self.to_toml())
    }

    /// Generates the label track and recording; the session seed also seeds the signal.
    pub fn generate(&self) -> Result<(Recording, LabelTrack)> {
        let track = gen_schedule(&self.session)?;
        let rec = gen_recording(&track, &self.signature, self.channels, self.rate_hz, self.session.seed)?;
        Ok((rec, track))
    }
}
