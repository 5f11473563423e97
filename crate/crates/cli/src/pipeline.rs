//! The subcommands as library functions.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use presence_csi::{read_dump, simulate_series_from, write_dump, Case, Corner, CsiSeries};
use presence_feig::pnm::{encode_gray, encode_pgm, encode_rgb, write_bytes};
use presence_feig::Featurizer;
use presence_metrics::{davies_bouldin, export_embeddings, switch_stats, MetricsReport};
use presence_nn::{seeded_rng, PROJECTION_DIM, REPRESENTATION_DIM};
use presence_train::{
    train_stage1, train_stage2, train_stage3, write_loss_csv, Branch, ClassProbabilities, Dataset, Heads, LossRow,
    PresenceModel, Sample,
};
use serde::{Deserialize, Serialize};

use crate::config::{DbSpace, RunConfig};
use crate::{CliError, Result};

/// Directory layout under `--out`.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn dumps(&self) -> PathBuf {
        self.root.join("dumps")
    }

    pub fn features(&self) -> PathBuf {
        self.root.join("features")
    }

    pub fn model(&self) -> PathBuf {
        self.root.join("model")
    }

    pub fn eval(&self) -> PathBuf {
        self.root.join("eval")
    }

    pub fn render(&self) -> PathBuf {
        self.root.join("render")
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
    Calibration,
}

/// One generated series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub split: Split,
    pub case: Case,
    pub variant: String,
    pub file: String,
    pub scenario: String,
    pub frames: usize,
    pub start_frame: u64,
    pub seed: u64,
    /// Full RP windows the series yields.
    pub windows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn read(dumps: &Path) -> Result<Self> {
        read_json(&dumps.join("manifest.json"))
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

/// The five (case, variant) combinations in manifest order.
fn variants() -> Vec<(Case, Corner, u64)> {
    vec![
        (Case::Empty, Corner::UpperLeft, 0),
        (Case::NlosStatic, Corner::UpperLeft, 1),
        (Case::NlosStatic, Corner::LowerRight, 2),
        (Case::LosStatic, Corner::UpperLeft, 3),
        (Case::Dynamic, Corner::UpperLeft, 4),
    ]
}

/// `gen`: labelled dumps per (case, variant) for both splits, an empty-room
/// calibration dump, each scenario as JSON, and a manifest.
pub fn generate(config: &RunConfig, out: &Path) -> Result<Manifest> {
    config.validate()?;
    if config.data.train_frames == 0 || config.data.test_frames == 0 {
        return Err(CliError::Validation("sample counts must be positive".into()));
    }
    create_dir(out)?;
    let room = &config.data.room;
    let tau = config.features.tau;
    let mut entries = Vec::new();
    let mut emit = |split: Split, case: Case, corner: Corner, seed: u64, start: u64, frames: usize| -> Result<()> {
        let scenario = room.scenario(case, corner, seed);
        let variant = if scenario.variant.is_empty() { "default".to_string() } else { scenario.variant.clone() };
        let split_name = match split {
            Split::Train => "train",
            Split::Test => "test",
            Split::Calibration => "calibration",
        };
        let stem = format!("{split_name}_case{}_{variant}", case.id());
        let mut series = simulate_series_from(&scenario, start, frames)?;
        series.quantize_f32();
        write_dump(&series, out.join(format!("{stem}.csid")))?;
        fs::write(out.join(format!("{stem}.scenario.json")), scenario.to_json()?)?;
        info!("wrote {stem} ({frames} frames)");
        entries.push(ManifestEntry {
            split,
            case,
            variant,
            file: format!("{stem}.csid"),
            scenario: format!("{stem}.scenario.json"),
            frames,
            start_frame: start,
            seed,
            windows: (frames + 1).saturating_sub(tau),
        });
        Ok(())
    };
    let d = &config.data;
    for (case, corner, salt) in variants() {
        emit(Split::Train, case, corner, config.seed.wrapping_add(salt), 0, d.train_frames)?;
    }
    for (case, corner, salt) in variants() {
        let seed = config.seed.wrapping_add(d.test_seed_offset).wrapping_add(salt);
        emit(Split::Test, case, corner, seed, d.train_frames as u64, d.test_frames)?;
    }
    let cal_seed = config.seed.wrapping_add(d.calibration_seed_offset);
    emit(Split::Calibration, Case::Empty, Corner::UpperLeft, cal_seed, 0, config.features.calibration_len())?;
    let manifest = Manifest { seed: config.seed, entries };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

fn load_series(dumps: &Path, entry: &ManifestEntry) -> Result<CsiSeries> {
    let series = read_dump(dumps.join(&entry.file))?;
    if series.label != Some(entry.case) {
        return Err(CliError::Validation(format!("{} is labelled {:?}, manifest says {}", entry.file, series.label, entry.case)));
    }
    Ok(series)
}

/// Calibrates on the manifest's empty-room calibration dump.
pub fn calibrate(config: &RunConfig, dumps: &Path, manifest: &Manifest) -> Result<Featurizer> {
    let entry = manifest
        .split(Split::Calibration)
        .find(|e| e.case == Case::Empty)
        .ok_or_else(|| CliError::Validation("no empty-room (case 1) calibration series".into()))?;
    Ok(Featurizer::calibrate(config.features.clone(), &load_series(dumps, entry)?)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub train_records: usize,
    pub test_records: usize,
    pub gamma: f64,
}

/// `featurize`: `train.crds`, `test.crds` and the calibrated `featurizer.json`.
pub fn featurize(config: &RunConfig, dumps: &Path, out: &Path) -> Result<FeatureSummary> {
    config.validate()?;
    let manifest = Manifest::read(dumps)?;
    let featurizer = calibrate(config, dumps, &manifest)?;
    create_dir(out)?;
    let f = &featurizer.config;
    let mut counts = Vec::new();
    for (split, name) in [(Split::Train, "train.crds"), (Split::Test, "test.crds")] {
        let mut data = Dataset::new(f.q, f.width, f.height)?;
        for entry in manifest.split(split) {
            let series = load_series(dumps, entry)?;
            for record in featurizer.records(&series, config.data.workers)? {
                data.push(Sample { label: record.label, rp: record.rp, ratio: record.ratio })?;
            }
        }
        info!("{name}: {} records", data.len());
        data.write(&out.join(name))?;
        counts.push(data.len());
    }
    write_json(&out.join("featurizer.json"), &featurizer)?;
    Ok(FeatureSummary { train_records: counts[0], test_records: counts[1], gamma: featurizer.threshold.gamma })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageSelection {
    One,
    Two,
    Three,
    All,
}

impl StageSelection {
    pub fn includes(self, stage: usize) -> bool {
        matches!((self, stage), (Self::All, _) | (Self::One, 1) | (Self::Two, 2) | (Self::Three, 3))
    }
}

impl std::str::FromStr for StageSelection {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(Self::One),
            "2" => Ok(Self::Two),
            "3" => Ok(Self::Three),
            "all" => Ok(Self::All),
            other => Err(CliError::Validation(format!("stage must be 1, 2, 3 or all, got {other}"))),
        }
    }
}

const STAGE_FILES: [&str; 3] = ["stage1.crnm", "stage2.crnm", "stage3.crnm"];

fn prerequisite(model: &Path, stage: usize) -> Result<PathBuf> {
    let path = model.join(STAGE_FILES[stage - 1]);
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::Validation(format!("stage {} checkpoint {} is missing; train that stage first", stage, path.display())))
    }
}

fn load_stage1(config: &RunConfig, model: &Path) -> Result<Branch> {
    let path = prerequisite(model, 1)?;
    Ok(Branch::load(&path, "stage1", config.train.encoder.spec(1), &mut seeded_rng(0))?)
}

fn load_stage2(config: &RunConfig, model: &Path, q: usize) -> Result<Branch> {
    let path = prerequisite(model, 2)?;
    Ok(Branch::load(&path, "stage2", config.train.encoder.spec(q), &mut seeded_rng(0))?)
}

pub fn load_model(config: &RunConfig, model: &Path, q: usize) -> Result<PresenceModel> {
    let stage1 = load_stage1(config, model)?;
    let stage2 = load_stage2(config, model, q)?;
    let heads = Heads::load(&prerequisite(model, 3)?, "stage3", &mut seeded_rng(0))?;
    Ok(PresenceModel { stage1, stage2, heads })
}

/// `train`: runs the selected stage(s), writing checkpoints and `loss.csv`
/// (rows of every stage run in this invocation).
pub fn train(config: &RunConfig, features: &Path, model: &Path, stage: StageSelection) -> Result<Vec<LossRow>> {
    config.validate()?;
    let data = Dataset::read(&features.join("train.crds"))?;
    create_dir(model)?;
    let tc = config.train_config(0);
    let run = |s: usize| stage.includes(s);
    let mut rows = Vec::new();
    if run(1) {
        let (branch, r) = train_stage1(&data, &tc)?;
        branch.save(&model.join(STAGE_FILES[0]), "stage1")?;
        rows.extend(r);
    }
    if run(2) {
        let stage1 = load_stage1(config, model)?;
        let (branch, r) = train_stage2(&data, &stage1, &tc)?;
        branch.save(&model.join(STAGE_FILES[1]), "stage2")?;
        rows.extend(r);
    }
    if run(3) {
        let stage1 = load_stage1(config, model)?;
        let stage2 = load_stage2(config, model, data.q)?;
        let (heads, r) = train_stage3(&data, &stage1, &stage2, &tc)?;
        heads.save(&model.join(STAGE_FILES[2]), "stage3")?;
        rows.extend(r);
    }
    write_loss_csv(&rows, &model.join("loss.csv"))?;
    Ok(rows)
}

fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x)).collect()
}

/// Davies-Bouldin index of a branch's held-out embeddings.
pub fn branch_db(branch: &Branch, images: &[f32], data: &Dataset, space: DbSpace) -> Result<f64> {
    let reps = branch.representations(images, data.width, data.height)?;
    let (values, dim) = match space {
        DbSpace::Representation => (reps, REPRESENTATION_DIM),
        DbSpace::Projection => (branch.projection.infer(&reps)?, PROJECTION_DIM),
    };
    Ok(davies_bouldin(&to_f64(&values), dim, &data.labels())?)
}

/// Metrics of fused predictions, with switch statistics.
pub fn fused_report(probs: &[ClassProbabilities<f32>], labels: &[Case]) -> Result<MetricsReport> {
    let preds: Vec<Case> = probs.iter().map(|p| p.case()).collect();
    let mut report = MetricsReport::new(&preds, labels)?;
    let omegas: Vec<u8> = probs.iter().map(|p| p.omega).collect();
    report.switch_stats = Some(switch_stats(&omegas, labels)?);
    Ok(report)
}

fn write_predictions(path: &Path, probs: &[ClassProbabilities<f32>], labels: &[Case]) -> Result<()> {
    let mut text = String::from("id,label,prediction,omega,p1,p2,p3,p4\n");
    for (i, (p, l)) in probs.iter().zip(labels).enumerate() {
        let y = &p.y_final;
        text.push_str(&format!("{i},{},{},{},{},{},{},{}\n", l.id(), p.case().id(), p.omega, y[0], y[1], y[2], y[3]));
    }
    fs::write(path, text)?;
    Ok(())
}

/// `eval`: held-out metrics of a trained model (`metrics.json`), per-sample
/// predictions and the ratio-branch embeddings.
pub fn evaluate(config: &RunConfig, features: &Path, model: &Path, out: &Path) -> Result<MetricsReport> {
    config.validate()?;
    let test = Dataset::read(&features.join("test.crds"))?;
    let model = load_model(config, model, test.q)?;
    create_dir(out)?;
    let labels = test.labels();
    let probs = model.predict_dataset(&test)?;
    let mut report = fused_report(&probs, &labels)?;
    let all: Vec<usize> = (0..test.len()).collect();
    let images = test.ratio_batch(&all);
    report.db_index = Some(branch_db(&model.stage2, &images, &test, config.eval.db_space)?);
    write_predictions(&out.join("predictions.csv"), &probs, &labels)?;
    let reps = model.stage2.representations(&images, test.width, test.height)?;
    let projections = if config.eval.export_projections { Some(model.stage2.projection.infer(&reps)?) } else { None };
    export_embeddings(
        &out.join("embeddings.csv"),
        &labels,
        &reps,
        REPRESENTATION_DIM,
        projections.as_deref().map(|p| (p, PROJECTION_DIM)),
    )?;
    write_json(&out.join("metrics.json"), &report)?;
    Ok(report)
}

/// Which windows `render` draws.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderSelection {
    pub split: Split,
    /// Window end index within each series; `None` for the last window.
    pub index: Option<usize>,
}

/// `render`: for the selected window of every series in a split, the RP
/// (PGM), the first couple's binary (PGM) and colorized (PPM) ratio images,
/// and each merged greyscale channel (PGM). The images are recomputed from
/// the dumps and the empty-room calibration.
pub fn render(config: &RunConfig, dumps: &Path, out: &Path, selection: &RenderSelection) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let manifest = Manifest::read(dumps)?;
    let featurizer = calibrate(config, dumps, &manifest)?;
    create_dir(out)?;
    let mut written = Vec::new();
    let mut put = |name: String, bytes: Vec<u8>| -> Result<()> {
        let path = out.join(name);
        write_bytes(&path, &bytes)?;
        written.push(path);
        Ok(())
    };
    for entry in manifest.split(selection.split) {
        let series = load_series(dumps, entry)?;
        let t = selection.index.unwrap_or(series.len() - 1);
        let set = featurizer.render(&series, t)?;
        let stem = entry.file.trim_end_matches(".csid");
        put(format!("{stem}_t{t}_rp.pgm"), encode_pgm(&set.rp.to_gray(set.rp.size()), set.rp.size(), set.rp.size())?)?;
        let first = &set.couples[0];
        put(format!("{stem}_t{t}_binary.pgm"), encode_gray(&first.binary.to_gray())?)?;
        put(format!("{stem}_t{t}_color.ppm"), encode_rgb(&first.rgb)?)?;
        for (q, couple) in set.couples.iter().enumerate() {
            put(format!("{stem}_t{t}_gray{q}.pgm"), encode_gray(&couple.gray)?)?;
        }
    }
    Ok(written)
}
