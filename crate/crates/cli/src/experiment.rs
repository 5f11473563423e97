//! Repeated end-to-end trials with the two single-input ablations and the
//! consultation-loss comparison.

use log::info;
use presence_csi::Case;
use presence_metrics::{davies_bouldin, MetricsReport};
use presence_nn::{LinearHead, NUM_CLASSES, PROJECTION_DIM, REPRESENTATION_DIM};
use presence_train::{argmax, train_heads, train_probe, train_stage1, train_stage2, Branch, Dataset, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::config::{DbSpace, RunConfig};
use crate::pipeline::fused_report;
use crate::{CliError, Result};

/// Outcome of one trial, all on the held-out split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: u64,
    pub seed: u64,
    /// Fused two-branch model (with switch statistics).
    pub full: MetricsReport,
    /// Linear classifier on the RP branch alone.
    pub rp_only: MetricsReport,
    /// Linear classifier on a ratio branch trained without consultation.
    pub ratio_only: MetricsReport,
    /// DB index of the ratio branch trained with the configured lambda.
    pub db_with_consultation: f64,
    /// DB index of the same branch trained with lambda = 0.
    pub db_without_consultation: f64,
}

impl TrialReport {
    /// Full model beats RP-only on every static case.
    pub fn beats_rp_only(&self) -> bool {
        Case::ALL.iter().filter(|c| c.is_static()).all(|&c| self.full.f1(c) > self.rp_only.f1(c))
    }

    /// Full model beats ratio-only on the dynamic case.
    pub fn beats_ratio_only(&self) -> bool {
        self.full.f1(Case::Dynamic) > self.ratio_only.f1(Case::Dynamic)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub average_f1: MeanStd,
    pub per_class_f1: Vec<MeanStd>,
    pub rp_only_average_f1: MeanStd,
    pub ratio_only_average_f1: MeanStd,
    pub db_with_consultation: MeanStd,
    pub db_without_consultation: MeanStd,
    pub switch_dynamic_on: MeanStd,
    pub switch_static_off: MeanStd,
    /// Trials where the full model beat RP-only on all static cases.
    pub beats_rp_only: usize,
    pub beats_ratio_only: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialsReport {
    pub trials: Vec<TrialReport>,
    pub aggregate: Aggregate,
}

fn probe_report(head: &LinearHead<f32>, v: &[f32], labels: &[Case]) -> Result<MetricsReport> {
    let probs = head.probabilities(v)?;
    let preds = probs.chunks(NUM_CLASSES).map(|p| Case::from_index(argmax(p))).collect::<Result<Vec<_>, _>>();
    let preds = preds.map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(MetricsReport::new(&preds, labels)?)
}

fn db(branch: &Branch, v: &[f32], labels: &[Case], space: DbSpace) -> Result<f64> {
    let (values, dim) = match space {
        DbSpace::Representation => (v.to_vec(), REPRESENTATION_DIM),
        DbSpace::Projection => (branch.projection.infer(v)?, PROJECTION_DIM),
    };
    let values: Vec<f64> = values.iter().map(|&x| f64::from(x)).collect();
    Ok(davies_bouldin(&values, dim, labels)?)
}

fn all_rp(data: &Dataset, branch: &Branch) -> Result<Vec<f32>> {
    let all: Vec<usize> = (0..data.len()).collect();
    Ok(branch.representations(&data.rp_batch(&all), data.width, data.height)?)
}

fn all_ratio(data: &Dataset, branch: &Branch) -> Result<Vec<f32>> {
    let all: Vec<usize> = (0..data.len()).collect();
    Ok(branch.representations(&data.ratio_batch(&all), data.width, data.height)?)
}

/// One trial: stage 1, stage 2 with and without consultation, stage 3 on
/// the former, and linear probes on the RP branch and the lambda = 0 ratio
/// branch.
pub fn run_trial(config: &RunConfig, train: &Dataset, test: &Dataset, trial: u64) -> Result<TrialReport> {
    let tc = config.train_config(trial);
    let no_consult = TrainConfig { loss: presence_train::LossConfig { lambda: 0.0, ..tc.loss }, ..tc.clone() };
    let (train_labels, test_labels) = (train.labels(), test.labels());

    info!("trial {trial}: stage 1");
    let (stage1, _) = train_stage1(train, &tc)?;
    info!("trial {trial}: stage 2, lambda = {}", tc.loss.lambda);
    let (stage2, _) = train_stage2(train, &stage1, &tc)?;
    info!("trial {trial}: stage 2, lambda = 0");
    let (stage2_plain, _) = train_stage2(train, &stage1, &no_consult)?;

    let (tr_rp, te_rp) = (all_rp(train, &stage1)?, all_rp(test, &stage1)?);
    let (tr_ratio, te_ratio) = (all_ratio(train, &stage2)?, all_ratio(test, &stage2)?);
    let (tr_plain, te_plain) = (all_ratio(train, &stage2_plain)?, all_ratio(test, &stage2_plain)?);

    info!("trial {trial}: stage 3 and probes");
    let (heads, _) = train_heads(&tr_rp, &tr_ratio, &train_labels, &tc)?;
    let full = fused_report(&heads.classify(&te_rp, &te_ratio)?, &test_labels)?;
    let rp_only = probe_report(&train_probe(&tr_rp, &train_labels, &tc, 1)?, &te_rp, &test_labels)?;
    let ratio_only = probe_report(&train_probe(&tr_plain, &train_labels, &tc, 2)?, &te_plain, &test_labels)?;

    let space = config.eval.db_space;
    let report = TrialReport {
        trial,
        seed: tc.seed,
        full,
        rp_only,
        ratio_only,
        db_with_consultation: db(&stage2, &te_ratio, &test_labels, space)?,
        db_without_consultation: db(&stage2_plain, &te_plain, &test_labels, space)?,
    };
    info!(
        "trial {trial}: F1 {:.4} (RP-only {:.4}, ratio-only {:.4}), DB {:.4} vs {:.4}",
        report.full.average_f1,
        report.rp_only.average_f1,
        report.ratio_only.average_f1,
        report.db_with_consultation,
        report.db_without_consultation
    );
    Ok(report)
}

pub fn aggregate(trials: &[TrialReport]) -> Aggregate {
    let of = |f: &dyn Fn(&TrialReport) -> f64| MeanStd::of(&trials.iter().map(f).collect::<Vec<_>>());
    let switch = |t: &TrialReport| t.full.switch_stats.clone().unwrap_or_else(|| unreachable!("fused reports carry switch stats"));
    Aggregate {
        average_f1: of(&|t| t.full.average_f1),
        per_class_f1: Case::ALL.iter().map(|&c| of(&|t| t.full.f1(c))).collect(),
        rp_only_average_f1: of(&|t| t.rp_only.average_f1),
        ratio_only_average_f1: of(&|t| t.ratio_only.average_f1),
        db_with_consultation: of(&|t| t.db_with_consultation),
        db_without_consultation: of(&|t| t.db_without_consultation),
        switch_dynamic_on: of(&|t| switch(t).dynamic_on),
        switch_static_off: of(&|t| switch(t).static_off),
        beats_rp_only: trials.iter().filter(|t| t.beats_rp_only()).count(),
        beats_ratio_only: trials.iter().filter(|t| t.beats_ratio_only()).count(),
    }
}

/// `trials` consecutive trials (seeds `seed`, `seed + 1`, ...).
pub fn run_trials(config: &RunConfig, train: &Dataset, test: &Dataset, trials: u64) -> Result<TrialsReport> {
    if trials == 0 {
        return Err(CliError::Validation("trial count must be positive".into()));
    }
    config.validate()?;
    let reports = (0..trials).map(|t| run_trial(config, train, test, t)).collect::<Result<Vec<_>>>()?;
    Ok(TrialsReport { aggregate: aggregate(&reports), trials: reports })
}
