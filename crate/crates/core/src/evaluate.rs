//! Cohort evaluation: per-case records plus aggregate statistics.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::metrics::{assd, bpe, breast_density, dice};
use crate::stats::{bootstrap_ci, mean_std, pearson, permutation_test};
use crate::volume::{BinaryMask, Case};

/// Per-case metric tuple. `assd_mm` is None when either surface is empty
/// (undefined distance); such cases are excluded from ASSD aggregates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalRecord {
    pub case_id: String,
    pub dsc: f64,
    pub assd_mm: Option<f64>,
    pub density_manual: f64,
    pub density_auto: f64,
    pub bpe_manual: f64,
    pub bpe_auto: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricAggregate {
    pub mean: f64,
    pub std: f64,
    pub ci95: (f64, f64),
    pub n: usize,
}

/// Aggregates in the mean±std / correlation format of the report layer.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StatSummary {
    pub dsc: MetricAggregate,
    pub assd_mm: Option<MetricAggregate>,
    pub n_assd_excluded: usize,
    /// Correlation between manually and automatically derived breast density.
    pub pearson_density: Option<f64>,
    /// Correlation between manually and automatically derived BPE.
    pub pearson_bpe: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelComparison {
    pub p_dsc: f64,
    pub p_assd: Option<f64>,
    pub n_pairs: usize,
}

const BOOTSTRAP_RESAMPLES: usize = 10_000;
const PERMUTATIONS: usize = 10_000;

fn aggregate(values: &[f64], seed: u64) -> Option<MetricAggregate> {
    if values.is_empty() {
        return None;
    }
    let (mean, std) = mean_std(values);
    let ci95 = if values.len() >= 2 {
        bootstrap_ci(values, BOOTSTRAP_RESAMPLES, 0.05, seed).ok()?
    } else {
        (mean, mean)
    };
    Some(MetricAggregate {
        mean,
        std,
        ci95,
        n: values.len(),
    })
}

/// Evaluates predicted FGT masks against a cohort's ground truth.
///
/// `predictions` are matched to `cases` by case id; every case must have a
/// prediction and a ground-truth FGT mask.
pub fn evaluate_cohort(
    cases: &[Case],
    predictions: &[(String, BinaryMask)],
    seed: u64,
) -> Result<(Vec<EvalRecord>, StatSummary)> {
    let by_id: HashMap<&str, &BinaryMask> = predictions
        .iter()
        .map(|(id, m)| (id.as_str(), m))
        .collect();
    let mut records = Vec::with_capacity(cases.len());
    let mut warnings = Vec::new();
    for case in cases {
        let pred = by_id
            .get(case.case_id.as_str())
            .ok_or_else(|| CoreError::MissingCase(case.case_id.clone(), "predictions".into()))?;
        let truth = case
            .fgt_mask
            .as_ref()
            .ok_or_else(|| CoreError::MissingCase(case.case_id.clone(), "ground truth".into()))?;

        let dsc = dice(truth, pred)?;
        let assd_mm = match assd(truth, pred) {
            Ok(v) => Some(v),
            Err(CoreError::EmptyMask { .. }) => {
                warnings.push(format!(
                    "case '{}': ASSD undefined (empty surface), excluded from aggregates",
                    case.case_id
                ));
                None
            }
            Err(e) => return Err(e),
        };
        let dm = breast_density(truth, &case.breast_mask)?;
        let da = breast_density(pred, &case.breast_mask)?;
        if da.clipped_voxels > 0 {
            warnings.push(format!(
                "case '{}': {} predicted FGT voxels outside breast mask were clipped",
                case.case_id, da.clipped_voxels
            ));
        }
        let bpe_manual = bpe(&case.pre, &case.post, truth)?;
        let bpe_auto = match bpe(&case.pre, &case.post, pred) {
            Ok(v) => v,
            Err(CoreError::EmptyMask { .. }) => {
                warnings.push(format!(
                    "case '{}': empty predicted FGT, BPE reported as 0",
                    case.case_id
                ));
                0.0
            }
            Err(e) => return Err(e),
        };
        records.push(EvalRecord {
            case_id: case.case_id.clone(),
            dsc,
            assd_mm,
            density_manual: dm.value,
            density_auto: da.value,
            bpe_manual,
            bpe_auto,
        });
    }
    let summary = summarize(&records, warnings, seed)?;
    Ok((records, summary))
}

pub fn summarize(
    records: &[EvalRecord],
    mut warnings: Vec<String>,
    seed: u64,
) -> Result<StatSummary> {
    let dsc_values: Vec<f64> = records.iter().map(|r| r.dsc).collect();
    let assd_values: Vec<f64> = records.iter().filter_map(|r| r.assd_mm).collect();
    let n_assd_excluded = records.len() - assd_values.len();

    let density_pair: (Vec<f64>, Vec<f64>) = (
        records.iter().map(|r| r.density_manual).collect(),
        records.iter().map(|r| r.density_auto).collect(),
    );
    let bpe_pair: (Vec<f64>, Vec<f64>) = (
        records.iter().map(|r| r.bpe_manual).collect(),
        records.iter().map(|r| r.bpe_auto).collect(),
    );
    let pearson_or_flag = |x: &[f64], y: &[f64], name: &str, warnings: &mut Vec<String>| {
        match pearson(x, y) {
            Ok(v) => Some(v),
            Err(e) => {
                warnings.push(format!("{name} correlation unavailable: {e}"));
                None
            }
        }
    };
    let pearson_density = pearson_or_flag(&density_pair.0, &density_pair.1, "density", &mut warnings);
    let pearson_bpe = pearson_or_flag(&bpe_pair.0, &bpe_pair.1, "BPE", &mut warnings);

    let dsc = aggregate(&dsc_values, seed).ok_or_else(|| CoreError::TooFewValues {
        need: 1,
        got: 0,
    })?;
    let assd_mm = aggregate(&assd_values, seed.wrapping_add(1));

    Ok(StatSummary {
        dsc,
        assd_mm,
        n_assd_excluded,
        pearson_density,
        pearson_bpe,
        warnings,
    })
}

/// Paired permutation comparison of two models over the same cases.
pub fn compare_models(
    records_a: &[EvalRecord],
    records_b: &[EvalRecord],
    seed: u64,
) -> Result<ModelComparison> {
    let by_id: HashMap<&str, &EvalRecord> =
        records_b.iter().map(|r| (r.case_id.as_str(), r)).collect();
    let mut dsc_a = Vec::new();
    let mut dsc_b = Vec::new();
    let mut assd_a = Vec::new();
    let mut assd_b = Vec::new();
    for ra in records_a {
        let rb = by_id
            .get(ra.case_id.as_str())
            .ok_or_else(|| CoreError::MissingCase(ra.case_id.clone(), "second model".into()))?;
        dsc_a.push(ra.dsc);
        dsc_b.push(rb.dsc);
        if let (Some(x), Some(y)) = (ra.assd_mm, rb.assd_mm) {
            assd_a.push(x);
            assd_b.push(y);
        }
    }
    let p_dsc = permutation_test(&dsc_a, &dsc_b, PERMUTATIONS, seed)?;
    let p_assd = if assd_a.len() >= 2 {
        Some(permutation_test(&assd_a, &assd_b, PERMUTATIONS, seed.wrapping_add(1))?)
    } else {
        None
    };
    Ok(ModelComparison {
        p_dsc,
        p_assd,
        n_pairs: dsc_a.len(),
    })
}
