//! `trabs evaluate` and `trabs report`: per-case metrics, aggregate
//! statistics, optional paired model comparison, and the report figures.

use std::path::{Path, PathBuf};

use trabs_core::evaluate::{compare_models, evaluate_cohort, EvalRecord};
use trabs_core::io::nifti_io::read_mask;
use trabs_core::report::{density_dsc_scatter, overlay_png, write_json, write_records_csv};
use trabs_core::{BinaryMask, Case};

use crate::config::{resolve_out_dir, write_run_info, RunInfo};
use crate::ExitKind;

#[derive(clap::Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory of predicted masks ({case_id}.nii.gz)
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Second predictions directory: adds a paired permutation comparison
    #[arg(long)]
    pub compare: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also render the density-DSC scatter figure and per-case overlays
    #[arg(long)]
    pub figures: bool,
}

fn load_predictions(dir: &Path, cases: &[Case]) -> Result<Vec<(String, BinaryMask)>, ExitKind> {
    let mut out = Vec::with_capacity(cases.len());
    let mut missing = Vec::new();
    for case in cases {
        let path = dir.join(format!("{}.nii.gz", case.case_id));
        if !path.exists() {
            missing.push(case.case_id.clone());
            continue;
        }
        let mask = read_mask(&path, format!("{}_pred", case.case_id)).map_err(ExitKind::data)?;
        out.push((case.case_id.clone(), mask));
    }
    if !missing.is_empty() {
        return Err(ExitKind::Data(format!(
            "missing predictions for {} case(s): {missing:?}",
            missing.len()
        )));
    }
    Ok(out)
}

fn evaluate_dir(
    cases: &[Case],
    dir: &Path,
    seed: u64,
) -> Result<(Vec<EvalRecord>, trabs_core::evaluate::StatSummary), ExitKind> {
    let preds = load_predictions(dir, cases)?;
    evaluate_cohort(cases, &preds, seed).map_err(ExitKind::data)
}

pub fn run(args: &EvaluateArgs) -> Result<(), ExitKind> {
    let manifest =
        trabs_core::io::manifest::Manifest::load(&args.manifest).map_err(ExitKind::data)?;
    let manifest_dir = args
        .manifest
        .parent()
        .unwrap_or(Path::new("."))
        .to_path_buf();
    let cases = manifest.load_all_cases(&manifest_dir).map_err(ExitKind::data)?;
    let out = resolve_out_dir(&args.out).map_err(ExitKind::data)?;

    let (records, summary) = evaluate_dir(&cases, &args.predictions, args.seed)?;
    for w in &summary.warnings {
        eprintln!("warning: {w}");
    }
    write_records_csv(&records, &out.join("records.csv")).map_err(ExitKind::data)?;
    write_json(&summary, &out.join("summary.json")).map_err(ExitKind::data)?;
    println!(
        "DSC {:.3}±{:.3}  ASSD {}  rho_density {}  rho_bpe {}  (n = {})",
        summary.dsc.mean,
        summary.dsc.std,
        summary
            .assd_mm
            .as_ref()
            .map(|a| format!("{:.3}±{:.3} mm", a.mean, a.std))
            .unwrap_or_else(|| "n/a".into()),
        summary
            .pearson_density
            .map(|v| format!("{v:.3}"))
            .unwrap_or_else(|| "n/a".into()),
        summary
            .pearson_bpe
            .map(|v| format!("{v:.3}"))
            .unwrap_or_else(|| "n/a".into()),
        summary.dsc.n,
    );

    if let Some(compare_dir) = &args.compare {
        let (records_b, summary_b) = evaluate_dir(&cases, compare_dir, args.seed)?;
        let comparison =
            compare_models(&records, &records_b, args.seed).map_err(ExitKind::data)?;
        write_records_csv(&records_b, &out.join("records_compare.csv")).map_err(ExitKind::data)?;
        write_json(&summary_b, &out.join("summary_compare.json")).map_err(ExitKind::data)?;
        write_json(&comparison, &out.join("comparison.json")).map_err(ExitKind::data)?;
        println!(
            "paired permutation: p_dsc = {:.4}, p_assd = {}",
            comparison.p_dsc,
            comparison
                .p_assd
                .map(|v| format!("{v:.4}"))
                .unwrap_or_else(|| "n/a".into())
        );
    }

    if args.figures {
        density_dsc_scatter(&records, &out.join("density_dsc.png")).map_err(ExitKind::data)?;
        let overlays = out.join("overlays");
        std::fs::create_dir_all(&overlays)
            .map_err(|e| ExitKind::Runtime(format!("cannot create overlays dir: {e}")))?;
        let preds = load_predictions(&args.predictions, &cases)?;
        for (case, (_, pred)) in cases.iter().zip(&preds) {
            overlay_png(case, pred, &overlays.join(format!("{}.png", case.case_id)))
                .map_err(ExitKind::data)?;
        }
    }

    write_run_info(
        &out,
        &RunInfo {
            command: "evaluate".into(),
            seed: args.seed,
            config_hash: String::new(),
        },
    )
    .map_err(|e| ExitKind::Runtime(e.to_string()))?;
    Ok(())
}
