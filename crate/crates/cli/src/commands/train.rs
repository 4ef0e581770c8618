//! `trabs train`: k-fold cross-validation training with per-fold
//! checkpoints. Folds already trained in the output directory are skipped,
//! so interrupted runs resume per fold.

use std::path::{Path, PathBuf};

use trabs_model::net::{save_checkpoint, CheckpointManifest};
use trabs_model::splits::{make_cv_splits, FoldSplit};
use trabs_model::train::{train_fold, write_history_csv};
use trabs_model::Network;

use crate::config::{resolve_out_dir, write_run_info, ExperimentConfig, RunInfo};
use crate::ExitKind;

#[derive(clap::Args, Debug)]
pub struct TrainArgs {
    /// Case manifest (TOML)
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for checkpoints and the split record
    #[arg(long)]
    pub out: PathBuf,
    /// Experiment config file (TOML); flags below override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model kind: trabs | baseline
    #[arg(long)]
    pub model: Option<String>,
    /// Use the CPU-scale toy preset
    #[arg(long)]
    pub toy: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of folds to actually train (1 = smoke mode); splits are
    /// always computed as 5-fold
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
}

pub fn load_experiment(args_config: &Option<PathBuf>) -> Result<ExperimentConfig, ExitKind> {
    match args_config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| ExitKind::Usage(e.to_string())),
        None => Ok(ExperimentConfig::default()),
    }
}

pub const SPLITS_FILE: &str = "splits.json";

pub fn fold_dir(out: &Path, fold: usize) -> PathBuf {
    out.join(format!("fold_{fold}"))
}

pub fn run(args: &TrainArgs) -> Result<(), ExitKind> {
    let mut exp = load_experiment(&args.config)?;
    if let Some(kind) = &args.model {
        exp.model_kind = kind.parse().map_err(|e| ExitKind::Usage(format!("{e}")))?;
    }
    if args.toy {
        exp.preset = "toy".into();
    }
    if let Some(seed) = args.seed {
        exp.seed = seed;
    }
    if let Some(folds) = args.folds {
        if folds == 0 {
            return Err(ExitKind::usage("--folds must be >= 1"));
        }
        exp.folds = folds;
    }
    exp.validate_preset()
        .map_err(|e| ExitKind::Usage(e.to_string()))?;

    let manifest = trabs_core::io::manifest::Manifest::load(&args.manifest).map_err(ExitKind::data)?;
    let manifest_dir = args
        .manifest
        .parent()
        .unwrap_or(Path::new("."))
        .to_path_buf();
    let cases = manifest.load_all_cases(&manifest_dir).map_err(ExitKind::data)?;
    let ids: Vec<String> = cases.iter().map(|c| c.case_id.clone()).collect();

    let out = resolve_out_dir(&args.out).map_err(ExitKind::data)?;
    let net_config = exp.net_config().map_err(|e| ExitKind::Usage(e.to_string()))?;
    let mut train_cfg = exp.train_config().map_err(|e| ExitKind::Usage(e.to_string()))?;
    if let Some(me) = args.max_epochs {
        train_cfg.max_epochs = me;
    }

    let k = 5usize;
    let splits = make_cv_splits(&ids, k, exp.seed).map_err(ExitKind::data)?;
    let splits_json =
        serde_json::to_string_pretty(&splits).map_err(|e| ExitKind::Runtime(e.to_string()))?;
    std::fs::write(out.join(SPLITS_FILE), splits_json)
        .map_err(|e| ExitKind::Runtime(format!("cannot write split record: {e}")))?;
    write_run_info(
        &out,
        &RunInfo {
            command: "train".into(),
            seed: exp.seed,
            config_hash: exp.config_hash(),
        },
    )
    .map_err(|e| ExitKind::Runtime(e.to_string()))?;

    let n_train = exp.folds.min(k);
    let mut failures = Vec::new();
    for split in splits.iter().take(n_train) {
        let dir = fold_dir(&out, split.fold_index);
        if dir.join(trabs_model::net::MANIFEST_FILE).exists()
            && dir.join(trabs_model::net::WEIGHTS_FILE).exists()
        {
            println!("fold {}: checkpoint exists, skipping", split.fold_index);
            continue;
        }
        println!(
            "fold {}: training on {} cases, validating on {}",
            split.fold_index,
            split.train_ids.len(),
            split.val_ids.len()
        );
        match run_fold(&net_config, split, &cases, &train_cfg, &dir, exp.seed) {
            Ok(record) => println!(
                "fold {}: stopped after {} epochs, best epoch {} (val loss {:.4})",
                split.fold_index, record.0, record.1, record.2
            ),
            Err(e) => {
                eprintln!("fold {} failed: {e}", split.fold_index);
                failures.push(split.fold_index);
            }
        }
    }
    if !failures.is_empty() {
        return Err(ExitKind::Runtime(format!(
            "{} fold(s) failed: {failures:?}",
            failures.len()
        )));
    }
    Ok(())
}

fn run_fold(
    net_config: &trabs_model::NetConfig,
    split: &FoldSplit,
    cases: &[trabs_core::Case],
    train_cfg: &trabs_model::train::TrainConfig,
    dir: &Path,
    seed: u64,
) -> anyhow::Result<(usize, usize, f64)> {
    let fold_seed = seed.wrapping_add(split.fold_index as u64 * 1000);
    let mut network = Network::build(net_config, fold_seed)?;
    let mut cfg = train_cfg.clone();
    cfg.seed = fold_seed;
    let record = train_fold(&mut network, split, cases, &cfg)?;
    std::fs::create_dir_all(dir)?;
    save_checkpoint(
        dir,
        &network,
        &CheckpointManifest {
            config: network.config().clone(),
            config_hash: network.config().config_hash(),
            seed: fold_seed,
            epochs_run: record.epochs_run,
            best_epoch: record.best_epoch,
            best_val_loss: record.best_val_loss,
        },
    )?;
    write_history_csv(&dir.join("history.csv"), &record.history)?;
    Ok((record.epochs_run, record.best_epoch, record.best_val_loss))
}
