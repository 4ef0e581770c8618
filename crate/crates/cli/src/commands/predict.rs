//! `trabs predict`: ensemble prediction over a manifest, one FGT mask per
//! case, with a per-case timing log. Per-case failures are logged and the
//! run continues; any failure yields a nonzero exit.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use trabs_core::io::nifti_io::write_mask;
use trabs_model::infer::predict_case;
use trabs_model::net::load_checkpoint;
use trabs_model::Network;

use crate::config::{resolve_out_dir, write_run_info, RunInfo};
use crate::ExitKind;

#[derive(clap::Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory containing fold_* checkpoint subdirectories
    #[arg(long)]
    pub checkpoints: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Use the toy inference window
    #[arg(long)]
    pub toy: bool,
    /// Disable flip test-time augmentation
    #[arg(long)]
    pub no_tta: bool,
    #[arg(long, default_value_t = 2)]
    pub crop_margin: usize,
}

#[derive(Serialize)]
struct CaseTiming {
    case_id: String,
    seconds: f64,
    ok: bool,
}

pub fn load_ensemble(dir: &Path) -> Result<Vec<Network>, ExitKind> {
    let mut fold_dirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| ExitKind::Data(format!("cannot read checkpoints dir {}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .map(|n| n.starts_with("fold_"))
                    .unwrap_or(false)
        })
        .collect();
    fold_dirs.sort();
    if fold_dirs.is_empty() {
        return Err(ExitKind::Data(format!(
            "no fold_* checkpoints under {}",
            dir.display()
        )));
    }
    let mut networks = Vec::with_capacity(fold_dirs.len());
    for fd in &fold_dirs {
        let (net, _) = load_checkpoint(fd).map_err(ExitKind::data)?;
        networks.push(net);
    }
    Ok(networks)
}

pub fn run(args: &PredictArgs) -> Result<(), ExitKind> {
    let mut exp = crate::commands::train::load_experiment(&args.config)?;
    if args.toy {
        exp.preset = "toy".into();
    }
    let mut infer_cfg = exp
        .inference_config()
        .map_err(|e| ExitKind::Usage(e.to_string()))?;
    if args.no_tta {
        infer_cfg.tta_flips = false;
    }

    let manifest =
        trabs_core::io::manifest::Manifest::load(&args.manifest).map_err(ExitKind::data)?;
    let manifest_dir = args
        .manifest
        .parent()
        .unwrap_or(Path::new("."))
        .to_path_buf();
    let out = resolve_out_dir(&args.out).map_err(ExitKind::data)?;
    let networks = load_ensemble(&args.checkpoints)?;
    let refs: Vec<&Network> = networks.iter().collect();

    write_run_info(
        &out,
        &RunInfo {
            command: "predict".into(),
            seed: exp.seed,
            config_hash: exp.config_hash(),
        },
    )
    .map_err(|e| ExitKind::Runtime(e.to_string()))?;

    let mut timings = Vec::new();
    let mut failures = 0usize;
    for index in 0..manifest.cases.len() {
        let case_id = manifest.cases[index].case_id.clone();
        let started = Instant::now();
        let result = manifest
            .load_case(&manifest_dir, index)
            .map_err(anyhow::Error::from)
            .and_then(|case| {
                let mask = predict_case(&refs, &case, &infer_cfg, args.crop_margin)?;
                write_mask(&out.join(format!("{case_id}.nii.gz")), &mask)?;
                Ok(())
            });
        let seconds = started.elapsed().as_secs_f64();
        let ok = result.is_ok();
        if let Err(e) = result {
            eprintln!("case '{case_id}' failed: {e}");
            failures += 1;
        } else {
            println!("case '{case_id}' predicted in {seconds:.2}s");
        }
        timings.push(CaseTiming {
            case_id,
            seconds,
            ok,
        });
    }
    let timing_json =
        serde_json::to_string_pretty(&timings).map_err(|e| ExitKind::Runtime(e.to_string()))?;
    std::fs::write(out.join("timings.json"), timing_json)
        .map_err(|e| ExitKind::Runtime(e.to_string()))?;

    if failures > 0 {
        return Err(ExitKind::Runtime(format!("{failures} case(s) failed")));
    }
    Ok(())
}
