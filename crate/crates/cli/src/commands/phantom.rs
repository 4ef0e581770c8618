//! `trabs phantom`: writes a synthetic cohort as NIfTI volumes + manifest.

use std::path::PathBuf;

use trabs_core::io::manifest::{CaseEntry, Manifest};
use trabs_core::io::nifti_io::{write_mask, write_volume};
use trabs_core::phantom::{generate_cohort, CohortConfig};

use crate::config::{resolve_out_dir, write_run_info, RunInfo};
use crate::ExitKind;

#[derive(clap::Args, Debug)]
pub struct PhantomArgs {
    /// Output directory for volumes and manifest.toml
    #[arg(long)]
    pub out: PathBuf,
    /// Number of phantoms
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Target density range lower bound
    #[arg(long, default_value_t = 0.1)]
    pub density_lo: f64,
    /// Target density range upper bound
    #[arg(long, default_value_t = 0.5)]
    pub density_hi: f64,
    /// Volume shape as depth,height,width
    #[arg(long, value_delimiter = ',', default_values_t = [16usize, 64, 96])]
    pub shape: Vec<usize>,
    #[arg(long, default_value_t = 1.8)]
    pub enhancement: f64,
    #[arg(long, default_value_t = 4.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.15)]
    pub bias: f64,
}

pub fn run(args: &PhantomArgs) -> Result<(), ExitKind> {
    if args.n == 0 {
        return Err(ExitKind::usage("--n must be >= 1"));
    }
    if !(0.0 < args.density_lo && args.density_lo < args.density_hi && args.density_hi < 1.0) {
        return Err(ExitKind::usage("density range must satisfy 0 < lo < hi < 1"));
    }
    if args.shape.len() != 3 {
        return Err(ExitKind::usage("--shape needs exactly 3 values: depth,height,width"));
    }
    let out = resolve_out_dir(&args.out).map_err(ExitKind::data)?;
    let cfg = CohortConfig {
        shape: [args.shape[0], args.shape[1], args.shape[2]],
        enhancement_factor: args.enhancement,
        noise_sigma: args.noise,
        bias_field_strength: args.bias,
        ..CohortConfig::default()
    };
    let cases = generate_cohort(args.n, args.seed, (args.density_lo, args.density_hi), &cfg)
        .map_err(ExitKind::data)?;

    let mut entries = Vec::with_capacity(cases.len());
    for case in &cases {
        let base = case.case_id.clone();
        let paths = [
            format!("{base}_pre.nii.gz"),
            format!("{base}_post.nii.gz"),
            format!("{base}_breast.nii.gz"),
            format!("{base}_fgt.nii.gz"),
        ];
        write_volume(&out.join(&paths[0]), &case.pre).map_err(ExitKind::data)?;
        write_volume(&out.join(&paths[1]), &case.post).map_err(ExitKind::data)?;
        write_mask(&out.join(&paths[2]), &case.breast_mask).map_err(ExitKind::data)?;
        write_mask(&out.join(&paths[3]), case.fgt_mask.as_ref().unwrap())
            .map_err(ExitKind::data)?;
        entries.push(CaseEntry {
            case_id: base,
            pre: paths[0].clone().into(),
            post: paths[1].clone().into(),
            breast_mask: paths[2].clone().into(),
            fgt_mask: Some(paths[3].clone().into()),
        });
    }
    let manifest = Manifest { cases: entries };
    manifest.save(&out.join("manifest.toml")).map_err(ExitKind::data)?;
    write_run_info(
        &out,
        &RunInfo {
            command: "phantom".into(),
            seed: args.seed,
            config_hash: format!(
                "phantom-n{}-s{}-d{}..{}-sh{:?}-e{}-n{}-b{}",
                args.n,
                args.seed,
                args.density_lo,
                args.density_hi,
                args.shape,
                args.enhancement,
                args.noise,
                args.bias
            ),
        },
    )
    .map_err(ExitKind::data)?;
    println!(
        "wrote {} phantom cases and manifest.toml to {}",
        cases.len(),
        out.display()
    );
    Ok(())
}
