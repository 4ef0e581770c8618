//! Case manifest: one TOML file listing the volumes of each case.
//!
//! Paths are relative to the manifest's directory. `fgt_mask` is optional
//! (inference-only cases).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::io::nifti_io;
use crate::volume::Case;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CaseEntry {
    pub case_id: String,
    pub pre: PathBuf,
    pub post: PathBuf,
    pub breast_mask: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fgt_mask: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub cases: Vec<CaseEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        let manifest: Manifest =
            toml::from_str(&text).map_err(|e| CoreError::Manifest(e.to_string()))?;
        if manifest.cases.is_empty() {
            return Err(CoreError::Manifest(format!(
                "manifest {} lists no cases",
                path.display()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &manifest.cases {
            if !seen.insert(c.case_id.clone()) {
                return Err(CoreError::Manifest(format!(
                    "duplicate case_id '{}'",
                    c.case_id
                )));
            }
        }
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).map_err(|e| CoreError::Manifest(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| CoreError::io(path, e))
    }

    /// Loads one case's volumes, validating all Case invariants.
    pub fn load_case(&self, manifest_dir: &Path, index: usize) -> Result<Case> {
        let entry = &self.cases[index];
        let resolve = |p: &PathBuf| -> PathBuf {
            if p.is_absolute() {
                p.clone()
            } else {
                manifest_dir.join(p)
            }
        };
        let pre = nifti_io::read_volume(&resolve(&entry.pre), format!("{}_pre", entry.case_id))?;
        let post =
            nifti_io::read_volume(&resolve(&entry.post), format!("{}_post", entry.case_id))?;
        let breast_mask = nifti_io::read_mask(
            &resolve(&entry.breast_mask),
            format!("{}_breast", entry.case_id),
        )?;
        let fgt_mask = entry
            .fgt_mask
            .as_ref()
            .map(|p| nifti_io::read_mask(&resolve(p), format!("{}_fgt", entry.case_id)))
            .transpose()?;
        let case = Case {
            case_id: entry.case_id.clone(),
            pre,
            post,
            breast_mask,
            fgt_mask,
        };
        case.validate()?;
        Ok(case)
    }

    pub fn load_all_cases(&self, manifest_dir: &Path) -> Result<Vec<Case>> {
        (0..self.cases.len())
            .map(|i| self.load_case(manifest_dir, i))
            .collect()
    }
}
