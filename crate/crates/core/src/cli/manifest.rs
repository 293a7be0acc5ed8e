use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DESCRIPTORS_FILE: &str = "descriptors.mrds";
pub const GRAPH_FILE: &str = "graph.mrgr";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BuilderInfo {
    Exact,
    NnDescent {
        rho: f64,
        delta: f64,
        max_iters: usize,
        seed: u64,
        iterations: usize,
        /// Recall against exact lists on a node sample.
        sampled_recall: f64,
        sample_size: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmpInfo {
    pub lambda: f64,
    /// One weight per descriptor row.
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub alpha: f64,
    pub k: usize,
    pub exponent: u32,
    pub points: usize,
    pub items: usize,
    pub edges: usize,
    pub builder: BuilderInfo,
    pub gmp: GmpInfo,
    pub created_unix: u64,
    pub descriptors: FileDigest,
    pub graph: FileDigest,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// An index directory with its manifest.
#[derive(Debug, Clone)]
pub struct IndexBundle {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl IndexBundle {
    pub fn descriptors_path(&self) -> PathBuf {
        self.dir.join(&self.manifest.descriptors.name)
    }

    pub fn graph_path(&self) -> PathBuf {
        self.dir.join(&self.manifest.graph.name)
    }

    pub fn write(dir: &Path, manifest: Manifest) -> Result<Self> {
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(dir.join(MANIFEST_FILE), text)?;
        Ok(Self { dir: dir.to_path_buf(), manifest })
    }

    /// Reads the manifest and checks both content hashes.
    pub fn open(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))
            .map_err(|e| Error::format(format!("cannot read manifest in {}: {e}", dir.display())))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::format(format!("manifest: {e}")))?;
        let bundle = Self { dir: dir.to_path_buf(), manifest };
        for (digest, path) in [
            (&bundle.manifest.descriptors, bundle.descriptors_path()),
            (&bundle.manifest.graph, bundle.graph_path()),
        ] {
            let actual = sha256_file(&path)?;
            if actual != digest.sha256 {
                return Err(Error::format(format!(
                    "{} does not match the manifest hash; rebuild the index",
                    path.display()
                )));
            }
        }
        Ok(bundle)
    }
}
