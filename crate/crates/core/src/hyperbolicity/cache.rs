use std::fs;
use std::path::{Path, PathBuf};

use super::{local_profile_with, HyperbolicityMode, HyperbolicityProfile, ProfileOptions};
use crate::error::Result;
use crate::graph::WeightedGraph;

/// On-disk store of local profiles keyed by (graph hash, k, mode).
#[derive(Debug, Clone)]
pub struct ProfileCache {
    dir: PathBuf,
}

impl ProfileCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, g: &WeightedGraph, k: usize, mode: HyperbolicityMode) -> PathBuf {
        self.dir
            .join(format!("{}-k{k}-{mode}.json", g.content_hash()))
    }

    /// Loads a cached profile or computes and stores it. A corrupt cache entry
    /// is recomputed and overwritten.
    pub fn get_or_compute(
        &self,
        g: &WeightedGraph,
        k: usize,
        mode: HyperbolicityMode,
        opts: &ProfileOptions,
    ) -> Result<HyperbolicityProfile> {
        let path = self.path_for(g, k, mode);
        if let Ok(p) = HyperbolicityProfile::load(&path) {
            if p.k == k && p.mode == mode && p.len() == g.num_nodes() {
                return Ok(p);
            }
        }
        let profile = local_profile_with(g, k, mode, opts)?;
        fs::create_dir_all(&self.dir)?;
        profile.save(&path)?;
        Ok(profile)
    }
}
