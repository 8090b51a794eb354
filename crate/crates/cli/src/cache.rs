//! On-disk spectrum cache keyed by domain, cell size, mode count, tolerance,
//! solver method and seed.

use anyhow::{Context, Result};
use neumann_core::eigen::{lowest_eigenpairs, SolverOptions, SpectrumResult};
use neumann_core::operator::DiscreteOperator;
use std::path::{Path, PathBuf};

pub const CACHE_ENV: &str = "NEUMANN_CACHE_DIR";

#[derive(Clone, Debug)]
pub struct SpectrumCache {
    dir: PathBuf,
}

impl SpectrumCache {
    pub fn new(dir: &Path) -> Result<SpectrumCache> {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create cache directory {}", dir.display()))?;
        Ok(SpectrumCache { dir: dir.to_path_buf() })
    }

    /// The cache named by the environment, if any.
    pub fn from_env() -> Result<Option<SpectrumCache>> {
        match std::env::var_os(CACHE_ENV) {
            Some(d) if !d.is_empty() => Ok(Some(SpectrumCache::new(Path::new(&d))?)),
            _ => Ok(None),
        }
    }

    pub fn key(domain_id: &str, h: f64, m: usize, opts: &SolverOptions) -> String {
        let raw = format!(
            "{domain_id}|{:016x}|{m}|{:016x}|{:?}|{}|{}",
            h.to_bits(),
            opts.tol.to_bits(),
            opts.method,
            opts.seed,
            opts.block
        );
        crate::output::sha256_hex(raw.as_bytes())
    }

    fn paths(&self, key: &str) -> (PathBuf, PathBuf) {
        (self.dir.join(format!("{key}.json")), self.dir.join(format!("{key}.f64")))
    }

    pub fn load(&self, key: &str) -> Option<SpectrumResult> {
        let (meta, vecs) = self.paths(key);
        let text = std::fs::read_to_string(meta).ok()?;
        let mut s: SpectrumResult = serde_json::from_str(&text).ok()?;
        let bytes = std::fs::read(vecs).ok()?;
        let n = s.n_cells;
        if bytes.len() != 8 * n * s.eigenvalues.len() {
            return None;
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        s.eigenvectors = values.chunks(n.max(1)).map(|c| c.to_vec()).collect();
        s.eigenvectors.truncate(s.eigenvalues.len());
        Some(s)
    }

    pub fn store(&self, key: &str, s: &SpectrumResult) -> Result<()> {
        let (meta, vecs) = self.paths(key);
        let mut bytes = Vec::with_capacity(8 * s.n_cells * s.len());
        for v in &s.eigenvectors {
            for x in v {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
        }
        // vectors first: a reader only trusts entries whose metadata exists
        write_atomic(&vecs, &bytes)?;
        write_atomic(&meta, serde_json::to_string(s)?.as_bytes())?;
        Ok(())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes).with_context(|| format!("cannot write {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

/// Lowest `m` eigenpairs of `op`, through the cache when one is given.
/// Returns the spectrum and whether it came from the cache.
pub fn spectrum(
    cache: Option<&SpectrumCache>,
    op: &DiscreteOperator,
    m: usize,
    opts: &SolverOptions,
) -> Result<(SpectrumResult, bool)> {
    let key = SpectrumCache::key(op.domain_id(), op.h(), m, opts);
    if let Some(c) = cache {
        if let Some(s) = c.load(&key) {
            if s.n_cells == op.n() && s.len() == m {
                log::info!("spectrum cache hit {key}");
                return Ok((s, true));
            }
        }
    }
    let s = lowest_eigenpairs(op, m, opts)?;
    if let Some(c) = cache {
        c.store(&key, &s)?;
    }
    Ok((s, false))
}
