//! Off-line counting numbers, cached on disk by class-structure hash.

use std::path::{Path, PathBuf};

use log::info;
use scma_core::counting::{solve_counting_numbers, ClassStructure, CountingError, CountingNumbers, GraphShape};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error(transparent)]
    Solve(#[from] CountingError),
    #[error("cache file {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("solved counting numbers fail the convexity check")]
    Invalid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheOutcome {
    Hit,
    Solved,
}

/// Cache file name for a graph template.
pub fn cache_key(shape: &GraphShape) -> String {
    let classes = serde_json::to_string(&ClassStructure::of(shape)).expect("class structure serialises");
    let digest = Sha256::digest(classes.as_bytes());
    let hex: String = digest.iter().take(12).map(|b| format!("{b:02x}")).collect();
    format!("counting-{hex}.json")
}

/// Loads cached counting numbers for the template, solving and storing them
/// on a miss. Cached values that no longer pass the convexity check are
/// solved again.
pub fn load_or_solve(shape: &GraphShape, dir: &Path) -> Result<(CountingNumbers, CacheOutcome), CacheError> {
    let path = dir.join(cache_key(shape));
    if let Ok(text) = std::fs::read_to_string(&path) {
        match CountingNumbers::from_json(&text) {
            Ok(cn) if cn.validate().valid && cn.classes == ClassStructure::of(shape) => {
                info!("counting numbers: cache hit {}", path.display());
                return Ok((cn, CacheOutcome::Hit));
            }
            _ => info!("counting numbers: stale cache {}", path.display()),
        }
    }
    info!("counting numbers: solving for {}", path.display());
    let cn = solve_counting_numbers(shape)?;
    if !cn.validate().valid {
        return Err(CacheError::Invalid);
    }
    let io = |source| CacheError::Io {
        path: path.clone(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    std::fs::write(&path, cn.to_json()).map_err(io)?;
    Ok((cn, CacheOutcome::Solved))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_load_hits_cache() {
        let dir = tempfile::tempdir().unwrap();
        let shape = GraphShape::chain(5);
        let (a, first) = load_or_solve(&shape, dir.path()).unwrap();
        let (b, second) = load_or_solve(&shape, dir.path()).unwrap();
        assert_eq!(first, CacheOutcome::Solved);
        assert_eq!(second, CacheOutcome::Hit);
        assert_eq!(a, b);
    }

    #[test]
    fn template_change_changes_key() {
        assert_ne!(cache_key(&GraphShape::chain(5)), cache_key(&GraphShape::cycle(5)));
        assert_eq!(cache_key(&GraphShape::chain(5)), cache_key(&GraphShape::chain(5)));
    }

    #[test]
    fn corrupt_cache_is_resolved() {
        let dir = tempfile::tempdir().unwrap();
        let shape = GraphShape::chain(4);
        std::fs::write(dir.path().join(cache_key(&shape)), "{not json").unwrap();
        let (_, outcome) = load_or_solve(&shape, dir.path()).unwrap();
        assert_eq!(outcome, CacheOutcome::Solved);
    }
}
