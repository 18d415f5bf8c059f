//! Self-describing checkpoint documents: format version, the full
//! parameter space, all engine options, and the optimizer state. A loaded
//! checkpoint resumes the identical trajectory. Writes are atomic (temp
//! file in the same directory, then rename).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::EngineOptions;
use crate::space::{ParameterSpace, SpaceError};
use crate::spsa::TunerState;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("checkpoint is corrupt or truncated: {0}")]
    Corrupt(serde_json::Error),
    #[error("checkpoint format version {found} is incompatible with this build (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint space failed validation: {0}")]
    InvalidSpace(#[from] SpaceError),
    #[error("checkpoint fingerprint {stored} does not match its own space ({computed}); file is damaged")]
    FingerprintMismatch { stored: String, computed: String },
    #[error("engine options in checkpoint are invalid: {0}")]
    InvalidOptions(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub space_fingerprint: String,
    pub space: ParameterSpace,
    pub options: EngineOptions,
    pub state: TunerState,
}

impl Checkpoint {
    pub fn new(space: ParameterSpace, options: EngineOptions, state: TunerState) -> Checkpoint {
        Checkpoint {
            format_version: FORMAT_VERSION,
            space_fingerprint: space.fingerprint(),
            space,
            options,
            state,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Write atomically: serialize to `<path>.tmp`, then rename over `path`.
pub fn save(path: &Path, checkpoint: &Checkpoint) -> Result<(), CheckpointError> {
    let tmp = path.with_extension("tmp");
    let body = serde_json::to_vec_pretty(checkpoint).map_err(CheckpointError::Corrupt)?;
    fs::write(&tmp, body).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))?;
    Ok(())
}

/// Load and fully validate a checkpoint. A corrupt or truncated file, a
/// version mismatch, or an internally inconsistent document all fail
/// without producing partial state.
pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let body = fs::read(path).map_err(io_err(path))?;
    let checkpoint: Checkpoint =
        serde_json::from_slice(&body).map_err(CheckpointError::Corrupt)?;
    if checkpoint.format_version != FORMAT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: checkpoint.format_version,
            expected: FORMAT_VERSION,
        });
    }
    checkpoint.space.validate()?;
    let computed = checkpoint.space.fingerprint();
    if computed != checkpoint.space_fingerprint {
        return Err(CheckpointError::FingerprintMismatch {
            stored: checkpoint.space_fingerprint,
            computed,
        });
    }
    checkpoint
        .options
        .validate()
        .map_err(CheckpointError::InvalidOptions)?;
    Ok(checkpoint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_for, RngState, PERTURBATION_STREAM};
    use crate::space::{AlgoPoint, ParameterSpec};

    fn sample_checkpoint() -> Checkpoint {
        let space = ParameterSpace::new(vec![
            ParameterSpec::integer("a", 0, 100, 10).unwrap(),
            ParameterSpec::real("b", 0.0, 1.0, 0.5).unwrap(),
        ])
        .unwrap();
        let options = EngineOptions::new(42, 50, space.dim());
        let mut state = TunerState::new(
            AlgoPoint::new(vec![0.25, 0.75]),
            RngState::capture(&rng_for(42, PERTURBATION_STREAM)),
        );
        state.iteration = 7;
        state.eval_count = 14;
        state.best_value = Some(1.25);
        state.grad_norm_history.push_back(0.4);
        Checkpoint::new(space, options, state)
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.ckpt");
        let checkpoint = sample_checkpoint();
        save(&path, &checkpoint).unwrap();
        let loaded = load(&path).unwrap();
        assert_eq!(loaded, checkpoint);
    }

    #[test]
    fn truncated_file_is_a_clean_load_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.ckpt");
        save(&path, &sample_checkpoint()).unwrap();
        let body = fs::read(&path).unwrap();
        fs::write(&path, &body[..body.len() / 2]).unwrap();
        assert!(matches!(load(&path), Err(CheckpointError::Corrupt(_))));
    }

    #[test]
    fn missing_file_is_an_io_error() {
        assert!(matches!(
            load(Path::new("/nonexistent/state.ckpt")),
            Err(CheckpointError::Io { .. })
        ));
    }

    #[test]
    fn version_mismatch_is_explicit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.ckpt");
        let mut checkpoint = sample_checkpoint();
        checkpoint.format_version = 99;
        save(&path, &checkpoint).unwrap();
        assert!(matches!(
            load(&path),
            Err(CheckpointError::VersionMismatch { found: 99, .. })
        ));
    }

    #[test]
    fn tampered_space_is_rejected_by_fingerprint() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.ckpt");
        let checkpoint = sample_checkpoint();
        save(&path, &checkpoint).unwrap();
        let mut doc: serde_json::Value =
            serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
        doc["space"]["specs"][0]["max"] = serde_json::json!(200.0);
        fs::write(&path, serde_json::to_vec(&doc).unwrap()).unwrap();
        assert!(matches!(
            load(&path),
            Err(CheckpointError::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn no_stale_temp_file_left_behind() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.ckpt");
        save(&path, &sample_checkpoint()).unwrap();
        assert!(!path.with_extension("tmp").exists());
    }
}
