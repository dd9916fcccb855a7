//! Per-request artifacts under `<runs_dir>/<id>/`.

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use facefuse::io::FlatArray;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::types::{decode_b64, SpatialPayload};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub request_id: String,
    pub kind: String,
    pub request: serde_json::Value,
    /// Base64 PNG.
    pub image: String,
    /// Base64 `FFAR` latent.
    pub latent: String,
    /// Spatial input in effect, reused by chained text edits.
    pub spatial: Option<SpatialPayload>,
    pub model_digest: String,
}

const RECORD: &str = "run.json";

#[derive(Debug)]
pub struct RunStore {
    root: PathBuf,
    write: Mutex<()>,
}

/// Run ids are lowercase hex; anything else cannot name a run.
fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
}

impl RunStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            write: Mutex::new(()),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes the record plus `image.png` and `latent.ffar`. Ids are content
    /// hashes, so an existing run is left untouched.
    pub fn put(&self, rec: &RunRecord) -> Result<(), ApiError> {
        if !valid_id(&rec.request_id) {
            return Err(ApiError::internal("malformed run id"));
        }
        let _guard = self
            .write
            .lock()
            .map_err(|_| ApiError::internal("run store lock poisoned"))?;
        let dir = self.root.join(&rec.request_id);
        if dir.join(RECORD).exists() {
            return Ok(());
        }
        let io = |e: std::io::Error| ApiError::internal(format!("persisting run: {e}"));
        std::fs::create_dir_all(&dir).map_err(io)?;
        std::fs::write(dir.join("image.png"), decode_b64(&rec.image)?).map_err(io)?;
        std::fs::write(dir.join("latent.ffar"), decode_b64(&rec.latent)?).map_err(io)?;
        let tmp = dir.join("run.json.tmp");
        std::fs::write(
            &tmp,
            serde_json::to_vec_pretty(rec).map_err(|e| ApiError::internal(e.to_string()))?,
        )
        .map_err(io)?;
        std::fs::rename(tmp, dir.join(RECORD)).map_err(io)?;
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<RunRecord, ApiError> {
        let missing = || ApiError::not_found(format!("unknown run `{id}`"));
        if !valid_id(id) {
            return Err(missing());
        }
        let bytes = std::fs::read(self.root.join(id).join(RECORD)).map_err(|_| missing())?;
        serde_json::from_slice(&bytes).map_err(|e| ApiError::internal(format!("corrupt run record: {e}")))
    }

    pub fn latent(&self, id: &str) -> Result<FlatArray, ApiError> {
        let rec = self.get(id)?;
        Ok(FlatArray::from_bytes(&decode_b64(&rec.latent)?)?)
    }
}
