//! On-disk cache of binned impulse responses.
//!
//! Entries are keyed by a hash of everything that shapes the channel (room,
//! LEDs, receiver optics), the LED id, the receiver position quantized to
//! 1 mm, the bounce count and the bin width. The file is JSON with a format
//! tag and version.

use std::collections::BTreeMap;
use std::path::Path;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::ImpulseResponse;
use crate::error::{Error, Result};
use crate::scene::{ReceiverSpec, SceneConfig, TransmitterSpec};

pub const CACHE_FORMAT: &str = "vlcpos-ir-cache";
pub const CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub tx_id: u8,
    /// receiver position in millimetres
    pub rx_mm: (i64, i64, i64),
    pub max_bounces: usize,
    /// bin width in femtoseconds
    pub bin_fs: u64,
}

impl CacheKey {
    pub fn new(tx_id: u8, rx: &ReceiverSpec, max_bounces: usize, bin_width: f64) -> Self {
        let mm = |v: f64| (v * 1000.0).round() as i64;
        Self {
            tx_id,
            rx_mm: (mm(rx.position.x), mm(rx.position.y), mm(rx.position.z)),
            max_bounces,
            bin_fs: (bin_width * 1e15).round() as u64,
        }
    }
}

/// Hex SHA-256 of the channel-relevant configuration. The receiver position
/// is excluded; it is part of each entry's key.
pub fn scene_hash(scene: &SceneConfig, transmitters: &[TransmitterSpec], receiver: &ReceiverSpec) -> String {
    let optics = ReceiverSpec {
        position: crate::scene::Point3::new(0.0, 0.0, 0.0),
        ..receiver.clone()
    };
    let canonical = serde_json::to_string(&(scene, transmitters, optics)).expect("config serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CacheFile {
    format: String,
    version: u32,
    scene_hash: String,
    entries: Vec<(CacheKey, ImpulseResponse)>,
}

/// Thread-safe impulse-response cache for one scene.
#[derive(Debug)]
pub struct IrCache {
    scene_hash: String,
    entries: RwLock<BTreeMap<CacheKey, ImpulseResponse>>,
}

impl IrCache {
    pub fn new(scene_hash: String) -> Self {
        Self {
            scene_hash,
            entries: RwLock::new(BTreeMap::new()),
        }
    }

    /// Loads `path` if it exists and belongs to the same scene; otherwise
    /// starts empty.
    pub fn open(path: &Path, scene_hash: String) -> Result<Self> {
        if !path.exists() {
            return Ok(Self::new(scene_hash));
        }
        let text = std::fs::read_to_string(path)?;
        let file: CacheFile = serde_json::from_str(&text).map_err(|e| Error::Cache(e.to_string()))?;
        if file.format != CACHE_FORMAT || file.version != CACHE_VERSION {
            return Err(Error::Cache(format!(
                "unsupported cache {} v{}",
                file.format, file.version
            )));
        }
        if file.scene_hash != scene_hash {
            return Ok(Self::new(scene_hash));
        }
        Ok(Self {
            scene_hash,
            entries: RwLock::new(file.entries.into_iter().collect()),
        })
    }

    pub fn get(&self, key: &CacheKey) -> Option<ImpulseResponse> {
        self.entries.read().get(key).cloned()
    }

    pub fn insert(&self, key: CacheKey, ir: ImpulseResponse) {
        self.entries.write().insert(key, ir);
    }

    pub fn len(&self) -> usize {
        self.entries.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = CacheFile {
            format: CACHE_FORMAT.into(),
            version: CACHE_VERSION,
            scene_hash: self.scene_hash.clone(),
            entries: self.entries.read().iter().map(|(k, v)| (*k, v.clone())).collect(),
        };
        let text = serde_json::to_string(&file).map_err(|e| Error::Cache(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}
