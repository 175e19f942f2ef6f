use serde::{Deserialize, Serialize};

use super::{Adam, Network};
use crate::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Versioned JSON container for a network and its optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub network: Network,
    pub optimizer: Option<Adam>,
}

#[derive(Deserialize)]
struct Header {
    version: u32,
}

pub fn save_params(network: &Network, optimizer: Option<&Adam>) -> Result<Vec<u8>> {
    let ckpt = Checkpoint {
        version: CHECKPOINT_VERSION,
        network: network.clone(),
        optimizer: optimizer.cloned(),
    };
    Ok(serde_json::to_vec(&ckpt)?)
}

pub fn load_params(bytes: &[u8]) -> Result<(Network, Option<Adam>)> {
    let header: Header =
        serde_json::from_slice(bytes).map_err(|e| Error::CorruptPayload(e.to_string()))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch { found: header.version, expected: CHECKPOINT_VERSION });
    }
    let ckpt: Checkpoint =
        serde_json::from_slice(bytes).map_err(|e| Error::CorruptPayload(e.to_string()))?;
    Ok((ckpt.network, ckpt.optimizer))
}
