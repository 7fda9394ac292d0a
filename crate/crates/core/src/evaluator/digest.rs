use std::fmt;
use std::str::FromStr;

use md5::Md5;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::error::Error;

/// Content digest algorithm for compiled binaries.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DigestAlgo {
    #[default]
    Md5,
    Sha256,
}

impl DigestAlgo {
    pub fn as_str(self) -> &'static str {
        match self {
            DigestAlgo::Md5 => "md5",
            DigestAlgo::Sha256 => "sha256",
        }
    }

    pub fn digest(self, bytes: &[u8]) -> Digest {
        let hex = match self {
            DigestAlgo::Md5 => to_hex(&Md5::digest(bytes)),
            DigestAlgo::Sha256 => to_hex(&Sha256::digest(bytes)),
        };
        Digest { algo: self, hex }
    }
}

impl FromStr for DigestAlgo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "md5" => Ok(DigestAlgo::Md5),
            "sha256" => Ok(DigestAlgo::Sha256),
            other => Err(Error::Structural(format!("unknown digest algorithm {other:?}"))),
        }
    }
}

fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Digest of a compiled binary, tagged with the algorithm that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Digest {
    pub algo: DigestAlgo,
    pub hex: String,
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.algo.as_str(), self.hex)
    }
}

impl FromStr for Digest {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let (algo, hex) = s
            .split_once(':')
            .ok_or_else(|| Error::Structural(format!("expected <algo>:<hex>, got {s:?}")))?;
        Ok(Digest {
            algo: algo.parse()?,
            hex: hex.to_string(),
        })
    }
}

impl PartialOrd for DigestAlgo {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for DigestAlgo {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.as_str().cmp(other.as_str())
    }
}
