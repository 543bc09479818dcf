//! Content-addressed artifacts.
//!
//! An artifact file is one line of JSON header followed by the payload. The
//! header carries the stage, the digest of (config slice, input digests) that
//! names the file, the input digests themselves and the full resolved config.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, Read};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;

pub const ARTIFACT_FORMAT: &str = "chromatic-artifact";
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Graph,
    Color,
    Fidelity,
    Encode,
    Train,
    Report,
}

impl Stage {
    /// Also the subcommand that produces the artifact.
    pub fn name(self) -> &'static str {
        match self {
            Self::Ingest => "ingest",
            Self::Graph => "graph",
            Self::Color => "color",
            Self::Fidelity => "fidelity",
            Self::Encode => "encode",
            Self::Train => "train",
            Self::Report => "report",
        }
    }
}

pub type Inputs = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub version: u32,
    pub stage: Stage,
    pub digest: String,
    pub inputs: Inputs,
    pub config: PipelineConfig,
    /// Stage-specific summary.
    pub info: serde_json::Value,
}

impl Header {
    pub fn new(stage: Stage, digest: &str, inputs: Inputs, config: &PipelineConfig, info: serde_json::Value) -> Self {
        Self {
            format: ARTIFACT_FORMAT.into(),
            version: ARTIFACT_VERSION,
            stage,
            digest: digest.into(),
            inputs,
            config: config.clone(),
            info,
        }
    }
}

/// Hex SHA-256 of the stage, the JSON of `slice` and the named input digests.
pub fn digest(stage: Stage, slice: &impl Serialize, inputs: &Inputs) -> String {
    let mut h = Sha256::new();
    h.update(format!("{}/v{}\n", stage.name(), ARTIFACT_VERSION));
    h.update(serde_json::to_vec(slice).expect("config slices serialize"));
    for (name, d) in inputs {
        h.update(format!("\n{name}={d}"));
    }
    hex::encode(h.finalize())
}

pub fn file_digest(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let read = file.read(&mut buf)?;
        if read == 0 {
            break;
        }
        h.update(&buf[..read]);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn short(digest: &str) -> &str {
    &digest[..16.min(digest.len())]
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, stage: Stage, digest: &str) -> PathBuf {
        self.root.join(stage.name()).join(format!("{}.art", short(digest)))
    }

    /// Sibling directory for outputs that are not a single payload.
    pub fn dir(&self, stage: Stage, digest: &str) -> PathBuf {
        self.root.join(stage.name()).join(short(digest))
    }

    pub fn exists(&self, stage: Stage, digest: &str) -> bool {
        self.read_header(stage, digest).is_ok()
    }

    pub fn write(&self, header: &Header, payload: &[u8]) -> Result<PathBuf> {
        let path = self.path(header.stage, &header.digest);
        let dir = path.parent().expect("artifact paths have a parent");
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut bytes = serde_json::to_vec(header)?;
        bytes.push(b'\n');
        bytes.extend_from_slice(payload);
        // write-then-rename so an interrupted command never leaves a partial artifact
        let tmp = path.with_extension("art.tmp");
        fs::write(&tmp, &bytes).with_context(|| format!("writing {}", tmp.display()))?;
        fs::rename(&tmp, &path)?;
        Ok(path)
    }

    fn missing(&self, stage: Stage, digest: &str) -> anyhow::Error {
        anyhow::anyhow!(
            "missing {} artifact {} for this configuration; run `chromatic {}` with the same config and flags first",
            stage.name(),
            self.path(stage, digest).display(),
            stage.name()
        )
    }

    fn check(&self, stage: Stage, digest: &str, header: &Header) -> Result<()> {
        if header.format != ARTIFACT_FORMAT || header.version != ARTIFACT_VERSION {
            bail!(
                "{} artifact {} has format {} v{}, expected {ARTIFACT_FORMAT} v{ARTIFACT_VERSION}; rerun `chromatic {}`",
                stage.name(),
                self.path(stage, digest).display(),
                header.format,
                header.version,
                stage.name()
            );
        }
        if header.stage != stage || header.digest != digest {
            bail!(
                "{} artifact {} was written for digest {}; rerun `chromatic {} --force`",
                stage.name(),
                self.path(stage, digest).display(),
                short(&header.digest),
                stage.name()
            );
        }
        Ok(())
    }

    pub fn read_header(&self, stage: Stage, digest: &str) -> Result<Header> {
        let path = self.path(stage, digest);
        let file = fs::File::open(&path).map_err(|_| self.missing(stage, digest))?;
        let mut line = String::new();
        std::io::BufReader::new(file).read_line(&mut line)?;
        let header: Header =
            serde_json::from_str(&line).with_context(|| format!("bad artifact header in {}", path.display()))?;
        self.check(stage, digest, &header)?;
        Ok(header)
    }

    pub fn read(&self, stage: Stage, digest: &str) -> Result<(Header, Vec<u8>)> {
        let path = self.path(stage, digest);
        let bytes = fs::read(&path).map_err(|_| self.missing(stage, digest))?;
        let split = bytes
            .iter()
            .position(|&b| b == b'\n')
            .with_context(|| format!("artifact {} has no header line", path.display()))?;
        let header: Header = serde_json::from_slice(&bytes[..split])
            .with_context(|| format!("bad artifact header in {}", path.display()))?;
        self.check(stage, digest, &header)?;
        Ok((header, bytes[split + 1..].to_vec()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_depends_on_slice_and_inputs() {
        let mut inputs = Inputs::new();
        let a = digest(Stage::Graph, &1u32, &inputs);
        assert_eq!(a, digest(Stage::Graph, &1u32, &inputs));
        assert_ne!(a, digest(Stage::Graph, &2u32, &inputs));
        assert_ne!(a, digest(Stage::Color, &1u32, &inputs));
        inputs.insert("ingest".into(), "abc".into());
        assert_ne!(a, digest(Stage::Graph, &1u32, &inputs));
    }

    #[test]
    fn write_read_and_missing() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::new(dir.path());
        let d = digest(Stage::Graph, &"slice", &Inputs::new());
        let err = store.read(Stage::Graph, &d).unwrap_err().to_string();
        assert!(err.contains("run `chromatic graph`"), "{err}");

        let header = Header::new(Stage::Graph, &d, Inputs::new(), &PipelineConfig::default(), serde_json::json!({}));
        store.write(&header, b"payload\nwith newline").unwrap();
        let (h, payload) = store.read(Stage::Graph, &d).unwrap();
        assert_eq!(h, header);
        assert_eq!(payload, b"payload\nwith newline");
        assert!(store.exists(Stage::Graph, &d));

        // a different digest with the same 16-character prefix is stale
        let mut other = d.clone();
        other.push('x');
        assert!(store.read(Stage::Graph, &other).unwrap_err().to_string().contains("--force"));
    }
}
