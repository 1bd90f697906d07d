use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<FileDigest> {
        Ok(FileDigest { path: path.to_path_buf(), sha256: sha256_file(path)? })
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Everything needed to re-run a command and check its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name, as given.
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub wall_clock_seconds: f64,
    pub threads: usize,
    pub versions: BTreeMap<String, String>,
    #[serde(skip)]
    started: Option<Instant>,
}

impl RunManifest {
    pub fn new(command: &str, args: &[String]) -> RunManifest {
        let versions = BTreeMap::from([
            ("ubsb".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("generator".to_string(), ubsb_core::synthgen::GENERATOR_VERSION.to_string()),
        ]);
        RunManifest {
            command: command.to_string(),
            args: args.to_vec(),
            config: serde_json::Value::Null,
            seeds: BTreeMap::new(),
            inputs: vec![],
            outputs: vec![],
            wall_clock_seconds: 0.0,
            threads: rayon::current_num_threads(),
            versions,
            started: Some(Instant::now()),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileDigest::of(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(FileDigest::of(path)?);
        Ok(())
    }

    /// Writes the manifest, stamping the time elapsed since `new`.
    pub fn write(&mut self, path: &Path) -> Result<()> {
        if let Some(t) = self.started {
            self.wall_clock_seconds = t.elapsed().as_secs_f64();
        }
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing manifest {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<RunManifest> {
        let text = fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}

/// `out.csv` -> `out.csv.manifest.json`.
pub fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".manifest.json");
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_matches_known_value() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc.txt");
        fs::write(&p, "abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        let mut m = RunManifest::new("generate", &["generate".into(), "--n".into(), "5".into()]);
        m.seeds.insert("seed".into(), 7);
        m.write(&p).unwrap();
        let back = RunManifest::load(&p).unwrap();
        assert_eq!(back.seeds, m.seeds);
        assert_eq!(back.args, m.args);
        assert_eq!(back.wall_clock_seconds, m.wall_clock_seconds);
        assert_eq!(sidecar(Path::new("a/b.csv")), PathBuf::from("a/b.csv.manifest.json"));
    }
}
