//! Per-run provenance written as `key = value` text next to the primary output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::time::Duration;

use sha2::{Digest, Sha256};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunManifest {
    pub subcommand: String,
    pub params: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    /// Input path → hex SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub duration: Duration,
}

impl RunManifest {
    pub fn new(subcommand: impl Into<String>) -> Self {
        RunManifest {
            subcommand: subcommand.into(),
            ..Default::default()
        }
    }

    pub fn param(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.params.insert(key.into(), value.to_string());
        self
    }

    pub fn seed(&mut self, key: impl Into<String>, value: u64) -> &mut Self {
        self.seeds.insert(key.into(), value);
        self
    }

    pub fn input(&mut self, path: &Path) -> io::Result<&mut Self> {
        let digest = digest_file(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(self)
    }

    /// Everything except the duration line; identical runs render identically.
    pub fn render_stable(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "subcommand = {}", self.subcommand);
        let _ = writeln!(out, "version = {TOOLKIT_VERSION}");
        for (k, v) in &self.params {
            let _ = writeln!(out, "param.{k} = {v}");
        }
        for (k, v) in &self.seeds {
            let _ = writeln!(out, "seed.{k} = {v}");
        }
        for (k, v) in &self.inputs {
            let _ = writeln!(out, "input.{k} = sha256:{v}");
        }
        out
    }

    pub fn render(&self) -> String {
        let mut out = self.render_stable();
        let _ = writeln!(out, "duration_secs = {:.3}", self.duration.as_secs_f64());
        out
    }

    pub fn path_for(output: &Path) -> PathBuf {
        let mut name = output.as_os_str().to_owned();
        name.push(".manifest");
        PathBuf::from(name)
    }

    pub fn write_next_to(&self, output: &Path) -> io::Result<PathBuf> {
        let path = Self::path_for(output);
        std::fs::write(&path, self.render())?;
        Ok(path)
    }
}

pub fn digest_file(path: &Path) -> io::Result<String> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let read = file.read(&mut buf)?;
        if read == 0 {
            break;
        }
        hasher.update(&buf[..read]);
    }
    Ok(hex::encode(hasher.finalize().as_slice()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_rendering_ignores_duration() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.bin");
        std::fs::write(&input, b"abc").unwrap();
        let mut a = RunManifest::new("train");
        a.param("lr", 0.001).seed("fcnn", 7).input(&input).unwrap();
        let mut b = a.clone();
        b.duration = Duration::from_secs(5);
        assert_eq!(a.render_stable(), b.render_stable());
        assert_ne!(a.render(), b.render());
        assert!(a
            .render()
            .contains("sha256:ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"));
        let out = dir.path().join("model.bin");
        let written = a.write_next_to(&out).unwrap();
        assert_eq!(written, dir.path().join("model.bin.manifest"));
    }
}
