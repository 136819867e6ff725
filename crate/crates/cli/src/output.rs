//! Per-run output directories and manifests.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use chrono::Utc;
use serde::Serialize;

use crate::config::RunConfig;

#[derive(Debug, Serialize)]
struct RunInfo {
    command: String,
    args: Vec<String>,
    version: String,
    created: String,
    config_hash: String,
    outputs: Vec<String>,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    run: RunInfo,
    config: &'a RunConfig,
}

/// A fresh directory `<root>/<timestamp>-<hash8>` holding one run.
pub struct RunDir {
    path: PathBuf,
    command: String,
    created: String,
    hash: String,
}

impl RunDir {
    /// Creates the directory and writes the resolved `config.toml`.
    pub fn create(root: &Path, command: &str, cfg: &RunConfig) -> anyhow::Result<Self> {
        let now = Utc::now();
        let hash = cfg.hash()?;
        let base = format!("{}-{}", now.format("%Y%m%dT%H%M%SZ"), &hash[..8]);
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        let path = (0..)
            .map(|k| if k == 0 { root.join(&base) } else { root.join(format!("{base}-{k}")) })
            .find(|p| !p.exists())
            .expect("unbounded suffix range");
        fs::create_dir(&path).with_context(|| format!("creating {}", path.display()))?;
        fs::write(path.join("config.toml"), cfg.to_toml()?).context("writing config.toml")?;
        Ok(Self { path, command: command.to_string(), created: now.to_rfc3339(), hash })
    }

    #[cfg(test)]
    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file(&self, rel: &str) -> PathBuf {
        self.path.join(rel)
    }

    pub fn subdir(&self, rel: &str) -> anyhow::Result<PathBuf> {
        let p = self.path.join(rel);
        fs::create_dir_all(&p).with_context(|| format!("creating {}", p.display()))?;
        Ok(p)
    }

    /// Writes `manifest.toml` listing every file under the run directory.
    pub fn finish(self, cfg: &RunConfig) -> anyhow::Result<PathBuf> {
        let mut outputs = Vec::new();
        collect(&self.path, &self.path, &mut outputs)?;
        outputs.sort();
        let manifest = Manifest {
            run: RunInfo {
                command: self.command,
                args: std::env::args().skip(1).collect(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                created: self.created,
                config_hash: self.hash,
                outputs,
            },
            config: cfg,
        };
        fs::write(self.path.join("manifest.toml"), toml::to_string(&manifest)?).context("writing manifest.toml")?;
        Ok(self.path)
    }
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<String>) -> anyhow::Result<()> {
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            collect(root, &p, out)?;
        } else {
            out.push(p.strip_prefix(root)?.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colliding_names_get_a_suffix_and_manifest_lists_files() {
        let root = tempfile::tempdir().unwrap();
        let cfg = RunConfig::load(None, None).unwrap();
        let a = RunDir::create(root.path(), "fields", &cfg).unwrap();
        let b = RunDir::create(root.path(), "fields", &cfg).unwrap();
        assert_ne!(a.path(), b.path());
        let name = a.path().file_name().unwrap().to_string_lossy().to_string();
        assert!(name.contains(&cfg.hash().unwrap()[..8]));
        fs::write(a.subdir("sub").unwrap().join("x.csv"), "a\n").unwrap();
        let dir = a.finish(&cfg).unwrap();
        let text = fs::read_to_string(dir.join("manifest.toml")).unwrap();
        let m: toml::Table = text.parse().unwrap();
        let outputs = m["run"]["outputs"].as_array().unwrap();
        let names: Vec<&str> = outputs.iter().map(|v| v.as_str().unwrap()).collect();
        assert_eq!(names, ["config.toml", "sub/x.csv"]);
        assert_eq!(m["run"]["config_hash"].as_str().unwrap(), cfg.hash().unwrap());
        assert_eq!(m["config"]["ep"]["dt_s"].as_float(), Some(0.1));
    }
}
