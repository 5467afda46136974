//! Run directories: a lock for the process lifetime, verified artifact
//! writes and a per-verb manifest.

use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};

use crate::config::Config;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub digest: String,
    pub bytes: usize,
}

pub struct RunDir {
    root: PathBuf,
    lock: PathBuf,
    verb: String,
    config: Config,
    artifacts: Vec<Artifact>,
    timings: Vec<(String, f64)>,
}

impl RunDir {
    /// Creates `root` if needed and takes its lock.
    pub fn open(root: &Path, verb: &str, config: &Config) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        let lock = root.join(".lock");
        OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&lock)
            .with_context(|| format!("run directory {} is locked ({})", root.display(), lock.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            lock,
            verb: verb.to_string(),
            config: config.clone(),
            artifacts: Vec::new(),
            timings: Vec::new(),
        })
    }

    pub fn config_hash(&self) -> String {
        self.config.hash()
    }

    /// Writes through a temporary file, renames it into place and checks
    /// the digest of what landed on disk.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(name);
        let tmp = self.root.join(format!(".{name}.tmp"));
        fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
        fs::rename(&tmp, &path).with_context(|| format!("renaming to {}", path.display()))?;
        let digest = sha256_hex(bytes);
        let back = fs::read(&path).with_context(|| format!("re-reading {}", path.display()))?;
        if sha256_hex(&back) != digest {
            bail!("{} did not verify after writing", path.display());
        }
        self.artifacts.retain(|a| a.name != name);
        self.artifacts.push(Artifact {
            name: name.to_string(),
            digest,
            bytes: bytes.len(),
        });
        Ok(())
    }

    /// Text artifact with a leading `# config_hash = …` line.
    pub fn write_text(&mut self, name: &str, body: &str) -> Result<()> {
        let text = format!("# config_hash = {}\n{body}", self.config_hash());
        self.write(name, text.as_bytes())
    }

    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        self.timings.push((stage.to_string(), t0.elapsed().as_secs_f64()));
        out
    }

    /// Hash over the verb, config hash, seed and artifact digests. Timings
    /// are excluded so identical runs agree.
    pub fn manifest_hash(&self) -> String {
        let mut arts = self.artifacts.clone();
        arts.sort_by(|a, b| a.name.cmp(&b.name));
        let mut s = format!("{}\n{}\n{}\n", self.verb, self.config_hash(), self.config.seed);
        for a in &arts {
            s.push_str(&format!("{} {}\n", a.name, a.digest));
        }
        sha256_hex(s.as_bytes())
    }

    /// Writes `config-<verb>.txt` and `manifest-<verb>.txt`; returns the manifest hash.
    pub fn finish(mut self) -> Result<String> {
        let config_name = format!("config-{}.txt", self.verb);
        let canonical = self.config.canonical();
        self.write(&config_name, canonical.as_bytes())?;
        let hash = self.manifest_hash();
        let mut m = format!(
            "verb = {}\nconfig_hash = {}\nseed = {}\nmanifest_hash = {hash}\n",
            self.verb,
            self.config_hash(),
            self.config.seed
        );
        let mut arts = self.artifacts.clone();
        arts.sort_by(|a, b| a.name.cmp(&b.name));
        for a in &arts {
            m.push_str(&format!("artifact = {} {} {}\n", a.name, a.digest, a.bytes));
        }
        for (stage, secs) in &self.timings {
            m.push_str(&format!("timing = {stage} {secs:.3}\n"));
        }
        let name = format!("manifest-{}.txt", self.verb);
        let path = self.root.join(&name);
        fs::write(&path, &m).with_context(|| format!("writing {}", path.display()))?;
        verify_manifest(&self.root, &name)?;
        Ok(hash)
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

/// Checks that every listed artifact exists with its recorded digest.
pub fn verify_manifest(root: &Path, name: &str) -> Result<Vec<Artifact>> {
    let text = fs::read_to_string(root.join(name)).with_context(|| format!("reading {name}"))?;
    let mut out = Vec::new();
    for line in text.lines() {
        let Some(rest) = line.strip_prefix("artifact = ") else {
            continue;
        };
        let parts: Vec<&str> = rest.split_whitespace().collect();
        let [file, digest, bytes] = parts[..] else {
            bail!("{name}: malformed artifact line {line:?}");
        };
        let data = fs::read(root.join(file)).with_context(|| format!("{name}: missing artifact {file}"))?;
        if sha256_hex(&data) != digest {
            bail!("{name}: artifact {file} does not match its digest");
        }
        out.push(Artifact {
            name: file.to_string(),
            digest: digest.to_string(),
            bytes: bytes.parse()?,
        });
    }
    Ok(out)
}

/// Value of `key = …` in a flat text block, ignoring `#` lines.
pub fn field<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .filter_map(|l| l.split_once('='))
        .find(|(k, _)| k.trim() == key)
        .map(|(_, v)| v.trim())
}
