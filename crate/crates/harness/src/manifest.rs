//! Run manifests: written once before training, never rewritten.
//!
//! The file is `key=value` lines:
//!
//! ```text
//! manifest=1
//! csv_schema=1
//! created_unix=1760000000
//! input_hash=<sha256 hex>
//! input.<name>=<sha256 hex of one input>
//! seed.<s>.t_opti=<steps or none>
//! seed.<s>.<artifact>=<path relative to the run directory>
//! config.<key>=<value>
//! ```
//!
//! Every input is hashed git-style as `blob <len>\0<bytes>`; `input_hash`
//! covers the sorted `name hash` listing. The `config.*` lines hold the full
//! effective configuration, so stripping the prefix yields a config file
//! that relaunches the run.

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.txt";

/// Version of the CSV and dump layouts written next to the manifest.
pub const CSV_SCHEMA: u32 = 1;

pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SeedEntry {
    pub seed: u64,
    pub t_opti: Option<usize>,
    /// (artifact name, relative path)
    pub files: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub created_unix: u64,
    /// (input name, blob hash), sorted by name.
    pub inputs: Vec<(String, String)>,
    pub seeds: Vec<SeedEntry>,
    pub config_text: String,
}

impl RunManifest {
    /// `inputs` are (name, contents) pairs; the config echo is always one.
    pub fn new(config_text: &str, extra_inputs: &[(&str, &[u8])], seeds: Vec<SeedEntry>) -> Self {
        let mut inputs: Vec<(String, String)> = extra_inputs
            .iter()
            .map(|(n, b)| (n.to_string(), blob_hash(b)))
            .collect();
        inputs.push(("config".into(), blob_hash(config_text.as_bytes())));
        inputs.sort();
        let created_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            created_unix,
            inputs,
            seeds,
            config_text: config_text.to_string(),
        }
    }

    pub fn input_hash(&self) -> String {
        let listing: String = self.inputs.iter().map(|(n, h)| format!("{n} {h}\n")).collect();
        blob_hash(listing.as_bytes())
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "manifest=1\ncsv_schema={CSV_SCHEMA}\ncreated_unix={}\ninput_hash={}\n",
            self.created_unix,
            self.input_hash()
        );
        for (n, h) in &self.inputs {
            out.push_str(&format!("input.{n}={h}\n"));
        }
        for s in &self.seeds {
            let t = s.t_opti.map_or_else(|| "none".to_string(), |t| t.to_string());
            out.push_str(&format!("seed.{}.t_opti={t}\n", s.seed));
            for (name, path) in &s.files {
                out.push_str(&format!("seed.{}.{name}={path}\n", s.seed));
            }
        }
        for line in self.config_text.lines() {
            if let Some((k, v)) = line.split_once('=') {
                out.push_str(&format!("config.{}={}\n", k.trim(), v.trim()));
            }
        }
        out
    }

    /// Creates `dir/manifest.txt`; fails if a manifest is already there.
    pub fn write_new(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        let mut f = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(dir.join(MANIFEST_FILE))?;
        f.write_all(self.render().as_bytes())?;
        f.sync_all()
    }
}

/// `key=value` pairs of a rendered manifest.
pub fn read_manifest(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// Config text recovered from a manifest's `config.*` lines.
pub fn relaunch_config(text: &str) -> String {
    read_manifest(text)
        .into_iter()
        .filter_map(|(k, v)| k.strip_prefix("config.").map(|k| format!("{k} = {v}\n")))
        .collect()
}
