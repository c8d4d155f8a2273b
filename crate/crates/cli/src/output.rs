//! Output files: provenance header, CSV assembly and atomic writes.

use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Provenance recorded in every output file.
#[derive(Debug, Clone)]
pub struct Meta {
    pub config_sha256: String,
    pub seed: Option<u64>,
}

impl Meta {
    pub fn new(config_bytes: &[u8], seed: Option<u64>) -> Self {
        Self {
            config_sha256: format!("{:x}", Sha256::digest(config_bytes)),
            seed,
        }
    }

    fn header_line(&self) -> String {
        let mut s = format!(
            "# modecool {} config-sha256={}",
            env!("CARGO_PKG_VERSION"),
            self.config_sha256
        );
        if let Some(seed) = self.seed {
            s.push_str(&format!(" seed={seed}"));
        }
        s
    }

    pub fn json(&self) -> serde_json::Value {
        serde_json::json!({
            "tool": "modecool",
            "version": env!("CARGO_PKG_VERSION"),
            "config_sha256": self.config_sha256,
            "seed": self.seed,
        })
    }
}

/// CSV table with `#` comment lines above the header row.
pub struct Table {
    comments: Vec<String>,
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            comments: vec![],
            columns: columns.into_iter().map(Into::into).collect(),
            rows: vec![],
        }
    }

    pub fn comment(&mut self, line: impl Into<String>) -> &mut Self {
        self.comments.push(line.into());
        self
    }

    pub fn push(&mut self, values: &[f64]) {
        self.rows.push(values.iter().map(|v| v.to_string()).collect());
    }

    pub fn push_labeled(&mut self, labels: &[&str], values: &[f64]) {
        let mut row: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
        row.extend(values.iter().map(|v| v.to_string()));
        self.rows.push(row);
    }

    pub fn render(&self, meta: &Meta) -> Vec<u8> {
        let mut out = Vec::new();
        writeln!(out, "{}", meta.header_line()).unwrap();
        for c in &self.comments {
            writeln!(out, "# {c}").unwrap();
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns).unwrap();
        for r in &self.rows {
            w.write_record(r).unwrap();
        }
        w.into_inner().expect("in-memory writer")
    }
}

/// JSON document with a `_meta` block.
pub fn json_bytes(mut value: serde_json::Value, meta: &Meta) -> Vec<u8> {
    if let Some(obj) = value.as_object_mut() {
        obj.insert("_meta".into(), meta.json());
    }
    let mut s = serde_json::to_string_pretty(&value).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

/// Write via a temporary file in the destination directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// `<stem>.summary.json` next to `out`.
pub fn summary_path(out: &Path) -> PathBuf {
    out.with_extension("summary.json")
}
