//! Resolved run configuration and output helpers. Every file a command
//! writes starts with a `# config {json}` line holding the [`RunConfig`].

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

#[derive(Clone, Debug, Default, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub inputs: BTreeMap<String, PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub taxonomy: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub out: PathBuf,
    /// Command-specific settings.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, serde_json::Value>,
}

impl RunConfig {
    pub fn new(command: &str, out: &Path) -> Self {
        RunConfig {
            command: command.into(),
            out: out.to_path_buf(),
            ..Default::default()
        }
    }

    pub fn input(&mut self, name: &str, path: &Path) {
        self.inputs.insert(name.into(), path.to_path_buf());
    }

    pub fn param(&mut self, name: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("parameters serialize");
        self.params.insert(name.into(), v);
    }

    pub fn json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Header body without the leading `# `.
    pub fn header(&self) -> String {
        format!("config {}", self.json())
    }
}

/// Creates `cfg.out` and returns a buffered writer for `name` inside it,
/// with the config header already written.
pub struct Output<'a> {
    cfg: &'a RunConfig,
}

impl<'a> Output<'a> {
    pub fn new(cfg: &'a RunConfig) -> Result<Self, CliError> {
        fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
        Ok(Output { cfg })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.cfg.out.join(name)
    }

    /// Writes `body` after the header line, replacing the file atomically.
    pub fn text(&self, name: &str, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<PathBuf, CliError> {
        self.raw(name, |w| {
            writeln!(w, "# {}", self.cfg.header())?;
            body(w)
        })
    }

    /// Writes a file whose format carries its own header.
    pub fn raw(&self, name: &str, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let tmp = self.path(&format!(".{name}.tmp"));
        let write = || -> std::io::Result<()> {
            let mut w = BufWriter::new(fs::File::create(&tmp)?);
            body(&mut w)?;
            w.flush()?;
            drop(w);
            fs::rename(&tmp, &path)
        };
        write().map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

/// One JSON object per line.
pub fn json_lines<T: Serialize>(w: &mut dyn Write, rows: &[T]) -> std::io::Result<()> {
    for row in rows {
        writeln!(w, "{}", serde_json::to_string(row).expect("record serializes"))?;
    }
    Ok(())
}
