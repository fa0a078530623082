//! Run manifest: key-value text written after every other output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use dtem::config::KeyValues;

use crate::CliError;

pub const FILE_NAME: &str = "manifest.txt";

#[derive(Debug, Clone, Default)]
pub struct Manifest {
    pub command: String,
    pub args: Vec<String>,
    pub seed: u64,
    pub threads: usize,
    /// extra `key = value` lines describing the resolved inputs
    pub settings: Vec<(String, String)>,
    pub outputs: Vec<PathBuf>,
    pub wall_time: f64,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "command = {}", self.command);
        for (i, a) in self.args.iter().enumerate() {
            let _ = writeln!(out, "arg_{i} = {a}");
        }
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "threads = {}", self.threads);
        for (k, v) in &self.settings {
            let _ = writeln!(out, "{k} = {v}");
        }
        let outputs: Vec<String> = self
            .outputs
            .iter()
            .map(|p| p.display().to_string())
            .collect();
        let _ = writeln!(out, "outputs = {}", outputs.join(","));
        let _ = writeln!(out, "wall_time = {:.3}", self.wall_time);
        out
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(FILE_NAME);
        fs::write(&path, self.to_text()).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

/// Recorded arguments and seed of a manifest.
pub fn read_invocation(path: &Path) -> Result<(Vec<String>, u64), CliError> {
    let kv = KeyValues::load(path).map_err(CliError::Usage)?;
    let seed = kv
        .parse_value::<u64>("seed")
        .map_err(CliError::Usage)?
        .ok_or_else(|| CliError::Message(format!("{}: manifest has no seed", path.display())))?;
    let mut args = Vec::new();
    while let Some(a) = kv.get(&format!("arg_{}", args.len())) {
        args.push(a.to_string());
    }
    if args.is_empty() {
        return Err(CliError::Message(format!(
            "{}: manifest records no arguments",
            path.display()
        )));
    }
    Ok((args, seed))
}
