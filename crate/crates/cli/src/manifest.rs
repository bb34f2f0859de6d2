use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

/// Run record written next to the outputs.
pub struct Manifest {
    command: &'static str,
    started: Instant,
    files: Vec<PathBuf>,
}

impl Manifest {
    pub fn start(command: &'static str) -> Self {
        Manifest { command, started: Instant::now(), files: Vec::new() }
    }

    pub fn add(&mut self, path: &Path) {
        self.files.push(path.to_path_buf());
    }

    /// Writes `<out>/<command>_manifest.json`.
    pub fn finish(self, out: &Path, config: Value, seed: Option<u64>) -> anyhow::Result<PathBuf> {
        let path = out.join(format!("{}_manifest.json", self.command.replace('-', "_")));
        let body = json!({
            "command": self.command,
            "argv": std::env::args().collect::<Vec<_>>(),
            "version": env!("CARGO_PKG_VERSION"),
            "seed": seed,
            "threads": rayon::current_num_threads(),
            "config": config,
            "files": self.files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "wall_time_secs": self.started.elapsed().as_secs_f64(),
        });
        std::fs::write(&path, serde_json::to_string_pretty(&body)? + "\n")?;
        Ok(path)
    }
}
