//! Run manifests: config snapshot, code version, wall clock, and a
//! checksum per emitted file. Report directories are never mutated;
//! reruns write versioned siblings.

use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct RunManifest {
    pub code_version: String,
    pub wall_clock_secs: f64,
    pub config_text: String,
    /// Free-form stage notes, in order (training phases, decode modes).
    pub notes: Vec<String>,
    /// (path relative to the run dir, crc32 of the bytes).
    pub files: Vec<(String, u32)>,
}

impl RunManifest {
    pub fn new(config_text: String) -> Self {
        Self {
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_clock_secs: 0.0,
            config_text,
            notes: Vec::new(),
            files: Vec::new(),
        }
    }

    /// Checksums `path` and records it under its name relative to `root`.
    pub fn record_file(&mut self, root: &Path, path: &Path) -> std::io::Result<()> {
        let bytes = std::fs::read(path)?;
        let crc = crc32fast::hash(&bytes);
        let rel = path
            .strip_prefix(root)
            .unwrap_or(path)
            .to_string_lossy()
            .into_owned();
        self.files.push((rel, crc));
        Ok(())
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "code_version={}", self.code_version)?;
        writeln!(out, "wall_clock_secs={:.3}", self.wall_clock_secs)?;
        writeln!(out, "[config]")?;
        for line in self.config_text.lines() {
            writeln!(out, "{line}")?;
        }
        writeln!(out, "[notes]")?;
        for note in &self.notes {
            writeln!(out, "{note}")?;
        }
        writeln!(out, "[files]")?;
        for (rel, crc) in &self.files {
            writeln!(out, "{rel}\t{crc:08x}")?;
        }
        out.flush()
    }

    pub fn read(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut manifest = RunManifest::new(String::new());
        let mut section = "";
        for line in text.lines() {
            match line {
                "[config]" => section = "config",
                "[notes]" => section = "notes",
                "[files]" => section = "files",
                _ => match section {
                    "config" => {
                        manifest.config_text.push_str(line);
                        manifest.config_text.push('\n');
                    }
                    "notes" => manifest.notes.push(line.to_string()),
                    "files" => {
                        if let Some((rel, crc)) = line.split_once('\t') {
                            if let Ok(crc) = u32::from_str_radix(crc, 16) {
                                manifest.files.push((rel.to_string(), crc));
                            }
                        }
                    }
                    _ => {
                        if let Some(v) = line.strip_prefix("code_version=") {
                            manifest.code_version = v.to_string();
                        } else if let Some(v) = line.strip_prefix("wall_clock_secs=") {
                            manifest.wall_clock_secs = v.parse().unwrap_or(0.0);
                        }
                    }
                },
            }
        }
        Ok(manifest)
    }
}

/// First unused sibling of `base`: `base` itself when absent or empty,
/// otherwise `base-v2`, `base-v3`, ...
pub fn versioned_output_dir(base: &Path) -> PathBuf {
    let empty = match std::fs::read_dir(base) {
        Ok(mut entries) => entries.next().is_none(),
        Err(_) => true,
    };
    if empty {
        return base.to_path_buf();
    }
    for v in 2.. {
        let candidate = base.with_file_name(format!(
            "{}-v{v}",
            base.file_name()
                .map(|s| s.to_string_lossy())
                .unwrap_or_default()
        ));
        let empty = match std::fs::read_dir(&candidate) {
            Ok(mut entries) => entries.next().is_none(),
            Err(_) => true,
        };
        if empty {
            return candidate;
        }
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips() {
        let dir = std::env::temp_dir().join("latentlab_manifest_test");
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        let file = dir.join("results.csv");
        std::fs::write(&file, "a,b\n1,2\n").unwrap();

        let mut m = RunManifest::new("seed=7\n".into());
        m.wall_clock_secs = 1.25;
        m.record_file(&dir, &file).unwrap();
        let mpath = dir.join("manifest.txt");
        m.write(&mpath).unwrap();

        let back = RunManifest::read(&mpath).unwrap();
        assert_eq!(back.config_text, "seed=7\n");
        assert_eq!(back.files.len(), 1);
        assert_eq!(back.files[0].0, "results.csv");
        assert_eq!(back.files[0].1, crc32fast::hash(b"a,b\n1,2\n"));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn rerun_gets_a_versioned_sibling() {
        let base = std::env::temp_dir().join("latentlab_versioned_test");
        let _ = std::fs::remove_dir_all(&base);
        let _ = std::fs::remove_dir_all(base.with_file_name("latentlab_versioned_test-v2"));
        assert_eq!(versioned_output_dir(&base), base);
        std::fs::create_dir_all(&base).unwrap();
        std::fs::write(base.join("x"), "y").unwrap();
        let next = versioned_output_dir(&base);
        assert!(next.to_string_lossy().ends_with("-v2"));
        std::fs::remove_dir_all(&base).unwrap();
    }
}
