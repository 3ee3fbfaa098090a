//! Output directory bookkeeping: atomic writes and the manifest.

use nce_core::io::write_atomic;
use std::path::{Path, PathBuf};

use crate::CliError;

pub const MANIFEST: &str = "manifest.csv";
const MANIFEST_HEADER: &str = "setting,seed,phi,file,kind,source";

/// One manifest row. `file` is relative to the output directory; optional
/// columns are left empty.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ManifestRow {
    pub setting: Option<usize>,
    pub seed: Option<u64>,
    pub phi: Option<f64>,
    pub file: String,
    pub kind: String,
    pub source: String,
}

impl ManifestRow {
    pub fn new(file: impl Into<String>, kind: &str) -> Self {
        ManifestRow { file: file.into(), kind: kind.into(), ..Default::default() }
    }

    fn to_line(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_default();
        format!(
            "{},{},{},{},{},{}",
            opt(self.setting.map(|v| v.to_string())),
            opt(self.seed.map(|v| v.to_string())),
            opt(self.phi.map(|v| v.to_string())),
            self.file,
            self.kind,
            self.source
        )
    }

    fn parse(line: &str) -> Result<Self, CliError> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(CliError::Param(format!("manifest row {line:?} needs 6 columns")));
        }
        let bad = |what: &str| CliError::Param(format!("manifest row {line:?}: bad {what}"));
        Ok(ManifestRow {
            setting: if f[0].is_empty() { None } else { Some(f[0].parse().map_err(|_| bad("setting"))?) },
            seed: if f[1].is_empty() { None } else { Some(f[1].parse().map_err(|_| bad("seed"))?) },
            phi: if f[2].is_empty() { None } else { Some(f[2].parse().map_err(|_| bad("phi"))?) },
            file: f[3].to_string(),
            kind: f[4].to_string(),
            source: f[5].to_string(),
        })
    }
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestRow>, CliError> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Param(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    if lines.next() != Some(MANIFEST_HEADER) {
        return Err(CliError::Param(format!("{} has an unexpected header", path.display())));
    }
    lines.filter(|l| !l.is_empty()).map(ManifestRow::parse).collect()
}

/// Rows of `kind` from the manifest in `dir`, with `file` resolved to a path.
pub fn manifest_entries(dir: &Path, kind: &str) -> Result<Vec<(ManifestRow, PathBuf)>, CliError> {
    let rows: Vec<_> = read_manifest(dir)?
        .into_iter()
        .filter(|r| r.kind == kind)
        .map(|r| {
            let p = dir.join(&r.file);
            (r, p)
        })
        .collect();
    if rows.is_empty() {
        return Err(CliError::Param(format!("no {kind} entries in {}", dir.join(MANIFEST).display())));
    }
    Ok(rows)
}

pub struct OutDir {
    root: PathBuf,
    rows: Vec<ManifestRow>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root)
            .map_err(|e| CliError::Param(format!("cannot create output directory {}: {e}", root.display())))?;
        Ok(OutDir { root: root.to_path_buf(), rows: Vec::new() })
    }

    /// Write `bytes` atomically to `rel` (creating parent directories) and
    /// record the manifest row.
    pub fn write(&mut self, row: ManifestRow, bytes: &[u8]) -> Result<(), CliError> {
        write_rel(&self.root, &row.file, bytes)?;
        self.record(row);
        Ok(())
    }

    /// Record a file that was already written with [`write_rel`].
    pub fn record(&mut self, row: ManifestRow) {
        self.rows.push(row);
    }

    /// Merge this run's rows into manifest.csv: rows for re-emitted files are
    /// replaced, others kept in place, new files appended in emission order.
    pub fn finish(self) -> Result<(), CliError> {
        let path = self.root.join(MANIFEST);
        let mut rows = if path.exists() { read_manifest(&self.root)? } else { Vec::new() };
        rows.retain(|r| !self.rows.iter().any(|n| n.file == r.file));
        rows.extend(self.rows);
        let mut text = String::from(MANIFEST_HEADER);
        text.push('\n');
        for r in &rows {
            text.push_str(&r.to_line());
            text.push('\n');
        }
        write_atomic(&path, text.as_bytes()).map_err(CliError::from)
    }
}

/// Atomic write to `root/rel`; safe to call from worker threads.
pub fn write_rel(root: &Path, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
    if rel.contains(',') {
        return Err(CliError::Param(format!("output name {rel:?} may not contain a comma")));
    }
    let path = root.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::Param(format!("cannot create {}: {e}", parent.display())))?;
    }
    write_atomic(&path, bytes).map_err(CliError::from)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_merges_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutDir::create(dir.path()).unwrap();
        let row = ManifestRow { setting: Some(3), seed: Some(42), phi: Some(0.5), ..ManifestRow::new("fields/a.fld", "field") };
        out.write(row.clone(), b"x").unwrap();
        out.write(ManifestRow::new("b.csv", "targets"), b"y").unwrap();
        out.finish().unwrap();
        let mut again = OutDir::create(dir.path()).unwrap();
        again.write(ManifestRow::new("b.csv", "targets"), b"z").unwrap();
        again.write(ManifestRow::new("c.csv", "predictions"), b"w").unwrap();
        again.finish().unwrap();
        let rows = read_manifest(dir.path()).unwrap();
        let files: Vec<&str> = rows.iter().map(|r| r.file.as_str()).collect();
        assert_eq!(files, ["fields/a.fld", "b.csv", "c.csv"]);
        assert_eq!(rows[0], row);
        assert_eq!(std::fs::read(dir.path().join("b.csv")).unwrap(), b"z");
        assert_eq!(manifest_entries(dir.path(), "field").unwrap().len(), 1);
        assert!(manifest_entries(dir.path(), "corr").is_err());
    }
}
