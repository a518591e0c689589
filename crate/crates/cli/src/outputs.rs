//! Per-stage output manifests: a versioned header line, then one
//! `<sha256>  <relative path>` line per file, sorted by path.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use crate::error::{CliError, CliResult};

pub const MANIFEST_NAME: &str = "outputs.manifest";
pub const STAGE_FORMAT_VERSION: u32 = 1;

fn header(stage: &str) -> String {
    format!("# har-stage {stage} v{STAGE_FORMAT_VERSION}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        write!(s, "{b:02x}").unwrap();
        s
    })
}

/// First 8 bytes of sha256(seed as little-endian ‖ stage name), read as a
/// little-endian integer.
pub fn derive_seed(seed: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stage.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

fn relative_files(dir: &Path) -> CliResult<Vec<(String, PathBuf)>> {
    let mut files = Vec::new();
    for entry in WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(CliError::runtime)?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(dir).map_err(CliError::runtime)?;
        let rel = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        if rel != MANIFEST_NAME {
            files.push((rel, entry.path().to_path_buf()));
        }
    }
    files.sort();
    Ok(files)
}

/// Hashes every file under `dir` into `dir/outputs.manifest`.
pub fn write_stage_manifest(dir: &Path, stage: &str) -> CliResult<()> {
    let mut text = header(stage);
    text.push('\n');
    for (rel, path) in relative_files(dir)? {
        writeln!(text, "{}  {rel}", sha256_hex(&std::fs::read(path)?)).unwrap();
    }
    std::fs::write(dir.join(MANIFEST_NAME), text)?;
    Ok(())
}

/// Confirms that `dir` holds complete output of `stage` in the current format.
pub fn require_stage(dir: &Path, stage: &str) -> CliResult<()> {
    let path = dir.join(MANIFEST_NAME);
    let text = std::fs::read_to_string(&path).map_err(|_| CliError::MissingInput(path.clone()))?;
    let first = text.lines().next().unwrap_or_default();
    if first != header(stage) {
        return Err(CliError::Runtime(format!(
            "{} was written by an incompatible version (expected '{}', found '{first}')",
            path.display(),
            header(stage)
        )));
    }
    Ok(())
}

/// Recomputes the hashes listed in `dir/outputs.manifest`. Returns one line
/// per problem; empty when everything matches.
pub fn verify_stage(dir: &Path) -> CliResult<Vec<String>> {
    let path = dir.join(MANIFEST_NAME);
    let text = std::fs::read_to_string(&path).map_err(|_| CliError::MissingInput(path.clone()))?;
    let mut problems = Vec::new();
    let mut listed = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.is_empty()) {
        let Some((hash, rel)) = line.split_once("  ") else {
            problems.push(format!("{}: malformed line '{line}'", path.display()));
            continue;
        };
        listed.push(rel.to_string());
        match std::fs::read(dir.join(rel)) {
            Ok(bytes) if sha256_hex(&bytes) == hash => {}
            Ok(_) => problems.push(format!("{}: hash mismatch", dir.join(rel).display())),
            Err(_) => problems.push(format!("{}: missing", dir.join(rel).display())),
        }
    }
    for (rel, p) in relative_files(dir)? {
        if !listed.contains(&rel) {
            problems.push(format!("{}: not listed in manifest", p.display()));
        }
    }
    Ok(problems)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn seeds_differ_by_stage() {
        assert_ne!(derive_seed(1, "split"), derive_seed(1, "cv"));
        assert_eq!(derive_seed(1, "split"), derive_seed(1, "split"));
        assert_ne!(derive_seed(1, "split"), derive_seed(2, "split"));
    }

    #[test]
    fn manifest_detects_changes() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("a")).unwrap();
        std::fs::write(dir.path().join("a/x.txt"), "1").unwrap();
        std::fs::write(dir.path().join("y.txt"), "2").unwrap();
        write_stage_manifest(dir.path(), "demo").unwrap();
        require_stage(dir.path(), "demo").unwrap();
        assert!(require_stage(dir.path(), "other").is_err());
        assert!(verify_stage(dir.path()).unwrap().is_empty());
        std::fs::write(dir.path().join("a/x.txt"), "3").unwrap();
        std::fs::write(dir.path().join("z.txt"), "new").unwrap();
        assert_eq!(verify_stage(dir.path()).unwrap().len(), 2);
    }
}
