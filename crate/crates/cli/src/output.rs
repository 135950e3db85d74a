//! Output files: atomic writes and the provenance header line.

use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::config::RunConfig;

/// Writes `contents` through a temporary file in the same directory and
/// renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// SHA-256 of the canonical TOML form of the configuration. The output
/// section is left out since it cannot change any result.
pub fn config_hash(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    c.output = Default::default();
    hex::encode(Sha256::digest(c.to_toml().as_bytes()))
}

/// `# micropump <version> config-sha256 <hash>`
pub fn header_line(cfg: &RunConfig) -> String {
    format!(
        "# micropump {} config-sha256 {}\n",
        env!("CARGO_PKG_VERSION"),
        config_hash(cfg)
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b.csv");
        write_atomic(&p, "one\n").unwrap();
        write_atomic(&p, "two\n").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two\n");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn hash_tracks_config() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.drive.frequency_hz += 1.0;
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a), config_hash(&a.clone()));
        assert!(header_line(&a).starts_with("# micropump "));
        let mut c = a.clone();
        c.output.dir = "elsewhere".into();
        assert_eq!(config_hash(&a), config_hash(&c));
    }
}
