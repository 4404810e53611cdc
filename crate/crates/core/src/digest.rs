use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::AssetMissing(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    Ok(sha256_hex(&bytes))
}

/// Reads an asset and checks its SHA-256 against `expected` (hex, case-insensitive).
pub fn read_verified(path: &Path, expected: &str) -> Result<Vec<u8>> {
    let bytes = std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::AssetMissing(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    let found = sha256_hex(&bytes);
    if !found.eq_ignore_ascii_case(expected.trim()) {
        return Err(Error::ChecksumMismatch {
            path: path.to_path_buf(),
            expected: expected.trim().to_ascii_lowercase(),
            found,
        });
    }
    Ok(bytes)
}

/// Environment variable overriding the asset cache location.
pub const ASSET_DIR_ENV: &str = "ADVMASK_ASSET_DIR";

/// Asset directory: `$ADVMASK_ASSET_DIR` when set, otherwise `default`.
pub fn asset_dir(default: &Path) -> std::path::PathBuf {
    match std::env::var_os(ASSET_DIR_ENV) {
        Some(dir) if !dir.is_empty() => dir.into(),
        _ => default.to_path_buf(),
    }
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
    fn verification() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.bin");
        std::fs::write(&p, b"abc").unwrap();
        assert!(read_verified(
            &p,
            "BA7816BF8F01CFEA414140DE5DAE2223B00361A396177A9CB410FF61F20015AD"
        )
        .is_ok());
        assert!(matches!(
            read_verified(&p, "00"),
            Err(Error::ChecksumMismatch { .. })
        ));
        assert!(matches!(
            read_verified(&dir.path().join("nope"), "00"),
            Err(Error::AssetMissing(_))
        ));
    }
}
