use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "MANIFEST";

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// One `<sha256>  <relative path>` line per file, sorted by path.
pub fn manifest_text(files: &BTreeMap<String, Vec<u8>>) -> String {
    let mut out = String::new();
    for (path, bytes) in files {
        let _ = writeln!(out, "{}  {path}", sha256_hex(bytes));
    }
    out
}

pub fn write_manifest(dir: &Path, files: &BTreeMap<String, Vec<u8>>) -> std::io::Result<()> {
    std::fs::write(dir.join(MANIFEST), manifest_text(files))
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
    fn manifest_is_sorted() {
        let mut files = BTreeMap::new();
        files.insert("b.csv".to_string(), b"1".to_vec());
        files.insert("a/x.json".to_string(), Vec::new());
        let text = manifest_text(&files);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].ends_with("  a/x.json"));
        assert!(lines[0].starts_with("e3b0c442"));
        assert!(lines[1].ends_with("  b.csv"));
    }
}
