//! Artifact persistence.
//!
//! Every artifact is a directory holding payload files and a `manifest.toml`
//! that records the artifact kind, format version, the resolved configuration,
//! the master seed, a SHA-256 hash of every payload file, and references to
//! the upstream artifacts it was derived from.
//!
//! Files listed as volatile (wall-clock timings) are stored but not hashed, so
//! two runs with the same configuration produce the same content hash.

mod dataset;
mod model;

pub use dataset::{dataset_from_artifact, load_dataset, load_dataset_as, save_dataset, ArrayFormat, DatasetFormat};
pub use model::{load_model, save_model, SavedModel};

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Component, Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.toml";
pub const FORMAT_TAG: &str = "GBL1";
pub const FORMAT_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the JSON encoding of `value`.
pub fn config_hash<T: Serialize + ?Sized>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("config serializes"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArtifactKind {
    Dataset,
    Model,
    Attribution,
    Embedding,
    Report,
}

impl ArtifactKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactKind::Dataset => "dataset",
            ArtifactKind::Model => "model",
            ArtifactKind::Attribution => "attribution",
            ArtifactKind::Embedding => "embedding",
            ArtifactKind::Report => "report",
        }
    }

    /// Upstream kind this artifact must reference, if any.
    pub fn required_upstream(self) -> Option<ArtifactKind> {
        match self {
            ArtifactKind::Model => Some(ArtifactKind::Dataset),
            ArtifactKind::Attribution | ArtifactKind::Embedding => Some(ArtifactKind::Model),
            ArtifactKind::Dataset | ArtifactKind::Report => None,
        }
    }
}

impl std::fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpstreamEntry {
    pub kind: ArtifactKind,
    /// Path relative to the referencing artifact's directory.
    pub path: String,
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub format_version: u32,
    pub kind: ArtifactKind,
    pub created_unix: u64,
    pub seed: u64,
    /// Hash over everything below except volatile files and the timestamp.
    pub content_hash: String,
    #[serde(default)]
    pub volatile: Vec<String>,
    pub config: toml::Value,
    pub files: BTreeMap<String, String>,
    #[serde(default)]
    pub upstream: Vec<UpstreamEntry>,
}

#[derive(Serialize)]
struct HashedPart<'a> {
    format: &'a str,
    format_version: u32,
    kind: ArtifactKind,
    seed: u64,
    config: &'a toml::Value,
    files: &'a BTreeMap<String, String>,
    upstream: Vec<(ArtifactKind, &'a str)>,
}

impl Manifest {
    pub fn compute_content_hash(&self) -> String {
        config_hash(&HashedPart {
            format: &self.format,
            format_version: self.format_version,
            kind: self.kind,
            seed: self.seed,
            config: &self.config,
            files: &self.files,
            upstream: self.upstream.iter().map(|u| (u.kind, u.hash.as_str())).collect(),
        })
    }

    /// Deserialize the config document.
    pub fn config_as<T: serde::de::DeserializeOwned>(&self) -> Result<T> {
        Ok(self.config.clone().try_into()?)
    }
}

/// Files to store, keyed by path relative to the artifact directory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Payload {
    pub files: BTreeMap<String, Vec<u8>>,
    /// Stored without a hash; excluded from the content hash.
    pub volatile: BTreeMap<String, Vec<u8>>,
}

impl Payload {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) -> &mut Self {
        self.files.insert(name.into(), bytes.into());
        self
    }

    pub fn add_volatile(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) -> &mut Self {
        self.volatile.insert(name.into(), bytes.into());
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WriteOptions {
    pub overwrite: bool,
    /// Fixed creation time; the current time when `None`.
    pub created_unix: Option<u64>,
}

impl WriteOptions {
    /// Overwrite allowed, timestamp pinned to zero.
    pub fn deterministic() -> Self {
        Self { overwrite: true, created_unix: Some(0) }
    }
}

/// A reference to a stored, verified artifact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArtifactRef {
    pub kind: ArtifactKind,
    pub path: PathBuf,
    pub hash: String,
}

/// A verified artifact read from disk.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub path: PathBuf,
    pub manifest: Manifest,
    pub files: BTreeMap<String, Vec<u8>>,
    /// Upstream artifacts, nearest first, back to the root.
    pub chain: Vec<ArtifactRef>,
}

impl Artifact {
    pub fn file(&self, name: &str) -> Result<&[u8]> {
        self.files
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::format(self.path.join(name).display().to_string(), "file not listed in the manifest"))
    }

    pub fn text(&self, name: &str) -> Result<&str> {
        std::str::from_utf8(self.file(name)?).map_err(|_| Error::format(name, "not valid UTF-8"))
    }

    pub fn has(&self, name: &str) -> bool {
        self.files.contains_key(name)
    }

    pub fn reference(&self) -> ArtifactRef {
        ArtifactRef { kind: self.manifest.kind, path: self.path.clone(), hash: self.manifest.content_hash.clone() }
    }

    /// Nearest upstream artifact of `kind`.
    pub fn upstream(&self, kind: ArtifactKind) -> Option<&ArtifactRef> {
        self.chain.iter().find(|r| r.kind == kind)
    }
}

fn check_name(name: &str) -> Result<()> {
    let p = Path::new(name);
    let ok = !name.is_empty()
        && name != MANIFEST
        && p.components().all(|c| matches!(c, Component::Normal(_)));
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("invalid artifact file name `{name}`")))
    }
}

fn absolute(path: &Path) -> Result<PathBuf> {
    if path.is_absolute() {
        Ok(path.to_path_buf())
    } else {
        Ok(std::env::current_dir()?.join(path))
    }
}

/// `to` relative to the directory `from`; both absolute.
fn relative_to(from: &Path, to: &Path) -> PathBuf {
    let a: Vec<Component> = from.components().collect();
    let b: Vec<Component> = to.components().collect();
    let common = a.iter().zip(&b).take_while(|(x, y)| x == y).count();
    let mut out = PathBuf::new();
    for _ in common..a.len() {
        out.push("..");
    }
    for c in &b[common..] {
        out.push(c.as_os_str());
    }
    if out.as_os_str().is_empty() {
        out.push(".");
    }
    out
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Write `payload` as an artifact directory at `dir`.
///
/// The files are written to a temporary sibling directory, which is renamed
/// into place once the manifest is complete.
pub fn write_artifact<C: Serialize + ?Sized>(
    dir: &Path,
    kind: ArtifactKind,
    config: &C,
    seed: u64,
    payload: &Payload,
    upstream: &[ArtifactRef],
    options: WriteOptions,
) -> Result<ArtifactRef> {
    if let Some(needed) = kind.required_upstream() {
        if !upstream.iter().any(|u| u.kind == needed) {
            return Err(Error::Provenance(format!("a {kind} artifact must reference a {needed} artifact")));
        }
    }
    for name in payload.files.keys().chain(payload.volatile.keys()) {
        check_name(name)?;
    }
    if let Some(dup) = payload.files.keys().find(|k| payload.volatile.contains_key(*k)) {
        return Err(Error::InvalidArgument(format!("`{dup}` is both hashed and volatile")));
    }

    let dir = absolute(dir)?;
    let name = dir
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("artifact path {} has no final component", dir.display())))?
        .to_string_lossy()
        .into_owned();
    let parent = dir.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("/"));
    if dir.exists() && !options.overwrite {
        return Err(Error::AlreadyExists(dir));
    }
    fs::create_dir_all(&parent)?;

    let mut upstream_entries = Vec::with_capacity(upstream.len());
    for u in upstream {
        let target = absolute(&u.path)?;
        upstream_entries.push(UpstreamEntry {
            kind: u.kind,
            path: relative_to(&dir, &target).to_string_lossy().replace('\\', "/"),
            hash: u.hash.clone(),
        });
    }

    let mut manifest = Manifest {
        format: FORMAT_TAG.into(),
        format_version: FORMAT_VERSION,
        kind,
        created_unix: options.created_unix.unwrap_or_else(now_unix),
        seed,
        content_hash: String::new(),
        volatile: payload.volatile.keys().cloned().collect(),
        config: toml::Value::try_from(config)?,
        files: payload.files.iter().map(|(k, v)| (k.clone(), sha256_hex(v))).collect(),
        upstream: upstream_entries,
    };
    manifest.content_hash = manifest.compute_content_hash();

    let nonce = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0);
    let tmp = parent.join(format!(".{name}.tmp-{}-{nonce}", std::process::id()));
    let staged = (|| -> Result<()> {
        fs::create_dir_all(&tmp)?;
        for (file, bytes) in payload.files.iter().chain(&payload.volatile) {
            let path = tmp.join(file);
            if let Some(p) = path.parent() {
                fs::create_dir_all(p)?;
            }
            fs::write(path, bytes)?;
        }
        fs::write(tmp.join(MANIFEST), toml::to_string(&manifest)?)?;
        Ok(())
    })();
    if let Err(e) = staged {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e);
    }

    if dir.exists() {
        let old = parent.join(format!(".{name}.old-{}-{nonce}", std::process::id()));
        fs::rename(&dir, &old)?;
        if let Err(e) = fs::rename(&tmp, &dir) {
            let _ = fs::rename(&old, &dir);
            let _ = fs::remove_dir_all(&tmp);
            return Err(e.into());
        }
        fs::remove_dir_all(&old)?;
    } else if let Err(e) = fs::rename(&tmp, &dir) {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e.into());
    }
    Ok(ArtifactRef { kind, path: dir, hash: manifest.content_hash })
}

/// Parse and check the manifest at `dir` without reading the payload.
pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::format(path.display().to_string(), "manifest not found"),
        _ => e.into(),
    })?;
    let manifest: Manifest = toml::from_str(&text)?;
    if manifest.format != FORMAT_TAG {
        return Err(Error::format(path.display().to_string(), format!("unknown format tag `{}`", manifest.format)));
    }
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(manifest.format_version));
    }
    if manifest.compute_content_hash() != manifest.content_hash {
        return Err(Error::HashMismatch { file: path.display().to_string() });
    }
    Ok(manifest)
}

fn read_verified_files(dir: &Path, manifest: &Manifest) -> Result<BTreeMap<String, Vec<u8>>> {
    let mut files = BTreeMap::new();
    for (name, hash) in &manifest.files {
        check_name(name)?;
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::HashMismatch { file: path.display().to_string() },
            _ => e.into(),
        })?;
        if &sha256_hex(&bytes) != hash {
            return Err(Error::HashMismatch { file: path.display().to_string() });
        }
        files.insert(name.clone(), bytes);
    }
    for name in &manifest.volatile {
        check_name(name)?;
        if let Ok(bytes) = fs::read(dir.join(name)) {
            files.insert(name.clone(), bytes);
        }
    }
    Ok(files)
}

/// Walk and verify the upstream references of `manifest`, nearest first.
fn resolve_chain(dir: &Path, manifest: &Manifest) -> Result<Vec<ArtifactRef>> {
    let mut chain = Vec::new();
    let mut seen: BTreeSet<PathBuf> = BTreeSet::new();
    seen.insert(fs::canonicalize(dir)?);
    let mut frontier: Vec<(PathBuf, Manifest)> = vec![(dir.to_path_buf(), manifest.clone())];
    while let Some((here, m)) = frontier.pop() {
        if let Some(needed) = m.kind.required_upstream() {
            if !m.upstream.iter().any(|u| u.kind == needed) {
                return Err(Error::Provenance(format!("{} has no {needed} upstream", here.display())));
            }
        }
        for u in &m.upstream {
            let path = here.join(&u.path);
            let canonical = fs::canonicalize(&path)
                .map_err(|_| Error::Provenance(format!("upstream {} of {} is missing", u.path, here.display())))?;
            if !seen.insert(canonical.clone()) {
                if chain.iter().any(|r: &ArtifactRef| r.path == canonical) {
                    continue;
                }
                return Err(Error::Provenance(format!("provenance cycle through {}", canonical.display())));
            }
            let up = read_manifest(&canonical)?;
            if up.kind != u.kind {
                return Err(Error::KindMismatch { expected: u.kind.to_string(), found: up.kind.to_string() });
            }
            if up.content_hash != u.hash {
                return Err(Error::Provenance(format!("upstream {} changed since {} was written", canonical.display(), here.display())));
            }
            read_verified_files(&canonical, &up)?;
            chain.push(ArtifactRef { kind: up.kind, path: canonical.clone(), hash: up.content_hash.clone() });
            frontier.push((canonical, up));
        }
    }
    if manifest.kind != ArtifactKind::Report && manifest.kind != ArtifactKind::Dataset
        && !chain.iter().any(|r| r.kind == ArtifactKind::Dataset)
    {
        return Err(Error::Provenance(format!("{} does not trace back to a dataset", dir.display())));
    }
    Ok(chain)
}

/// Read and verify the artifact at `dir`, including its provenance chain.
pub fn read_artifact(dir: &Path, expected: Option<ArtifactKind>) -> Result<Artifact> {
    let dir = absolute(dir)?;
    let manifest = read_manifest(&dir)?;
    if let Some(kind) = expected {
        if manifest.kind != kind {
            return Err(Error::KindMismatch { expected: kind.to_string(), found: manifest.kind.to_string() });
        }
    }
    let files = read_verified_files(&dir, &manifest)?;
    let chain = resolve_chain(&dir, &manifest)?;
    Ok(Artifact { path: dir, manifest, files, chain })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[derive(Serialize)]
    struct Cfg {
        alpha: f64,
        name: &'static str,
    }

    fn payload() -> Payload {
        let mut p = Payload::new();
        p.add("a.txt", "hello").add("sub/b.bin", vec![0u8, 1, 2, 255]).add_volatile("timings.csv", "t\n1.5\n");
        p
    }

    #[test]
    fn write_then_read_round_trips() {
        let root = tempdir().unwrap();
        let dir = root.path().join("report");
        let r = write_artifact(&dir, ArtifactKind::Report, &Cfg { alpha: 0.1, name: "x" }, 7, &payload(), &[], WriteOptions::default()).unwrap();
        let a = read_artifact(&dir, Some(ArtifactKind::Report)).unwrap();
        assert_eq!(a.file("a.txt").unwrap(), b"hello");
        assert_eq!(a.file("sub/b.bin").unwrap(), &[0u8, 1, 2, 255]);
        assert_eq!(a.file("timings.csv").unwrap(), b"t\n1.5\n");
        assert_eq!(a.manifest.seed, 7);
        assert_eq!(a.manifest.content_hash, r.hash);
        assert!(a.chain.is_empty());
        assert!(matches!(read_artifact(&dir, Some(ArtifactKind::Model)), Err(Error::KindMismatch { .. })));
    }

    #[test]
    fn hash_ignores_timestamp_and_volatile_files() {
        let root = tempdir().unwrap();
        let mut p2 = payload();
        p2.add_volatile("timings.csv", "t\n9.9\n");
        let a = write_artifact(&root.path().join("a"), ArtifactKind::Report, &Cfg { alpha: 0.1, name: "x" }, 1, &payload(), &[], WriteOptions { created_unix: Some(1), ..Default::default() }).unwrap();
        let b = write_artifact(&root.path().join("b"), ArtifactKind::Report, &Cfg { alpha: 0.1, name: "x" }, 1, &p2, &[], WriteOptions { created_unix: Some(2), ..Default::default() }).unwrap();
        assert_eq!(a.hash, b.hash);
        let c = write_artifact(&root.path().join("c"), ArtifactKind::Report, &Cfg { alpha: 0.2, name: "x" }, 1, &payload(), &[], WriteOptions::default()).unwrap();
        assert_ne!(a.hash, c.hash);
    }

    #[test]
    fn existing_path_needs_overwrite() {
        let root = tempdir().unwrap();
        let dir = root.path().join("r");
        let cfg = Cfg { alpha: 0.0, name: "" };
        write_artifact(&dir, ArtifactKind::Report, &cfg, 0, &payload(), &[], WriteOptions::default()).unwrap();
        assert!(matches!(write_artifact(&dir, ArtifactKind::Report, &cfg, 0, &payload(), &[], WriteOptions::default()), Err(Error::AlreadyExists(_))));
        let mut p = Payload::new();
        p.add("only.txt", "new");
        write_artifact(&dir, ArtifactKind::Report, &cfg, 0, &p, &[], WriteOptions { overwrite: true, ..Default::default() }).unwrap();
        let a = read_artifact(&dir, None).unwrap();
        assert!(!a.has("a.txt"));
        assert!(!dir.join("a.txt").exists());
        // no temporary directories left behind
        assert_eq!(fs::read_dir(root.path()).unwrap().count(), 1);
    }

    #[test]
    fn tampering_names_the_file() {
        let root = tempdir().unwrap();
        let dir = root.path().join("r");
        write_artifact(&dir, ArtifactKind::Report, &Cfg { alpha: 0.0, name: "" }, 0, &payload(), &[], WriteOptions::default()).unwrap();
        fs::write(dir.join("sub/b.bin"), [9u8]).unwrap();
        match read_artifact(&dir, None) {
            Err(Error::HashMismatch { file }) => assert!(file.ends_with("b.bin"), "{file}"),
            other => panic!("expected hash mismatch, got {other:?}"),
        }
        // volatile files may change freely
        fs::write(dir.join("sub/b.bin"), [0u8, 1, 2, 255]).unwrap();
        fs::write(dir.join("timings.csv"), "changed").unwrap();
        read_artifact(&dir, None).unwrap();
        // so may not the manifest
        let text = fs::read_to_string(dir.join(MANIFEST)).unwrap().replace("seed = 0", "seed = 1");
        fs::write(dir.join(MANIFEST), text).unwrap();
        assert!(matches!(read_artifact(&dir, None), Err(Error::HashMismatch { .. })));
    }

    #[test]
    fn unsupported_version_is_rejected() {
        let root = tempdir().unwrap();
        let dir = root.path().join("r");
        write_artifact(&dir, ArtifactKind::Report, &Cfg { alpha: 0.0, name: "" }, 0, &payload(), &[], WriteOptions::default()).unwrap();
        let text = fs::read_to_string(dir.join(MANIFEST)).unwrap().replace("format_version = 1", "format_version = 9");
        fs::write(dir.join(MANIFEST), text).unwrap();
        assert!(matches!(read_artifact(&dir, None), Err(Error::UnsupportedVersion(9))));
    }

    #[test]
    fn provenance_contract() {
        let root = tempdir().unwrap();
        let cfg = Cfg { alpha: 0.0, name: "" };
        let opts = WriteOptions::default();
        let p = payload();
        assert!(matches!(write_artifact(&root.path().join("m"), ArtifactKind::Model, &cfg, 0, &p, &[], opts), Err(Error::Provenance(_))));
        let ds = write_artifact(&root.path().join("d"), ArtifactKind::Dataset, &cfg, 0, &p, &[], opts).unwrap();
        assert!(matches!(write_artifact(&root.path().join("x"), ArtifactKind::Attribution, &cfg, 0, &p, &[ds.clone()], opts), Err(Error::Provenance(_))));
        let m = write_artifact(&root.path().join("m"), ArtifactKind::Model, &cfg, 0, &p, &[ds.clone()], opts).unwrap();
        let x = write_artifact(&root.path().join("sub/x"), ArtifactKind::Attribution, &cfg, 0, &p, &[m.clone()], opts).unwrap();
        let a = read_artifact(&x.path, None).unwrap();
        assert_eq!(a.chain.iter().map(|r| r.kind).collect::<Vec<_>>(), vec![ArtifactKind::Model, ArtifactKind::Dataset]);
        assert_eq!(a.upstream(ArtifactKind::Dataset).unwrap().hash, ds.hash);

        // rewriting the dataset with other content breaks the chain
        let mut q = Payload::new();
        q.add("a.txt", "other");
        write_artifact(&ds.path, ArtifactKind::Dataset, &cfg, 0, &q, &[], WriteOptions { overwrite: true, ..opts }).unwrap();
        assert!(matches!(read_artifact(&x.path, None), Err(Error::Provenance(_))));
    }

    #[test]
    fn relative_paths() {
        assert_eq!(relative_to(Path::new("/a/b/c"), Path::new("/a/d")), PathBuf::from("../../d"));
        assert_eq!(relative_to(Path::new("/a"), Path::new("/a/b")), PathBuf::from("b"));
    }

    #[test]
    fn bad_names_rejected() {
        let root = tempdir().unwrap();
        let mut p = Payload::new();
        p.add("../escape", "x");
        assert!(write_artifact(&root.path().join("r"), ArtifactKind::Report, &Cfg { alpha: 0.0, name: "" }, 0, &p, &[], WriteOptions::default()).is_err());
    }
}
