//! On-disk formats.
//!
//! A dataset directory holds
//!
//! * `spec.config`: the generating specs as flat `dotted.key = value` lines
//!   (a TOML subset),
//! * `frames.csv`: header `phase_index,bit_1,...,bit_K`, one frame per row,
//! * `frames.pgm`: the same frames as a binary greyscale raster, one row per
//!   frame, 255 for 1,
//! * `manifest.json`: format and tool versions, seeds, creation time and the
//!   SHA-256 of every other file.
//!
//! Everything except the manifest timestamp is a pure function of the
//! dataset, so re-running a seeded command reproduces the files byte for
//! byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chain::CaptureFrame;
use crate::ringosc::{RingTrace, StitchedSeries};
use crate::sweep::{capture_instants, Acquisition, Provenance, SweepDataset};
use crate::time::Time;

pub const FORMAT_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const SPEC_FILE: &str = "spec.config";
pub const FRAMES_CSV: &str = "frames.csv";
pub const FRAMES_PGM: &str = "frames.pgm";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{file} is corrupt at row {row}: {reason}")]
    Corrupt { file: String, row: usize, reason: String },

    #[error("{file} does not match its manifest hash (expected {expected}, found {actual})")]
    HashMismatch { file: String, expected: String, actual: String },

    #[error("dataset format version {found} is not supported (this build reads version {supported})")]
    VersionSkew { found: u32, supported: u32 },

    #[error("config: {0}")]
    Config(String),
}

type Result<T> = std::result::Result<T, StorageError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StorageError + '_ {
    move |source| StorageError::Io { path: path.to_path_buf(), source }
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(io_err(path))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

/// Writes `bytes`, creating parent directories.
pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| StorageError::Config(e.to_string()))?;
    text.push('\n');
    write_file(path, text)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Serializes to one `dotted.key = value` line per leaf, keys sorted.
pub fn to_flat_config<T: Serialize>(value: &T) -> Result<String> {
    let root = toml::Value::try_from(value).map_err(|e| StorageError::Config(e.to_string()))?;
    let toml::Value::Table(table) = root else {
        return Err(StorageError::Config("top-level value must be a table".into()));
    };
    let mut out = String::new();
    flatten(&table, "", &mut out);
    Ok(out)
}

fn flatten(table: &toml::Table, prefix: &str, out: &mut String) {
    for (k, v) in table {
        match v {
            toml::Value::Table(t) => flatten(t, &format!("{prefix}{k}."), out),
            _ => {
                let _ = writeln!(out, "{prefix}{k} = {v}");
            }
        }
    }
}

/// Parses a flat config. Any TOML document is accepted; unknown keys are
/// rejected by the target type.
pub fn from_flat_config<T: DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| StorageError::Config(e.to_string()))
}

pub fn frames_to_csv(frames: &[CaptureFrame]) -> String {
    let k = frames.first().map_or(0, |f| f.k());
    let mut s = String::with_capacity((frames.len() + 1) * (2 * k + 8));
    s.push_str("phase_index");
    for i in 1..=k {
        let _ = write!(s, ",bit_{i}");
    }
    s.push('\n');
    for (row, f) in frames.iter().enumerate() {
        let _ = write!(s, "{}", f.phase_index.unwrap_or(row as u64));
        for &b in &f.bits {
            s.push(',');
            s.push(if b { '1' } else { '0' });
        }
        s.push('\n');
    }
    s
}

/// Parses frame rows. Row numbers in errors count the header as row 1.
/// `expected_k`, when given, is enforced on the header.
pub fn frames_from_csv(text: &str, expected_k: Option<usize>) -> Result<Vec<CaptureFrame>> {
    let corrupt = |row: usize, reason: String| StorageError::Corrupt { file: FRAMES_CSV.into(), row, reason };
    let mut lines = text.split_terminator('\n');
    let header = lines.next().ok_or_else(|| corrupt(1, "empty file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let k = cols.len() - 1;
    let header_ok = cols[0] == "phase_index" && cols[1..].iter().enumerate().all(|(i, c)| *c == format!("bit_{}", i + 1));
    if !header_ok || k == 0 {
        return Err(corrupt(1, "header must be phase_index,bit_1,...,bit_K".into()));
    }
    if let Some(e) = expected_k {
        if e != k {
            return Err(corrupt(1, format!("header has {k} taps, spec has {e}")));
        }
    }
    let mut frames = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != k + 1 {
            return Err(corrupt(row, format!("expected {} fields, found {}", k + 1, fields.len())));
        }
        let phase: u64 = fields[0].parse().map_err(|_| corrupt(row, format!("bad phase index {:?}", fields[0])))?;
        let bits = fields[1..]
            .iter()
            .map(|f| match *f {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(corrupt(row, format!("bit must be 0 or 1, found {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        frames.push(CaptureFrame::new(bits, Time::ZERO, Some(phase)));
    }
    Ok(frames)
}

/// Binary PGM raster, one row per entry of `rows` (all of equal width).
pub fn to_pgm(rows: &[&[bool]]) -> Vec<u8> {
    let width = rows.first().map_or(0, |r| r.len());
    let mut out = format!("P5\n{width} {}\n255\n", rows.len()).into_bytes();
    for r in rows {
        out.extend(r.iter().map(|&b| if b { 255u8 } else { 0 }));
    }
    out
}

pub fn frames_to_pgm(frames: &[CaptureFrame]) -> Vec<u8> {
    let rows: Vec<&[bool]> = frames.iter().map(|f| f.bits.as_slice()).collect();
    to_pgm(&rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub created_unix: u64,
    pub seeds: BTreeMap<String, u64>,
    pub files: BTreeMap<String, FileEntry>,
}

fn seeds(p: &Provenance) -> BTreeMap<String, u64> {
    let mut s = BTreeMap::new();
    s.insert("chain".to_string(), p.chain.seed);
    s.insert("registers".to_string(), p.registers.seed);
    if let Acquisition::Sweep(sw) = &p.acquisition {
        s.insert("sweep".to_string(), sw.seed);
        s.insert("source".to_string(), sw.source.seed);
    }
    s
}

/// Digest identifying a dataset's content (specs plus frames).
pub fn dataset_hash(ds: &SweepDataset) -> Result<String> {
    let mut bytes = to_flat_config(&ds.provenance)?.into_bytes();
    bytes.extend(frames_to_csv(&ds.frames).as_bytes());
    Ok(sha256_hex(&bytes))
}

pub fn save_dataset(ds: &SweepDataset, dir: &Path) -> Result<Manifest> {
    let files: [(&str, Vec<u8>); 3] = [
        (SPEC_FILE, to_flat_config(&ds.provenance)?.into_bytes()),
        (FRAMES_CSV, frames_to_csv(&ds.frames).into_bytes()),
        (FRAMES_PGM, frames_to_pgm(&ds.frames)),
    ];
    let mut entries = BTreeMap::new();
    for (name, bytes) in &files {
        write_file(&dir.join(name), bytes)?;
        entries.insert(name.to_string(), FileEntry { sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        tool: "wcd".into(),
        tool_version: TOOL_VERSION.into(),
        created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        seeds: seeds(&ds.provenance),
        files: entries,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

fn check_hash(manifest: &Manifest, name: &str, bytes: &[u8]) -> Result<()> {
    let expected = manifest
        .files
        .get(name)
        .ok_or_else(|| StorageError::Corrupt { file: MANIFEST_FILE.into(), row: 0, reason: format!("no entry for {name}") })?;
    let actual = sha256_hex(bytes);
    if actual != expected.sha256 {
        return Err(StorageError::HashMismatch { file: name.into(), expected: expected.sha256.clone(), actual });
    }
    Ok(())
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = read_text(&path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| StorageError::Corrupt { file: MANIFEST_FILE.into(), row: e.line(), reason: e.to_string() })?;
    let found = value.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != FORMAT_VERSION {
        return Err(StorageError::VersionSkew { found, supported: FORMAT_VERSION });
    }
    serde_json::from_value(value).map_err(|e| StorageError::Corrupt { file: MANIFEST_FILE.into(), row: 0, reason: e.to_string() })
}

pub fn load_dataset(dir: &Path) -> Result<SweepDataset> {
    let manifest = load_manifest(dir)?;
    let spec_bytes = read_bytes(&dir.join(SPEC_FILE))?;
    check_hash(&manifest, SPEC_FILE, &spec_bytes)?;
    let spec_text = String::from_utf8(spec_bytes).map_err(|e| StorageError::Config(e.to_string()))?;
    let provenance: Provenance = from_flat_config(&spec_text)?;

    let csv_bytes = read_bytes(&dir.join(FRAMES_CSV))?;
    let csv = String::from_utf8_lossy(&csv_bytes);
    let mut frames = frames_from_csv(&csv, Some(provenance.chain.k))?;
    let instants: Vec<Time> = match &provenance.acquisition {
        Acquisition::Sweep(s) => capture_instants(s),
        Acquisition::Continuous(c) => {
            let (start, period) = (Time::from_ps(c.start_ps), Time::from_ps(c.capture_period_ps));
            (0..c.n_frames as i64).map(|m| start + period * m).collect()
        }
    };
    if frames.len() != instants.len() {
        return Err(StorageError::Corrupt {
            file: FRAMES_CSV.into(),
            row: frames.len() + 2,
            reason: format!("expected {} frames, found {}", instants.len(), frames.len()),
        });
    }
    for (f, t) in frames.iter_mut().zip(instants) {
        f.capture_time = t;
    }
    check_hash(&manifest, FRAMES_CSV, &csv_bytes)?;
    check_hash(&manifest, FRAMES_PGM, &read_bytes(&dir.join(FRAMES_PGM))?)?;
    Ok(SweepDataset { frames, provenance })
}

/// One edge-list CSV per node: `node_1.csv`, `node_2.csv`, ...
pub fn save_ring_trace(trace: &RingTrace, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for i in 0..trace.nodes.len() {
        let p = dir.join(format!("node_{}.csv", i + 1));
        write_file(&p, trace.node_csv(i))?;
        paths.push(p);
    }
    Ok(paths)
}

/// Stitched series of several nodes: `stitched.csv` with one column per
/// node and `stitched.pgm`, a strip with one row per node.
pub fn save_stitched(series: &[StitchedSeries], dir: &Path) -> Result<()> {
    let len = series.iter().map(|s| s.bits.len()).min().unwrap_or(0);
    let mut csv = String::from("sample");
    for i in 1..=series.len() {
        let _ = write!(csv, ",node_{i}");
    }
    csv.push('\n');
    for j in 0..len {
        let _ = write!(csv, "{j}");
        for s in series {
            csv.push(',');
            csv.push(if s.bits[j] { '1' } else { '0' });
        }
        csv.push('\n');
    }
    write_file(&dir.join("stitched.csv"), csv)?;
    let rows: Vec<&[bool]> = series.iter().map(|s| &s.bits[..len]).collect();
    write_file(&dir.join("stitched.pgm"), to_pgm(&rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{ChainSpec, RegisterSpec, Tdl};
    use crate::sweep::{run_sweep, SweepSpec};
    use crate::waveform::PllOutputSpec;

    fn dataset() -> SweepDataset {
        let chain = ChainSpec { tau_fall_ps: 4.54, seed: 3, tau_sigma_ps: 0.1, ..ChainSpec::ideal(1100, 4.91) };
        let tdl = Tdl::new(chain, RegisterSpec { skew_sigma_ps: 2.0, clock_jitter_sigma_ps: 5.0, seed: 8 }).unwrap();
        let spec = SweepSpec { seed: 21, crystal_jitter_sigma_ps: 30.0, ..SweepSpec::new(PllOutputSpec::new(100e6, 0.25), 4000.0, 78.0, 12) };
        run_sweep(&spec, &tdl).unwrap()
    }

    #[test]
    fn flat_config_round_trips() {
        let ds = dataset();
        let text = to_flat_config(&ds.provenance).unwrap();
        assert!(text.lines().all(|l| l.contains(" = ") && !l.starts_with('[')));
        assert!(text.contains("acquisition.kind = \"sweep\"\n"));
        assert!(text.contains("acquisition.source.frequency_hz = 100000000.0\n"));
        let back: Provenance = from_flat_config(&text).unwrap();
        assert_eq!(back, ds.provenance);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = to_flat_config(&dataset().provenance).unwrap() + "chain.colour = 3\n";
        assert!(matches!(from_flat_config::<Provenance>(&text), Err(StorageError::Config(_))));
    }

    #[test]
    fn csv_and_pgm_layout() {
        let frames = vec![CaptureFrame::new(vec![true, false, true], Time::ZERO, Some(7))];
        assert_eq!(frames_to_csv(&frames), "phase_index,bit_1,bit_2,bit_3\n7,1,0,1\n");
        assert_eq!(frames_to_pgm(&frames), b"P5\n3 1\n255\n\xff\x00\xff".to_vec());
        let back = frames_from_csv(&frames_to_csv(&frames), Some(3)).unwrap();
        assert_eq!(back, frames);
    }

    #[test]
    fn dataset_round_trips() {
        let ds = dataset();
        let dir = tempfile::tempdir().unwrap();
        let m = save_dataset(&ds, dir.path()).unwrap();
        assert_eq!(m.files.len(), 3);
        assert_eq!(m.seeds["sweep"], 21);
        assert_eq!(load_dataset(dir.path()).unwrap(), ds);
    }

    #[test]
    fn truncated_frames_name_the_row() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&dataset(), dir.path()).unwrap();
        let path = dir.path().join(FRAMES_CSV);
        let text = fs::read_to_string(&path).unwrap();
        let cut = text.len() - text.len() / 3;
        fs::write(&path, &text[..cut]).unwrap();
        let row = text[..cut].lines().count();
        match load_dataset(dir.path()) {
            Err(StorageError::Corrupt { file, row: r, .. }) => {
                assert_eq!(file, FRAMES_CSV);
                assert_eq!(r, row);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_rows_are_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&dataset(), dir.path()).unwrap();
        let path = dir.path().join(FRAMES_CSV);
        let text = fs::read_to_string(&path).unwrap();
        let keep: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        fs::write(&path, keep).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(StorageError::Corrupt { row: 6, .. })));
    }

    #[test]
    fn edited_spec_is_a_hash_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&dataset(), dir.path()).unwrap();
        let path = dir.path().join(SPEC_FILE);
        let text = fs::read_to_string(&path).unwrap().replace("chain.k = 1100", "chain.k = 1101");
        fs::write(&path, text).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(StorageError::HashMismatch { file, .. }) if file == SPEC_FILE));
    }

    #[test]
    fn future_format_is_version_skew() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&dataset(), dir.path()).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).unwrap().replace("\"format_version\": 1", "\"format_version\": 2");
        fs::write(&path, text).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(StorageError::VersionSkew { found: 2, supported: 1 })));
    }

    #[test]
    fn saved_files_are_reproducible() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        save_dataset(&dataset(), a.path()).unwrap();
        save_dataset(&dataset(), b.path()).unwrap();
        for f in [SPEC_FILE, FRAMES_CSV, FRAMES_PGM] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
        }
    }
}
