//! Persistence: binary field snapshots, CSV series, JSON reports and the run
//! manifest.
//!
//! Snapshot layout, little-endian throughout:
//!
//! | bytes | content |
//! |-------|---------|
//! | 4     | magic `TFSN` |
//! | 2     | format version (`u16`, currently 1) |
//! | 1     | basis tag: 0 periodic, 1 Neumann |
//! | 8     | `L` (`f64`) |
//! | 8     | `ν` (`f64`) |
//! | 4     | `N` (`u32`) |
//!
//! followed by any number of records, each a time (`f64`) and the
//! coefficient array (`dim` × `f64`, cosines then sines for periodic bases).

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::analysis::ObservableSeries;
use crate::config::RunConfig;
use crate::spectral::{BasisSpec, Boundary, SpectralField};

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"TFSN";
pub const SNAPSHOT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a snapshot file (bad magic)")]
    Magic,
    #[error("unsupported snapshot version {0}")]
    Version(u16),
    #[error("corrupt snapshot: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("series are not aligned on a common time grid")]
    Misaligned,
    #[error("{path}: {problem}")]
    Manifest { path: String, problem: String },
}

/// Fields of one model at a sequence of times.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub basis: BasisSpec,
    pub nu: f64,
    pub records: Vec<(f64, SpectralField)>,
}

pub fn write_snapshot<W: Write>(mut w: W, snap: &Snapshot) -> Result<(), IoError> {
    let b = &snap.basis;
    w.write_all(&SNAPSHOT_MAGIC)?;
    w.write_u16::<LittleEndian>(SNAPSHOT_VERSION)?;
    w.write_u8(b.boundary().tag())?;
    w.write_f64::<LittleEndian>(b.length())?;
    w.write_f64::<LittleEndian>(snap.nu)?;
    let n = u32::try_from(b.modes()).map_err(|_| IoError::Corrupt("N exceeds u32".into()))?;
    w.write_u32::<LittleEndian>(n)?;
    for (t, f) in &snap.records {
        if f.basis() != b {
            return Err(IoError::Corrupt("record basis differs from header".into()));
        }
        w.write_f64::<LittleEndian>(*t)?;
        for &c in f.coeffs() {
            w.write_f64::<LittleEndian>(c)?;
        }
    }
    Ok(())
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<Snapshot, IoError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != SNAPSHOT_MAGIC {
        return Err(IoError::Magic);
    }
    let version = r.read_u16::<LittleEndian>()?;
    if version != SNAPSHOT_VERSION {
        return Err(IoError::Version(version));
    }
    let tag = r.read_u8()?;
    let boundary =
        Boundary::from_tag(tag).ok_or_else(|| IoError::Corrupt(format!("basis tag {tag}")))?;
    let length = r.read_f64::<LittleEndian>()?;
    let nu = r.read_f64::<LittleEndian>()?;
    let n = r.read_u32::<LittleEndian>()? as usize;
    let basis =
        BasisSpec::new(boundary, length, n).map_err(|e| IoError::Corrupt(e.to_string()))?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    let record = 8 * (1 + basis.dim());
    if rest.len() % record != 0 {
        return Err(IoError::Corrupt(format!(
            "{} trailing bytes do not form whole records of {record}",
            rest.len()
        )));
    }
    let mut cur = io::Cursor::new(rest);
    let mut records = Vec::new();
    while (cur.position() as usize) < cur.get_ref().len() {
        let t = cur.read_f64::<LittleEndian>()?;
        let mut c = vec![0.0; basis.dim()];
        cur.read_f64_into::<LittleEndian>(&mut c)?;
        records.push((t, SpectralField::from_coeffs(basis, c).expect("sized")));
    }
    Ok(Snapshot {
        basis,
        nu,
        records,
    })
}

/// Shortest-exact-enough decimal form: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `t` and one column per series; all series must share the time grid.
pub fn write_series_csv<W: Write>(w: W, series: &[ObservableSeries]) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["t".to_string()];
    header.extend(series.iter().map(|s| s.probe.to_string()));
    out.write_record(&header)?;
    let Some(first) = series.first() else {
        out.flush()?;
        return Ok(());
    };
    if series.iter().any(|s| s.times != first.times) {
        return Err(IoError::Misaligned);
    }
    for (i, &t) in first.times.iter().enumerate() {
        let mut row = vec![fmt_f64(t)];
        row.extend(series.iter().map(|s| fmt_f64(s.values[i])));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a file written by [`write_series_csv`] back into columns.
pub fn read_series_csv<R: Read>(r: R) -> Result<(Vec<String>, Vec<Vec<f64>>), IoError> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let mut cols = vec![Vec::new(); header.len()];
    for rec in rdr.records() {
        let rec = rec?;
        for (c, v) in cols.iter_mut().zip(rec.iter()) {
            c.push(
                v.parse()
                    .map_err(|e| IoError::Corrupt(format!("bad number '{v}': {e}")))?,
            );
        }
    }
    Ok((header, cols))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub seed: u64,
    /// Unix seconds.
    pub started: u64,
    pub finished: u64,
    pub files: Vec<FileEntry>,
    pub status: String,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Output directory that records every file it writes.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self, IoError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), IoError> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.files.retain(|f| f.path != name);
        self.files.push(FileEntry {
            path: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), IoError> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write_bytes(name, &bytes)
    }

    pub fn write_series(&mut self, name: &str, series: &[ObservableSeries]) -> Result<(), IoError> {
        let mut buf = Vec::new();
        write_series_csv(&mut buf, series)?;
        self.write_bytes(name, &buf)
    }

    pub fn write_snapshot(&mut self, name: &str, snap: &Snapshot) -> Result<(), IoError> {
        let mut buf = Vec::new();
        write_snapshot(&mut buf, snap)?;
        self.write_bytes(name, &buf)
    }

    /// Writes the manifest listing every file written so far.
    pub fn finish(
        self,
        command: &str,
        config: &RunConfig,
        started: u64,
        status: &str,
    ) -> Result<RunManifest, IoError> {
        let mut files = self.files;
        files.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: config.clone(),
            seed: config.sim.seed,
            started,
            finished: unix_now(),
            files,
            status: status.to_string(),
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        fs::write(self.root.join(MANIFEST_NAME), bytes)?;
        Ok(manifest)
    }
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest, IoError> {
    Ok(serde_json::from_slice(&fs::read(dir.join(MANIFEST_NAME))?)?)
}

/// Checks that every listed file exists with the recorded digest.
pub fn verify_manifest(dir: &Path) -> Result<RunManifest, IoError> {
    let m = read_manifest(dir)?;
    for f in &m.files {
        let bytes = fs::read(dir.join(&f.path)).map_err(|e| IoError::Manifest {
            path: f.path.clone(),
            problem: e.to_string(),
        })?;
        let digest = sha256_hex(&bytes);
        if digest != f.sha256 || bytes.len() as u64 != f.bytes {
            return Err(IoError::Manifest {
                path: f.path.clone(),
                problem: format!("digest {digest} does not match {}", f.sha256),
            });
        }
    }
    Ok(m)
}
