//! `QLG1` binary snapshots, checkpoints and atomic file writes.
//!
//! Layout (little-endian): magic `QLG1`, `u64` nx, ny, nz, `u64` timestep,
//! `f64` g, a, phase_scale, then per site `Re alpha, Im alpha, Re beta,
//! Im beta` as `f64` in lattice order.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::error::{QlgError, Result};
use crate::evolution::SimParams;
use crate::lattice::{GridSpec, SpinorField};

pub const MAGIC: &[u8; 4] = b"QLG1";
pub const HEADER_BYTES: u64 = 4 + 4 * 8 + 3 * 8;
const SITE_BYTES: u64 = 32;

/// Writes through a temporary file in the same directory, then renames it
/// over `path`.
pub fn write_atomic<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| QlgError::InvalidInput(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut out = BufWriter::new(File::create(&tmp)?);
        write(&mut out)?;
        let file = out.into_inner().map_err(|e| e.into_error())?;
        file.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        QlgError::io(path, e)
    })
}

/// Field plus the header metadata of a snapshot file.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub field: SpinorField,
    pub timestep: u64,
    pub g: f64,
    pub a: f64,
    pub phase_scale: f64,
}

impl Snapshot {
    pub fn new(field: SpinorField, timestep: u64, params: &SimParams) -> Self {
        Snapshot { field, timestep, g: params.g, a: params.a, phase_scale: params.phase_scale }
    }

    /// Parameters from the header, with the default output cadence.
    pub fn params(&self) -> SimParams {
        SimParams { g: self.g, a: self.a, phase_scale: self.phase_scale, ..SimParams::default() }
    }
}

pub fn encode_snapshot<W: Write>(snap: &Snapshot, out: &mut W) -> std::io::Result<()> {
    out.write_all(MAGIC)?;
    for d in snap.field.grid().dims() {
        out.write_all(&(d as u64).to_le_bytes())?;
    }
    out.write_all(&snap.timestep.to_le_bytes())?;
    for v in [snap.g, snap.a, snap.phase_scale] {
        out.write_all(&v.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(SITE_BYTES as usize * 4096);
    for chunk in snap.field.data().chunks(4096) {
        buf.clear();
        for p in chunk {
            for v in [p[0].re, p[0].im, p[1].re, p[1].im] {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

pub fn save_snapshot(snap: &Snapshot, path: &Path) -> Result<()> {
    write_atomic(path, |w| encode_snapshot(snap, w))
}

fn u64_at(bytes: &[u8], offset: usize) -> u64 {
    u64::from_le_bytes(bytes[offset..offset + 8].try_into().expect("8 bytes"))
}

fn f64_at(bytes: &[u8], offset: usize) -> f64 {
    f64::from_le_bytes(bytes[offset..offset + 8].try_into().expect("8 bytes"))
}

/// Decodes a complete snapshot image.
pub fn decode_snapshot(bytes: &[u8]) -> Result<Snapshot> {
    if bytes.len() < 4 {
        return Err(QlgError::Truncated { expected: HEADER_BYTES, found: bytes.len() as u64 });
    }
    if &bytes[..4] != MAGIC {
        return Err(QlgError::Format(format!("bad magic {:?}, expected \"QLG1\"", String::from_utf8_lossy(&bytes[..4]))));
    }
    if (bytes.len() as u64) < HEADER_BYTES {
        return Err(QlgError::Truncated { expected: HEADER_BYTES, found: bytes.len() as u64 });
    }
    let dims = [u64_at(bytes, 4), u64_at(bytes, 12), u64_at(bytes, 20)];
    let sites = dims
        .iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d))
        .and_then(|s| s.checked_mul(SITE_BYTES))
        .and_then(|b| b.checked_add(HEADER_BYTES))
        .filter(|&total| usize::try_from(total).is_ok())
        .ok_or_else(|| QlgError::Format(format!("grid dimensions {dims:?} overflow")))?;
    let expected = sites;
    if bytes.len() as u64 != expected {
        if (bytes.len() as u64) < expected {
            return Err(QlgError::Truncated { expected, found: bytes.len() as u64 });
        }
        return Err(QlgError::Format(format!("{} trailing bytes after site data", bytes.len() as u64 - expected)));
    }
    let grid = GridSpec::new(dims[0] as usize, dims[1] as usize, dims[2] as usize)
        .map_err(|e| QlgError::Format(format!("invalid grid in header: {e}")))?;
    let timestep = u64_at(bytes, 28);
    let (g, a, phase_scale) = (f64_at(bytes, 36), f64_at(bytes, 44), f64_at(bytes, 52));
    let body = &bytes[HEADER_BYTES as usize..];
    let data = body
        .chunks_exact(SITE_BYTES as usize)
        .map(|site| {
            let v = |k: usize| f64_at(site, 8 * k);
            [Complex64::new(v(0), v(1)), Complex64::new(v(2), v(3))]
        })
        .collect();
    let field = SpinorField::from_data(grid, data)?;
    Ok(Snapshot { field, timestep, g, a, phase_scale })
}

pub fn load_snapshot(path: &Path) -> Result<Snapshot> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| QlgError::io(path, e))?;
    decode_snapshot(&bytes).map_err(|e| match e {
        QlgError::Format(m) => QlgError::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Sidecar written next to a checkpoint snapshot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub config_hash: String,
    pub step: u64,
    pub snapshot: PathBuf,
}

impl CheckpointMeta {
    pub fn sidecar_path(dir: &Path) -> PathBuf {
        dir.join("checkpoint.meta")
    }

    pub fn snapshot_path(dir: &Path, step: u64) -> PathBuf {
        dir.join(format!("checkpoint_t{step}.qlg"))
    }

    pub fn render(&self) -> String {
        format!(
            "config_hash = {}\nstep = {}\nsnapshot = {}\n",
            self.config_hash,
            self.step,
            self.snapshot.display()
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut hash = None;
        let mut step = None;
        let mut snapshot = None;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: &str| QlgError::Config { line: n + 1, message: format!("checkpoint sidecar: {m}") };
            let (k, v) = line.split_once('=').ok_or_else(|| err("expected key = value"))?;
            match k.trim() {
                "config_hash" => hash = Some(v.trim().to_owned()),
                "step" => step = Some(v.trim().parse::<u64>().map_err(|_| err("bad step"))?),
                "snapshot" => snapshot = Some(PathBuf::from(v.trim())),
                other => return Err(err(&format!("unknown key `{other}`"))),
            }
        }
        match (hash, step, snapshot) {
            (Some(config_hash), Some(step), Some(snapshot)) => Ok(CheckpointMeta { config_hash, step, snapshot }),
            _ => Err(QlgError::Config { line: 0, message: "checkpoint sidecar is incomplete".into() }),
        }
    }

    /// Writes the snapshot first and the sidecar second, so a sidecar always
    /// points at a complete snapshot.
    /// The previous checkpoint snapshot is removed once the new sidecar is in
    /// place.
    pub fn write(dir: &Path, config_hash: &str, snap: &Snapshot) -> Result<Self> {
        let previous = Self::read(dir).ok().flatten();
        let snapshot = Self::snapshot_path(dir, snap.timestep);
        save_snapshot(snap, &snapshot)?;
        let meta = CheckpointMeta { config_hash: config_hash.to_owned(), step: snap.timestep, snapshot };
        let text = meta.render();
        write_atomic(&Self::sidecar_path(dir), |w| w.write_all(text.as_bytes()))?;
        if let Some(old) = previous.filter(|p| p.snapshot != meta.snapshot) {
            let _ = std::fs::remove_file(old.snapshot);
        }
        Ok(meta)
    }

    pub fn read(dir: &Path) -> Result<Option<Self>> {
        let path = Self::sidecar_path(dir);
        match std::fs::read_to_string(&path) {
            Ok(text) => Self::parse(&text).map(Some),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(QlgError::io(path, e)),
        }
    }
}
