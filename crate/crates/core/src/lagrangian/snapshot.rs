//! On-disk field cache.
//!
//! A snapshot is one line of text followed by raw little-endian `f64` data:
//!
//! ```text
//! backmap-snapshot v1 field=<name> dims=<n0>x<n1>x<n2> components=<k> time=<t> hash=<hex>
//! ```
//!
//! Files live at `{root}/{run_id}/{field}_{step}.bin`.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use super::cartesian::{DisplacementField, GridSpec, QField};
use super::reduced::{ReducedGrid, ReducedState};
use crate::error::{Error, Result};

const MAGIC: &str = "backmap-snapshot";
const VERSION: &str = "v1";

/// A decoded snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub field: String,
    /// Node counts; unused trailing dimensions are 1.
    pub dims: [usize; 3],
    pub components: usize,
    pub time: f64,
    pub hash: String,
    pub data: Vec<f64>,
}

impl Snapshot {
    fn header(&self) -> String {
        format!(
            "{MAGIC} {VERSION} field={} dims={}x{}x{} components={} time={:e} hash={}\n",
            self.field, self.dims[0], self.dims[1], self.dims[2], self.components, self.time, self.hash
        )
    }

    pub fn expected_len(&self) -> usize {
        self.dims.iter().product::<usize>() * self.components
    }
}

/// `{root}/{run_id}/{field}_{step}.bin`.
pub fn snapshot_path(root: &Path, run_id: &str, field: &str, step: usize) -> PathBuf {
    root.join(run_id).join(format!("{field}_{step}.bin"))
}

/// Write a snapshot, creating the run directory if needed.
pub fn write_snapshot(path: &Path, snap: &Snapshot) -> Result<()> {
    if snap.data.len() != snap.expected_len() {
        return Err(Error::Snapshot {
            path: path.to_path_buf(),
            reason: format!("payload has {} values, header implies {}", snap.data.len(), snap.expected_len()),
        });
    }
    if snap.field.contains(char::is_whitespace) || snap.hash.contains(char::is_whitespace) {
        return Err(Error::Snapshot { path: path.to_path_buf(), reason: "field and hash must not contain spaces".into() });
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut buf = Vec::with_capacity(snap.data.len() * 8 + 128);
    buf.extend_from_slice(snap.header().as_bytes());
    for v in &snap.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

/// Read and validate a snapshot; errors name the offending file.
pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let bad = |reason: String| Error::Snapshot { path: path.to_path_buf(), reason };
    let mut reader = BufReader::new(fs::File::open(path).map_err(|e| bad(e.to_string()))?);
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line).map_err(|e| bad(e.to_string()))?;
    let line = std::str::from_utf8(&line).map_err(|_| bad("header is not UTF-8".into()))?;
    let mut parts = line.trim_end().split(' ');
    if parts.next() != Some(MAGIC) || parts.next() != Some(VERSION) {
        return Err(bad("missing snapshot header".into()));
    }
    let mut field = None;
    let mut dims = None;
    let mut components = None;
    let mut time = None;
    let mut hash = None;
    for kv in parts {
        let (k, v) = kv.split_once('=').ok_or_else(|| bad(format!("malformed header entry {kv:?}")))?;
        match k {
            "field" => field = Some(v.to_string()),
            "dims" => {
                let d: Vec<usize> = v.split('x').map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| bad(format!("bad dims {v:?}")))?;
                if d.len() != 3 {
                    return Err(bad(format!("dims must have three entries, got {v:?}")));
                }
                dims = Some([d[0], d[1], d[2]]);
            }
            "components" => components = Some(v.parse().map_err(|_| bad(format!("bad component count {v:?}")))?),
            "time" => time = Some(v.parse().map_err(|_| bad(format!("bad time {v:?}")))?),
            "hash" => hash = Some(v.to_string()),
            _ => return Err(bad(format!("unknown header key {k:?}"))),
        }
    }
    let missing = |name: &str| bad(format!("header lacks {name}"));
    let mut snap = Snapshot {
        field: field.ok_or_else(|| missing("field"))?,
        dims: dims.ok_or_else(|| missing("dims"))?,
        components: components.ok_or_else(|| missing("components"))?,
        time: time.ok_or_else(|| missing("time"))?,
        hash: hash.ok_or_else(|| missing("hash"))?,
        data: Vec::new(),
    };
    let mut raw = Vec::new();
    reader.read_to_end(&mut raw).map_err(|e| bad(e.to_string()))?;
    if raw.len() != snap.expected_len() * 8 {
        return Err(bad(format!("payload has {} bytes, header implies {}", raw.len(), snap.expected_len() * 8)));
    }
    snap.data = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
    Ok(snap)
}

impl DisplacementField {
    pub fn to_snapshot(&self, hash: &str) -> Snapshot {
        let n = self.grid.n;
        Snapshot {
            field: "D".into(),
            dims: [n, n, n],
            components: 2,
            time: self.time,
            hash: hash.into(),
            data: self.values.iter().flat_map(|v| v.iter().copied()).collect(),
        }
    }

    pub fn from_snapshot(snap: &Snapshot, grid: GridSpec) -> Result<Self> {
        check_shape(snap, [grid.n, grid.n, grid.n], 2)?;
        Ok(Self { grid, time: snap.time, values: snap.data.chunks_exact(2).map(|c| [c[0], c[1]]).collect() })
    }
}

impl QField {
    pub fn to_snapshot(&self, hash: &str) -> Snapshot {
        let n = self.grid.n;
        Snapshot {
            field: "Q".into(),
            dims: [n, n, n],
            components: 9,
            time: self.time,
            hash: hash.into(),
            data: self.values.iter().flat_map(|v| v.iter().copied()).collect(),
        }
    }

    pub fn from_snapshot(snap: &Snapshot, grid: GridSpec) -> Result<Self> {
        check_shape(snap, [grid.n, grid.n, grid.n], 9)?;
        Ok(Self {
            grid,
            time: snap.time,
            values: snap.data.chunks_exact(9).map(|c| c.try_into().expect("9 values")).collect(),
        })
    }
}

impl ReducedState {
    pub fn to_snapshot(&self, hash: &str) -> Snapshot {
        Snapshot {
            field: "w".into(),
            dims: [self.grid.n_r, self.grid.n_z, 1],
            components: 2,
            time: self.time,
            hash: hash.into(),
            data: self.d.iter().flat_map(|c| [c.re, c.im]).collect(),
        }
    }

    pub fn from_snapshot(snap: &Snapshot, grid: ReducedGrid) -> Result<Self> {
        check_shape(snap, [grid.n_r, grid.n_z, 1], 2)?;
        Ok(Self { grid, time: snap.time, d: snap.data.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect() })
    }
}

fn check_shape(snap: &Snapshot, dims: [usize; 3], components: usize) -> Result<()> {
    if snap.dims != dims || snap.components != components {
        return Err(Error::Snapshot {
            path: PathBuf::from(&snap.field),
            reason: format!(
                "snapshot shape {:?}x{} does not match the grid {:?}x{}",
                snap.dims, snap.components, dims, components
            ),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Snapshot {
        Snapshot {
            field: "D".into(),
            dims: [2, 3, 1],
            components: 2,
            time: 0.125,
            hash: "abc123".into(),
            data: (0..12).map(|k| k as f64 * 0.1 - 0.3).collect(),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = snapshot_path(dir.path(), "run", "D", 7);
        assert!(path.ends_with("run/D_7.bin"));
        let snap = sample();
        write_snapshot(&path, &snap).unwrap();
        assert_eq!(read_snapshot(&path).unwrap(), snap);
    }

    #[test]
    fn corrupted_header_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = snapshot_path(dir.path(), "run", "D", 0);
        write_snapshot(&path, &sample()).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[3] = b'#';
        fs::write(&path, bytes).unwrap();
        let err = read_snapshot(&path).unwrap_err();
        assert!(matches!(&err, Error::Snapshot { path: p, .. } if p == &path));
        assert!(err.to_string().contains("D_0.bin"));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = snapshot_path(dir.path(), "run", "D", 1);
        write_snapshot(&path, &sample()).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(read_snapshot(&path).is_err());
    }
}
