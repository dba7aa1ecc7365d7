//! On-disk formats: NPY tensors with a `stack.json` sidecar, signal CSVs,
//! sign reports, trigger lists, gate selections and ground truth.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gating::BeatSelection;
use crate::pca::SliceModes;
use crate::phantom::GroundTruth;
use crate::types::{
    validate_stack, RespiratorySignal, SiAxis, SiOrientation, SignReport, SignalStage, SliceSeries, SliceStack,
};

pub const STACK_METADATA: &str = "stack.json";
pub const SIGN_REPORT: &str = "signreport.json";
pub const GROUND_TRUTH: &str = "ground_truth.json";
pub const TRIGGERS: &str = "triggers.csv";
pub const MANIFEST: &str = "manifest.json";

/// Decimal places of every number written to CSV.
pub const CSV_DECIMALS: usize = 9;

const NPY_MAGIC: &[u8] = b"\x93NUMPY";

// ---- NPY ----

/// Writes a C-order little-endian f64 array in NPY 1.0 format.
pub fn write_npy(path: &Path, shape: &[usize], data: &[f64]) -> Result<()> {
    let count: usize = shape.iter().product();
    if count != data.len() {
        return Err(Error::DimensionMismatch(format!(
            "shape {shape:?} holds {count} values, got {}",
            data.len()
        )));
    }
    let dims = match shape {
        [d] => format!("{d},"),
        _ => shape.iter().map(usize::to_string).collect::<Vec<_>>().join(", "),
    };
    let mut header = format!("{{'descr': '<f8', 'fortran_order': False, 'shape': ({dims}), }}");
    // magic(6) + version(2) + length(2) + header, padded to a multiple of 64 and ended by '\n'
    let unpadded = NPY_MAGIC.len() + 4 + header.len() + 1;
    header.push_str(&" ".repeat((64 - unpadded % 64) % 64));
    header.push('\n');

    let mut buf = Vec::with_capacity(10 + header.len() + 8 * data.len());
    buf.extend_from_slice(NPY_MAGIC);
    buf.extend_from_slice(&[1, 0]);
    buf.extend_from_slice(&(header.len() as u16).to_le_bytes());
    buf.extend_from_slice(header.as_bytes());
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads an NPY array as f64. Little-endian `f8` is read verbatim and `f4`
/// is widened; anything else is rejected.
pub fn read_npy(path: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let malformed = |msg: &str| Error::Malformed {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    if bytes.len() < 10 || &bytes[..6] != NPY_MAGIC {
        return Err(malformed("not an NPY file"));
    }
    let (header_len, start) = match bytes[6] {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 if bytes.len() >= 12 => (
            u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
            12,
        ),
        v => return Err(malformed(&format!("unsupported NPY version {v}"))),
    };
    let header = bytes
        .get(start..start + header_len)
        .and_then(|h| std::str::from_utf8(h).ok())
        .ok_or_else(|| malformed("truncated header"))?;
    let descr = header_value(header, "descr")
        .map(|s| s.trim_matches(|c| c == '\'' || c == '"').to_string())
        .ok_or_else(|| malformed("header lacks 'descr'"))?;
    let fortran = header_value(header, "fortran_order").ok_or_else(|| malformed("header lacks 'fortran_order'"))?;
    if fortran.starts_with("True") {
        return Err(Error::UnsupportedDType(format!("{descr} in Fortran order")));
    }
    let shape_src = header_value(header, "shape").ok_or_else(|| malformed("header lacks 'shape'"))?;
    let shape = parse_shape(shape_src).ok_or_else(|| malformed("unreadable shape"))?;
    let count: usize = shape.iter().product();
    let body = &bytes[start + header_len..];
    let data = match descr.as_str() {
        "<f8" => {
            if body.len() != 8 * count {
                return Err(malformed("payload size disagrees with shape"));
            }
            body.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect()
        }
        "<f4" => {
            if body.len() != 4 * count {
                return Err(malformed("payload size disagrees with shape"));
            }
            body.chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("chunk of 4"))))
                .collect()
        }
        other => return Err(Error::UnsupportedDType(other.to_string())),
    };
    Ok((shape, data))
}

/// Text following `'key':` in a Python dict literal.
fn header_value<'a>(header: &'a str, key: &str) -> Option<&'a str> {
    let at = header
        .find(&format!("'{key}'"))
        .or_else(|| header.find(&format!("\"{key}\"")))?;
    let rest = &header[at + key.len() + 2..];
    let colon = rest.find(':')?;
    let value = rest[colon + 1..].trim_start();
    if value.starts_with('(') {
        return Some(&value[..=value.find(')')?]);
    }
    let end = value.find(',').unwrap_or(value.len());
    Some(value[..end].trim())
}

fn parse_shape(src: &str) -> Option<Vec<usize>> {
    src.trim_start_matches('(')
        .trim_end_matches(')')
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().ok())
        .collect()
}

// ---- slice stacks ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceEntry {
    pub slice_index: usize,
    pub file: String,
}

/// Contents of `stack.json`. Slices appear in acquisition order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackMetadata {
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    pub frame_interval: f64,
    pub si_axis: SiAxis,
    pub si_orientation: SiOrientation,
    pub slices: Vec<SliceEntry>,
}

pub fn slice_file_name(slice_index: usize) -> String {
    format!("slice_{slice_index:03}.npy")
}

/// Writes one `H × W × n` tensor per slice plus `stack.json`.
pub fn write_stack(stack: &SliceStack, dir: &Path) -> Result<()> {
    let first = stack.slices().first().ok_or(Error::EmptyStack)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(stack.len());
    for s in stack.slices() {
        let file = slice_file_name(s.slice_index());
        write_npy(&dir.join(&file), &[s.height(), s.width(), s.frames()], s.data())?;
        entries.push(SliceEntry {
            slice_index: s.slice_index(),
            file,
        });
    }
    let meta = StackMetadata {
        height: first.height(),
        width: first.width(),
        frames: first.frames(),
        frame_interval: first.frame_interval(),
        si_axis: first.si_axis(),
        si_orientation: first.si_orientation(),
        slices: entries,
    };
    write_json(&dir.join(STACK_METADATA), &meta)
}

pub fn read_stack_metadata(dir: &Path) -> Result<StackMetadata> {
    let path = dir.join(STACK_METADATA);
    if !path.is_file() {
        return Err(Error::MissingMetadata(format!("{} not found", path.display())));
    }
    read_json(&path)
}

/// Reads and validates a stack written by [`write_stack`] (or by any tool
/// producing the same layout).
pub fn read_stack(dir: &Path) -> Result<SliceStack> {
    let meta = read_stack_metadata(dir)?;
    if let Some(e) = meta.slices.iter().find(|e| !dir.join(&e.file).is_file()) {
        return Err(Error::MissingMetadata(format!(
            "slice {} lists {} which does not exist",
            e.slice_index, e.file
        )));
    }
    let mut slices = Vec::with_capacity(meta.slices.len());
    for e in &meta.slices {
        let path = dir.join(&e.file);
        let (shape, data) = read_npy(&path)?;
        if shape != [meta.height, meta.width, meta.frames] {
            return Err(Error::ShapeMismatchWithMetadata(format!(
                "{} has shape {shape:?}, metadata says [{}, {}, {}]",
                path.display(),
                meta.height,
                meta.width,
                meta.frames
            )));
        }
        slices.push(SliceSeries::new(
            e.slice_index,
            meta.height,
            meta.width,
            meta.frames,
            data,
            meta.frame_interval,
            meta.si_axis,
            meta.si_orientation,
        )?);
    }
    validate_stack(SliceStack::new(slices))
}

// ---- signals ----

pub fn signal_file_name(slice_index: usize) -> String {
    format!("signal_{slice_index:03}.csv")
}

fn fixed(v: f64) -> String {
    let s = format!("{v:.CSV_DECIMALS$}");
    // "-0.000000000" and "0.000000000" must not differ between runs that differ only in the sign of zero
    if s.trim_start_matches('-').bytes().all(|b| b == b'0' || b == b'.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

/// Writes one `frame,time_s,value` CSV per slice and the sign report.
/// Returns the written paths.
pub fn write_signals(
    signals: &[RespiratorySignal],
    report: &SignReport,
    frame_interval: f64,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    if signals.is_empty() {
        return Err(Error::InvalidSeries("no signals to write".into()));
    }
    if let Some(s) = signals.iter().find(|s| s.stage != SignalStage::GloballyCorrected) {
        return Err(Error::WrongStage(s.stage.to_string()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::with_capacity(signals.len() + 1);
    for s in signals {
        let mut out = String::from("frame,time_s,value\n");
        for (i, v) in s.values.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", i + 1, fixed(i as f64 * frame_interval), fixed(*v));
        }
        let path = dir.join(signal_file_name(s.slice_index));
        fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    let path = dir.join(SIGN_REPORT);
    write_json(&path, report)?;
    written.push(path);
    Ok(written)
}

/// Signals read back from CSV; the frame interval is recovered from `time_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSet {
    pub signals: Vec<RespiratorySignal>,
    pub report: SignReport,
    pub frame_interval: Option<f64>,
}

pub fn read_signals(dir: &Path) -> Result<SignalSet> {
    let report_path = dir.join(SIGN_REPORT);
    if !report_path.is_file() {
        return Err(Error::MissingMetadata(format!("{} not found", report_path.display())));
    }
    let report: SignReport = read_json(&report_path)?;
    let mut files: Vec<(usize, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let index = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("signal_"))
            .and_then(|n| n.strip_suffix(".csv"))
            .and_then(|n| n.parse().ok());
        if let Some(i) = index {
            files.push((i, path));
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::MissingMetadata(format!("no signal CSVs in {}", dir.display())));
    }

    let mut signals = Vec::with_capacity(files.len());
    let mut frame_interval = None;
    for (slice_index, path) in files {
        let rows = read_csv(&path, &["frame", "time_s", "value"])?;
        let mut values = Vec::with_capacity(rows.len());
        for (k, row) in rows.iter().enumerate() {
            let frame: usize = parse_field(&path, &row[0])?;
            if frame != k + 1 {
                return Err(Error::Malformed {
                    path: path.to_path_buf(),
                    msg: format!("frame {frame} on data row {}", k + 1),
                });
            }
            if k == 1 && frame_interval.is_none() {
                frame_interval = Some(parse_field::<f64>(&path, &row[1])?);
            }
            values.push(parse_field(&path, &row[2])?);
        }
        signals.push(RespiratorySignal {
            slice_index,
            values,
            stage: SignalStage::GloballyCorrected,
        });
    }
    Ok(SignalSet {
        signals,
        report,
        frame_interval,
    })
}

// ---- eigen dump ----

/// Per-slice `frame,v1,v2,...` CSVs plus `eigenvalues.csv`.
pub fn write_eigen_dump(modes: &[SliceModes], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let k = modes.iter().map(|m| m.basis.k()).max().unwrap_or(0);
    let mut ev = String::from("slice_index");
    for i in 1..=k {
        let _ = write!(ev, ",lambda{i}");
    }
    ev.push('\n');
    for m in modes {
        ev.push_str(&m.slice_index.to_string());
        for l in &m.basis.eigenvalues {
            let _ = write!(ev, ",{}", fixed(*l));
        }
        ev.push('\n');

        let mut out = String::from("frame");
        for i in 1..=m.basis.k() {
            let _ = write!(out, ",v{i}");
        }
        out.push('\n');
        let n = m.basis.vectors.first().map_or(0, Vec::len);
        for f in 0..n {
            out.push_str(&(f + 1).to_string());
            for v in &m.basis.vectors {
                let _ = write!(out, ",{}", fixed(v[f]));
            }
            out.push('\n');
        }
        let path = dir.join(format!("eigen_{:03}.csv", m.slice_index));
        fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    let path = dir.join("eigenvalues.csv");
    fs::write(&path, ev).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}

// ---- triggers ----

/// Writes `slice_index,frame_index` rows, one per trigger.
pub fn write_triggers(triggers: &BTreeMap<usize, Vec<usize>>, path: &Path) -> Result<()> {
    let mut out = String::from("slice_index,frame_index\n");
    for (slice, frames) in triggers {
        for f in frames {
            let _ = writeln!(out, "{slice},{f}");
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Trigger frames per slice index, in file order.
pub fn read_triggers(path: &Path) -> Result<BTreeMap<usize, Vec<usize>>> {
    let rows = read_csv(path, &["slice_index", "frame_index"])?;
    let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for row in rows {
        let slice = parse_field(path, &row[0])?;
        let frame = parse_field(path, &row[1])?;
        map.entry(slice).or_default().push(frame);
    }
    Ok(map)
}

// ---- gating ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateRecord {
    pub slice_index: usize,
    #[serde(rename = "EE")]
    pub ee: [usize; 2],
    #[serde(rename = "EI")]
    pub ei: [usize; 2],
    pub scores: Vec<f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl GateRecord {
    pub fn new(slice_index: usize, sel: &BeatSelection) -> Self {
        Self {
            slice_index,
            ee: [sel.ee.start_frame, sel.ee.end_frame],
            ei: [sel.ei.start_frame, sel.ei.end_frame],
            scores: sel.scores.clone(),
            warnings: sel.warnings.clone(),
        }
    }
}

pub fn gate_file_name(slice_index: usize) -> String {
    format!("gate_{slice_index:03}.json")
}

// ---- ground truth ----

pub fn write_ground_truth(gt: &GroundTruth, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join(GROUND_TRUTH), gt)
}

pub fn read_ground_truth(dir: &Path) -> Result<GroundTruth> {
    let path = dir.join(GROUND_TRUTH);
    if !path.is_file() {
        return Err(Error::MissingMetadata(format!("{} not found", path.display())));
    }
    read_json(&path)
}

// ---- helpers ----

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(value).map_err(|e| Error::Malformed {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    text.push(b'\n');
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&text).map_err(|e| Error::Malformed {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

/// Hex SHA-256 of a file's bytes.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn read_csv(path: &Path, header: &[&str]) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let malformed = |msg: String| Error::Malformed {
        path: path.to_path_buf(),
        msg,
    };
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let first = lines.next().ok_or_else(|| malformed("empty file".into()))?;
    let got: Vec<&str> = first.split(',').map(str::trim).collect();
    if got != header {
        return Err(malformed(format!("header {got:?}, expected {header:?}")));
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            let row: Vec<String> = l.split(',').map(|s| s.trim().to_string()).collect();
            if row.len() == header.len() {
                Ok(row)
            } else {
                Err(malformed(format!("line {} has {} fields", i + 2, row.len())))
            }
        })
        .collect()
}

fn parse_field<T: std::str::FromStr>(path: &Path, s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Malformed {
        path: path.to_path_buf(),
        msg: format!("cannot parse {s:?}"),
    })
}
