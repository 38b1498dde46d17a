//! Point-set file formats.
//!
//! Binary: magic `RCPS`, little-endian u32 `n`, u32 `d`, then `n*d` f64 row-major.
//! CSV: one point per line, comma separated, optional trailing label column.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{Label, PointSet};

const MAGIC: &[u8; 4] = b"RCPS";

pub fn write_binary<W: Write>(s: &PointSet, mut w: W) -> Result<()> {
    let n = u32::try_from(s.len()).map_err(|_| Error::invalid("too many points for u32"))?;
    let d = u32::try_from(s.dim()).map_err(|_| Error::invalid("dimension exceeds u32"))?;
    w.write_all(MAGIC)?;
    w.write_all(&n.to_le_bytes())?;
    w.write_all(&d.to_le_bytes())?;
    for v in s.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<PointSet> {
    let mut head = [0u8; 12];
    r.read_exact(&mut head)
        .map_err(|_| Error::Malformed { line: 0, msg: "truncated header".into() })?;
    if &head[0..4] != MAGIC {
        return Err(Error::Malformed {
            line: 0,
            msg: "bad magic, expected RCPS".into(),
        });
    }
    let n = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    if d == 0 {
        return Err(Error::Malformed { line: 0, msg: "dimension is zero".into() });
    }
    let mut buf = vec![0u8; n * d * 8];
    r.read_exact(&mut buf).map_err(|_| Error::Malformed {
        line: 0,
        msg: format!("payload shorter than {n}x{d} doubles"),
    })?;
    let data = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    PointSet::new(d, data)
}

/// Writes CSV; labels are appended as a final column when present.
pub fn write_csv<W: Write>(s: &PointSet, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    for i in 0..s.len() {
        let row: Vec<String> = s.point(i).iter().map(|v| format!("{v:?}")).collect();
        write!(w, "{}", row.join(","))?;
        if let Some(l) = s.label(i) {
            write!(w, ",{}", l.as_str())?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<PointSet> {
    let reader = BufReader::new(r);
    let mut data = Vec::new();
    let mut labels: Vec<Label> = Vec::new();
    let mut dim: Option<usize> = None;
    let mut labelled: Option<bool> = None;
    for (ln, line) in reader.lines().enumerate() {
        let line_no = ln + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(|f| f.trim()).collect();
        let last = *fields.last().unwrap();
        let (nums, label) = match Label::parse(last) {
            Some(l) => (&fields[..fields.len() - 1], Some(l)),
            None => (&fields[..], None),
        };
        match labelled {
            None => labelled = Some(label.is_some()),
            Some(had) if had != label.is_some() => {
                return Err(Error::Malformed {
                    line: line_no,
                    msg: "label column present on some rows only".into(),
                })
            }
            _ => {}
        }
        if let Some(l) = label {
            labels.push(l);
        }
        match dim {
            None => dim = Some(nums.len()),
            Some(d) if d != nums.len() => {
                return Err(Error::Malformed {
                    line: line_no,
                    msg: format!("expected {d} coordinates, found {}", nums.len()),
                })
            }
            _ => {}
        }
        for f in nums {
            let v: f64 = f.parse().map_err(|_| Error::Malformed {
                line: line_no,
                msg: format!("cannot parse `{f}` as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Malformed {
                    line: line_no,
                    msg: format!("non-finite value `{f}`"),
                });
            }
            data.push(v);
        }
    }
    let d = dim.ok_or(Error::Empty)?;
    if d == 0 {
        return Err(Error::Malformed { line: 1, msg: "no coordinates".into() });
    }
    let s = PointSet::new(d, data)?;
    if labelled == Some(true) {
        s.with_labels(labels)
    } else {
        Ok(s)
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .map(|e| e.eq_ignore_ascii_case("csv"))
        .unwrap_or(false)
}

/// Reads a point set, choosing the format from the extension (`.csv` or binary).
pub fn read_points(path: &Path) -> Result<PointSet> {
    let f = std::fs::File::open(path)?;
    if is_csv(path) {
        read_csv(f)
    } else {
        read_binary(BufReader::new(f))
    }
}

/// Writes a point set, choosing the format from the extension. Binary drops labels.
pub fn write_points(s: &PointSet, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    if is_csv(path) {
        write_csv(s, f)
    } else {
        write_binary(s, BufWriter::new(f))
    }
}
