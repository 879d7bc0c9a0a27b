//! Array file formats.
//!
//! Binary layout (`GBL1`), all integers and floats little-endian:
//!
//! ```text
//! b"GBL1" | rank: u32 | dims: rank × u32 | data: prod(dims) × f32 (row-major)
//! ```
//!
//! CSV layout: one header row naming every axis followed by `value`, then one
//! row per element in row-major order, e.g. `subject,time,species,value`.

use std::fmt::Write as _;

use ndarray::{ArrayD, IxDyn};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GBL1";

/// Encode an array of any rank as `GBL1` bytes. Values are narrowed to `f32`.
pub fn encode_binary<T: Copy + Into<f64>>(dims: &[usize], data: &[T]) -> Vec<u8> {
    assert_eq!(dims.iter().product::<usize>(), data.len(), "dims do not match data length");
    let mut out = Vec::with_capacity(8 + 4 * dims.len() + 4 * data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in data {
        out.extend_from_slice(&(v.into() as f32).to_le_bytes());
    }
    out
}

/// Decode `GBL1` bytes into an `f32` array.
pub fn decode_binary(name: &str, bytes: &[u8]) -> Result<ArrayD<f32>> {
    let err = |d: &str| Error::format(name, d);
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(err("missing GBL1 magic"));
    }
    let read_u32 = |at: usize| -> Result<u32> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
            .ok_or_else(|| err("truncated header"))
    };
    let rank = read_u32(4)? as usize;
    let mut dims = Vec::with_capacity(rank);
    for r in 0..rank {
        dims.push(read_u32(8 + 4 * r)? as usize);
    }
    let start = 8 + 4 * rank;
    let count: usize = dims.iter().product();
    if bytes.len() != start + 4 * count {
        return Err(err(&format!(
            "expected {} data bytes, found {}",
            4 * count,
            bytes.len().saturating_sub(start)
        )));
    }
    let data: Vec<f32> = bytes[start..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    ArrayD::from_shape_vec(IxDyn(&dims), data).map_err(|e| err(&e.to_string()))
}

/// Encode an array in long CSV format with the given axis names.
pub fn encode_csv<T: Copy + std::fmt::Display>(axes: &[&str], dims: &[usize], data: &[T]) -> String {
    assert_eq!(axes.len(), dims.len(), "one axis name per dimension");
    assert_eq!(dims.iter().product::<usize>(), data.len(), "dims do not match data length");
    let mut out = String::with_capacity(data.len() * 24);
    for a in axes {
        out.push_str(a);
        out.push(',');
    }
    out.push_str("value\n");
    let mut idx = vec![0usize; dims.len()];
    for v in data {
        for i in &idx {
            let _ = write!(out, "{i},");
        }
        let _ = writeln!(out, "{v}");
        for ax in (0..dims.len()).rev() {
            idx[ax] += 1;
            if idx[ax] < dims[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
    out
}

/// Decode a long CSV array. Rows may appear in any order; the extent of each
/// axis is one more than the largest index seen. Every cell must be present.
pub fn decode_csv(name: &str, text: &str) -> Result<(Vec<String>, ArrayD<f64>)> {
    let err = |d: String| Error::format(name, d);
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| err("empty file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.last() != Some(&"value") {
        return Err(err("last header column must be `value`".into()));
    }
    let rank = cols.len() - 1;
    let axes: Vec<String> = cols[..rank].iter().map(|s| s.to_string()).collect();

    let mut rows: Vec<(Vec<usize>, f64)> = Vec::new();
    let mut dims = vec![0usize; rank];
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != rank + 1 {
            return Err(err(format!("line {}: expected {} fields", ln + 2, rank + 1)));
        }
        let mut idx = Vec::with_capacity(rank);
        for (ax, f) in fields[..rank].iter().enumerate() {
            let i: usize = f
                .trim()
                .parse()
                .map_err(|_| err(format!("line {}: bad index `{f}`", ln + 2)))?;
            dims[ax] = dims[ax].max(i + 1);
            idx.push(i);
        }
        let v: f64 = fields[rank]
            .trim()
            .parse()
            .map_err(|_| err(format!("line {}: bad value `{}`", ln + 2, fields[rank])))?;
        rows.push((idx, v));
    }
    let count: usize = dims.iter().product();
    if rows.len() != count {
        return Err(err(format!("expected {count} cells, found {}", rows.len())));
    }
    let mut arr = ArrayD::<f64>::zeros(IxDyn(&dims));
    for (idx, v) in rows {
        arr[IxDyn(&idx)] = v;
    }
    Ok((axes, arr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn binary_header_layout() {
        let bytes = encode_binary(&[2, 3], &[1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(&bytes[..4], b"GBL1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 3);
        assert_eq!(f32::from_le_bytes(bytes[16..20].try_into().unwrap()), 1.0);
        assert_eq!(bytes.len(), 16 + 24);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut bytes = encode_binary(&[2], &[1.0f32, 2.0]);
        assert!(decode_binary("x", &bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(decode_binary("x", &bytes).is_err());
    }

    #[test]
    fn csv_layout() {
        let text = encode_csv(&["row", "col"], &[2, 2], &[1.0, 2.0, 3.0, 4.5]);
        assert_eq!(text, "row,col,value\n0,0,1\n0,1,2\n1,0,3\n1,1,4.5\n");
    }

    #[test]
    fn csv_missing_cell_rejected() {
        assert!(decode_csv("x", "a,b,value\n0,0,1\n1,1,2\n").is_err());
    }

    proptest! {
        #[test]
        fn both_formats_round_trip(dims in prop::collection::vec(1usize..4, 1..4), seed in 0u64..1000) {
            let n: usize = dims.iter().product();
            let data: Vec<f64> = (0..n).map(|i| ((i as u64 * 2654435761 + seed) % 1000) as f64 / 7.0 - 50.0).collect();
            let bin = decode_binary("p", &encode_binary(&dims, &data)).unwrap();
            let axes: Vec<String> = (0..dims.len()).map(|i| format!("a{i}")).collect();
            let axis_refs: Vec<&str> = axes.iter().map(String::as_str).collect();
            let (names, csv) = decode_csv("p", &encode_csv(&axis_refs, &dims, &data)).unwrap();
            prop_assert_eq!(names, axes);
            prop_assert_eq!(bin.shape(), &dims[..]);
            prop_assert_eq!(csv.shape(), &dims[..]);
            for ((b, c), d) in bin.iter().zip(csv.iter()).zip(&data) {
                prop_assert_eq!(*c, *d);
                prop_assert!(((*b as f64) - d).abs() <= 1e-6 * d.abs().max(1e-30));
            }
        }
    }
}
