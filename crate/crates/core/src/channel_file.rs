//! On-disk channel matrices.
//!
//! Binary layout (little endian):
//!
//! ```text
//! magic   [u8; 4]  = b"DMAH"
//! version u32      = 1
//! n       u32      receive elements (rows)
//! k       u32      users (columns)
//! count   u32      number of realizations
//! count × n × k × (re: f32, im: f32), each matrix row-major
//! ```
//!
//! The CSV form is meant for hand-written fixtures: each realization is `n`
//! lines of `k` comma-separated `re+imj` entries, realizations separated by a
//! blank line. Lines starting with `#` are ignored.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::linalg::CMat;

pub const MAGIC: [u8; 4] = *b"DMAH";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelFormat {
    Binary,
    Csv,
}

impl ChannelFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => ChannelFormat::Csv,
            _ => ChannelFormat::Binary,
        }
    }
}

pub fn encode_binary(mats: &[CMat]) -> Result<Vec<u8>> {
    let (n, k) = mats.first().map(|m| m.shape()).unwrap_or((0, 0));
    let mut out = Vec::with_capacity(HEADER_LEN + mats.len() * n * k * 8);
    out.extend_from_slice(&MAGIC);
    for v in [VERSION, n as u32, k as u32, mats.len() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for (idx, m) in mats.iter().enumerate() {
        if m.shape() != (n, k) {
            return Err(Error::dims("channel export", format!("{n}x{k}"), format!("{}x{} (record {idx})", m.nrows(), m.ncols())));
        }
        for r in 0..n {
            for c in 0..k {
                let z = m[(r, c)];
                out.extend_from_slice(&(z.re as f32).to_le_bytes());
                out.extend_from_slice(&(z.im as f32).to_le_bytes());
            }
        }
    }
    Ok(out)
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

fn read_f32(bytes: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

pub fn decode_binary(bytes: &[u8]) -> Result<Vec<CMat>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Parse {
            record: 0,
            message: format!("file is {} bytes, header needs {HEADER_LEN}", bytes.len()),
        });
    }
    if bytes[..4] != MAGIC {
        return Err(Error::Parse {
            record: 0,
            message: "bad magic, expected DMAH".into(),
        });
    }
    let version = read_u32(bytes, 4);
    if version != VERSION {
        return Err(Error::Parse {
            record: 0,
            message: format!("unsupported version {version}"),
        });
    }
    let n = read_u32(bytes, 8) as usize;
    let k = read_u32(bytes, 12) as usize;
    let count = read_u32(bytes, 16) as usize;
    if (n == 0 || k == 0) && count > 0 {
        return Err(Error::Parse {
            record: 0,
            message: format!("{count} records of empty shape {n}x{k}"),
        });
    }
    let record_len = n
        .checked_mul(k)
        .and_then(|e| e.checked_mul(8))
        .ok_or_else(|| Error::Parse {
            record: 0,
            message: format!("record size overflows for {n}x{k}"),
        })?;
    let payload = bytes.len() - HEADER_LEN;
    let expected = record_len.checked_mul(count).ok_or_else(|| Error::Parse {
        record: 0,
        message: "payload size overflows".into(),
    })?;
    if payload != expected {
        let complete = if record_len == 0 { 0 } else { payload / record_len };
        return Err(Error::Parse {
            record: complete.min(count),
            message: format!("payload is {payload} bytes, header implies {expected}"),
        });
    }
    let mut mats = Vec::with_capacity(count);
    for idx in 0..count {
        let base = HEADER_LEN + idx * record_len;
        let mut m = CMat::zeros(n, k);
        for r in 0..n {
            for c in 0..k {
                let at = base + (r * k + c) * 8;
                let re = read_f32(bytes, at);
                let im = read_f32(bytes, at + 4);
                if !re.is_finite() || !im.is_finite() {
                    return Err(Error::Parse {
                        record: idx,
                        message: format!("non-finite entry at ({r}, {c})"),
                    });
                }
                m[(r, c)] = Complex64::new(re as f64, im as f64);
            }
        }
        mats.push(m);
    }
    Ok(mats)
}

/// Parses `re+imj`, `re-imj`, `re`, or `imj` (`i` is accepted for `j`).
pub fn parse_complex(text: &str) -> Option<Complex64> {
    let s = text.trim();
    if s.is_empty() {
        return None;
    }
    let finite = |v: f64| v.is_finite().then_some(v);
    let Some(body) = s.strip_suffix(['j', 'i']) else {
        return finite(s.parse().ok()?).map(|re| Complex64::new(re, 0.0));
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&i| matches!(bytes[i], b'+' | b'-') && !matches!(bytes[i - 1], b'e' | b'E'));
    let imag = |t: &str| -> Option<f64> {
        match t {
            "" | "+" => Some(1.0),
            "-" => Some(-1.0),
            _ => t.parse().ok(),
        }
    };
    match split {
        Some(i) => {
            let re = finite(body[..i].trim().parse().ok()?)?;
            let im = finite(imag(body[i..].trim())?)?;
            Some(Complex64::new(re, im))
        }
        None => Some(Complex64::new(0.0, finite(imag(body.trim())?)?)),
    }
}

pub fn format_complex(z: Complex64) -> String {
    if z.im.is_sign_negative() {
        format!("{}-{}j", z.re, -z.im)
    } else {
        format!("{}+{}j", z.re, z.im)
    }
}

pub fn parse_csv(text: &str) -> Result<Vec<CMat>> {
    let mut blocks: Vec<Vec<Vec<Complex64>>> = Vec::new();
    let mut current: Vec<Vec<Complex64>> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.starts_with('#') {
            continue;
        }
        if line.is_empty() {
            if !current.is_empty() {
                blocks.push(std::mem::take(&mut current));
            }
            continue;
        }
        let record = blocks.len();
        let row = line
            .split(',')
            .enumerate()
            .map(|(col, cell)| {
                parse_complex(cell).ok_or_else(|| Error::Parse {
                    record,
                    message: format!("row {} column {col}: cannot parse `{}` as a complex number", current.len(), cell.trim()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        current.push(row);
    }
    if !current.is_empty() {
        blocks.push(current);
    }
    let Some(first) = blocks.first() else {
        return Ok(Vec::new());
    };
    let (n, k) = (first.len(), first[0].len());
    blocks
        .into_iter()
        .enumerate()
        .map(|(record, rows)| {
            if rows.len() != n || rows.iter().any(|r| r.len() != k) {
                let widths: Vec<usize> = rows.iter().map(Vec::len).collect();
                return Err(Error::Parse {
                    record,
                    message: format!("expected {n} rows of {k} entries, found rows of widths {widths:?}"),
                });
            }
            Ok(CMat::from_fn(n, k, |r, c| rows[r][c]))
        })
        .collect()
}

pub fn encode_csv(mats: &[CMat]) -> String {
    let mut out = String::new();
    for (i, m) in mats.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for r in 0..m.nrows() {
            let row: Vec<String> = (0..m.ncols()).map(|c| format_complex(m[(r, c)])).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
    }
    out
}

/// Decodes either format, sniffing the magic bytes.
pub fn decode_any(bytes: &[u8]) -> Result<Vec<CMat>> {
    if bytes.starts_with(&MAGIC) {
        decode_binary(bytes)
    } else {
        let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
            record: 0,
            message: format!("neither binary channel file nor UTF-8 text: {e}"),
        })?;
        parse_csv(text)
    }
}

pub fn read_channel_matrices(path: &Path, expected: Option<(usize, usize)>) -> Result<Vec<CMat>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mats = decode_any(&bytes)?;
    if let (Some((n, k)), Some(m)) = (expected, mats.first()) {
        if m.shape() != (n, k) {
            return Err(Error::dims(
                "channel import",
                format!("N={n}, K={k}"),
                format!("N'={}, K'={} in {}", m.nrows(), m.ncols(), path.display()),
            ));
        }
    }
    Ok(mats)
}

/// Loads realizations and attaches the layout's receive correlation.
///
/// Imported matrices already carry pathloss and capture; per-user gains are
/// recovered as mean column power divided by the element capture gain.
pub fn import_channel_file(
    path: &Path,
    rx_correlation: &Arc<DMatrix<f64>>,
    users: usize,
    capture_gain: f64,
) -> Result<Vec<ChannelRealization>> {
    let n = rx_correlation.nrows();
    let mats = read_channel_matrices(path, Some((n, users)))?;
    Ok(mats
        .into_iter()
        .map(|h| {
            let gains = h
                .column_iter()
                .map(|c| (c.norm_squared() / (n as f64 * capture_gain)).min(1.0))
                .collect();
            ChannelRealization {
                h,
                rx_correlation: Arc::clone(rx_correlation),
                gains,
            }
        })
        .collect())
}

pub fn export_channel_file(path: &Path, mats: &[CMat], format: ChannelFormat) -> Result<()> {
    let payload = match format {
        ChannelFormat::Binary => encode_binary(mats)?,
        ChannelFormat::Csv => encode_csv(mats).into_bytes(),
    };
    write_atomic(path, &payload)
}

pub(crate) fn write_atomic(path: &Path, payload: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(payload).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mat(n: usize, k: usize, seed: f32) -> CMat {
        CMat::from_fn(n, k, |r, c| {
            Complex64::new((seed + r as f32 * 0.5 - c as f32) as f64, (seed * 0.25 - r as f32) as f64)
        })
    }

    #[test]
    fn complex_literals() {
        assert_eq!(parse_complex("1.5-2e-3j"), Some(Complex64::new(1.5, -2e-3)));
        assert_eq!(parse_complex(" -1-1j "), Some(Complex64::new(-1.0, -1.0)));
        assert_eq!(parse_complex("3"), Some(Complex64::new(3.0, 0.0)));
        assert_eq!(parse_complex("2j"), Some(Complex64::new(0.0, 2.0)));
        assert_eq!(parse_complex("-j"), Some(Complex64::new(0.0, -1.0)));
        assert_eq!(parse_complex("1e-3+4E+2i"), Some(Complex64::new(1e-3, 400.0)));
        assert_eq!(parse_complex("1+j"), Some(Complex64::new(1.0, 1.0)));
        assert_eq!(parse_complex("abc"), None);
        assert_eq!(parse_complex(""), None);
        assert_eq!(parse_complex("nan"), None);
        assert_eq!(parse_complex("j"), Some(Complex64::new(0.0, 1.0)));
    }

    #[test]
    fn hundred_records_in_order() {
        let mats: Vec<CMat> = (0..100).map(|i| mat(3, 2, i as f32)).collect();
        let back = decode_binary(&encode_binary(&mats).unwrap()).unwrap();
        assert_eq!(back.len(), 100);
        assert_eq!(back, mats);
    }

    #[test]
    fn dimension_mismatch_names_both() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.bin");
        export_channel_file(&p, &[mat(3, 2, 1.0)], ChannelFormat::Binary).unwrap();
        let err = read_channel_matrices(&p, Some((4, 2))).unwrap_err().to_string();
        assert!(err.contains("N=4") && err.contains("N'=3"), "{err}");
    }

    #[test]
    fn truncated_binary_reports_record() {
        let bytes = encode_binary(&[mat(2, 2, 0.0), mat(2, 2, 1.0)]).unwrap();
        match decode_binary(&bytes[..bytes.len() - 3]) {
            Err(Error::Parse { record, .. }) => assert_eq!(record, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(decode_binary(b"DMAX\x01\0\0\0").is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(decode_binary(&bad).is_err());
        // empty shape with a huge count must not allocate
        let mut empty = encode_binary(&[]).unwrap();
        empty[16..20].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode_binary(&empty).is_err());
        assert!(decode_binary(&encode_binary(&[]).unwrap()).unwrap().is_empty());
    }

    #[test]
    fn csv_fixture() {
        let text = "# two users\n1+0j,0-1j\n0.5+0.5j,2\n\n1,1\n-1j,3+4j\n";
        let mats = parse_csv(text).unwrap();
        assert_eq!(mats.len(), 2);
        assert_eq!(mats[1][(1, 1)], Complex64::new(3.0, 4.0));
        let bad = "1,1\n1\n";
        match parse_csv(bad) {
            Err(Error::Parse { record, .. }) => assert_eq!(record, 0),
            other => panic!("unexpected {other:?}"),
        }
        let bad = "1,1\n\n1,zz\n";
        match parse_csv(bad) {
            Err(Error::Parse { record, message }) => {
                assert_eq!(record, 1);
                assert!(message.contains("zz"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn file_roundtrip_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let mats = vec![mat(4, 2, 0.5), mat(4, 2, -1.0)];
        for (name, fmt) in [("a.bin", ChannelFormat::Binary), ("a.csv", ChannelFormat::Csv)] {
            let p = dir.path().join(name);
            assert_eq!(ChannelFormat::from_path(&p), fmt);
            export_channel_file(&p, &mats, fmt).unwrap();
            assert_eq!(read_channel_matrices(&p, Some((4, 2))).unwrap(), mats);
        }
    }

    fn f32_mats() -> impl Strategy<Value = Vec<CMat>> {
        (1usize..6, 1usize..4, 0usize..5).prop_flat_map(|(n, k, count)| {
            prop::collection::vec(prop::collection::vec((-1e6f32..1e6, -1e6f32..1e6), n * k), count).prop_map(
                move |recs| {
                    recs.into_iter()
                        .map(|v| CMat::from_fn(n, k, |r, c| {
                            let (re, im) = v[r * k + c];
                            Complex64::new(re as f64, im as f64)
                        }))
                        .collect()
                },
            )
        })
    }

    proptest! {
        #[test]
        fn binary_export_import_identity(mats in f32_mats()) {
            let back = decode_binary(&encode_binary(&mats).unwrap()).unwrap();
            prop_assert_eq!(back, mats);
        }

        #[test]
        fn csv_export_import_identity(mats in f32_mats()) {
            let back = parse_csv(&encode_csv(&mats)).unwrap();
            prop_assert_eq!(back, mats);
        }

        #[test]
        fn decoder_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..128)) {
            let _ = decode_any(&bytes);
        }
    }
}
