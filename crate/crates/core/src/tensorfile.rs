//! `MDGT` tensor files and the `sizes.txt` companion used to hand kernel
//! arguments to an external loader.
//!
//! Layout: `b"MDGT"`, version `1u8`, rank `u8` (at most 4), `rank` little-endian
//! `u32` dims, then the row-major payload as little-endian `f64`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::interp::Tensor;
use crate::ir::builder::AX_INTERFACE;

pub const MAGIC: &[u8; 4] = b"MDGT";
pub const VERSION: u8 = 1;
pub const MAX_RANK: usize = 4;
pub const SIZES_FILE: &str = "sizes.txt";
pub const EXPECTED_FILE: &str = "expected_wd.t";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FormatError {
    BadMagic,
    UnsupportedVersion(u8),
    RankTooLarge(usize),
    Truncated { expected: usize, found: usize },
    TrailingBytes(usize),
}

impl std::fmt::Display for FormatError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FormatError::BadMagic => write!(f, "bad magic, expected MDGT"),
            FormatError::UnsupportedVersion(v) => write!(f, "unsupported version {v}"),
            FormatError::RankTooLarge(r) => write!(f, "rank {r} exceeds {MAX_RANK}"),
            FormatError::Truncated { expected, found } => write!(f, "truncated: need {expected} bytes, found {found}"),
            FormatError::TrailingBytes(n) => write!(f, "{n} trailing bytes"),
        }
    }
}

impl From<FormatError> for Error {
    fn from(e: FormatError) -> Self {
        Error::Parse { offset: 0, message: format!("tensor file: {e}") }
    }
}

pub fn encode(t: &Tensor) -> Result<Vec<u8>> {
    if t.dims.len() > MAX_RANK {
        return Err(FormatError::RankTooLarge(t.dims.len()).into());
    }
    let mut out = Vec::with_capacity(6 + 4 * t.dims.len() + 8 * t.data.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(t.dims.len() as u8);
    for &d in &t.dims {
        let d = u32::try_from(d).map_err(|_| Error::Contract(format!("dimension {d} does not fit in u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for x in &t.data {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Tensor, FormatError> {
    let need = |n: usize| {
        if bytes.len() < n {
            Err(FormatError::Truncated { expected: n, found: bytes.len() })
        } else {
            Ok(())
        }
    };
    need(4)?;
    if &bytes[..4] != MAGIC {
        return Err(FormatError::BadMagic);
    }
    need(6)?;
    if bytes[4] != VERSION {
        return Err(FormatError::UnsupportedVersion(bytes[4]));
    }
    let rank = bytes[5] as usize;
    if rank > MAX_RANK {
        return Err(FormatError::RankTooLarge(rank));
    }
    let header = 6 + 4 * rank;
    need(header)?;
    let dims: Vec<usize> = bytes[6..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let len: usize = dims.iter().product();
    let total = header + 8 * len;
    need(total)?;
    if bytes.len() > total {
        return Err(FormatError::TrailingBytes(bytes.len() - total));
    }
    let data = bytes[header..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(Tensor { dims, data })
}

pub fn write_tensor(path: &Path, t: &Tensor) -> Result<()> {
    std::fs::write(path, encode(t)?)?;
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path)?;
    decode(&bytes).map_err(|e| Error::Parse { offset: 0, message: format!("{}: {e}", path.display()) })
}

pub fn write_sizes(dir: &Path, nelv: usize, lx: usize) -> Result<()> {
    std::fs::write(dir.join(SIZES_FILE), format!("{nelv} {lx}\n"))?;
    Ok(())
}

pub fn read_sizes(dir: &Path) -> Result<(usize, usize)> {
    let text = std::fs::read_to_string(dir.join(SIZES_FILE))?;
    let nums: Vec<usize> = text
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse { offset: 0, message: format!("{SIZES_FILE}: {e}") })?;
    match nums[..] {
        [nelv, lx] => Ok((nelv, lx)),
        _ => Err(Error::Parse { offset: 0, message: format!("{SIZES_FILE}: expected two integers") }),
    }
}

/// Writes one `<name>.t` per kernel argument, `sizes.txt`, and the expected
/// output as `expected_wd.t`.
pub fn dump_ax_inputs(dir: &Path, arrays: &[(&str, Tensor)], expected: &Tensor) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let field = &arrays.iter().find(|(n, _)| *n == "ud").ok_or_else(|| Error::Binding("no 'ud' array".into()))?.1;
    let (nelv, lx) = (field.dims[0], field.dims[1]);
    for name in AX_INTERFACE {
        let t = &arrays.iter().find(|(n, _)| *n == name).ok_or_else(|| Error::Binding(format!("no '{name}' array")))?.1;
        write_tensor(&dir.join(format!("{name}.t")), t)?;
    }
    write_sizes(dir, nelv, lx)?;
    write_tensor(&dir.join(EXPECTED_FILE), expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_bytes() {
        let t = Tensor { dims: vec![2], data: vec![1.0, -0.5] };
        let b = encode(&t).unwrap();
        assert_eq!(&b[..10], &[b'M', b'D', b'G', b'T', 1, 1, 2, 0, 0, 0]);
        assert_eq!(b.len(), 26);
        assert_eq!(&b[10..18], &1.0f64.to_le_bytes());
        assert_eq!(decode(&b).unwrap(), t);
    }

    #[test]
    fn rejections_are_distinct() {
        let good = encode(&Tensor { dims: vec![1, 2], data: vec![3.0, 4.0] }).unwrap();
        let mut magic = good.clone();
        magic[0] = b'X';
        assert_eq!(decode(&magic), Err(FormatError::BadMagic));
        assert!(matches!(decode(&good[..good.len() - 1]), Err(FormatError::Truncated { .. })));
        let mut rank = good.clone();
        rank[5] = 5;
        assert_eq!(decode(&rank), Err(FormatError::RankTooLarge(5)));
        let rank5 = Tensor { dims: vec![1; 5], data: vec![0.0] };
        assert!(encode(&rank5).is_err());
    }

    #[test]
    fn scalar_has_one_value() {
        let t = Tensor { dims: vec![], data: vec![7.0] };
        assert_eq!(decode(&encode(&t).unwrap()).unwrap(), t);
    }
}
