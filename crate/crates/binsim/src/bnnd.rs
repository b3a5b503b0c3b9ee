//! BNND labeled-image files.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | field |
//! |-------|-------|
//! | 4 | magic `BNND` |
//! | 1 | version, `1` |
//! | 4 | sample count `N` |
//! | 2 | height `H` |
//! | 2 | width `W` |
//! | 1 | channels `C` |
//! | 1 | class count |
//!
//! followed by `N` records of `H·W·C` pixel bytes (row-major, channels
//! last) and one label byte.

use std::fs;
use std::path::Path;

use binsim_core::dataset::{Dataset, ImageShape, Split};

use crate::error::{FileError, FormatError, Reader};

pub const MAGIC: [u8; 4] = *b"BNND";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 15;

pub fn encode(data: &Dataset) -> Vec<u8> {
    let shape = data.shape();
    let n = u32::try_from(data.len()).expect("sample count fits in u32");
    let mut out = Vec::with_capacity(HEADER_LEN + data.len() * (shape.len() + 1));
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(
        &u16::try_from(shape.height)
            .expect("height fits in u16")
            .to_le_bytes(),
    );
    out.extend_from_slice(
        &u16::try_from(shape.width)
            .expect("width fits in u16")
            .to_le_bytes(),
    );
    out.push(u8::try_from(shape.channels).expect("channels fit in u8"));
    out.push(data.num_classes());
    for i in 0..data.len() {
        out.extend_from_slice(data.sample(i));
        out.push(data.label(i));
    }
    out
}

pub fn decode(bytes: &[u8], split: Split) -> Result<Dataset, FormatError> {
    let mut r = Reader::new(bytes, "BNND");
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(r.error(0, format!("bad magic {magic:02x?}")));
    }
    let version = r.u8("version")?;
    if version != VERSION {
        return Err(r.error(4, format!("unsupported version {version}")));
    }
    let n = r.u32("sample count")? as usize;
    let height = r.u16("height")? as usize;
    let width = r.u16("width")? as usize;
    let channels = r.u8("channels")? as usize;
    let classes = r.u8("class count")?;
    for (value, offset, name) in [
        (height, 9, "height"),
        (width, 11, "width"),
        (channels, 13, "channels"),
    ] {
        if value == 0 {
            return Err(r.error(offset, format!("{name} is zero")));
        }
    }
    let shape = ImageShape::new(height, width, channels);
    let plen = shape.len();
    let need = n
        .checked_mul(plen + 1)
        .ok_or_else(|| r.error(5, "sample count overflows"))?;
    if r.remaining() < need {
        // name the first record that does not fit
        let whole = r.remaining() / (plen + 1);
        return Err(r.error(
            bytes.len(),
            format!("truncated payload: {n} records declared, {whole} complete"),
        ));
    }
    let mut pixels = Vec::with_capacity(n * plen);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        pixels.extend_from_slice(r.take(plen, "pixels")?);
        let at = r.pos();
        let label = r.u8("label")?;
        if label >= classes {
            return Err(r.error(
                at,
                format!("label {label} is not below class count {classes}"),
            ));
        }
        labels.push(label);
    }
    r.finish()?;
    Ok(Dataset::new(shape, classes, pixels, labels, split).expect("validated above"))
}

pub fn load(path: impl AsRef<Path>, split: Split) -> Result<Dataset, FileError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| FileError::io(path, e))?;
    decode(&bytes, split).map_err(|source| FileError::Format {
        path: path.into(),
        source,
    })
}

pub fn save(path: impl AsRef<Path>, data: &Dataset) -> Result<(), FileError> {
    let path = path.as_ref();
    fs::write(path, encode(data)).map_err(|e| FileError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> Vec<u8> {
        let mut b = MAGIC.to_vec();
        b.push(1);
        b.extend_from_slice(&1u32.to_le_bytes());
        b.extend_from_slice(&1u16.to_le_bytes());
        b.extend_from_slice(&1u16.to_le_bytes());
        b.extend_from_slice(&[1, 1, 200, 0]);
        b
    }

    #[test]
    fn minimal_file() {
        let d = decode(&minimal(), Split::Train).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.sample(0), &[200]);
        assert_eq!(d.label(0), 0);
        assert_eq!(encode(&d), minimal());
    }

    #[test]
    fn errors_carry_offsets() {
        let mut b = minimal();
        b[0] = b'X';
        assert_eq!(decode(&b, Split::Train).unwrap_err().offset, 0);

        let b = minimal();
        let e = decode(&b[..b.len() - 1], Split::Train).unwrap_err();
        assert_eq!(e.offset, b.len() - 1);
        let e = decode(&b[..7], Split::Train).unwrap_err();
        assert_eq!(e.offset, 7);

        let mut b = minimal();
        *b.last_mut().unwrap() = 1;
        let e = decode(&b, Split::Train).unwrap_err();
        assert_eq!(e.offset, HEADER_LEN + 1);

        let mut b = minimal();
        b.push(0);
        assert_eq!(decode(&b, Split::Train).unwrap_err().offset, HEADER_LEN + 2);

        let mut b = minimal();
        b[4] = 2;
        assert_eq!(decode(&b, Split::Train).unwrap_err().offset, 4);
    }
}
