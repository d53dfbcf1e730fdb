//! Little-endian byte packing helpers and CRC32 shared by the checkpoint
//! and dataset formats.

use crate::error::{Error, Result};

/// CRC32 (IEEE, reflected polynomial 0xEDB88320).
pub fn crc32(bytes: &[u8]) -> u32 {
    let mut crc = 0xffff_ffffu32;
    for &b in bytes {
        crc ^= b as u32;
        for _ in 0..8 {
            let mask = (crc & 1).wrapping_neg();
            crc = (crc >> 1) ^ (0xedb8_8320 & mask);
        }
    }
    !crc
}

pub fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

pub fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

pub fn put_f32(buf: &mut Vec<u8>, v: f32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

pub fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

/// Cursor over a byte buffer; every read reports truncation as a format
/// error naming the field.
pub struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Format(format!(
                "truncated file while reading {what} ({} bytes left, {n} needed)",
                self.remaining()
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]]))
    }

    pub fn f32(&mut self, what: &str) -> Result<f32> {
        let b = self.take(4, what)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]]))
    }
}

/// Validate magic, version, and trailing CRC; returns the payload between
/// the version field and the CRC.
pub fn open_envelope<'a>(bytes: &'a [u8], magic: &[u8; 8], version: u32) -> Result<&'a [u8]> {
    if bytes.len() < magic.len() + 8 {
        return Err(Error::Format("file too short for header and CRC".into()));
    }
    if &bytes[..8] != magic {
        return Err(Error::Format(format!(
            "bad magic: expected {:?}, got {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&bytes[..8.min(bytes.len())])
        )));
    }
    let body_end = bytes.len() - 4;
    let stored = u32::from_le_bytes([
        bytes[body_end],
        bytes[body_end + 1],
        bytes[body_end + 2],
        bytes[body_end + 3],
    ]);
    let actual = crc32(&bytes[..body_end]);
    if stored != actual {
        return Err(Error::Format(format!(
            "CRC mismatch: stored {stored:#010x}, computed {actual:#010x}"
        )));
    }
    let mut r = Reader::new(&bytes[8..body_end]);
    let v = r.u32("format version")?;
    if v != version {
        return Err(Error::Format(format!(
            "unsupported format version {v}, expected {version}"
        )));
    }
    Ok(&bytes[12..body_end])
}

/// Append the CRC of everything accumulated so far.
pub fn seal_envelope(buf: &mut Vec<u8>) {
    let crc = crc32(buf);
    put_u32(buf, crc);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crc32_known_vector() {
        // Standard test vector for CRC32/IEEE.
        assert_eq!(crc32(b"123456789"), 0xcbf4_3926);
        assert_eq!(crc32(b""), 0);
    }

    #[test]
    fn envelope_roundtrip_and_corruption() {
        let magic = b"TESTMAGI";
        let mut buf = Vec::new();
        buf.extend_from_slice(magic);
        put_u32(&mut buf, 3);
        put_u64(&mut buf, 0xdead_beef);
        seal_envelope(&mut buf);

        let body = open_envelope(&buf, magic, 3).unwrap();
        let mut r = Reader::new(body);
        assert_eq!(r.u64("payload").unwrap(), 0xdead_beef);

        let mut bad = buf.clone();
        bad[10] ^= 1;
        assert!(open_envelope(&bad, magic, 3).is_err());

        let truncated = &buf[..buf.len() - 2];
        assert!(open_envelope(truncated, magic, 3).is_err());
    }
}
