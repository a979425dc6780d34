use std::fs;
use std::path::Path;

use super::{element_count, WeightStore, DTYPE_F32};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LCNW";
pub const FORMAT_VERSION: u32 = 1;

pub fn save_weights(store: &WeightStore, path: impl AsRef<Path>) -> Result<()> {
    let bytes = to_bytes(store)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightStore> {
    let bytes = fs::read(path)?;
    from_bytes(&bytes)
}

pub fn to_bytes(store: &WeightStore) -> Result<Vec<u8>> {
    let count = u32::try_from(store.len())
        .map_err(|_| Error::Usage("too many weight arrays for one file".into()))?;
    let mut out = Vec::with_capacity(12 + store.total_values() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    for (name, array) in store.iter() {
        let name_len = u16::try_from(name.len()).map_err(|_| {
            Error::Usage(format!("weight name '{name}' is longer than 65535 bytes"))
        })?;
        let rank = u8::try_from(array.dims().len())
            .map_err(|_| Error::Usage(format!("weight array '{name}' has rank above 255")))?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(DTYPE_F32);
        out.push(rank);
        for &d in array.dims() {
            let d = u32::try_from(d)
                .map_err(|_| Error::Usage(format!("weight array '{name}' has a dim above u32")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in array.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let remaining = self.bytes.len() - self.pos;
        if remaining < n {
            return Err(Error::format(
                self.pos,
                format!("unexpected end of file reading {what}: need {n} bytes, {remaining} left"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Parses a complete `LCNW` image. Every length is checked against the
/// bytes actually present before anything is allocated for it.
pub fn from_bytes(bytes: &[u8]) -> Result<WeightStore> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::format(
            0,
            format!("bad magic {magic:02x?}, expected {:02x?} (\"LCNW\")", MAGIC),
        ));
    }
    let version_at = r.pos;
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::format(
            version_at,
            format!("unsupported version {version}, expected {FORMAT_VERSION}"),
        ));
    }
    let count = r.u32("array count")?;

    let mut store = WeightStore::new();
    for i in 0..count {
        let header_at = r.pos;
        let name_len = r.u16(&format!("name length of array #{i}"))? as usize;
        let name_at = r.pos;
        let name = std::str::from_utf8(r.take(name_len, &format!("name of array #{i}"))?)
            .map_err(|_| Error::format(name_at, format!("name of array #{i} is not UTF-8")))?
            .to_owned();
        let dtype_at = r.pos;
        let dtype = r.u8(&format!("dtype of '{name}'"))?;
        if dtype != DTYPE_F32 {
            return Err(Error::format(
                dtype_at,
                format!("array '{name}' has unsupported dtype {dtype}"),
            ));
        }
        let rank = r.u8(&format!("rank of '{name}'"))? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32(&format!("dims of '{name}'"))? as usize);
        }
        let payload_at = r.pos;
        let expected = element_count(&dims)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| {
                Error::format(payload_at, format!("array '{name}' dims {dims:?} overflow"))
            })?;
        let available = bytes.len() - payload_at;
        if available < expected {
            return Err(Error::format(
                payload_at,
                format!(
                    "array '{name}' truncated: expected {expected} payload bytes, found {available}"
                ),
            ));
        }
        let payload = r.take(expected, &format!("payload of '{name}'"))?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if store.get(&name).is_some() {
            return Err(Error::format(
                header_at,
                format!("duplicate array name '{name}'"),
            ));
        }
        store.insert(name, dims, data)?;
    }
    if r.pos != bytes.len() {
        return Err(Error::format(
            r.pos,
            format!("{} trailing bytes after last array", bytes.len() - r.pos),
        ));
    }
    Ok(store)
}
