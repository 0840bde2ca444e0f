//! The `DRESS1` container: a magic header, schema version, component tag and
//! named byte sections. Parameter sections hold an explicit shape table
//! followed by little-endian f64 data.

use std::fs;
use std::path::Path;

use super::array::Array;
use crate::error::{DressError, Result};

pub const MAGIC: &[u8; 6] = b"DRESS1";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Container {
    pub component: String,
    sections: Vec<(String, Vec<u8>)>,
}

impl Container {
    pub fn new(component: impl Into<String>) -> Self {
        Container {
            component: component.into(),
            sections: Vec::new(),
        }
    }

    pub fn put(&mut self, name: &str, bytes: Vec<u8>) {
        match self.sections.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = bytes,
            None => self.sections.push((name.to_owned(), bytes)),
        }
    }

    pub fn put_text(&mut self, name: &str, text: &str) {
        self.put(name, text.as_bytes().to_vec());
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.sections.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    pub fn require(&self, name: &str) -> Result<&[u8]> {
        self.get(name)
            .ok_or_else(|| DressError::Checkpoint(format!("{} checkpoint lacks section `{name}`", self.component)))
    }

    pub fn text(&self, name: &str) -> Result<&str> {
        std::str::from_utf8(self.require(name)?)
            .map_err(|_| DressError::Checkpoint(format!("section `{name}` is not UTF-8")))
    }

    pub fn section_names(&self) -> impl Iterator<Item = &str> {
        self.sections.iter().map(|(n, _)| n.as_str())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&SCHEMA_VERSION.to_le_bytes());
        put_str(&mut out, &self.component);
        out.extend_from_slice(&(self.sections.len() as u32).to_le_bytes());
        for (name, bytes) in &self.sections {
            put_str(&mut out, name);
            out.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
            out.extend_from_slice(bytes);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(DressError::Checkpoint("not a DRESS1 file".into()));
        }
        let version = r.u32()?;
        if version != SCHEMA_VERSION {
            return Err(DressError::Checkpoint(format!(
                "schema version {version}, this build reads {SCHEMA_VERSION}"
            )));
        }
        let component = r.string()?;
        let n = r.u32()?;
        let mut sections = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let name = r.string()?;
            let len = r.u64()? as usize;
            sections.push((name, r.take(len)?.to_vec()));
        }
        if r.pos != bytes.len() {
            return Err(DressError::Checkpoint("trailing bytes after last section".into()));
        }
        Ok(Container { component, sections })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| DressError::io(dir, e))?;
        }
        fs::write(path, self.to_bytes()).map_err(|e| DressError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| DressError::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Load and check the component tag.
    pub fn load_component(path: &Path, component: &str) -> Result<Self> {
        let c = Self::load(path)?;
        if c.component != component {
            return Err(DressError::Checkpoint(format!(
                "{} holds a `{}` checkpoint, expected `{component}`",
                path.display(),
                c.component
            )));
        }
        Ok(c)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| DressError::Checkpoint("truncated data".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| DressError::Checkpoint("name is not UTF-8".into()))
    }
}

/// Shape table then data: `u32 count`, per array `name, u32 ndim, u64 dims…`,
/// then every array's values as little-endian f64 in table order.
pub fn encode_arrays(arrays: &[(String, Array)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
    for (name, a) in arrays {
        put_str(&mut out, name);
        out.extend_from_slice(&(a.shape().len() as u32).to_le_bytes());
        for &d in a.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
    }
    for (_, a) in arrays {
        for v in a.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_arrays(bytes: &[u8]) -> Result<Vec<(String, Array)>> {
    let mut r = Reader { bytes, pos: 0 };
    let n = r.u32()? as usize;
    let mut table = Vec::with_capacity(n);
    for _ in 0..n {
        let name = r.string()?;
        let ndim = r.u32()? as usize;
        let dims = (0..ndim)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        table.push((name, dims));
    }
    let mut out = Vec::with_capacity(n);
    for (name, dims) in table {
        let len: usize = dims.iter().product();
        let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        out.push((name, Array::new(dims, data)?));
    }
    if r.pos != bytes.len() {
        return Err(DressError::Checkpoint("trailing bytes in array section".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn container_round_trip_and_version_check() {
        let mut c = Container::new("seq2seq");
        c.put_text("config", "hidden=8\n");
        c.put(
            "params",
            encode_arrays(&[("w".into(), Array::matrix(1, 2, vec![0.5, -1.0]).unwrap())]),
        );
        let bytes = c.to_bytes();
        assert_eq!(&bytes[..6], b"DRESS1");
        let back = Container::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        let arrays = decode_arrays(back.require("params").unwrap()).unwrap();
        assert_eq!(arrays[0].1.data(), [0.5, -1.0]);

        let mut bad = bytes.clone();
        bad[6] = 9;
        assert!(Container::from_bytes(&bad).is_err());
        assert!(Container::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Container::from_bytes(b"NOTDRS").is_err());
    }

    proptest! {
        #[test]
        fn arrays_round_trip_bit_exact(vals in prop::collection::vec(any::<f64>(), 1..40), rows in 1usize..4) {
            let n = vals.len() / rows * rows;
            prop_assume!(n > 0);
            let a = Array::matrix(rows, n / rows, vals[..n].to_vec()).unwrap();
            let back = decode_arrays(&encode_arrays(&[("a".into(), a.clone())])).unwrap();
            let bits = |x: &Array| x.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&back[0].1), bits(&a));
            prop_assert_eq!(back[0].1.shape(), a.shape());
        }
    }
}
