//! Versioned little-endian binary container primitives.
//!
//! All persisted binary artifacts (datasets, gradient features, sample maps,
//! weight snapshots) share the same skeleton: a 4-byte magic, a u32 version,
//! then typed payload sections. Round-trips are bit-exact.

use crate::error::{Error, Result};
use std::io::{Read, Write};

pub struct Writer<W: Write> {
    inner: W,
}

impl<W: Write> Writer<W> {
    pub fn new(mut inner: W, magic: &[u8; 4], version: u32) -> Result<Self> {
        inner.write_all(magic)?;
        inner.write_all(&version.to_le_bytes())?;
        Ok(Writer { inner })
    }

    pub fn put_u64(&mut self, v: u64) -> Result<()> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    pub fn put_f64_slice(&mut self, v: &[f64]) -> Result<()> {
        self.put_u64(v.len() as u64)?;
        for x in v {
            self.inner.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn put_i8_slice(&mut self, v: &[i8]) -> Result<()> {
        self.put_u64(v.len() as u64)?;
        let bytes: Vec<u8> = v.iter().map(|&x| x as u8).collect();
        self.inner.write_all(&bytes)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

pub struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    pub fn new(mut inner: R, magic: &[u8; 4], version: u32) -> Result<Self> {
        let mut m = [0u8; 4];
        inner.read_exact(&mut m)?;
        if &m != magic {
            return Err(Error::Container(format!(
                "bad magic: expected {:?}, got {:?}",
                magic, m
            )));
        }
        let mut v = [0u8; 4];
        inner.read_exact(&mut v)?;
        let got = u32::from_le_bytes(v);
        if got != version {
            return Err(Error::Container(format!("unsupported version {got}, expected {version}")));
        }
        Ok(Reader { inner })
    }

    pub fn get_u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.inner.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    pub fn get_f64_slice(&mut self) -> Result<Vec<f64>> {
        let len = self.get_u64()? as usize;
        let mut buf = vec![0u8; len * 8];
        self.inner.read_exact(&mut buf)?;
        Ok(buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn get_i8_slice(&mut self) -> Result<Vec<i8>> {
        let len = self.get_u64()? as usize;
        let mut buf = vec![0u8; len];
        self.inner.read_exact(&mut buf)?;
        Ok(buf.into_iter().map(|b| b as i8).collect())
    }
}
