//! Little-endian binary container of tagged sections.
//!
//! Layout: magic `JMNT`, `u32` version, `u32` section count, then per section a
//! 4-byte tag, a `u64` payload length and the payload.

use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::adam::{AdamConfig, AdamState};
use super::model::{Architecture, Model};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"JMNT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub sections: Vec<([u8; 4], Vec<u8>)>,
}

fn corrupt(e: impl std::fmt::Display) -> Error {
    Error::Checkpoint(e.to_string())
}

impl Checkpoint {
    pub fn insert(&mut self, tag: [u8; 4], payload: Vec<u8>) {
        self.sections.retain(|(t, _)| *t != tag);
        self.sections.push((tag, payload));
    }

    pub fn get(&self, tag: [u8; 4]) -> Result<&[u8]> {
        self.sections
            .iter()
            .find(|(t, _)| *t == tag)
            .map(|(_, p)| p.as_slice())
            .ok_or_else(|| Error::Checkpoint(format!("missing section {}", String::from_utf8_lossy(&tag))))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.write_u32::<LE>(VERSION).expect("vec write");
        out.write_u32::<LE>(self.sections.len() as u32).expect("vec write");
        for (tag, payload) in &self.sections {
            out.extend_from_slice(tag);
            out.write_u64::<LE>(payload.len() as u64).expect("vec write");
            out.extend_from_slice(payload);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(corrupt)?;
        if magic != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.read_u32::<LE>().map_err(corrupt)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let count = r.read_u32::<LE>().map_err(corrupt)?;
        let mut sections = Vec::new();
        for _ in 0..count {
            let mut tag = [0u8; 4];
            r.read_exact(&mut tag).map_err(corrupt)?;
            let len = r.read_u64::<LE>().map_err(corrupt)? as usize;
            if len > bytes.len() {
                return Err(Error::Checkpoint("section length exceeds file".into()));
            }
            let mut payload = vec![0u8; len];
            r.read_exact(&mut payload).map_err(corrupt)?;
            sections.push((tag, payload));
        }
        if (r.position() as usize) != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Self { sections })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn write_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    out.write_u64::<LE>(xs.len() as u64).expect("vec write");
    for &x in xs {
        out.write_f64::<LE>(x).expect("vec write");
    }
}

fn read_f64s(r: &mut Cursor<&[u8]>) -> Result<Vec<f64>> {
    let n = r.read_u64::<LE>().map_err(corrupt)? as usize;
    if n > r.get_ref().len() / 8 {
        return Err(Error::Checkpoint("array length exceeds section".into()));
    }
    (0..n).map(|_| r.read_f64::<LE>().map_err(corrupt)).collect()
}

fn finish(r: &Cursor<&[u8]>) -> Result<()> {
    if r.position() as usize != r.get_ref().len() {
        return Err(Error::Checkpoint("trailing bytes in section".into()));
    }
    Ok(())
}

/// Architecture descriptor followed by the flat parameters.
pub fn encode_model(model: &Model) -> Vec<u8> {
    let a = model.architecture();
    let mut out = Vec::new();
    out.write_u32::<LE>(a.input as u32).expect("vec write");
    out.write_u32::<LE>(a.stem.unwrap_or(0) as u32).expect("vec write");
    out.write_u32::<LE>(a.blocks as u32).expect("vec write");
    out.write_u32::<LE>(a.block_depth as u32).expect("vec write");
    out.write_u32::<LE>(a.head.len() as u32).expect("vec write");
    for &h in &a.head {
        out.write_u32::<LE>(h as u32).expect("vec write");
    }
    out.write_u32::<LE>(a.output as u32).expect("vec write");
    write_f64s(&mut out, &model.flat_params());
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<Model> {
    let mut r = Cursor::new(bytes);
    let mut u = || r.read_u32::<LE>().map(|x| x as usize).map_err(corrupt);
    let input = u()?;
    let stem = Some(u()?).filter(|&s| s > 0);
    let blocks = u()?;
    let block_depth = u()?;
    let heads = u()?;
    if heads > bytes.len() {
        return Err(Error::Checkpoint("head count exceeds section".into()));
    }
    let head = (0..heads).map(|_| u()).collect::<Result<Vec<_>>>()?;
    let output = u()?;
    let arch = Architecture { input, stem, blocks, block_depth, head, output };
    let mut model = Model::zeros(arch).map_err(corrupt)?;
    let params = read_f64s(&mut r)?;
    finish(&r)?;
    model.set_flat_params(&params).map_err(corrupt)?;
    Ok(model)
}

pub fn encode_adam(state: &AdamState) -> Vec<u8> {
    let mut out = Vec::new();
    let c = state.config;
    for x in [c.learning_rate, c.beta1, c.beta2, c.epsilon] {
        out.write_f64::<LE>(x).expect("vec write");
    }
    out.write_u64::<LE>(state.step).expect("vec write");
    write_f64s(&mut out, &state.m);
    write_f64s(&mut out, &state.v);
    out
}

pub fn decode_adam(bytes: &[u8]) -> Result<AdamState> {
    let mut r = Cursor::new(bytes);
    let mut f = || r.read_f64::<LE>().map_err(corrupt);
    let config = AdamConfig { learning_rate: f()?, beta1: f()?, beta2: f()?, epsilon: f()? };
    let step = r.read_u64::<LE>().map_err(corrupt)?;
    let m = read_f64s(&mut r)?;
    let v = read_f64s(&mut r)?;
    finish(&r)?;
    if m.len() != v.len() {
        return Err(Error::Checkpoint("moment vectors differ in length".into()));
    }
    Ok(AdamState { config, step, m, v })
}
