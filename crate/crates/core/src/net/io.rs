//! Checkpoint format for network parameters: a self-describing header with
//! the layer shapes followed by raw little-endian doubles, weights before
//! biases, trunk layers first, then the value and advantage heads.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{NetArchitecture, NetParams};

const MAGIC: &[u8; 8] = b"UAVDUELN";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NetIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a network checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint header describes an invalid architecture")]
    InvalidShape,
}

fn write_u32(out: &mut impl Write, value: u32) -> Result<(), NetIoError> {
    out.write_all(&value.to_le_bytes())?;
    Ok(())
}

fn read_u32(input: &mut impl Read) -> Result<u32, NetIoError> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn write_f64_slice(out: &mut impl Write, values: &[f64]) -> Result<(), NetIoError> {
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64_into(input: &mut impl Read, values: &mut [f64]) -> Result<(), NetIoError> {
    let mut buf = [0u8; 8];
    for v in values.iter_mut() {
        input.read_exact(&mut buf)?;
        *v = f64::from_le_bytes(buf);
    }
    Ok(())
}

impl NetParams {
    pub fn save(&self, path: &Path) -> Result<(), NetIoError> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(MAGIC)?;
        write_u32(&mut out, VERSION)?;
        write_u32(&mut out, self.arch.input_dim as u32)?;
        write_u32(&mut out, self.arch.trunk.len() as u32)?;
        for &width in &self.arch.trunk {
            write_u32(&mut out, width as u32)?;
        }
        write_u32(&mut out, self.arch.num_actions as u32)?;
        for layer in self
            .trunk
            .iter()
            .chain([&self.value_head, &self.advantage_head])
        {
            write_f64_slice(&mut out, &layer.weights)?;
            write_f64_slice(&mut out, &layer.biases)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NetIoError> {
        let mut input = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NetIoError::BadMagic);
        }
        let version = read_u32(&mut input)?;
        if version != VERSION {
            return Err(NetIoError::UnsupportedVersion(version));
        }
        let input_dim = read_u32(&mut input)? as usize;
        let trunk_len = read_u32(&mut input)? as usize;
        if trunk_len > 1024 {
            return Err(NetIoError::InvalidShape);
        }
        let mut trunk = Vec::with_capacity(trunk_len);
        for _ in 0..trunk_len {
            trunk.push(read_u32(&mut input)? as usize);
        }
        let num_actions = read_u32(&mut input)? as usize;
        let arch = NetArchitecture::new(input_dim, trunk, num_actions)
            .map_err(|_| NetIoError::InvalidShape)?;
        let mut params = NetParams::zeros(arch).map_err(|_| NetIoError::InvalidShape)?;
        for layer in params
            .trunk
            .iter_mut()
            .chain([&mut params.value_head, &mut params.advantage_head])
        {
            read_f64_into(&mut input, &mut layer.weights)?;
            read_f64_into(&mut input, &mut layer.biases)?;
        }
        Ok(params)
    }
}
