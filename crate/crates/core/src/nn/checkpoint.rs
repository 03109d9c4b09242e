use std::io::{Read, Write};
use std::path::Path;

use super::arch::ArchitectureId;
use super::network::Network;
use crate::error::{Error, Result};
use crate::image::Shape;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"AKCP";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Frozen copy of a network's parameters after `epoch` epochs of training.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub epoch: u32,
    pub params: Vec<f64>,
    /// `None` for networks assembled from an explicit layer list.
    pub arch: Option<ArchitectureId>,
    pub input_shape: Shape,
    pub seed: u64,
}

impl Checkpoint {
    pub fn capture(net: &Network, epoch: u32, seed: u64) -> Self {
        Checkpoint {
            epoch,
            params: net.params().to_vec(),
            arch: net.arch(),
            input_shape: net.input_shape(),
            seed,
        }
    }

    /// Rebuilds the network this checkpoint was taken from.
    pub fn network(&self) -> Result<Network> {
        let arch = self
            .arch
            .ok_or_else(|| Error::Config("checkpoint has no architecture id".into()))?;
        let mut net = Network::build(arch, self.input_shape, self.seed)?;
        net.set_params(&self.params)?;
        Ok(net)
    }

    /// Copies the parameters into a network with the same layer structure.
    pub fn load_into(&self, net: &mut Network) -> Result<()> {
        net.set_params(&self.params)
    }

    /// Architecture string stored in the file header: the architecture id,
    /// the input shape and the training seed, `;`-separated.
    fn descriptor(&self) -> Result<String> {
        let arch = self
            .arch
            .ok_or_else(|| Error::Config("cannot serialize a checkpoint without an architecture id".into()))?;
        Ok(format!("{arch};input={};seed={}", self.input_shape, self.seed))
    }

    fn parse_descriptor(s: &str) -> Result<(ArchitectureId, Shape, u64)> {
        let mut parts = s.split(';');
        let arch = parts.next().unwrap_or_default().parse()?;
        let (mut shape, mut seed) = (None, None);
        for part in parts {
            match part.split_once('=') {
                Some(("input", v)) => shape = Some(v.parse()?),
                Some(("seed", v)) => {
                    seed = Some(v.parse().map_err(|_| Error::Config(format!("bad seed `{v}`")))?)
                }
                _ => return Err(Error::Config(format!("bad checkpoint descriptor field `{part}`"))),
            }
        }
        match (shape, seed) {
            (Some(shape), Some(seed)) => Ok((arch, shape, seed)),
            _ => Err(Error::Config(format!("checkpoint descriptor `{s}` lacks input or seed"))),
        }
    }

    /// `AKCP`, version (u32), descriptor (u32 length + UTF-8), epoch (u32),
    /// parameter count (u64), parameters as f64. Integers and floats are
    /// little-endian.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let desc = self.descriptor()?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(desc.len() as u32).to_le_bytes())?;
        w.write_all(desc.as_bytes())?;
        w.write_all(&self.epoch.to_le_bytes())?;
        w.write_all(&(self.params.len() as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.params.len() * 8);
        for p in &self.params {
            buf.extend_from_slice(&p.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cur = Cursor::new(&bytes);
        if cur.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::format(0, "not a checkpoint file (bad magic)"));
        }
        let version = cur.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(4, format!("unsupported checkpoint version {version}")));
        }
        let len = cur.u32()? as usize;
        let at = cur.pos;
        let desc = std::str::from_utf8(cur.take(len)?)
            .map_err(|_| Error::format(at as u64, "architecture id is not UTF-8"))?;
        let (arch, input_shape, seed) = Self::parse_descriptor(desc)?;
        let epoch = cur.u32()?;
        let count_at = cur.pos;
        let count = cur.u64()? as usize;
        let expected = arch.param_count(input_shape)?;
        if count != expected {
            return Err(Error::format(
                count_at as u64,
                format!("{arch} on {input_shape} has {expected} parameters, file declares {count}"),
            ));
        }
        let params = cur
            .take(count.checked_mul(8).ok_or_else(|| Error::format(count_at as u64, "count overflow"))?)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if cur.pos != bytes.len() {
            return Err(Error::format(cur.pos as u64, "trailing bytes after parameters"));
        }
        Ok(Checkpoint {
            epoch,
            params,
            arch: Some(arch),
            input_shape,
            seed,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Bounds-checked little-endian reader over a byte slice.
pub(crate) struct Cursor<'a> {
    bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::format(self.bytes.len() as u64, format!("truncated: needed {n} bytes at offset {}", self.pos))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn is_done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}
