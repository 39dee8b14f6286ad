//! Little-endian binary containers.
//!
//! Stack (`BPST`): magic, u32 ISX, u32 ISY, u32 count, `count × 12` f64 matrix
//! coefficients in `a[0..12]` order, then `count · ISY · ISX` f32 pixels,
//! row-major, one image after the other.
//!
//! Volume (`BPVL`): magic, u32 L, then `L³` f32 voxels, x fastest, then y, then z.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use super::ProjectionStack;
use crate::error::{Error, Result};
use crate::geometry::{ProjectionMatrix, VoxelGrid};
use crate::kernel::Volume;
use crate::scalar::Real;

pub const STACK_MAGIC: &[u8; 4] = b"BPST";
pub const VOLUME_MAGIC: &[u8; 4] = b"BPVL";

const CHUNK_VALUES: usize = 1 << 16;

/// Reader that remembers the byte offset for error reports.
pub(crate) struct TrackedReader {
    path: PathBuf,
    inner: BufReader<File>,
    offset: u64,
    len: u64,
}

impl TrackedReader {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
        Ok(TrackedReader {
            path: path.to_path_buf(),
            inner: BufReader::with_capacity(1 << 20, file),
            offset: 0,
            len,
        })
    }

    pub fn format_error(&self, offset: u64, message: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.clone(),
            offset,
            message: message.into(),
        }
    }

    pub fn read_bytes(&mut self, buf: &mut [u8]) -> Result<()> {
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => Err(self.format_error(self.offset, "truncated file")),
            Err(e) => Err(Error::io(&self.path, e)),
        }
    }

    pub fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let mut m = [0u8; 4];
        self.read_bytes(&mut m)?;
        if &m != magic {
            return Err(self.format_error(
                0,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(&m),
                    String::from_utf8_lossy(magic)
                ),
            ));
        }
        Ok(())
    }

    pub fn read_u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_bytes(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    /// Fails early if the file cannot hold `payload` more bytes.
    pub fn require_remaining(&self, payload: u64) -> Result<()> {
        let expected = self.offset + payload;
        if self.len < expected {
            return Err(self.format_error(
                self.len,
                format!("truncated file: header requires {expected} bytes, file has {}", self.len),
            ));
        }
        if self.len > expected {
            return Err(self.format_error(
                expected,
                format!("{} trailing bytes after payload", self.len - expected),
            ));
        }
        Ok(())
    }

    pub fn read_f64s(&mut self, out: &mut [f64]) -> Result<()> {
        let mut buf = vec![0u8; 8 * out.len().min(CHUNK_VALUES)];
        for chunk in out.chunks_mut(CHUNK_VALUES) {
            let bytes = &mut buf[..8 * chunk.len()];
            self.read_bytes(bytes)?;
            for (v, b) in chunk.iter_mut().zip(bytes.chunks_exact(8)) {
                *v = f64::from_le_bytes(b.try_into().unwrap());
            }
        }
        Ok(())
    }

    pub fn read_f32s(&mut self, out: &mut [f32]) -> Result<()> {
        let mut buf = vec![0u8; 4 * out.len().min(CHUNK_VALUES)];
        for chunk in out.chunks_mut(CHUNK_VALUES) {
            let bytes = &mut buf[..4 * chunk.len()];
            self.read_bytes(bytes)?;
            for (v, b) in chunk.iter_mut().zip(bytes.chunks_exact(4)) {
                *v = f32::from_le_bytes(b.try_into().unwrap());
            }
        }
        Ok(())
    }

    pub fn read_u16s(&mut self, out: &mut [u16]) -> Result<()> {
        let mut buf = vec![0u8; 2 * out.len().min(CHUNK_VALUES)];
        for chunk in out.chunks_mut(CHUNK_VALUES) {
            let bytes = &mut buf[..2 * chunk.len()];
            self.read_bytes(bytes)?;
            for (v, b) in chunk.iter_mut().zip(bytes.chunks_exact(2)) {
                *v = u16::from_le_bytes([b[0], b[1]]);
            }
        }
        Ok(())
    }
}

pub(crate) struct TrackedWriter {
    path: PathBuf,
    inner: BufWriter<File>,
}

impl TrackedWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(TrackedWriter {
            path: path.to_path_buf(),
            inner: BufWriter::with_capacity(1 << 20, file),
        })
    }

    pub fn write_bytes(&mut self, b: &[u8]) -> Result<()> {
        self.inner.write_all(b).map_err(|e| Error::io(&self.path, e))
    }

    pub fn write_u32(&mut self, v: u32) -> Result<()> {
        self.write_bytes(&v.to_le_bytes())
    }

    pub fn write_values<V, const N: usize>(&mut self, values: &[V], to_le: impl Fn(V) -> [u8; N]) -> Result<()>
    where
        V: Copy,
    {
        let mut buf = Vec::with_capacity(N * values.len().min(CHUNK_VALUES));
        for chunk in values.chunks(CHUNK_VALUES) {
            buf.clear();
            for &v in chunk {
                buf.extend_from_slice(&to_le(v));
            }
            self.write_bytes(&buf)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub(crate) fn dim_u32(what: &str, v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Capacity(format!("{what} = {v} does not fit in 32 bits")))
}

pub fn write_stack(path: impl AsRef<Path>, stack: &ProjectionStack) -> Result<()> {
    let path = path.as_ref();
    stack.check()?;
    let mut w = TrackedWriter::create(path)?;
    w.write_bytes(STACK_MAGIC)?;
    w.write_u32(dim_u32("ISX", stack.isx)?)?;
    w.write_u32(dim_u32("ISY", stack.isy)?)?;
    w.write_u32(dim_u32("count", stack.count())?)?;
    for m in &stack.matrices {
        w.write_values(&m.a, f64::to_le_bytes)?;
    }
    w.write_values(&stack.pixels, f32::to_le_bytes)?;
    w.finish()
}

pub fn read_stack(path: impl AsRef<Path>) -> Result<ProjectionStack> {
    let path = path.as_ref();
    let mut r = TrackedReader::open(path)?;
    r.expect_magic(STACK_MAGIC)?;
    let isx = r.read_u32()? as u64;
    let isy = r.read_u32()? as u64;
    let count = r.read_u32()? as u64;
    let pixels = isx
        .checked_mul(isy)
        .and_then(|p| p.checked_mul(count))
        .ok_or_else(|| r.format_error(4, "dimension overflow"))?;
    let payload = pixels
        .checked_mul(4)
        .and_then(|p| p.checked_add(count * 96))
        .ok_or_else(|| r.format_error(4, "dimension overflow"))?;
    r.require_remaining(payload)?;
    let pixels = usize::try_from(pixels).map_err(|_| r.format_error(4, "dimension overflow"))?;

    let mut coeffs = vec![0.0f64; count as usize * 12];
    r.read_f64s(&mut coeffs)?;
    let matrices = coeffs
        .chunks_exact(12)
        .map(|c| ProjectionMatrix {
            a: c.try_into().unwrap(),
        })
        .collect();
    let mut data = vec![0.0f32; pixels];
    r.read_f32s(&mut data)?;
    Ok(ProjectionStack {
        isx: isx as usize,
        isy: isy as usize,
        matrices,
        pixels: data,
    })
}

/// Writes a volume, narrowing voxels to f32.
pub fn write_volume<T: Real>(path: impl AsRef<Path>, vol: &Volume<T>) -> Result<()> {
    let path = path.as_ref();
    let mut w = TrackedWriter::create(path)?;
    w.write_bytes(VOLUME_MAGIC)?;
    w.write_u32(dim_u32("L", vol.grid().size())?)?;
    w.write_values(vol.as_slice(), |v: T| v.to_f32().unwrap_or(f32::NAN).to_le_bytes())?;
    w.finish()
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume<f32>> {
    let path = path.as_ref();
    let mut r = TrackedReader::open(path)?;
    r.expect_magic(VOLUME_MAGIC)?;
    let l = r.read_u32()? as u64;
    if l == 0 {
        return Err(Error::Dimension(format!("{}: volume with L = 0", path.display())));
    }
    let n = l
        .checked_mul(l)
        .and_then(|v| v.checked_mul(l))
        .filter(|n| n.checked_mul(4).is_some())
        .ok_or_else(|| r.format_error(4, "dimension overflow"))?;
    let remaining = r.len - r.offset;
    if remaining != n * 4 {
        return Err(Error::Dimension(format!(
            "{}: header says L = {l} ({} payload bytes) but file carries {remaining}",
            path.display(),
            n * 4
        )));
    }
    let grid = VoxelGrid::new(l as usize)?;
    let mut data = vec![0.0f32; n as usize];
    r.read_f32s(&mut data)?;
    Volume::from_vec(grid, data)
}

/// Reads a volume and checks its edge length.
pub fn read_volume_expect(path: impl AsRef<Path>, l: usize) -> Result<Volume<f32>> {
    let vol = read_volume(path.as_ref())?;
    if vol.grid().size() != l {
        return Err(Error::Dimension(format!(
            "{}: expected L = {l}, file has L = {}",
            path.as_ref().display(),
            vol.grid().size()
        )));
    }
    Ok(vol)
}
