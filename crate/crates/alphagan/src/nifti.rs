//! Single-file NIfTI-1 (`.nii`, optionally gzip-compressed) reading and
//! writing. The 348-byte header is kept as raw bytes so that untouched
//! fields survive a round trip exactly.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use alphagan_core::volume::VoxelGrid;
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};

pub const HEADER_SIZE: usize = 348;
/// Data offset of a file with no header extensions.
pub const MIN_VOX_OFFSET: usize = 352;
pub const MAGIC: &[u8; 4] = b"n+1\0";

pub const DT_UINT8: i16 = 2;
pub const DT_INT16: i16 = 4;
pub const DT_FLOAT32: i16 = 16;

/// Voxel size in millimetres of the rat-brain acquisitions the presets
/// target, used for files written without a reference.
pub const DEFAULT_VOXEL_SIZE: [f32; 3] = [0.375, 0.375, 0.5];

const OFF_DIM: usize = 40;
const OFF_DATATYPE: usize = 70;
const OFF_BITPIX: usize = 72;
const OFF_PIXDIM: usize = 76;
const OFF_VOX_OFFSET: usize = 108;
const OFF_SCL_SLOPE: usize = 112;
const OFF_SCL_INTER: usize = 116;
const OFF_XYZT_UNITS: usize = 123;
const OFF_QFORM_CODE: usize = 252;
const OFF_SFORM_CODE: usize = 254;
const OFF_QUATERN: usize = 256;
const OFF_SROW: usize = 280;
const OFF_MAGIC: usize = 344;

fn bits_per_voxel(datatype: i16) -> Result<i16> {
    match datatype {
        DT_UINT8 => Ok(8),
        DT_INT16 => Ok(16),
        DT_FLOAT32 => Ok(32),
        other => Err(Error::UnsupportedType(other)),
    }
}

/// The raw little-endian NIfTI-1 header.
#[derive(Clone, PartialEq, Eq)]
pub struct NiftiHeader {
    raw: [u8; HEADER_SIZE],
}

impl std::fmt::Debug for NiftiHeader {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NiftiHeader")
            .field("dim", &self.dim())
            .field("datatype", &self.datatype())
            .field("pixdim", &self.pixdim())
            .field("vox_offset", &self.vox_offset())
            .field("scaling", &self.scaling())
            .field("qform_code", &self.qform_code())
            .field("sform_code", &self.sform_code())
            .finish()
    }
}

impl NiftiHeader {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_SIZE {
            return Err(Error::Format(format!("header needs {HEADER_SIZE} bytes, found {}", bytes.len())));
        }
        let mut raw = [0u8; HEADER_SIZE];
        raw.copy_from_slice(&bytes[..HEADER_SIZE]);
        let h = Self { raw };
        if h.i32_at(0) != HEADER_SIZE as i32 {
            return Err(Error::Format(format!("sizeof_hdr is {}, expected 348 little-endian", h.i32_at(0))));
        }
        if &raw[OFF_MAGIC..OFF_MAGIC + 4] != MAGIC {
            return Err(Error::Format(format!("bad magic {:?}", &raw[OFF_MAGIC..OFF_MAGIC + 4])));
        }
        let dim = h.dim();
        if !(3..=7).contains(&dim[0]) {
            return Err(Error::Format(format!("dim[0] = {} is not a volume", dim[0])));
        }
        if dim[1..=3].iter().any(|&d| d < 1) || dim[4..=dim[0] as usize].iter().any(|&d| d != 1) {
            return Err(Error::Format(format!("dims {:?} do not describe a single 3D volume", &dim[..=dim[0] as usize])));
        }
        let offset = h.vox_offset();
        if !(offset >= MIN_VOX_OFFSET as f32 && offset.fract() == 0.0) {
            return Err(Error::Format(format!("vox_offset {offset} is invalid for a single-file image")));
        }
        Ok(h)
    }

    /// Header of a float32 volume with a diagonal affine of `voxel_size`.
    pub fn canonical(dims: [usize; 3], voxel_size: [f32; 3]) -> Self {
        let mut h = Self { raw: [0u8; HEADER_SIZE] };
        h.put_i32(0, HEADER_SIZE as i32);
        h.raw[38] = b'r';
        h.set_dims(dims);
        h.set_datatype(DT_FLOAT32);
        let mut pixdim = [1.0f32; 8];
        pixdim[1..4].copy_from_slice(&voxel_size);
        for (i, v) in pixdim.iter().enumerate() {
            h.put_f32(OFF_PIXDIM + 4 * i, *v);
        }
        h.put_f32(OFF_VOX_OFFSET, MIN_VOX_OFFSET as f32);
        h.set_scaling(1.0, 0.0);
        h.raw[OFF_XYZT_UNITS] = 2;
        h.put_i16(OFF_QFORM_CODE, 0);
        h.put_i16(OFF_SFORM_CODE, 1);
        for r in 0..3 {
            for c in 0..4 {
                let v = if r == c { voxel_size[r] } else { 0.0 };
                h.put_f32(OFF_SROW + 16 * r + 4 * c, v);
            }
        }
        h.raw[OFF_MAGIC..OFF_MAGIC + 4].copy_from_slice(MAGIC);
        h
    }

    pub fn as_bytes(&self) -> &[u8; HEADER_SIZE] {
        &self.raw
    }

    fn i16_at(&self, off: usize) -> i16 {
        i16::from_le_bytes([self.raw[off], self.raw[off + 1]])
    }

    fn i32_at(&self, off: usize) -> i32 {
        i32::from_le_bytes(self.raw[off..off + 4].try_into().unwrap())
    }

    fn f32_at(&self, off: usize) -> f32 {
        f32::from_le_bytes(self.raw[off..off + 4].try_into().unwrap())
    }

    fn put_i16(&mut self, off: usize, v: i16) {
        self.raw[off..off + 2].copy_from_slice(&v.to_le_bytes());
    }

    fn put_i32(&mut self, off: usize, v: i32) {
        self.raw[off..off + 4].copy_from_slice(&v.to_le_bytes());
    }

    fn put_f32(&mut self, off: usize, v: f32) {
        self.raw[off..off + 4].copy_from_slice(&v.to_le_bytes());
    }

    pub fn dim(&self) -> [i16; 8] {
        core::array::from_fn(|i| self.i16_at(OFF_DIM + 2 * i))
    }

    /// Spatial extents `[nx, ny, nz]`.
    pub fn dims(&self) -> [usize; 3] {
        let d = self.dim();
        [d[1] as usize, d[2] as usize, d[3] as usize]
    }

    pub fn set_dims(&mut self, dims: [usize; 3]) {
        self.put_i16(OFF_DIM, 3);
        for (i, &d) in dims.iter().enumerate() {
            self.put_i16(OFF_DIM + 2 * (i + 1), d as i16);
        }
        for i in 4..8 {
            self.put_i16(OFF_DIM + 2 * i, 1);
        }
    }

    pub fn datatype(&self) -> i16 {
        self.i16_at(OFF_DATATYPE)
    }

    pub fn bitpix(&self) -> i16 {
        self.i16_at(OFF_BITPIX)
    }

    /// Sets the datatype code and the matching bitpix.
    pub fn set_datatype(&mut self, datatype: i16) {
        self.put_i16(OFF_DATATYPE, datatype);
        self.put_i16(OFF_BITPIX, bits_per_voxel(datatype).unwrap_or(0));
    }

    pub fn pixdim(&self) -> [f32; 8] {
        core::array::from_fn(|i| self.f32_at(OFF_PIXDIM + 4 * i))
    }

    pub fn voxel_size(&self) -> [f32; 3] {
        let p = self.pixdim();
        [p[1], p[2], p[3]]
    }

    pub fn vox_offset(&self) -> f32 {
        self.f32_at(OFF_VOX_OFFSET)
    }

    pub fn set_vox_offset(&mut self, offset: usize) {
        self.put_f32(OFF_VOX_OFFSET, offset as f32);
    }

    /// `(scl_slope, scl_inter)` as stored.
    pub fn scaling(&self) -> (f32, f32) {
        (self.f32_at(OFF_SCL_SLOPE), self.f32_at(OFF_SCL_INTER))
    }

    pub fn set_scaling(&mut self, slope: f32, inter: f32) {
        self.put_f32(OFF_SCL_SLOPE, slope);
        self.put_f32(OFF_SCL_INTER, inter);
    }

    /// Scaling applied to stored values; a zero or non-finite slope means
    /// none.
    pub fn effective_scaling(&self) -> Option<(f64, f64)> {
        let (s, i) = self.scaling();
        if s == 0.0 || !s.is_finite() || !i.is_finite() || (s == 1.0 && i == 0.0) {
            None
        } else {
            Some((s as f64, i as f64))
        }
    }

    pub fn qform_code(&self) -> i16 {
        self.i16_at(OFF_QFORM_CODE)
    }

    pub fn sform_code(&self) -> i16 {
        self.i16_at(OFF_SFORM_CODE)
    }

    pub fn srow(&self) -> [[f32; 4]; 3] {
        core::array::from_fn(|r| core::array::from_fn(|c| self.f32_at(OFF_SROW + 16 * r + 4 * c)))
    }

    /// Raw bytes of `srow_x`, `srow_y` and `srow_z`.
    pub fn srow_bytes(&self) -> &[u8] {
        &self.raw[OFF_SROW..OFF_SROW + 48]
    }

    /// Voxel-to-world transform: the sform when set, else the qform, else
    /// a diagonal of the voxel sizes.
    pub fn affine(&self) -> [[f64; 4]; 4] {
        let mut a = [[0.0; 4]; 4];
        a[3][3] = 1.0;
        if self.sform_code() > 0 {
            for (r, row) in self.srow().iter().enumerate() {
                for c in 0..4 {
                    a[r][c] = row[c] as f64;
                }
            }
        } else if self.qform_code() > 0 {
            let q: [f64; 6] = core::array::from_fn(|i| self.f32_at(OFF_QUATERN + 4 * i) as f64);
            let (b, c, d) = (q[0], q[1], q[2]);
            let a0 = (1.0 - (b * b + c * c + d * d)).max(0.0).sqrt();
            let p = self.pixdim();
            let qfac = if p[0] < 0.0 { -1.0 } else { 1.0 };
            let rot = [
                [a0 * a0 + b * b - c * c - d * d, 2.0 * (b * c - a0 * d), 2.0 * (b * d + a0 * c)],
                [2.0 * (b * c + a0 * d), a0 * a0 + c * c - b * b - d * d, 2.0 * (c * d - a0 * b)],
                [2.0 * (b * d - a0 * c), 2.0 * (c * d + a0 * b), a0 * a0 + d * d - c * c - b * b],
            ];
            let scale = [p[1] as f64, p[2] as f64, qfac * p[3] as f64];
            for r in 0..3 {
                for k in 0..3 {
                    a[r][k] = rot[r][k] * scale[k];
                }
                a[r][3] = q[3 + r];
            }
        } else {
            for (i, v) in self.voxel_size().iter().enumerate() {
                a[i][i] = *v as f64;
            }
        }
        a
    }
}

/// A decoded volume with the header and extension bytes it came with.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    pub grid: VoxelGrid,
    pub header: NiftiHeader,
    /// Bytes between the header and the voxel data, kept verbatim.
    pub extension: Vec<u8>,
}

impl Volume {
    /// A float32 volume with the canonical header.
    pub fn new(grid: VoxelGrid) -> Self {
        let header = NiftiHeader::canonical(grid.dims(), DEFAULT_VOXEL_SIZE);
        Self {
            grid,
            header,
            extension: vec![0; MIN_VOX_OFFSET - HEADER_SIZE],
        }
    }

    /// This volume's header retyped to unscaled float32, the form written
    /// for volumes derived from it.
    pub fn derived_header(&self) -> NiftiHeader {
        let mut h = self.header.clone();
        h.set_datatype(DT_FLOAT32);
        h.set_scaling(1.0, 0.0);
        h
    }

    /// A float32 volume carrying this volume's metadata.
    pub fn derive(&self, grid: VoxelGrid) -> Result<Volume> {
        if grid.dims() != self.grid.dims() {
            return Err(alphagan_core::Error::Contract(format!(
                "extents {:?} differ from reference extents {:?}",
                grid.dims(),
                self.grid.dims()
            ))
            .into());
        }
        Ok(Volume {
            grid,
            header: self.derived_header(),
            extension: self.extension.clone(),
        })
    }

    pub fn voxel_size(&self) -> [f32; 3] {
        self.header.voxel_size()
    }

    pub fn affine(&self) -> [[f64; 4]; 4] {
        self.header.affine()
    }
}

fn decode(header: &NiftiHeader, data: &[u8]) -> Result<Vec<f32>> {
    let datatype = header.datatype();
    let bits = bits_per_voxel(datatype)?;
    if header.bitpix() != bits {
        return Err(Error::Format(format!("bitpix {} does not match datatype {datatype}", header.bitpix())));
    }
    let n: usize = header.dims().iter().product();
    let need = n * bits as usize / 8;
    if data.len() < need {
        return Err(Error::Format(format!("voxel data truncated: {} of {need} bytes", data.len())));
    }
    let data = &data[..need];
    let raw: Vec<f32> = match datatype {
        DT_UINT8 => data.iter().map(|&b| b as f32).collect(),
        DT_INT16 => data.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]]) as f32).collect(),
        _ => data.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect(),
    };
    Ok(match header.effective_scaling() {
        Some((s, i)) => raw.into_iter().map(|v| (v as f64 * s + i) as f32).collect(),
        None => raw,
    })
}

fn encode(header: &NiftiHeader, grid: &VoxelGrid) -> Result<Vec<u8>> {
    let datatype = header.datatype();
    bits_per_voxel(datatype)?;
    let (s, i) = header.effective_scaling().unwrap_or((1.0, 0.0));
    let stored = grid.data().iter().map(|&v| (v as f64 - i) / s);
    let mut out = Vec::with_capacity(grid.len() * 4);
    match datatype {
        DT_UINT8 => out.extend(stored.map(|v| v.round().clamp(0.0, 255.0) as u8)),
        DT_INT16 => {
            for v in stored {
                out.extend_from_slice(&(v.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16).to_le_bytes());
            }
        }
        _ => {
            for v in stored {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    Ok(out)
}

fn is_gzip(bytes: &[u8]) -> bool {
    bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b
}

/// Decodes a NIfTI-1 image held in memory.
pub fn parse_nifti(bytes: &[u8]) -> Result<Volume> {
    let inflated;
    let bytes = if is_gzip(bytes) {
        let mut buf = Vec::new();
        GzDecoder::new(bytes)
            .read_to_end(&mut buf)
            .map_err(|e| Error::Format(format!("gzip stream: {e}")))?;
        inflated = buf;
        &inflated[..]
    } else {
        bytes
    };
    let header = NiftiHeader::from_bytes(bytes)?;
    let offset = header.vox_offset() as usize;
    if bytes.len() < offset {
        return Err(Error::Format(format!("file ends at {} before vox_offset {offset}", bytes.len())));
    }
    let voxels = decode(&header, &bytes[offset..])?;
    let grid = VoxelGrid::new(header.dims(), voxels)?;
    Ok(Volume {
        grid,
        extension: bytes[HEADER_SIZE..offset].to_vec(),
        header,
    })
}

pub fn read_nifti(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_nifti(&bytes)
}

/// Serializes a volume. With a reference, the reference header and
/// extensions are reused and only the dims, datatype (float32) and scaling
/// fields are rewritten; extents must match the reference.
pub fn encode_nifti(volume: &Volume, reference: Option<&Volume>) -> Result<Vec<u8>> {
    let (header, extension) = match reference {
        Some(r) => {
            if r.grid.dims() != volume.grid.dims() {
                return Err(alphagan_core::Error::Contract(format!(
                    "volume extents {:?} differ from reference extents {:?}",
                    volume.grid.dims(),
                    r.grid.dims()
                ))
                .into());
            }
            (r.derived_header(), &r.extension)
        }
        None => (volume.header.clone(), &volume.extension),
    };
    if header.dims() != volume.grid.dims() {
        return Err(Error::Format(format!(
            "header dims {:?} differ from grid extents {:?}",
            header.dims(),
            volume.grid.dims()
        )));
    }
    let mut header = header;
    header.set_vox_offset(HEADER_SIZE + extension.len());
    NiftiHeader::from_bytes(header.as_bytes())?;
    let mut out = Vec::with_capacity(HEADER_SIZE + extension.len() + volume.grid.len() * 4);
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(extension);
    out.extend(encode(&header, &volume.grid)?);
    Ok(out)
}

/// Writes a volume; paths ending in `.gz` are gzip-compressed.
pub fn write_nifti(volume: &Volume, path: impl AsRef<Path>, reference: Option<&Volume>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_nifti(volume, reference)?;
    let io = |e| Error::io(path, e);
    if path.extension().is_some_and(|e| e == "gz") {
        let file = fs::File::create(path).map_err(io)?;
        let mut enc = GzEncoder::new(file, Compression::default());
        enc.write_all(&bytes).map_err(io)?;
        enc.finish().map_err(io)?;
    } else {
        fs::write(path, bytes).map_err(io)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(dims: [usize; 3]) -> VoxelGrid {
        VoxelGrid::from_fn(dims, |x, y, z| (x + 3 * y) as f32 - 0.25 * z as f32)
    }

    #[test]
    fn canonical_header_parses() {
        let h = NiftiHeader::canonical([64, 64, 40], DEFAULT_VOXEL_SIZE);
        let back = NiftiHeader::from_bytes(h.as_bytes()).unwrap();
        assert_eq!(back.dims(), [64, 64, 40]);
        assert_eq!(back.dim()[..4], [3, 64, 64, 40]);
        assert_eq!(back.datatype(), DT_FLOAT32);
        assert_eq!(back.bitpix(), 32);
        let a = back.affine();
        assert_eq!([a[0][0], a[1][1], a[2][2], a[3][3]], [0.375, 0.375, 0.5, 1.0]);
        assert_eq!(a[0][1], 0.0);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let v = Volume::new(ramp([8, 8, 8]));
        let mut bytes = encode_nifti(&v, None).unwrap();
        assert!(parse_nifti(&bytes[..bytes.len() - 1]).is_err());
        assert!(parse_nifti(&bytes[..200]).is_err());
        bytes[OFF_MAGIC] = b'x';
        assert!(matches!(parse_nifti(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn unsupported_datatype() {
        let mut v = Volume::new(ramp([8, 8, 8]));
        let mut bytes = encode_nifti(&v, None).unwrap();
        bytes[OFF_DATATYPE..OFF_DATATYPE + 2].copy_from_slice(&64i16.to_le_bytes());
        assert!(matches!(parse_nifti(&bytes), Err(Error::UnsupportedType(64))));
        v.header.put_i16(OFF_DATATYPE, 8);
        assert!(matches!(encode_nifti(&v, None), Err(Error::UnsupportedType(8))));
    }

    #[test]
    fn int16_with_scaling_decodes() {
        let grid = VoxelGrid::from_fn([4, 4, 4], |x, y, z| (x * 16 + y * 4 + z) as f32 * 2.0 - 10.0);
        let mut v = Volume::new(grid.clone());
        v.header.set_datatype(DT_INT16);
        v.header.set_scaling(2.0, -10.0);
        let back = parse_nifti(&encode_nifti(&v, None).unwrap()).unwrap();
        assert_eq!(back.grid, grid);
        assert_eq!(back.header, v.header);
    }

    #[test]
    fn uint8_round_trip() {
        let grid = VoxelGrid::from_fn([5, 6, 7], |x, y, z| ((x * 31 + y * 7 + z) % 256) as f32);
        let mut v = Volume::new(grid.clone());
        v.header.set_datatype(DT_UINT8);
        let back = parse_nifti(&encode_nifti(&v, None).unwrap()).unwrap();
        assert_eq!(back.grid, grid);
    }

    #[test]
    fn qform_affine_of_identity_quaternion() {
        let mut h = NiftiHeader::canonical([4, 4, 4], [2.0, 3.0, 4.0]);
        h.put_i16(OFF_SFORM_CODE, 0);
        h.put_i16(OFF_QFORM_CODE, 1);
        h.put_f32(OFF_QUATERN + 12, 5.0);
        let a = h.affine();
        assert_eq!([a[0][0], a[1][1], a[2][2], a[0][3]], [2.0, 3.0, 4.0, 5.0]);
        h.put_i16(OFF_QFORM_CODE, 0);
        assert_eq!(h.affine()[0][3], 0.0);
    }

    #[test]
    fn extension_bytes_survive() {
        let mut v = Volume::new(ramp([4, 4, 4]));
        v.extension = vec![1, 0, 0, 0, 16, 0, 0, 0, 6, 0, 0, 0, b'h', b'e', b'l', b'l', b'o', 0, 0, 0];
        let bytes = encode_nifti(&v, None).unwrap();
        let back = parse_nifti(&bytes).unwrap();
        assert_eq!(back.extension, v.extension);
        assert_eq!(back.header.vox_offset(), 368.0);
        assert_eq!(encode_nifti(&back, None).unwrap(), bytes);
    }
}
