//! Single-file NIfTI-1 reader/writer (little-endian, optionally gzipped).
//!
//! Geometry fields (qform/sform) are carried through unchanged; only
//! `pixdim[1..=3]` takes part in any computation.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian as LE};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::{voxel_count, Dims, LabelVolume, ProbabilityMap, Spacing, Volume, MAX_CLASS};
use crate::error::{Error, Result};

const HEADER_SIZE: usize = 348;
const VOX_OFFSET: usize = 352;

mod off {
    pub const SIZEOF_HDR: usize = 0;
    pub const DIM: usize = 40;
    pub const DATATYPE: usize = 70;
    pub const BITPIX: usize = 72;
    pub const PIXDIM: usize = 76;
    pub const VOX_OFFSET: usize = 108;
    pub const SCL_SLOPE: usize = 112;
    pub const SCL_INTER: usize = 116;
    pub const XYZT_UNITS: usize = 123;
    pub const DESCRIP: usize = 148;
    pub const QFORM_CODE: usize = 252;
    pub const SFORM_CODE: usize = 254;
    pub const QUATERN_B: usize = 256;
    pub const QOFFSET_X: usize = 268;
    pub const SROW_X: usize = 280;
    pub const MAGIC: usize = 344;
}

/// Voxel storage types this crate reads and writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NiftiDatatype {
    Uint8,
    Int16,
    Uint16,
    Float32,
}

impl NiftiDatatype {
    pub fn code(self) -> i16 {
        match self {
            NiftiDatatype::Uint8 => 2,
            NiftiDatatype::Int16 => 4,
            NiftiDatatype::Float32 => 16,
            NiftiDatatype::Uint16 => 512,
        }
    }

    pub fn from_code(code: i16) -> Option<Self> {
        match code {
            2 => Some(NiftiDatatype::Uint8),
            4 => Some(NiftiDatatype::Int16),
            16 => Some(NiftiDatatype::Float32),
            512 => Some(NiftiDatatype::Uint16),
            _ => None,
        }
    }

    pub fn bytes(self) -> usize {
        match self {
            NiftiDatatype::Uint8 => 1,
            NiftiDatatype::Int16 | NiftiDatatype::Uint16 => 2,
            NiftiDatatype::Float32 => 4,
        }
    }

    fn range(self) -> Option<(f64, f64)> {
        match self {
            NiftiDatatype::Uint8 => Some((0.0, u8::MAX as f64)),
            NiftiDatatype::Int16 => Some((i16::MIN as f64, i16::MAX as f64)),
            NiftiDatatype::Uint16 => Some((0.0, u16::MAX as f64)),
            NiftiDatatype::Float32 => None,
        }
    }
}

/// Orientation metadata preserved verbatim between read and write.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub qform_code: i16,
    pub sform_code: i16,
    pub qfac: f32,
    pub quatern: [f32; 3],
    pub qoffset: [f32; 3],
    pub srow: [[f32; 4]; 3],
    pub xyzt_units: u8,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            qform_code: 0,
            sform_code: 0,
            qfac: 1.0,
            quatern: [0.0; 3],
            qoffset: [0.0; 3],
            srow: [[0.0; 4]; 3],
            // NIFTI_UNITS_MM
            xyzt_units: 2,
        }
    }
}

/// Result of reading a 3D file: labels when the file is a small-valued
/// uint8 grid, intensities otherwise.
#[derive(Debug, Clone, PartialEq)]
pub enum NiftiImage {
    Intensity(Volume),
    Label(LabelVolume),
}

impl NiftiImage {
    pub fn into_volume(self) -> Volume {
        match self {
            NiftiImage::Intensity(v) => v,
            NiftiImage::Label(l) => {
                let data = l.data().iter().map(|&c| c as f32).collect();
                Volume::new(l.dims(), l.spacing(), data)
                    .expect("label grid is a valid intensity grid")
                    .with_geometry(l.geometry().clone())
            }
        }
    }
}

struct Header {
    dim: [i16; 8],
    datatype: NiftiDatatype,
    pixdim: [f32; 8],
    vox_offset: usize,
    scl_slope: f32,
    scl_inter: f32,
    geometry: Geometry,
}

impl Header {
    fn scaling(&self) -> Option<(f64, f64)> {
        if self.scl_slope != 0.0 && self.scl_slope.is_finite() && self.scl_inter.is_finite() {
            Some((self.scl_slope as f64, self.scl_inter as f64))
        } else {
            None
        }
    }

    fn is_identity_scaling(&self) -> bool {
        match self.scaling() {
            None => true,
            Some((s, i)) => s == 1.0 && i == 0.0,
        }
    }

    fn spatial_dims(&self) -> Dims {
        [self.dim[1] as usize, self.dim[2] as usize, self.dim[3] as usize]
    }

    fn spacing(&self) -> Spacing {
        [self.pixdim[1] as f64, self.pixdim[2] as f64, self.pixdim[3] as f64]
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::format(
            "sizeof_hdr",
            format!("file holds only {} bytes, header needs 348", bytes.len()),
        ));
    }
    let sizeof_hdr = LE::read_i32(&bytes[off::SIZEOF_HDR..]);
    if sizeof_hdr != HEADER_SIZE as i32 {
        let hint = if sizeof_hdr.swap_bytes() == HEADER_SIZE as i32 {
            " (big-endian files are not supported)"
        } else {
            ""
        };
        return Err(Error::format(
            "sizeof_hdr",
            format!("expected 348, found {sizeof_hdr}{hint}"),
        ));
    }
    let magic = &bytes[off::MAGIC..off::MAGIC + 4];
    match magic {
        b"n+1\0" => {}
        b"ni1\0" => {
            return Err(Error::UnsupportedType(
                "two-file NIfTI (magic \"ni1\"); only single-file \"n+1\" is supported".into(),
            ))
        }
        other => {
            return Err(Error::format(
                "magic",
                format!("expected \"n+1\\0\", found {other:?}"),
            ))
        }
    }

    let mut dim = [0i16; 8];
    LE::read_i16_into(&bytes[off::DIM..off::DIM + 16], &mut dim);
    if !(1..=7).contains(&dim[0]) {
        return Err(Error::format("dim", format!("dim[0] = {} is not in 1..=7", dim[0])));
    }
    for (k, d) in dim.iter().enumerate().take(dim[0] as usize + 1).skip(1) {
        if *d <= 0 {
            return Err(Error::format("dim", format!("dim[{k}] = {d} must be positive")));
        }
    }

    let code = LE::read_i16(&bytes[off::DATATYPE..]);
    let datatype = NiftiDatatype::from_code(code).ok_or_else(|| {
        Error::UnsupportedType(format!(
            "datatype code {code}; supported: uint8 (2), int16 (4), float32 (16), uint16 (512)"
        ))
    })?;
    let bitpix = LE::read_i16(&bytes[off::BITPIX..]);
    if bitpix as usize != datatype.bytes() * 8 {
        return Err(Error::format(
            "bitpix",
            format!("{bitpix} does not match datatype {datatype:?}"),
        ));
    }

    let mut pixdim = [0f32; 8];
    LE::read_f32_into(&bytes[off::PIXDIM..off::PIXDIM + 32], &mut pixdim);
    for (k, p) in pixdim.iter().enumerate().take(4).skip(1) {
        if !(p.is_finite() && *p > 0.0) {
            return Err(Error::format(
                "pixdim",
                format!("pixdim[{k}] = {p} must be positive and finite"),
            ));
        }
    }

    let vox_offset = LE::read_f32(&bytes[off::VOX_OFFSET..]);
    if !(vox_offset.is_finite() && vox_offset >= VOX_OFFSET as f32 && vox_offset.fract() == 0.0) {
        return Err(Error::format(
            "vox_offset",
            format!("{vox_offset} must be an integer >= 352"),
        ));
    }

    let mut quatern = [0f32; 3];
    LE::read_f32_into(&bytes[off::QUATERN_B..off::QUATERN_B + 12], &mut quatern);
    let mut qoffset = [0f32; 3];
    LE::read_f32_into(&bytes[off::QOFFSET_X..off::QOFFSET_X + 12], &mut qoffset);
    let mut srow = [[0f32; 4]; 3];
    for (r, row) in srow.iter_mut().enumerate() {
        let start = off::SROW_X + 16 * r;
        LE::read_f32_into(&bytes[start..start + 16], row);
    }

    Ok(Header {
        dim,
        datatype,
        pixdim,
        vox_offset: vox_offset as usize,
        scl_slope: LE::read_f32(&bytes[off::SCL_SLOPE..]),
        scl_inter: LE::read_f32(&bytes[off::SCL_INTER..]),
        geometry: Geometry {
            qform_code: LE::read_i16(&bytes[off::QFORM_CODE..]),
            sform_code: LE::read_i16(&bytes[off::SFORM_CODE..]),
            qfac: pixdim[0],
            quatern,
            qoffset,
            srow,
            xyzt_units: bytes[off::XYZT_UNITS],
        },
    })
}

/// Decodes voxel values (after scl_slope/scl_inter) as f64.
fn decode_values(bytes: &[u8], hdr: &Header, count: usize) -> Result<Vec<f64>> {
    let width = hdr.datatype.bytes();
    let end = hdr.vox_offset + count * width;
    if bytes.len() < end {
        return Err(Error::format(
            "dim",
            format!(
                "header declares {count} voxels ({} bytes from offset {}), file has {}",
                count * width,
                hdr.vox_offset,
                bytes.len()
            ),
        ));
    }
    let raw = &bytes[hdr.vox_offset..end];
    let mut values: Vec<f64> = match hdr.datatype {
        NiftiDatatype::Uint8 => raw.iter().map(|&b| b as f64).collect(),
        NiftiDatatype::Int16 => raw.chunks_exact(2).map(|c| LE::read_i16(c) as f64).collect(),
        NiftiDatatype::Uint16 => raw.chunks_exact(2).map(|c| LE::read_u16(c) as f64).collect(),
        NiftiDatatype::Float32 => raw.chunks_exact(4).map(|c| LE::read_f32(c) as f64).collect(),
    };
    if let Some((slope, inter)) = hdr.scaling() {
        if !hdr.is_identity_scaling() {
            for v in &mut values {
                *v = *v * slope + inter;
            }
        }
    }
    Ok(values)
}

fn maybe_gunzip(bytes: Vec<u8>) -> Result<Vec<u8>> {
    if bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(&bytes[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::format("gzip", e.to_string()))?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    maybe_gunzip(bytes)
}

fn require_3d(hdr: &Header) -> Result<()> {
    if hdr.dim[0] != 3 {
        return Err(Error::Dimensionality {
            expected: 3,
            found: hdr.dim[0],
        });
    }
    Ok(())
}

/// Decodes an in-memory NIfTI file (plain or gzipped).
pub fn decode_nifti(bytes: &[u8]) -> Result<NiftiImage> {
    let bytes = maybe_gunzip(bytes.to_vec())?;
    let hdr = parse_header(&bytes)?;
    require_3d(&hdr)?;
    let dims = hdr.spatial_dims();
    let values = decode_values(&bytes, &hdr, voxel_count(dims))?;
    let spacing = hdr.spacing();

    let small_labels = hdr.datatype == NiftiDatatype::Uint8
        && hdr.is_identity_scaling()
        && values.iter().all(|&v| v <= MAX_CLASS as f64);
    if small_labels {
        let data = values.iter().map(|&v| v as u8).collect();
        Ok(NiftiImage::Label(
            LabelVolume::new(dims, spacing, data)?.with_geometry(hdr.geometry),
        ))
    } else {
        let data = values.iter().map(|&v| v as f32).collect();
        Ok(NiftiImage::Intensity(
            Volume::new(dims, spacing, data)?.with_geometry(hdr.geometry),
        ))
    }
}

/// Reads a 3D NIfTI file, returning labels for uint8 files with values <= 2.
pub fn read_nifti(path: impl AsRef<Path>) -> Result<NiftiImage> {
    let bytes = read_bytes(path.as_ref())?;
    decode_nifti(&bytes)
}

/// Reads any supported 3D file as intensities.
pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    Ok(read_nifti(path)?.into_volume())
}

/// Reads a label file of any supported datatype, normalising to uint8.
/// Every (scaled) value must be an integer in {0, 1, 2}.
pub fn read_label_volume(path: impl AsRef<Path>) -> Result<LabelVolume> {
    let bytes = read_bytes(path.as_ref())?;
    let hdr = parse_header(&bytes)?;
    require_3d(&hdr)?;
    let dims = hdr.spatial_dims();
    let values = decode_values(&bytes, &hdr, voxel_count(dims))?;
    let mut data = Vec::with_capacity(values.len());
    for (i, v) in values.iter().enumerate() {
        if v.fract() != 0.0 || *v < 0.0 || *v > MAX_CLASS as f64 {
            return Err(Error::InvalidVolume(format!(
                "{}: voxel {i} holds {v}, not a class id in {{0, 1, 2}}",
                path.as_ref().display()
            )));
        }
        data.push(*v as u8);
    }
    Ok(LabelVolume::new(dims, hdr.spacing(), data)?.with_geometry(hdr.geometry))
}

/// Reads a 4D float32 file whose last axis indexes classes.
pub fn read_probability_map(path: impl AsRef<Path>) -> Result<ProbabilityMap> {
    let bytes = read_bytes(path.as_ref())?;
    let hdr = parse_header(&bytes)?;
    if hdr.dim[0] != 4 {
        return Err(Error::Dimensionality {
            expected: 4,
            found: hdr.dim[0],
        });
    }
    let dims = hdr.spatial_dims();
    let classes = hdr.dim[4] as usize;
    let values = decode_values(&bytes, &hdr, voxel_count(dims) * classes)?;
    let data = values.into_iter().map(|v| v as f32).collect();
    ProbabilityMap::new(classes, dims, hdr.spacing(), data)
}

fn build_header(
    dims: Dims,
    extra_dim: Option<usize>,
    spacing: Spacing,
    datatype: NiftiDatatype,
    geometry: &Geometry,
) -> Result<Vec<u8>> {
    let mut h = vec![0u8; VOX_OFFSET];
    LE::write_i32(&mut h[off::SIZEOF_HDR..], HEADER_SIZE as i32);
    let mut dim = [1i16; 8];
    dim[0] = if extra_dim.is_some() { 4 } else { 3 };
    for (k, &d) in dims.iter().chain(extra_dim.iter()).enumerate() {
        dim[k + 1] = i16::try_from(d)
            .map_err(|_| Error::Parameter(format!("dimension {d} exceeds the NIfTI-1 limit")))?;
    }
    LE::write_i16_into(&dim, &mut h[off::DIM..off::DIM + 16]);
    LE::write_i16(&mut h[off::DATATYPE..], datatype.code());
    LE::write_i16(&mut h[off::BITPIX..], (datatype.bytes() * 8) as i16);
    let mut pixdim = [1f32; 8];
    pixdim[0] = geometry.qfac;
    for k in 0..3 {
        pixdim[k + 1] = spacing[k] as f32;
    }
    LE::write_f32_into(&pixdim, &mut h[off::PIXDIM..off::PIXDIM + 32]);
    LE::write_f32(&mut h[off::VOX_OFFSET..], VOX_OFFSET as f32);
    LE::write_f32(&mut h[off::SCL_SLOPE..], 1.0);
    LE::write_f32(&mut h[off::SCL_INTER..], 0.0);
    h[off::XYZT_UNITS] = geometry.xyzt_units;
    let descrip = b"segkit";
    h[off::DESCRIP..off::DESCRIP + descrip.len()].copy_from_slice(descrip);
    LE::write_i16(&mut h[off::QFORM_CODE..], geometry.qform_code);
    LE::write_i16(&mut h[off::SFORM_CODE..], geometry.sform_code);
    LE::write_f32_into(&geometry.quatern, &mut h[off::QUATERN_B..off::QUATERN_B + 12]);
    LE::write_f32_into(&geometry.qoffset, &mut h[off::QOFFSET_X..off::QOFFSET_X + 12]);
    for (r, row) in geometry.srow.iter().enumerate() {
        let start = off::SROW_X + 16 * r;
        LE::write_f32_into(row, &mut h[start..start + 16]);
    }
    h[off::MAGIC..off::MAGIC + 4].copy_from_slice(b"n+1\0");
    // bytes 348..352 stay zero: no extensions
    Ok(h)
}

fn encode_values(values: impl Iterator<Item = f64>, datatype: NiftiDatatype, out: &mut Vec<u8>) -> Result<()> {
    let range = datatype.range();
    for (i, v) in values.enumerate() {
        if let Some((lo, hi)) = range {
            if v.fract() != 0.0 || v < lo || v > hi {
                return Err(Error::Parameter(format!(
                    "voxel {i} value {v} is not representable as {datatype:?}"
                )));
            }
        }
        match datatype {
            NiftiDatatype::Uint8 => out.push(v as u8),
            NiftiDatatype::Int16 => out.extend_from_slice(&(v as i16).to_le_bytes()),
            NiftiDatatype::Uint16 => out.extend_from_slice(&(v as u16).to_le_bytes()),
            NiftiDatatype::Float32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
        }
    }
    Ok(())
}

/// Anything that can be stored as a 3D NIfTI file.
pub trait NiftiSource {
    fn default_datatype(&self) -> NiftiDatatype;
    fn nifti_dims(&self) -> Dims;
    fn nifti_spacing(&self) -> Spacing;
    fn nifti_geometry(&self) -> &Geometry;
    fn nifti_values(&self) -> Box<dyn Iterator<Item = f64> + '_>;
}

impl NiftiSource for Volume {
    fn default_datatype(&self) -> NiftiDatatype {
        NiftiDatatype::Float32
    }
    fn nifti_dims(&self) -> Dims {
        self.dims()
    }
    fn nifti_spacing(&self) -> Spacing {
        self.spacing()
    }
    fn nifti_geometry(&self) -> &Geometry {
        self.geometry()
    }
    fn nifti_values(&self) -> Box<dyn Iterator<Item = f64> + '_> {
        Box::new(self.data().iter().map(|&v| v as f64))
    }
}

impl NiftiSource for LabelVolume {
    fn default_datatype(&self) -> NiftiDatatype {
        NiftiDatatype::Uint8
    }
    fn nifti_dims(&self) -> Dims {
        self.dims()
    }
    fn nifti_spacing(&self) -> Spacing {
        self.spacing()
    }
    fn nifti_geometry(&self) -> &Geometry {
        self.geometry()
    }
    fn nifti_values(&self) -> Box<dyn Iterator<Item = f64> + '_> {
        Box::new(self.data().iter().map(|&v| v as f64))
    }
}

impl NiftiSource for NiftiImage {
    fn default_datatype(&self) -> NiftiDatatype {
        match self {
            NiftiImage::Intensity(v) => v.default_datatype(),
            NiftiImage::Label(l) => l.default_datatype(),
        }
    }
    fn nifti_dims(&self) -> Dims {
        match self {
            NiftiImage::Intensity(v) => v.dims(),
            NiftiImage::Label(l) => l.dims(),
        }
    }
    fn nifti_spacing(&self) -> Spacing {
        match self {
            NiftiImage::Intensity(v) => v.spacing(),
            NiftiImage::Label(l) => l.spacing(),
        }
    }
    fn nifti_geometry(&self) -> &Geometry {
        match self {
            NiftiImage::Intensity(v) => v.geometry(),
            NiftiImage::Label(l) => l.geometry(),
        }
    }
    fn nifti_values(&self) -> Box<dyn Iterator<Item = f64> + '_> {
        match self {
            NiftiImage::Intensity(v) => v.nifti_values(),
            NiftiImage::Label(l) => l.nifti_values(),
        }
    }
}

/// Uncompressed single-file encoding with the given voxel type.
pub fn encode_nifti_as<S: NiftiSource + ?Sized>(img: &S, datatype: NiftiDatatype) -> Result<Vec<u8>> {
    let mut out = build_header(
        img.nifti_dims(),
        None,
        img.nifti_spacing(),
        datatype,
        img.nifti_geometry(),
    )?;
    encode_values(img.nifti_values(), datatype, &mut out)?;
    Ok(out)
}

/// Uncompressed single-file encoding: float32 for images, uint8 for labels.
pub fn encode_nifti<S: NiftiSource + ?Sized>(img: &S) -> Result<Vec<u8>> {
    encode_nifti_as(img, img.default_datatype())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let gz = path.extension().is_some_and(|e| e == "gz");
    let payload = if gz {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(bytes).map_err(|e| Error::io(path, e))?;
        enc.finish().map_err(|e| Error::io(path, e))?
    } else {
        bytes.to_vec()
    };
    fs::write(path, payload).map_err(|e| Error::io(path, e))
}

/// Writes `img` to `path`; a `.gz` extension selects gzip compression.
pub fn write_nifti<S: NiftiSource + ?Sized>(img: &S, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_nifti(img)?)
}

pub fn write_nifti_as<S: NiftiSource + ?Sized>(
    img: &S,
    datatype: NiftiDatatype,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_bytes(path.as_ref(), &encode_nifti_as(img, datatype)?)
}

/// Writes an arbitrary class-major float field as a 4D file (used for
/// gradients, which are not probabilities).
pub fn write_class_map(
    num_classes: usize,
    dims: Dims,
    spacing: Spacing,
    data: &[f32],
    path: impl AsRef<Path>,
) -> Result<()> {
    if data.len() != num_classes * voxel_count(dims) {
        return Err(Error::Shape(format!(
            "class map holds {} values, expected {num_classes} x {}",
            data.len(),
            voxel_count(dims)
        )));
    }
    let mut out = build_header(
        dims,
        Some(num_classes),
        spacing,
        NiftiDatatype::Float32,
        &Geometry::default(),
    )?;
    encode_values(data.iter().map(|&v| v as f64), NiftiDatatype::Float32, &mut out)?;
    write_bytes(path.as_ref(), &out)
}

pub fn write_probability_map(map: &ProbabilityMap, path: impl AsRef<Path>) -> Result<()> {
    write_class_map(map.num_classes(), map.dims(), map.spacing(), map.data(), path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn float_file(values: &[f32], slope: f32, inter: f32) -> Vec<u8> {
        let vol = Volume::new([2, 2, 2], [1.0; 3], values.to_vec()).unwrap();
        let mut bytes = encode_nifti(&vol).unwrap();
        LE::write_f32(&mut bytes[off::SCL_SLOPE..], slope);
        LE::write_f32(&mut bytes[off::SCL_INTER..], inter);
        bytes
    }

    #[test]
    fn minimal_float_file() {
        let values: Vec<f32> = (0..8).map(|v| v as f32).collect();
        let bytes = float_file(&values, 0.0, 0.0);
        assert_eq!(bytes.len(), 352 + 32);
        match decode_nifti(&bytes).unwrap() {
            NiftiImage::Intensity(v) => {
                assert_eq!(v.dims(), [2, 2, 2]);
                assert_eq!(v.spacing(), [1.0; 3]);
                assert_eq!(v.data(), &values[..]);
            }
            other => panic!("expected intensities, got {other:?}"),
        }
    }

    #[test]
    fn applies_scl_slope_and_inter() {
        let bytes = float_file(&[3.0; 8], 2.0, 1.0);
        let v = decode_nifti(&bytes).unwrap().into_volume();
        assert!(v.data().iter().all(|&x| x == 7.0));
    }

    #[test]
    fn rejects_two_file_magic() {
        let mut bytes = float_file(&[0.0; 8], 0.0, 0.0);
        bytes[off::MAGIC..off::MAGIC + 4].copy_from_slice(b"ni1\0");
        assert!(matches!(decode_nifti(&bytes), Err(Error::UnsupportedType(_))));
    }

    #[test]
    fn names_offending_fields() {
        let good = float_file(&[0.0; 8], 0.0, 0.0);

        let mut b = good.clone();
        LE::write_i32(&mut b[0..], 540);
        assert!(matches!(decode_nifti(&b), Err(Error::Format { field: "sizeof_hdr", .. })));

        let mut b = good.clone();
        b[off::MAGIC..off::MAGIC + 4].copy_from_slice(b"abcd");
        assert!(matches!(decode_nifti(&b), Err(Error::Format { field: "magic", .. })));

        let mut b = good.clone();
        LE::write_f32(&mut b[off::PIXDIM + 8..], -1.0);
        assert!(matches!(decode_nifti(&b), Err(Error::Format { field: "pixdim", .. })));

        let mut b = good.clone();
        LE::write_i16(&mut b[off::BITPIX..], 8);
        assert!(matches!(decode_nifti(&b), Err(Error::Format { field: "bitpix", .. })));

        let mut b = good.clone();
        LE::write_i16(&mut b[off::DATATYPE..], 64);
        assert!(matches!(decode_nifti(&b), Err(Error::UnsupportedType(_))));

        let mut b = good.clone();
        LE::write_i16(&mut b[off::DIM..], 2);
        assert!(matches!(
            decode_nifti(&b),
            Err(Error::Dimensionality { expected: 3, found: 2 })
        ));

        let b = &good[..360];
        assert!(matches!(decode_nifti(b), Err(Error::Format { field: "dim", .. })));
    }

    #[test]
    fn labels_are_detected_and_written_as_uint8() {
        let lbl = LabelVolume::new([2, 1, 2], [0.5, 0.5, 2.0], vec![0, 1, 2, 1]).unwrap();
        let bytes = encode_nifti(&lbl).unwrap();
        assert_eq!(LE::read_i16(&bytes[off::DATATYPE..]), 2);
        assert_eq!(decode_nifti(&bytes).unwrap(), NiftiImage::Label(lbl));
    }

    #[test]
    fn uint8_with_large_values_is_intensity() {
        let vol = Volume::new([2, 1, 1], [1.0; 3], vec![0.0, 200.0]).unwrap();
        let bytes = encode_nifti_as(&vol, NiftiDatatype::Uint8).unwrap();
        assert!(matches!(decode_nifti(&bytes).unwrap(), NiftiImage::Intensity(_)));
    }

    #[test]
    fn int16_labels_normalise_to_uint8() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lbl.nii.gz");
        let lbl = LabelVolume::new([3, 1, 1], [1.0; 3], vec![2, 0, 1]).unwrap();
        write_nifti_as(&lbl, NiftiDatatype::Int16, &path).unwrap();
        assert_eq!(read_label_volume(&path).unwrap(), lbl);
    }

    #[test]
    fn non_representable_values_are_rejected() {
        let vol = Volume::new([2, 1, 1], [1.0; 3], vec![0.5, 1.0]).unwrap();
        assert!(encode_nifti_as(&vol, NiftiDatatype::Int16).is_err());
    }

    #[test]
    fn gzip_and_geometry_survive() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.nii.gz");
        let geometry = Geometry {
            qform_code: 1,
            sform_code: 2,
            qfac: -1.0,
            quatern: [0.1, 0.2, 0.3],
            qoffset: [-90.0, 126.0, -72.0],
            srow: [[0.41, 0.0, 0.0, -90.0], [0.0, 0.41, 0.0, 126.0], [0.0, 0.0, 1.5, -72.0]],
            xyzt_units: 10,
        };
        let vol = Volume::new([2, 1, 1], [0.41, 0.41, 1.5], vec![1.5, -2.0])
            .unwrap()
            .with_geometry(geometry);
        write_nifti(&vol, &path).unwrap();
        let raw = fs::read(&path).unwrap();
        assert_eq!(&raw[..2], &[0x1f, 0x8b]);
        let back = read_volume(&path).unwrap();
        assert_eq!(back.geometry(), vol.geometry());
        assert_eq!(back.data(), vol.data());
        let expect: Vec<f64> = vol.spacing().iter().map(|&s| s as f32 as f64).collect();
        assert_eq!(back.spacing().to_vec(), expect);
    }

    #[test]
    fn probability_map_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.nii");
        let map = ProbabilityMap::new(2, [2, 1, 1], [1.0; 3], vec![0.25, 1.0, 0.75, 0.0]).unwrap();
        write_probability_map(&map, &path).unwrap();
        assert_eq!(read_probability_map(&path).unwrap(), map);

        write_class_map(2, [1, 1, 1], [1.0; 3], &[0.5, 0.3], &path).unwrap();
        assert!(matches!(read_probability_map(&path), Err(Error::InvalidVolume(_))));
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let vol = Volume::filled([1, 1, 1], [1.0; 3], 0.0).unwrap();
        let err = write_nifti(&vol, "/nonexistent-dir/x.nii").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
