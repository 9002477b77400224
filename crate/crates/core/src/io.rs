//! On-disk formats: raw little-endian arrays with JSON sidecars.

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::grid::{Grid3D, Grid3DRaw};
use crate::kernel::{KernelOptions, TruncatedKernelSpectrum};
use crate::observables::DensitySlice;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn f64_bytes(values: impl Iterator<Item = f64>) -> Vec<u8> {
    values.flat_map(|v| v.to_le_bytes()).collect()
}

fn bytes_f64(path: &Path, bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::Format { path: path.into(), msg: format!("{} bytes is not a whole number of f64 values", bytes.len()) });
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn format_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Format { path: path.into(), msg: msg.into() }
}

/// Sidecar of a stored wave function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub shape: [usize; 3],
    /// Box side lengths in μm.
    #[serde(rename = "box")]
    pub box_um: [f64; 3],
    pub units: String,
    pub dtype: String,
    pub endianness: String,
    pub atoms: f64,
    pub sha256: String,
    /// Free-form extras (energy, scattering length, ...).
    #[serde(default)]
    pub meta: serde_json::Map<String, serde_json::Value>,
}

const FIELD_DTYPE: &str = "complex f64 interleaved";

/// Writes `stem.bin` (interleaved re/im, x-major) and `stem.json`.
pub fn write_field(stem: &Path, psi: &ComplexField, meta: serde_json::Map<String, serde_json::Value>) -> Result<FieldHeader> {
    let bytes = f64_bytes(psi.values().iter().flat_map(|c| [c.re, c.im]));
    let g = psi.grid();
    let header = FieldHeader {
        shape: g.points(),
        box_um: g.lengths(),
        units: "psi in sqrt(atoms)/um^1.5, lengths in um".into(),
        dtype: FIELD_DTYPE.into(),
        endianness: "little".into(),
        atoms: psi.atom_number()?,
        sha256: sha256_hex(&bytes),
        meta,
    };
    if let Some(dir) = stem.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(with_ext(stem, "bin"), &bytes)?;
    fs::write(with_ext(stem, "json"), serde_json::to_vec_pretty(&header)?)?;
    Ok(header)
}

/// Reads a field written by [`write_field`]; `grid` must match the sidecar when given.
pub fn read_field(stem: &Path, grid: Option<Arc<Grid3D>>) -> Result<(ComplexField, FieldHeader)> {
    let json_path = with_ext(stem, "json");
    let header: FieldHeader = serde_json::from_slice(&fs::read(&json_path)?)?;
    if header.dtype != FIELD_DTYPE || header.endianness != "little" {
        return Err(format_err(&json_path, format!("unsupported dtype {} / {}", header.dtype, header.endianness)));
    }
    let grid = match grid {
        Some(g) if g.points() == header.shape && g.lengths() == header.box_um => g,
        Some(_) => return Err(Error::GridMismatch),
        None => Arc::new(Grid3DRaw { lengths: header.box_um, points: header.shape }.build()?),
    };
    let bin_path = with_ext(stem, "bin");
    let bytes = fs::read(&bin_path)?;
    if sha256_hex(&bytes) != header.sha256 {
        return Err(format_err(&bin_path, "content hash does not match the sidecar"));
    }
    let raw = bytes_f64(&bin_path, &bytes)?;
    let values: Vec<Complex64> = raw.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
    let psi = ComplexField::from_vec(grid, values).map_err(|e| format_err(&bin_path, e.to_string()))?;
    Ok((psi, header))
}

/// Header of a cached kernel multiplier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct KernelCacheHeader {
    pub Jx: usize,
    pub Jy: usize,
    pub Jz: usize,
    pub Lx: f64,
    pub Ly: f64,
    pub Lz: f64,
    pub oversampling: usize,
    pub dft_convention: String,
    pub endianness: String,
    pub dtype: String,
}

impl KernelCacheHeader {
    fn for_grid(grid: &Grid3D, oversampling: usize) -> Self {
        let [jx, jy, jz] = grid.points();
        let [lx, ly, lz] = grid.lengths();
        Self {
            Jx: jx,
            Jy: jy,
            Jz: jz,
            Lx: lx,
            Ly: ly,
            Lz: lz,
            oversampling,
            dft_convention: "unnormalized-forward".into(),
            endianness: "little".into(),
            dtype: "f64".into(),
        }
    }
}

/// File stem of the cache entry for `grid` at oversampling `q`.
pub fn kernel_cache_stem(dir: &Path, grid: &Grid3D, q: usize) -> PathBuf {
    let [jx, jy, jz] = grid.points();
    let [lx, ly, lz] = grid.lengths();
    dir.join(format!("kernel_{jx}x{jy}x{jz}_{lx}x{ly}x{lz}_q{q}"))
}

/// Writes the full `(2Jx, 2Jy, 2Jz)` multiplier; returns the blob's SHA-256.
pub fn write_kernel(stem: &Path, kernel: &TruncatedKernelSpectrum) -> Result<String> {
    let header = KernelCacheHeader::for_grid(kernel.grid(), kernel.oversampling());
    let bytes = f64_bytes(kernel.full_multiplier().into_iter());
    if let Some(dir) = stem.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(with_ext(stem, "bin"), &bytes)?;
    fs::write(with_ext(stem, "json"), serde_json::to_vec_pretty(&header)?)?;
    Ok(sha256_hex(&bytes))
}

/// Reads a cached multiplier; returns it with the blob's SHA-256.
pub fn read_kernel(stem: &Path, grid: Arc<Grid3D>) -> Result<(TruncatedKernelSpectrum, String)> {
    let json_path = with_ext(stem, "json");
    let header: KernelCacheHeader = serde_json::from_slice(&fs::read(&json_path)?)?;
    let expected = KernelCacheHeader::for_grid(&grid, header.oversampling);
    if header != expected {
        return Err(format_err(&json_path, "cache header does not match the grid or conventions"));
    }
    let bin_path = with_ext(stem, "bin");
    let bytes = fs::read(&bin_path)?;
    let full = bytes_f64(&bin_path, &bytes)?;
    let kernel = TruncatedKernelSpectrum::from_full_multiplier(grid, header.oversampling, &full)
        .map_err(|e| format_err(&bin_path, e.to_string()))?;
    Ok((kernel, sha256_hex(&bytes)))
}

/// Loads the kernel for `grid` from `dir`, computing and storing it on a miss.
pub fn load_or_compute_kernel(dir: &Path, grid: Arc<Grid3D>, options: KernelOptions) -> Result<(TruncatedKernelSpectrum, String)> {
    let q = match options.oversampling {
        Some(q) => q,
        None => crate::kernel::oversampling_for(grid.aspect_ratio())?,
    };
    let stem = kernel_cache_stem(dir, &grid, q);
    if with_ext(&stem, "json").exists() {
        match read_kernel(&stem, Arc::clone(&grid)) {
            Ok(hit) => return Ok(hit),
            Err(e) => log::warn!("ignoring unusable kernel cache {}: {e}", stem.display()),
        }
    }
    let kernel = TruncatedKernelSpectrum::precompute_with(grid, KernelOptions { oversampling: Some(q), ..options })?;
    let hash = write_kernel(&stem, &kernel)?;
    Ok((kernel, hash))
}

/// Sidecar of a slice dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceHeader {
    pub plane: crate::observables::SlicePlane,
    pub axes: [usize; 2],
    pub shape: [usize; 2],
    /// `[min, max)` coordinate range per image axis, μm.
    pub ranges: [[f64; 2]; 2],
    pub plane_coordinate: f64,
    pub time_ms: f64,
    pub dtype: String,
    pub endianness: String,
}

/// Writes `stem.bin` (f64 density, row-major) and `stem.json`.
pub fn write_slice(stem: &Path, slice: &DensitySlice, time_ms: f64) -> Result<()> {
    let header = SliceHeader {
        plane: slice.plane,
        axes: slice.axes,
        shape: slice.shape,
        ranges: [0, 1].map(|i| [slice.origin[i], slice.origin[i] + slice.spacing[i] * slice.shape[i] as f64]),
        plane_coordinate: slice.plane_coordinate,
        time_ms,
        dtype: "f64".into(),
        endianness: "little".into(),
    };
    if let Some(dir) = stem.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(with_ext(stem, "bin"), f64_bytes(slice.values.iter().copied()))?;
    fs::write(with_ext(stem, "json"), serde_json::to_vec_pretty(&header)?)?;
    Ok(())
}

/// Reads a slice dump back as `(header, values)`.
pub fn read_slice(stem: &Path) -> Result<(SliceHeader, Vec<f64>)> {
    let header: SliceHeader = serde_json::from_slice(&fs::read(with_ext(stem, "json"))?)?;
    let bin_path = with_ext(stem, "bin");
    let values = bytes_f64(&bin_path, &fs::read(&bin_path)?)?;
    if values.len() != header.shape[0] * header.shape[1] {
        return Err(format_err(&bin_path, "slice size does not match its header"));
    }
    Ok((header, values))
}
