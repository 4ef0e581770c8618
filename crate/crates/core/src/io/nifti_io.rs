//! NIfTI-1 volume and mask IO (.nii / .nii.gz).
//!
//! File convention: NIfTI dims are (nx, ny, nz) with x fastest; our arrays
//! are (depth, height, width) C-order, so x = width, y = height, z = depth.
//! Spacing maps to pixdim as (width, height, depth) = pixdim[1..4].

use std::path::Path;

use ndarray::Array3;
use nifti::{
    object::NiftiObject, volume::ndarray::IntoNdArray, InMemNiftiObject, NiftiHeader,
    ReaderOptions,
};

use crate::error::{CoreError, Result};
use crate::volume::{BinaryMask, Volume};

fn nifti_err(path: &Path, e: impl std::fmt::Display) -> CoreError {
    CoreError::Nifti {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn spacing_header(spacing: [f64; 3]) -> NiftiHeader {
    let mut pixdim = [0.0f32; 8];
    pixdim[0] = 1.0;
    pixdim[1] = spacing[2] as f32; // x = width
    pixdim[2] = spacing[1] as f32; // y = height
    pixdim[3] = spacing[0] as f32; // z = depth
    NiftiHeader {
        pixdim,
        sform_code: 0,
        qform_code: 0,
        ..NiftiHeader::default()
    }
}

/// Writes a (depth, height, width) array so the file carries standard
/// x-fastest order with dims (width, height, depth).
fn write_array<T>(path: &Path, data: &Array3<T>, spacing: [f64; 3]) -> Result<()>
where
    T: nifti::DataElement + bytemuck::Pod,
{
    let header = spacing_header(spacing);
    // The writer takes file dims from the array's axis order (first axis =
    // NIfTI x) and internally streams the transposed view. Handing it the
    // (w, h, d) permutation yields a standard x-fastest file whose data
    // stream is exactly our contiguous (d, h, w) buffer.
    let view = data.view().permuted_axes((2, 1, 0));
    nifti::writer::WriterOptions::new(path)
        .reference_header(&header)
        .write_nifti(&view)
        .map_err(|e| nifti_err(path, e))
}

pub fn write_volume(path: &Path, v: &Volume) -> Result<()> {
    write_array(path, &v.data, v.spacing)
}

pub fn write_mask(path: &Path, m: &BinaryMask) -> Result<()> {
    write_array(path, &m.data, m.spacing)
}

struct Loaded {
    data: Array3<f32>,
    spacing: [f64; 3],
}

fn read_array(path: &Path) -> Result<Loaded> {
    let obj = ReaderOptions::new()
        .read_file(path)
        .map_err(|e| nifti_err(path, e))?;
    read_object(path, obj)
}

fn read_object(path: &Path, obj: InMemNiftiObject) -> Result<Loaded> {
    let header = obj.header().clone();
    let volume = obj.into_volume();
    let arr = volume
        .into_ndarray::<f32>()
        .map_err(|e| nifti_err(path, e))?;
    if arr.ndim() != 3 {
        return Err(nifti_err(
            path,
            format!("expected a 3D volume, got {} dims", arr.ndim()),
        ));
    }
    // into_ndarray yields dims (nx, ny, nz) = (width, height, depth);
    // permute to (depth, height, width).
    let arr = arr
        .permuted_axes(ndarray::IxDyn(&[2, 1, 0]))
        .as_standard_layout()
        .into_owned()
        .into_dimensionality::<ndarray::Ix3>()
        .map_err(|e| nifti_err(path, e))?;
    let spacing = [
        header.pixdim[3] as f64,
        header.pixdim[2] as f64,
        header.pixdim[1] as f64,
    ];
    Ok(Loaded { data: arr, spacing })
}

/// Reads a scalar volume; rejects non-finite voxels.
pub fn read_volume(path: &Path, id: impl Into<String>) -> Result<Volume> {
    let loaded = read_array(path)?;
    let v = Volume::new(loaded.data, loaded.spacing, id)?;
    v.check_finite()?;
    Ok(v)
}

/// Reads an integer label volume as a binary mask (any value > 0.5 is 1).
pub fn read_mask(path: &Path, id: impl Into<String>) -> Result<BinaryMask> {
    let loaded = read_array(path)?;
    if loaded.data.iter().any(|v| !v.is_finite()) {
        return Err(nifti_err(path, "mask contains non-finite values"));
    }
    let data = loaded.data.mapv(|v| u8::from(v > 0.5));
    BinaryMask::new(data, loaded.spacing, id)
}
