pub mod manifest;
pub mod nifti_io;
