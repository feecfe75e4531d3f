//! Unit conventions and conversions.
//!
//! Wavelengths are in nm, sample lengths in um, crystal and slab lengths in
//! mm, angular frequencies in rad/fs and GVD in fs^2/mm. Delay axes are
//! reported in um of reference-mirror displacement, so a reflector buried at
//! optical (group) depth `n_g * z` appears at `n_g * z` on the axis and the
//! round-trip time delay is `tau = 2 x / c`.

use std::f64::consts::PI;

/// Speed of light in um/fs.
pub const C_UM_PER_FS: f64 = 0.299_792_458;
/// Speed of light in nm/fs.
pub const C_NM_PER_FS: f64 = 299.792_458;
/// Speed of light in mm/fs.
pub const C_MM_PER_FS: f64 = 2.997_924_58e-4;

/// Ratio between the FWHM and the standard deviation of a Gaussian.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

/// Angular frequency (rad/fs) of a vacuum wavelength in nm.
pub fn wavelength_to_frequency(wavelength_nm: f64) -> f64 {
    2.0 * PI * C_NM_PER_FS / wavelength_nm
}

/// Vacuum wavelength (nm) of an angular frequency in rad/fs.
pub fn frequency_to_wavelength(omega: f64) -> f64 {
    2.0 * PI * C_NM_PER_FS / omega
}

/// Converts a small wavelength interval around `center_nm` into the
/// corresponding angular-frequency interval (rad/fs).
pub fn bandwidth_nm_to_frequency(center_nm: f64, width_nm: f64) -> f64 {
    2.0 * PI * C_NM_PER_FS * width_nm / (center_nm * center_nm)
}

/// Inverse of [`bandwidth_nm_to_frequency`].
pub fn bandwidth_frequency_to_nm(center_nm: f64, width: f64) -> f64 {
    width * center_nm * center_nm / (2.0 * PI * C_NM_PER_FS)
}

/// Round-trip time delay (fs) for a delay-axis value in um.
pub fn delay_um_to_fs(delay_um: f64) -> f64 {
    2.0 * delay_um / C_UM_PER_FS
}

/// Delay-axis value (um) for a round-trip time delay in fs.
pub fn delay_fs_to_um(delay_fs: f64) -> f64 {
    0.5 * delay_fs * C_UM_PER_FS
}
