"""Physical constants and unit conversions.

Internally frequencies are angular (rad/ps), times are ps, path-length
differences are nm and spectral-correlation energies are micro-eV.
"""

import numpy as np

HBAR_MEV_PS = 0.6582119569  # meV ps
HBAR_UEV_PS = HBAR_MEV_PS * 1e3  # ueV ps
C_NM_PER_PS = 299792.458  # nm/ps
HBAR_C_UEV_NM = HBAR_UEV_PS * C_NM_PER_PS


def ueV_to_radps(e_ueV):
    return e_ueV / HBAR_UEV_PS


def radps_to_ueV(w):
    return w * HBAR_UEV_PS


def nm_to_radps(wavelength_nm):
    """Vacuum wavelength (nm) -> angular frequency (rad/ps)."""
    return 2.0 * np.pi * C_NM_PER_PS / wavelength_nm


def radps_to_nm(w):
    return 2.0 * np.pi * C_NM_PER_PS / w


def t2_to_fwhm_ueV(t2_ps):
    """Lorentzian FWHM (ueV) of a line with coherence time ``t2_ps``."""
    return 2.0 * HBAR_UEV_PS / t2_ps


def fwhm_ueV_to_t2(fwhm_ueV):
    return 2.0 * HBAR_UEV_PS / fwhm_ueV


def coherence_length_nm(t2_ps):
    return C_NM_PER_PS * t2_ps
