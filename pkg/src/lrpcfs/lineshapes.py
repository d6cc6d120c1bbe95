"""Closed-form spectral correlations and their interferograms.

Spectral quantities are unit-area densities over the energy difference
``zeta`` (ueV).  The matching interferogram is the cosine transform

    F(delta) = integral p(zeta) cos(zeta * delta / (hbar c)) dzeta

evaluated at path-length difference ``delta`` (nm), so ``F(0) = 1``.
"""

import numpy as np
from scipy.special import voigt_profile

from .units import HBAR_C_UEV_NM


def lorentzian(zeta, fwhm, center=0.0):
    hw = 0.5 * fwhm
    return hw / np.pi / ((np.asarray(zeta) - center) ** 2 + hw**2)


def gaussian(zeta, sigma, center=0.0):
    x = (np.asarray(zeta) - center) / sigma
    return np.exp(-0.5 * x**2) / (sigma * np.sqrt(2.0 * np.pi))


def voigt(zeta, sigma, fwhm, center=0.0):
    """Gaussian(sigma) convolved with Lorentzian(fwhm); degenerates cleanly."""
    z = np.asarray(zeta, dtype=float) - center
    if sigma <= 0.0:
        return lorentzian(z, fwhm)
    if fwhm <= 0.0:
        return gaussian(z, sigma)
    return voigt_profile(z, sigma, 0.5 * fwhm)


def _phase(delta):
    return np.abs(np.asarray(delta, dtype=float)) / HBAR_C_UEV_NM


def lorentzian_ft(delta, fwhm, center=0.0):
    """Interferogram of a symmetric pair of Lorentzians at +-center (each half weight)."""
    k = _phase(delta)
    return np.exp(-0.5 * fwhm * k) * np.cos(center * k)


def gaussian_ft(delta, sigma, center=0.0):
    k = _phase(delta)
    return np.exp(-0.5 * (sigma * k) ** 2) * np.cos(center * k)


def voigt_ft(delta, sigma, fwhm, center=0.0):
    k = _phase(delta)
    return np.exp(-0.5 * fwhm * k - 0.5 * (sigma * k) ** 2) * np.cos(center * k)


def fwhm_of_voigt(sigma, fwhm_lor):
    """Olivero-Longbothum approximation (0.02% accurate)."""
    fg = 2.0 * np.sqrt(2.0 * np.log(2.0)) * sigma
    return 0.5346 * fwhm_lor + np.sqrt(0.2166 * fwhm_lor**2 + fg**2)
