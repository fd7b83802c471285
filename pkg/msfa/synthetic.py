# msfa/synthetic.py
from __future__ import annotations

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage

from core.errors import InvalidDataError
from msfa.spectral_core import SpectralCube

"""
Two-dye (hematoxylin / eosin) transmittance phantoms:
  t(x, y, lambda) = exp(-a_H(x, y) * eps_H(lambda) - a_E(x, y) * eps_E(lambda))
with Gaussian absorption endmembers and non-negative abundance fields built from
smoothed seeded noise plus blob structures (nuclei for H, cytoplasm patches for E).
"""

HEMATOXYLIN = {"center_nm": 560.0, "sigma_nm": 50.0, "amplitude": 1.2}
EOSIN = {"center_nm": 525.0, "sigma_nm": 35.0, "amplitude": 1.0}
# abundance ceiling keeps every transmittance well above 0
MAX_ABUNDANCE = 3.0
NOISE_FLOOR = 1e-6


def absorption(wavelengths: NDArray, center_nm: float, sigma_nm: float, amplitude: float) -> NDArray:
    wavelengths = np.asarray(wavelengths, dtype=np.float64)
    return amplitude * np.exp(-0.5 * ((wavelengths - center_nm) / sigma_nm) ** 2)


def transmittance(a_h: NDArray, a_e: NDArray, wavelengths: NDArray) -> NDArray:
    """Beer-Lambert mixture; abundances must be >= 0 so every value lies in (0, 1]."""
    a_h = np.asarray(a_h, dtype=np.float64)
    a_e = np.asarray(a_e, dtype=np.float64)
    if a_h.min() < 0 or a_e.min() < 0:
        raise InvalidDataError("synthetic", "transmittance", "abundances must be non-negative")
    eps_h = absorption(wavelengths, **HEMATOXYLIN)
    eps_e = absorption(wavelengths, **EOSIN)
    return np.exp(-a_h[:, :, None] * eps_h[None, None, :] - a_e[:, :, None] * eps_e[None, None, :])


def _smooth_noise(rng: np.random.Generator, height: int, width: int, sigma: float) -> NDArray:
    """Unit-variance smoothed noise; sigma shrinks on small images so the wrapped field keeps its texture."""
    sigma = min(sigma, min(height, width) / 8.0)
    field = ndimage.gaussian_filter(rng.standard_normal((height, width)), sigma=sigma, mode="wrap")
    spread = field.std()
    return field / spread if spread > NOISE_FLOOR else field


def _blobs(rng: np.random.Generator, height: int, width: int, count: int, radius: tuple[float, float]) -> NDArray:
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    out = np.zeros((height, width))
    for _ in range(count):
        cy, cx = rng.uniform(0, height), rng.uniform(0, width)
        ry, rx = rng.uniform(*radius), rng.uniform(*radius)
        angle = rng.uniform(0, np.pi)
        dy, dx = yy - cy, xx - cx
        u = dx * np.cos(angle) + dy * np.sin(angle)
        v = -dx * np.sin(angle) + dy * np.cos(angle)
        out = np.maximum(out, np.exp(-((u / rx) ** 2 + (v / ry) ** 2) ** 2))
    return out


def abundance_fields(width: int, height: int, seed: int) -> tuple[NDArray, NDArray]:
    """Seeded (a_H, a_E), both in [0, MAX_ABUNDANCE]: nuclei blobs + fine texture for H, smooth stroma for E."""
    rng = np.random.default_rng(seed)
    area = width * height
    nuclei = _blobs(rng, height, width, count=max(1, area // 300), radius=(2.0, 4.5))
    stroma = _blobs(rng, height, width, count=max(1, area // 900), radius=(6.0, 14.0))
    a_h = 0.25 + 1.6 * nuclei + 0.12 * _smooth_noise(rng, height, width, 1.0) + 0.1 * _smooth_noise(rng, height, width, 6.0)
    a_e = 0.45 + 0.7 * stroma + 0.12 * _smooth_noise(rng, height, width, 1.0) + 0.15 * _smooth_noise(rng, height, width, 8.0)
    return np.clip(a_h, 0.0, MAX_ABUNDANCE), np.clip(a_e, 0.0, MAX_ABUNDANCE)


def synth_hne(width: int, height: int, wavelengths: NDArray, seed: int) -> SpectralCube:
    """
    H&E-like transmittance cube.
    Args:
      - width, height (int): image size in pixels (>= 1).
      - wavelengths (array): band centres in nm; L = len(wavelengths).
      - seed (int): RNG seed; equal seeds give identical cubes.
    Returns:
      - SpectralCube with values in (0, 1].
    """
    if width < 1 or height < 1:
        raise InvalidDataError("synthetic", "synth hne", f"size must be >= 1x1, got {width}x{height}")
    wavelengths = np.asarray(wavelengths, dtype=np.float64).reshape(-1)
    a_h, a_e = abundance_fields(width, height, seed)
    return SpectralCube(transmittance(a_h, a_e, wavelengths), wavelengths)


def uniform_grid(start_nm: float, stop_nm: float, bands: int) -> NDArray:
    """`bands` evenly spaced wavelengths from start to stop inclusive."""
    if bands < 1:
        raise InvalidDataError("synthetic", "uniform grid", f"bands must be >= 1, got {bands}")
    if bands == 1:
        return np.array([float(start_nm)])
    return np.linspace(start_nm, stop_nm, bands)
