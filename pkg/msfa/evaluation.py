# msfa/evaluation.py
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from enum import Enum
from typing import Any, Sequence

import numpy as np
from numpy.typing import NDArray

from core.block_mode import BlockMode
from core.errors import InvalidDataError, ShapeMismatchError
from msfa.colorimetry import spectra_to_linear_srgb, srgb_encode
from msfa.formats import format_db
from msfa.mosaic import mosaic_image
from msfa.spectral_core import BlockShape, MsfaBlock, SpectralCube, crop
from msfa.wiener import DemosaicMatrix, demosaic
from utils.common.logger import get_logger

logger = get_logger("msfa_forge.evaluation")

BANDPASS_START_NM = 420.0
BANDPASS_STEP_NM = 20.0

# model Bayer: Gaussian R/G/B sensitivities, peak 1
BAYER_CENTERS_NM = {"R": 610.0, "G": 540.0, "B": 465.0}
BAYER_SIGMA_NM = 35.0


@dataclass(frozen=True, eq=False)
class RgbImage:
    """(H, W, 3) sRGB-encoded values in [0,1]."""
    values: NDArray[np.float64]

    def __post_init__(self):
        values = np.clip(np.asarray(self.values, dtype=np.float64), 0.0, 1.0)
        if values.ndim != 3 or values.shape[2] != 3:
            raise ShapeMismatchError("evaluation", "rgb image", f"expected (H, W, 3), got {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class RegionMask:
    mask: NDArray[np.bool_]

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.ndim != 2:
            raise ShapeMismatchError("evaluation", "region mask", f"mask must be 2-D, got {mask.shape}")
        object.__setattr__(self, "mask", mask)

    @property
    def count(self) -> int:
        return int(self.mask.sum())


# ---------------- Metrics ----------------

def psnr(reference: SpectralCube | RgbImage, test: SpectralCube | RgbImage, peak: float = 1.0) -> float:
    """
    10 * log10(peak^2 / MSE) over all pixels and bands/channels.
    Identical inputs give +inf (reported as "inf" by format_db).
    """
    ref = np.asarray(reference.values, dtype=np.float64)
    tst = np.asarray(test.values, dtype=np.float64)
    if ref.shape != tst.shape:
        raise ShapeMismatchError("evaluation", "psnr", f"reference {ref.shape} vs test {tst.shape}")
    mse = float(np.mean((ref - tst) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def mean_spectrum(cube: SpectralCube, mask: RegionMask) -> NDArray:
    if mask.mask.shape != (cube.height, cube.width):
        raise ShapeMismatchError("evaluation", "mean spectrum", f"mask {mask.mask.shape} vs cube {cube.height}x{cube.width}")
    if mask.count == 0:
        raise InvalidDataError("evaluation", "mean spectrum", "mask selects no pixels")
    return cube.values[mask.mask].mean(axis=0)


def spectrum_rmse(reference: NDArray, test: NDArray) -> float:
    reference, test = np.asarray(reference, dtype=np.float64), np.asarray(test, dtype=np.float64)
    if reference.shape != test.shape:
        raise ShapeMismatchError("evaluation", "spectrum rmse", f"{reference.shape} vs {test.shape}")
    return float(np.sqrt(np.mean((reference - test) ** 2)))


def mask_from_box(width: int, height: int, x0: int, y0: int, x1: int, y1: int) -> RegionMask:
    """Pixels with x0 <= x < x1 and y0 <= y < y1."""
    mask = np.zeros((height, width), dtype=bool)
    mask[max(y0, 0):min(y1, height), max(x0, 0):min(x1, width)] = True
    return RegionMask(mask)


def mask_by_threshold(cube: SpectralCube, wavelength_nm: float, max_value: float) -> RegionMask:
    """Pixels whose value at the band nearest wavelength_nm is <= max_value."""
    band = int(np.argmin(np.abs(cube.wavelengths - wavelength_nm)))
    return RegionMask(cube.values[:, :, band] <= max_value)


# ---------------- Rendering ----------------

def render_linear_srgb(cube: SpectralCube) -> NDArray:
    """Linear sRGB clamped to [0,1], before the transfer curve."""
    return np.clip(spectra_to_linear_srgb(cube.values, cube.wavelengths), 0.0, 1.0)


def render_srgb(cube: SpectralCube) -> RgbImage:
    """D65 / CIE 1931 2-degree rendering; a unit spectrum maps to white (1, 1, 1)."""
    return RgbImage(srgb_encode(render_linear_srgb(cube)))


def render_msfa_colors(msfa: MsfaBlock) -> RgbImage:
    """Block-sized image with each filter rendered as a transmittance spectrum under D65."""
    spectra = msfa.sensitivities.reshape(msfa.shape.block_h, msfa.shape.block_w, msfa.bands)
    return render_srgb(SpectralCube(spectra, msfa.wavelengths))


# ---------------- Baselines ----------------

def bandpass_msfa(
        wavelengths: NDArray,
        block: BlockShape = BlockShape(4, 4),
        start_nm: float = BANDPASS_START_NM,
        step_nm: float = BANDPASS_STEP_NM,
) -> MsfaBlock:
    """
    Ideal narrowband filters centred at start, start+step, ... (420..720 nm for 4x4),
    one-hot at the nearest band, assigned in raster order.
    """
    wavelengths = np.asarray(wavelengths, dtype=np.float64).reshape(-1)
    centers = start_nm + step_nm * np.arange(block.n_pixels)
    sens = np.zeros((block.n_pixels, wavelengths.size))
    for n, center in enumerate(centers):
        sens[n, int(np.argmin(np.abs(wavelengths - center)))] = 1.0
    return MsfaBlock(block, sens, wavelengths)


def bayer_cfa(wavelengths: NDArray, sigma_nm: float = BAYER_SIGMA_NM) -> MsfaBlock:
    """model Bayer: RGGB 2x2 with Gaussian sensitivities (stand-in curves)."""
    wavelengths = np.asarray(wavelengths, dtype=np.float64).reshape(-1)

    def _gauss(center: float) -> NDArray:
        return np.exp(-0.5 * ((wavelengths - center) / sigma_nm) ** 2)

    r, g, b = (_gauss(BAYER_CENTERS_NM[c]) for c in ("R", "G", "B"))
    return MsfaBlock(BlockShape(2, 2), np.stack([r, g, g, b]), wavelengths)


# ---------------- Design comparison ----------------

@dataclass(frozen=True, eq=False)
class DesignSpec:
    """One row of a comparison: an MSFA and the Wiener matrix that demosaicks it."""
    design_id: str
    msfa: MsfaBlock
    matrix: DemosaicMatrix
    label: str = ""

    @property
    def strategy(self) -> BlockMode:
        return self.matrix.mode


@dataclass(frozen=True)
class DesignResult:
    """
    One scored design on one reference cube. Every field except runtime_s (wall-clock)
    is a deterministic function of the cube and the design.
    """
    design_id: str
    label: str
    strategy: str
    psnr_msi_db: float
    psnr_rgb_db: float
    runtime_s: float

    def to_json(self) -> dict[str, Any]:
        return {
            "design_id": self.design_id,
            "psnr_msi_db": format_db(self.psnr_msi_db),
            "psnr_rgb_db": format_db(self.psnr_rgb_db),
            "runtime_s": round(self.runtime_s, 6),
        }


def evaluate_design(reference: SpectralCube, design: DesignSpec, threads: int = 1) -> tuple[DesignResult, SpectralCube]:
    """Mosaic -> demosaic -> crop; PSNR on the unclamped MSI and on the displayed sRGB."""
    start = time.perf_counter()
    mosaic = mosaic_image(design.msfa, reference, threads)
    estimate = crop(demosaic(design.matrix, design.msfa, mosaic, threads), reference.width, reference.height)
    runtime = time.perf_counter() - start
    result = DesignResult(
        design_id=design.design_id,
        label=design.label,
        strategy=design.strategy.value,
        psnr_msi_db=psnr(reference, estimate),
        psnr_rgb_db=psnr(render_srgb(reference), render_srgb(estimate)),
        runtime_s=runtime,
    )
    logger.info(
        f"{design.design_id}: PSNR MSI {result.psnr_msi_db:.3f} dB, RGB {result.psnr_rgb_db:.3f} dB "
        f"({runtime:.3f} s)"
    )
    return result, estimate


def compare_designs(reference: SpectralCube, designs: Sequence[DesignSpec], threads: int = 1) -> list[DesignResult]:
    return [evaluate_design(reference, design, threads)[0] for design in designs]


def report_json(results: Sequence[DesignResult]) -> list[dict[str, Any]]:
    return [r.to_json() for r in results]
