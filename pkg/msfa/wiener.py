# msfa/wiener.py
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.linalg
from numpy.typing import NDArray

from core.block_mode import BlockMode
from core.errors import InvalidDataError, ShapeMismatchError, SingularSystemError
from msfa.mosaic import MeasurementMatrix
from msfa.spectral_core import (
    CENTER_SLOT,
    MosaicImage,
    MsfaBlock,
    SpectralCube,
    blocks_of,
    image_from_blocks,
    neighborhoods_of,
)
from msfa.stats import AutocorrMatrix
from utils.common.logger import get_logger
from utils.common.parallel import run_chunked

logger = get_logger("msfa_forge.wiener")

DEFAULT_RELATIVE_RIDGE = 1e-8


@dataclass(frozen=True, eq=False)
class DemosaicMatrix:
    """Wiener estimator W (LN x N) or W' (9LN x 9N)."""
    matrix: NDArray[np.float64]
    mode: BlockMode
    ridge: float
    msfa_id: str
    autocorr_label: str = "empirical"

    def __post_init__(self):
        if not np.all(np.isfinite(self.matrix)):
            raise InvalidDataError("wiener", "demosaic matrix", "matrix has non-finite entries")
        if self.matrix.ndim != 2:
            raise ShapeMismatchError("wiener", "demosaic matrix", f"expected a 2-D matrix, got shape {self.matrix.shape}")
        rows, cols = self.matrix.shape
        k = self.mode.block_count
        if rows < k or cols < k or rows % k or cols % k or (rows // k) % (cols // k):
            raise ShapeMismatchError("wiener", "demosaic matrix", f"shape {self.matrix.shape} inconsistent with {self.mode.value}")

    @property
    def per_block_rows(self) -> int:
        return self.matrix.shape[0] // self.mode.block_count

    @property
    def per_block_cols(self) -> int:
        return self.matrix.shape[1] // self.mode.block_count

    def metadata(self) -> dict[str, Any]:
        return {
            "mode": self.mode.value,
            "ridge": self.ridge,
            "msfa_id": self.msfa_id,
            "autocorr": self.autocorr_label,
        }


@dataclass(frozen=True)
class ExtractionMatrix:
    """S = [0 I 0]: selects the center block rows [4LN, 5LN) of a nine-block estimate."""
    per_block: int
    slot: int = field(default=CENTER_SLOT)

    @property
    def rows(self) -> slice:
        return slice(self.slot * self.per_block, (self.slot + 1) * self.per_block)

    def dense(self) -> NDArray:
        s = np.zeros((self.per_block, 9 * self.per_block))
        s[:, self.rows] = np.eye(self.per_block)
        return s

    def apply(self, x: NDArray) -> NDArray:
        return np.asarray(x)[..., self.rows]

    def select_rows(self, matrix: NDArray) -> NDArray:
        return np.asarray(matrix)[self.rows, :]


def default_ridge(system: NDArray, relative: float = DEFAULT_RELATIVE_RIDGE) -> float:
    """Relative ridge: relative * trace(Phi R Phi^T) / dim."""
    return relative * float(np.trace(system)) / system.shape[0]


def _solve_normal_equations(system: NDArray, rhs: NDArray, ridge: float) -> NDArray:
    """Solve system @ X = rhs for symmetric PSD `system` via Cholesky."""
    dim = system.shape[0]
    a = system + ridge * np.eye(dim) if ridge > 0 else system
    try:
        factor = scipy.linalg.cho_factor(a, lower=True, check_finite=True)
    except np.linalg.LinAlgError as e:
        hint = "retry with ridge > 0" if ridge == 0 else f"ridge {ridge:.3e} is too small"
        raise SingularSystemError("wiener", "wiener matrix", f"Phi R Phi^T is not positive definite; {hint}") from e
    pivots = np.abs(np.diag(factor[0])) ** 2
    if ridge == 0 and pivots.min() <= dim * np.finfo(float).eps * pivots.max():
        raise SingularSystemError(
            "wiener", "wiener matrix",
            "Phi R Phi^T is numerically singular with ridge = 0; retry with ridge > 0",
        )
    return scipy.linalg.cho_solve(factor, rhs, check_finite=False)


def wiener_matrix(
        r: AutocorrMatrix,
        phi: MeasurementMatrix,
        ridge: float | None = None,
        relative_ridge: float = DEFAULT_RELATIVE_RIDGE,
) -> DemosaicMatrix:
    """
    W = R Phi^T (Phi R Phi^T + ridge I)^-1, via a Cholesky solve (no explicit inverse).
    Args:
      - r (AutocorrMatrix): one-block or nine-block statistics.
      - phi (MeasurementMatrix): Phi for one-block R, Phi' for nine-block R.
      - ridge (float | None): absolute ridge; None uses relative_ridge * trace / dim.
    Returns:
      - DemosaicMatrix in the mode of `r`.
    """
    if r.matrix.shape[0] != phi.shape[1]:
        raise ShapeMismatchError("wiener", "wiener matrix", f"R is {r.matrix.shape}, Phi is {phi.shape}")
    if phi.blocks != r.mode.block_count:
        raise ShapeMismatchError("wiener", "wiener matrix", f"{r.mode.value} statistics need a {r.mode.block_count}-block Phi")
    rphi_t = r.matrix @ phi.matrix.T
    system = phi.matrix @ rphi_t
    system = 0.5 * (system + system.T)
    if ridge is None:
        ridge = default_ridge(system, relative_ridge)
    if ridge < 0:
        raise InvalidDataError("wiener", "wiener matrix", f"ridge must be >= 0, got {ridge}")
    w = _solve_normal_equations(system, rphi_t.T, ridge).T
    logger.debug(f"Wiener {r.mode.value} matrix {w.shape} with ridge {ridge:.3e}")
    return DemosaicMatrix(w, r.mode, ridge, phi.msfa.msfa_id, r.label)


def wiener_from_sensitivities(
        r_matrix: NDArray,
        sensitivities: NDArray,
        ridge: float | None,
        relative_ridge: float = DEFAULT_RELATIVE_RIDGE,
) -> tuple[NDArray, float]:
    """
    Nine-block Wiener matrix straight from the N x L sensitivities, exploiting the
    block-diagonal Phi' structure (used inside the optimizer loop).
    Returns:
      - (W' as 9LN x 9N, ridge actually used)
    """
    n, bands = sensitivities.shape
    dim = r_matrix.shape[0]
    r4 = r_matrix.reshape(dim, 9, n, bands)
    rphi_t = np.einsum("ikns,ns->ikn", r4, sensitivities).reshape(dim, 9 * n)
    system = np.einsum("knsj,ns->knj", rphi_t.reshape(9, n, bands, 9 * n), sensitivities).reshape(9 * n, 9 * n)
    system = 0.5 * (system + system.T)
    if ridge is None:
        ridge = default_ridge(system, relative_ridge)
    return _solve_normal_equations(system, rphi_t.T, ridge).T, ridge


def demosaic_block(w: DemosaicMatrix | NDArray, v: NDArray) -> NDArray:
    matrix = w.matrix if isinstance(w, DemosaicMatrix) else np.asarray(w)
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != matrix.shape[1]:
        raise ShapeMismatchError("wiener", "demosaic block", f"v has length {v.shape[-1]}, W has {matrix.shape[1]} columns")
    return matrix @ v


def _check_inputs(w: DemosaicMatrix, msfa: MsfaBlock, mosaic: MosaicImage, mode: BlockMode) -> None:
    if w.mode is not mode:
        raise ShapeMismatchError("wiener", "demosaic image", f"expected a {mode.value} matrix, got {w.mode.value}")
    if mosaic.msfa_id != msfa.msfa_id:
        raise ShapeMismatchError("wiener", "demosaic image", f"mosaic was captured with MSFA {mosaic.msfa_id}, not {msfa.msfa_id}")
    if mosaic.block != msfa.shape:
        raise ShapeMismatchError("wiener", "demosaic image", f"mosaic block {mosaic.block} differs from MSFA block {msfa.shape}")
    if w.per_block_cols != msfa.n_filters or w.per_block_rows != msfa.n_filters * msfa.bands:
        raise ShapeMismatchError("wiener", "demosaic image", f"W {w.matrix.shape} does not match a {msfa.shape} x {msfa.bands}-band MSFA")


def _apply_per_block(matrix: NDArray, samples: NDArray, msfa: MsfaBlock, threads: int) -> SpectralCube:
    by_count, bx_count, _ = samples.shape
    out = np.empty((by_count, bx_count, matrix.shape[0]))

    def _rows(start: int, stop: int) -> None:
        out[start:stop] = samples[start:stop] @ matrix.T

    run_chunked(_rows, by_count, threads)
    values = image_from_blocks(out, msfa.shape, msfa.bands)
    return SpectralCube(values, msfa.wavelengths, estimate=True)


def demosaic_image(w: DemosaicMatrix, msfa: MsfaBlock, mosaic: MosaicImage, threads: int = 1) -> SpectralCube:
    """
    Nine-block demosaicking: u_hat(bx, by) = S W' v'(bx, by) for every block.
    Output is an unclamped estimate at the mosaic's (padded) size.
    """
    _check_inputs(w, msfa, mosaic, BlockMode.NINE_BLOCK)
    center = ExtractionMatrix(msfa.n_filters * msfa.bands).select_rows(w.matrix)
    return _apply_per_block(center, neighborhoods_of(mosaic, msfa.shape), msfa, threads)


def demosaic_image_1block(w: DemosaicMatrix, msfa: MsfaBlock, mosaic: MosaicImage, threads: int = 1) -> SpectralCube:
    _check_inputs(w, msfa, mosaic, BlockMode.ONE_BLOCK)
    return _apply_per_block(w.matrix, blocks_of(mosaic, msfa.shape), msfa, threads)


def demosaic(w: DemosaicMatrix, msfa: MsfaBlock, mosaic: MosaicImage, threads: int = 1) -> SpectralCube:
    """Dispatch on the matrix mode."""
    if w.mode is BlockMode.NINE_BLOCK:
        return demosaic_image(w, msfa, mosaic, threads)
    return demosaic_image_1block(w, msfa, mosaic, threads)
