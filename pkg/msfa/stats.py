# msfa/stats.py
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from core.block_mode import AutocorrSource, BlockMode
from core.errors import InvalidDataError, ShapeMismatchError
from msfa.spectral_core import (
    NEIGHBOR_OFFSETS,
    BlockShape,
    SpectralCube,
    blocks_of,
    neighborhoods_of,
    pad_to_blocks,
)
from utils.common.logger import get_logger
from utils.common.parallel import run_chunked

logger = get_logger("msfa_forge.stats")


@dataclass(frozen=True, eq=False)
class AutocorrMatrix:
    """Uncentered second moment of block (LN) or neighborhood (9LN) vectors."""
    matrix: NDArray[np.float64]
    mode: BlockMode
    source: AutocorrSource
    block: BlockShape
    bands: int
    samples: int = 0

    def __post_init__(self):
        dim = self.mode.block_count * self.block.n_pixels * self.bands
        if self.matrix.shape != (dim, dim):
            raise ShapeMismatchError("stats", "autocorr", f"expected {dim}x{dim}, got {self.matrix.shape}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def label(self) -> str:
        if self.source is AutocorrSource.MARKOV:
            return "markov (separable first-order stand-in)"
        return "empirical"


def check_autocorr(r: AutocorrMatrix) -> float:
    """
    Assert symmetry and positive semidefiniteness.
    Returns:
      - float: smallest eigenvalue.
    """
    m = r.matrix
    scale = max(float(np.max(np.abs(m))), np.finfo(float).tiny)
    if np.max(np.abs(m - m.T)) > 1e-12 * scale:
        raise InvalidDataError("stats", "check autocorr", "matrix is not symmetric")
    smallest = float(np.linalg.eigvalsh(m)[0])
    if smallest < -1e-9 * float(np.trace(m)) / r.dim:
        raise InvalidDataError("stats", "check autocorr", f"matrix is not PSD (smallest eigenvalue {smallest:.3e})")
    return smallest


def sample_vectors(cube: SpectralCube, block: BlockShape, mode: BlockMode) -> NDArray:
    """All block-aligned sample vectors of one cube as rows (M x dim)."""
    padded = pad_to_blocks(cube, block)
    if mode is BlockMode.ONE_BLOCK:
        vectors = blocks_of(padded, block)
    else:
        vectors = neighborhoods_of(padded, block)
    return vectors.reshape(-1, vectors.shape[-1])


def _validate_training(training: Sequence[SpectralCube]) -> None:
    if not training:
        raise InvalidDataError("stats", "empirical autocorr", "at least one training cube is required")
    first = training[0]
    for i, cube in enumerate(training[1:], start=1):
        if cube.bands != first.bands or not np.allclose(cube.wavelengths, first.wavelengths, rtol=0.0, atol=1e-6):
            raise ShapeMismatchError("stats", "empirical autocorr", f"training cube {i} does not share bands/wavelengths with cube 0")


def second_moment(vectors: NDArray, threads: int = 1) -> NDArray:
    """(1/M) sum_c x_c x_c^T over rows of `vectors`, chunk partial sums reduced in order."""
    count = vectors.shape[0]

    def _partial(start: int, stop: int) -> NDArray:
        chunk = vectors[start:stop]
        return chunk.T @ chunk

    total = np.zeros((vectors.shape[1], vectors.shape[1]))
    for part in run_chunked(_partial, count, threads):
        total += part
    total /= count
    return 0.5 * (total + total.T)


def empirical_autocorr(
        training: Sequence[SpectralCube],
        block: BlockShape,
        mode: BlockMode,
        threads: int = 1,
) -> AutocorrMatrix:
    """
    R = (1/M) sum u_c u_c^T over all block-aligned positions of all training cubes.
    Nine-block mode gathers neighborhoods with replicate padding at borders.
    No mean subtraction.
    """
    _validate_training(training)
    bands = training[0].bands

    def _per_cube(start: int, stop: int) -> tuple[NDArray, int]:
        acc = None
        count = 0
        for cube in training[start:stop]:
            x = sample_vectors(cube, block, mode)
            acc = x.T @ x if acc is None else acc + x.T @ x
            count += x.shape[0]
        return acc, count

    total = None
    samples = 0
    for acc, count in run_chunked(_per_cube, len(training), threads):
        total = acc if total is None else total + acc
        samples += count
    matrix = total / samples
    matrix = 0.5 * (matrix + matrix.T)
    logger.info(f"Empirical {mode.value} autocorrelation: {matrix.shape[0]}x{matrix.shape[0]} from {samples} blocks")
    return AutocorrMatrix(matrix, mode, AutocorrSource.EMPIRICAL, block, bands, samples)


def pixel_positions(block: BlockShape, mode: BlockMode) -> NDArray:
    """(x, y) pixel coordinates in vector order: slot-major, then raster pixel."""
    rows, cols = np.divmod(np.arange(block.n_pixels), block.block_w)
    offsets = [(0, 0)] if mode is BlockMode.ONE_BLOCK else NEIGHBOR_OFFSETS
    coords = [
        np.stack([cols + dx * block.block_w, rows + dy * block.block_h], axis=1)
        for dy, dx in offsets
    ]
    return np.concatenate(coords, axis=0).astype(np.float64)


def markov_autocorr(
        block: BlockShape,
        bands: int,
        mode: BlockMode,
        rho_spatial: float,
        rho_spectral: float,
) -> AutocorrMatrix:
    """
    Separable first-order Markov model:
    R[(n,l),(m,k)] = rho_spatial ** d(n,m) * rho_spectral ** |l-k|, d the Euclidean pixel distance.
    """
    for name, rho in (("rho_spatial", rho_spatial), ("rho_spectral", rho_spectral)):
        if not (0.0 <= rho < 1.0):
            raise InvalidDataError("stats", "markov autocorr", f"{name} must lie in [0,1), got {rho}")
    if bands < 1:
        raise InvalidDataError("stats", "markov autocorr", f"bands must be >= 1, got {bands}")
    positions = pixel_positions(block, mode)
    dist = np.sqrt(((positions[:, None, :] - positions[None, :, :]) ** 2).sum(axis=2))
    spatial = np.power(rho_spatial, dist)
    band_idx = np.arange(bands)
    spectral = np.power(rho_spectral, np.abs(band_idx[:, None] - band_idx[None, :]).astype(np.float64))
    matrix = np.kron(spatial, spectral)
    return AutocorrMatrix(matrix, mode, AutocorrSource.MARKOV, block, bands)
