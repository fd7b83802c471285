# msfa/mosaic.py
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from core.errors import ShapeMismatchError
from msfa.spectral_core import (
    MosaicImage,
    MsfaBlock,
    SpectralCube,
    blocks_of,
    image_from_blocks,
    pad_to_blocks,
)
from utils.common.logger import get_logger
from utils.common.parallel import run_chunked

logger = get_logger("msfa_forge.mosaic")


@dataclass(frozen=True, eq=False)
class MeasurementMatrix:
    """Dense Phi (N x LN) or Phi' = I_9 kron Phi (9N x 9LN), plus the MSFA it encodes."""
    matrix: NDArray[np.float64]
    msfa: MsfaBlock
    blocks: int = 1

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape


def build_phi(msfa: MsfaBlock) -> MeasurementMatrix:
    """Row n carries phi_n on columns [nL, (n+1)L) and zeros elsewhere."""
    n, bands = msfa.n_filters, msfa.bands
    phi = np.zeros((n, n * bands))
    for i in range(n):
        phi[i, i * bands:(i + 1) * bands] = msfa.sensitivities[i]
    return MeasurementMatrix(phi, msfa, blocks=1)


def expand_nine(phi: MeasurementMatrix) -> MeasurementMatrix:
    if phi.blocks != 1:
        raise ShapeMismatchError("mosaic", "expand nine", "expected a one-block measurement matrix")
    return MeasurementMatrix(np.kron(np.eye(9), phi.matrix), phi.msfa, blocks=9)


def mosaic_block(phi: MeasurementMatrix, u: NDArray) -> NDArray:
    u = np.asarray(u, dtype=np.float64)
    if u.shape[-1] != phi.shape[1]:
        raise ShapeMismatchError("mosaic", "mosaic block", f"vector length {u.shape[-1]} does not match Phi with {phi.shape[1]} columns")
    return phi.matrix @ u


def mosaic_image(msfa: MsfaBlock, cube: SpectralCube, threads: int = 1) -> MosaicImage:
    """
    Simulate capture: each pixel measures <phi_n, spectrum> for its position n in the tile.
    Unaligned cubes are replicate-padded to block multiples first.
    Args:
      - msfa (MsfaBlock): filter array tiled over the image.
      - cube (SpectralCube): scene, bands must match the MSFA.
      - threads (int): workers over block rows; output is schedule independent.
    Returns:
      - MosaicImage: padded-size mosaic tagged with msfa.msfa_id.
    """
    if cube.bands != msfa.bands:
        raise ShapeMismatchError("mosaic", "mosaic image", f"cube has {cube.bands} bands, MSFA has {msfa.bands}")
    if not np.allclose(cube.wavelengths, msfa.wavelengths, rtol=0.0, atol=1e-6):
        raise ShapeMismatchError("mosaic", "mosaic image", "cube and MSFA wavelengths differ")
    padded = pad_to_blocks(cube, msfa.shape)
    if padded is not cube:
        logger.debug(f"Padded {cube.width}x{cube.height} cube to {padded.width}x{padded.height}")

    blocks = blocks_of(padded, msfa.shape)
    by_count, bx_count, _ = blocks.shape
    tiles = blocks.reshape(by_count, bx_count, msfa.n_filters, msfa.bands)
    out = np.empty((by_count, bx_count, msfa.n_filters))

    def _rows(start: int, stop: int) -> None:
        out[start:stop] = np.einsum("yxnl,nl->yxn", tiles[start:stop], msfa.sensitivities)

    run_chunked(_rows, by_count, threads)
    values = image_from_blocks(out, msfa.shape, channels=1)[:, :, 0]
    return MosaicImage(values, msfa.msfa_id, msfa.shape)
