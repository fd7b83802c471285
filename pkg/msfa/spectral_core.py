# msfa/spectral_core.py
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from core.errors import BlockIndexError, InvalidDataError, ShapeMismatchError

"""
Core data types and block vectorization conventions.

Layout conventions (shared by Phi, W and R, so frozen here):
  - Pixels inside a block are scanned in row-major raster order: n = row * block_w + col.
  - A block vector is pixel-major then band: element n * L + l is pixel n, band l.
  - A neighborhood vector concatenates the 3x3 surrounding blocks in row-major order
    (dy = -1, 0, 1 outer; dx = -1, 0, 1 inner); the center block sits in slot 4.
  - Image borders are handled by replicating the nearest valid block.

Arrays are stored as (height, width, bands) float64.
"""

CENTER_SLOT = 4
NEIGHBOR_OFFSETS: tuple[tuple[int, int], ...] = tuple(
    (dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)
)


def _freeze(array: NDArray) -> NDArray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class BlockShape:
    block_w: int
    block_h: int

    def __post_init__(self):
        if self.block_w < 1 or self.block_h < 1:
            raise InvalidDataError("spectral_core", "block shape", f"block must be >= 1x1, got {self.block_w}x{self.block_h}")

    @property
    def n_pixels(self) -> int:
        return self.block_w * self.block_h

    def __str__(self) -> str:
        return f"{self.block_w}x{self.block_h}"


@dataclass(frozen=True, eq=False)
class SpectralCube:
    """
    Full-resolution L-band image.
    `estimate=True` marks a linear reconstruction: values must be finite but may leave [0,1]
    (clamping happens only when exporting).
    """
    values: NDArray[np.float64]
    wavelengths: NDArray[np.float64]
    estimate: bool = False

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        wavelengths = np.array(self.wavelengths, dtype=np.float64).reshape(-1)
        if values.ndim == 2:
            values = values[:, :, np.newaxis]
        if values.ndim != 3:
            raise ShapeMismatchError("spectral_core", "cube", f"values must be (height, width, bands), got shape {values.shape}")
        height, width, bands = values.shape
        if width < 1 or height < 1 or bands < 1:
            raise InvalidDataError("spectral_core", "cube", f"empty cube {width}x{height}x{bands}")
        if wavelengths.size != bands:
            raise ShapeMismatchError("spectral_core", "cube", f"{wavelengths.size} wavelengths for {bands} bands")
        if bands > 1 and not np.all(np.diff(wavelengths) > 0):
            raise InvalidDataError("spectral_core", "cube", "wavelengths must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise InvalidDataError("spectral_core", "cube", "values must be finite")
        if not self.estimate and (values.min() < 0.0 or values.max() > 1.0):
            raise InvalidDataError(
                "spectral_core", "cube",
                f"values must lie in [0,1], got [{values.min():.6g}, {values.max():.6g}]",
            )
        object.__setattr__(self, "values", _freeze(values))
        object.__setattr__(self, "wavelengths", _freeze(wavelengths))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def bands(self) -> int:
        return self.values.shape[2]

    def clamped(self) -> SpectralCube:
        return SpectralCube(np.clip(self.values, 0.0, 1.0), self.wavelengths)

    def with_values(self, values: NDArray, estimate: bool | None = None) -> SpectralCube:
        return SpectralCube(values, self.wavelengths, self.estimate if estimate is None else estimate)


@dataclass(frozen=True, eq=False)
class MsfaBlock:
    """One filter-array block: row n of `sensitivities` is phi_n (N x L), rows in raster order."""
    shape: BlockShape
    sensitivities: NDArray[np.float64]
    wavelengths: NDArray[np.float64]

    def __post_init__(self):
        sens = np.array(self.sensitivities, dtype=np.float64)
        wavelengths = np.array(self.wavelengths, dtype=np.float64).reshape(-1)
        if sens.ndim != 2 or sens.shape[0] != self.shape.n_pixels:
            raise ShapeMismatchError(
                "spectral_core", "msfa",
                f"sensitivities must be {self.shape.n_pixels} x L for a {self.shape} block, got {sens.shape}",
            )
        if sens.shape[1] < 1:
            raise InvalidDataError("spectral_core", "msfa", "at least one band is required")
        if wavelengths.size != sens.shape[1]:
            raise ShapeMismatchError("spectral_core", "msfa", f"{wavelengths.size} wavelengths for {sens.shape[1]} bands")
        if not np.all(np.isfinite(sens)) or sens.min() < 0.0 or sens.max() > 1.0:
            raise InvalidDataError("spectral_core", "msfa", "every sensitivity entry must be finite and in [0,1]")
        object.__setattr__(self, "sensitivities", _freeze(sens))
        object.__setattr__(self, "wavelengths", _freeze(wavelengths))

    @property
    def n_filters(self) -> int:
        return self.shape.n_pixels

    @property
    def bands(self) -> int:
        return self.sensitivities.shape[1]

    @property
    def msfa_id(self) -> str:
        digest = hashlib.sha1()
        digest.update(f"{self.shape.block_w}x{self.shape.block_h}x{self.bands}".encode())
        digest.update(np.ascontiguousarray(self.sensitivities).tobytes())
        return digest.hexdigest()[:16]

    def with_sensitivities(self, sensitivities: NDArray) -> MsfaBlock:
        return MsfaBlock(self.shape, sensitivities, self.wavelengths)


@dataclass(frozen=True, eq=False)
class MosaicImage:
    """Single-channel capture through a tiled MSFA."""
    values: NDArray[np.float64]
    msfa_id: str
    block: BlockShape

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ShapeMismatchError("spectral_core", "mosaic", f"mosaic must be 2-D, got shape {values.shape}")
        if values.shape[0] % self.block.block_h or values.shape[1] % self.block.block_w:
            raise ShapeMismatchError(
                "spectral_core", "mosaic",
                f"{values.shape[1]}x{values.shape[0]} mosaic is not a multiple of the {self.block} block",
            )
        if not np.all(np.isfinite(values)):
            raise InvalidDataError("spectral_core", "mosaic", "values must be finite")
        object.__setattr__(self, "values", _freeze(values))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


# ---------------- Padding ----------------

def padded_size(width: int, height: int, block: BlockShape) -> tuple[int, int]:
    return (-(-width // block.block_w) * block.block_w, -(-height // block.block_h) * block.block_h)


def pad_to_blocks(cube: SpectralCube, block: BlockShape) -> SpectralCube:
    """
    Grow the cube to the smallest block multiple, replicating the nearest edge pixel.
    Already aligned cubes come back unchanged (same object).
    """
    width, height = padded_size(cube.width, cube.height, block)
    if (width, height) == (cube.width, cube.height):
        return cube
    values = np.pad(
        cube.values,
        ((0, height - cube.height), (0, width - cube.width), (0, 0)),
        mode="edge",
    )
    return cube.with_values(values)


def crop(cube: SpectralCube, width: int, height: int) -> SpectralCube:
    if width > cube.width or height > cube.height:
        raise ShapeMismatchError("spectral_core", "crop", f"cannot crop {cube.width}x{cube.height} to {width}x{height}")
    if (width, height) == (cube.width, cube.height):
        return cube
    return cube.with_values(cube.values[:height, :width, :])


# ---------------- Block tensors ----------------

def _as_hwc(image: SpectralCube | MosaicImage | NDArray) -> NDArray:
    values = image.values if isinstance(image, (SpectralCube, MosaicImage)) else np.asarray(image, dtype=np.float64)
    return values[:, :, np.newaxis] if values.ndim == 2 else values


def block_grid(image: SpectralCube | MosaicImage | NDArray, block: BlockShape) -> tuple[int, int]:
    """Return (blocks_x, blocks_y); the image must already be block aligned."""
    values = _as_hwc(image)
    height, width = values.shape[:2]
    if height % block.block_h or width % block.block_w:
        raise ShapeMismatchError(
            "spectral_core", "block grid",
            f"{width}x{height} image is not a multiple of the {block} block; pad it first",
        )
    return width // block.block_w, height // block.block_h


def blocks_of(image: SpectralCube | MosaicImage | NDArray, block: BlockShape) -> NDArray:
    """
    Vectorize every block at once.
    Args:
      - image: aligned cube (H, W, L), mosaic (H, W) or a raw array of either shape.
      - block (BlockShape): MSFA block shape.
    Returns:
      - ndarray (blocks_y, blocks_x, N * C): row (by, bx) is vectorize_block(image, bx, by).
    """
    values = _as_hwc(image)
    bx_count, by_count = block_grid(values, block)
    channels = values.shape[2]
    tiles = values.reshape(by_count, block.block_h, bx_count, block.block_w, channels)
    tiles = tiles.transpose(0, 2, 1, 3, 4)
    return tiles.reshape(by_count, bx_count, block.n_pixels * channels)


def image_from_blocks(blocks: NDArray, block: BlockShape, channels: int) -> NDArray:
    """Inverse of blocks_of: (blocks_y, blocks_x, N * C) -> (H, W, C)."""
    by_count, bx_count = blocks.shape[:2]
    tiles = blocks.reshape(by_count, bx_count, block.block_h, block.block_w, channels)
    tiles = tiles.transpose(0, 2, 1, 3, 4)
    return tiles.reshape(by_count * block.block_h, bx_count * block.block_w, channels)


def vectorize_block(cube: SpectralCube | NDArray, bx: int, by: int, block: BlockShape) -> NDArray:
    """Element n * L + l is band l of the n-th raster pixel of block (bx, by)."""
    values = _as_hwc(cube)
    bx_count, by_count = block_grid(values, block)
    if not (0 <= bx < bx_count and 0 <= by < by_count):
        raise BlockIndexError(
            "spectral_core", "vectorize block",
            f"block ({bx}, {by}) outside the {bx_count}x{by_count} block grid",
        )
    tile = values[by * block.block_h:(by + 1) * block.block_h, bx * block.block_w:(bx + 1) * block.block_w, :]
    return tile.reshape(-1).copy()


def devectorize_block(vector: NDArray, block: BlockShape, channels: int) -> NDArray:
    vector = np.asarray(vector, dtype=np.float64)
    if vector.size != block.n_pixels * channels:
        raise ShapeMismatchError(
            "spectral_core", "devectorize block",
            f"vector of length {vector.size} does not fit a {block} block with {channels} channels",
        )
    return vector.reshape(block.block_h, block.block_w, channels)


def neighborhoods_of(image: SpectralCube | MosaicImage | NDArray, block: BlockShape) -> NDArray:
    """
    Gather the 3x3 block neighborhood of every block.
    Returns:
      - ndarray (blocks_y, blocks_x, 9 * D) where D is the per-block length; slot k holds the
        block at offset NEIGHBOR_OFFSETS[k], with out-of-image blocks replicated from the edge.
    """
    blocks = blocks_of(image, block)
    by_count, bx_count, _ = blocks.shape
    padded = np.pad(blocks, ((1, 1), (1, 1), (0, 0)), mode="edge")
    slots = [
        padded[1 + dy:1 + dy + by_count, 1 + dx:1 + dx + bx_count, :]
        for dy, dx in NEIGHBOR_OFFSETS
    ]
    return np.concatenate(slots, axis=2)


def gather_neighborhood(image: SpectralCube | MosaicImage | NDArray, bx: int, by: int, block: BlockShape) -> NDArray:
    """Neighborhood vector of one block, border blocks replicated (see neighborhoods_of)."""
    bx_count, by_count = block_grid(image, block)
    if not (0 <= bx < bx_count and 0 <= by < by_count):
        raise BlockIndexError(
            "spectral_core", "gather neighborhood",
            f"block ({bx}, {by}) outside the {bx_count}x{by_count} block grid",
        )
    values = _as_hwc(image)
    parts = []
    for dy, dx in NEIGHBOR_OFFSETS:
        nx = min(max(bx + dx, 0), bx_count - 1)
        ny = min(max(by + dy, 0), by_count - 1)
        parts.append(vectorize_block(values, nx, ny, block))
    return np.concatenate(parts)


def center_slot(vector: NDArray, per_block: int) -> NDArray:
    """Extraction S: keep entries [4 * per_block, 5 * per_block)."""
    vector = np.asarray(vector)
    if vector.shape[-1] != 9 * per_block:
        raise ShapeMismatchError("spectral_core", "center slot", f"expected length {9 * per_block}, got {vector.shape[-1]}")
    return vector[..., CENTER_SLOT * per_block:(CENTER_SLOT + 1) * per_block]


# ---------------- Band / region preprocessing ----------------

def select_bands(cube: SpectralCube, start_nm: float, stop_nm: float, step_nm: float) -> SpectralCube:
    """Keep the bands at start, start+step, ..., stop (inclusive); every one must exist."""
    if step_nm <= 0 or stop_nm < start_nm:
        raise InvalidDataError("spectral_core", "select bands", f"bad range {start_nm}..{stop_nm} step {step_nm}")
    count = int(round((stop_nm - start_nm) / step_nm)) + 1
    wanted = start_nm + step_nm * np.arange(count)
    indices = []
    for wl in wanted:
        idx = int(np.argmin(np.abs(cube.wavelengths - wl)))
        if abs(cube.wavelengths[idx] - wl) > 1e-6 * max(1.0, abs(wl)):
            raise InvalidDataError("spectral_core", "select bands", f"cube has no band at {wl:g} nm")
        indices.append(idx)
    return SpectralCube(cube.values[:, :, indices], cube.wavelengths[indices], cube.estimate)


def split_quadrants(cube: SpectralCube) -> dict[int, SpectralCube]:
    """Labels: 1 upper-left, 2 upper-right, 3 lower-left, 4 lower-right."""
    if cube.width < 2 or cube.height < 2:
        raise ShapeMismatchError("spectral_core", "split quadrants", f"{cube.width}x{cube.height} cube is too small to split")
    half_w, half_h = cube.width // 2, cube.height // 2
    v = cube.values
    return {
        1: cube.with_values(v[:half_h, :half_w]),
        2: cube.with_values(v[:half_h, half_w:]),
        3: cube.with_values(v[half_h:, :half_w]),
        4: cube.with_values(v[half_h:, half_w:]),
    }
