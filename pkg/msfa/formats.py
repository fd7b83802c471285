# msfa/formats.py
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from core.errors import FormatError, InvalidDataError, MsfaForgeError
from msfa.spectral_core import BlockShape, MosaicImage, MsfaBlock, SpectralCube
from utils.common.logger import get_logger

"""
On-disk formats.

| Format  | Layout                                                                      |
|---------|-----------------------------------------------------------------------------|
| .mscube | JSON header line + '\\n' + f32le payload, band-sequential, rows row-major   |
| .msfa   | JSON {block_w, block_h, bands, wavelengths_nm, sensitivities (N x L)}       |
| .mat32  | JSON header {rows, cols, dtype} + '\\n' + f32le row-major payload            |
|         | optional sidecar <name>.mat32.json with free-form metadata                  |
| .ppm    | binary P6, 8-bit sRGB                                                       |

Mosaics are stored as single-band .mscube files whose header also carries
"msfa_id", "block_w" and "block_h".
"""

logger = get_logger("msfa_forge.formats")

F32LE = np.dtype("<f4")


def _read_header_line(path: Path, what: str) -> tuple[dict[str, Any], bytes]:
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise FormatError("formats", f"read {what}", f"cannot read {path}: {e}") from e
    newline = raw.find(b"\n")
    if newline < 0:
        raise FormatError("formats", f"read {what}", f"{path}: missing header terminator")
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError("formats", f"read {what}", f"{path}: malformed JSON header ({e})") from e
    if not isinstance(header, dict):
        raise FormatError("formats", f"read {what}", f"{path}: header must be a JSON object")
    return header, raw[newline + 1:]


def _require_int(header: dict, key: str, path: Path, what: str, minimum: int = 1) -> int:
    value = header.get(key)
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        raise FormatError("formats", f"read {what}", f"{path}: '{key}' must be an integer >= {minimum}, got {value!r}")
    return value


def _decode_payload(payload: bytes, count: int, path: Path, what: str) -> NDArray[np.float64]:
    expected = count * F32LE.itemsize
    if len(payload) != expected:
        raise FormatError(
            "formats", f"read {what}",
            f"{path}: payload is {len(payload)} bytes, header implies {expected}",
        )
    data = np.frombuffer(payload, dtype=F32LE).astype(np.float64)
    if not np.all(np.isfinite(data)):
        raise FormatError("formats", f"read {what}", f"{path}: payload contains non-finite values")
    return data


def _write_with_header(path: Path, header: dict[str, Any], data: NDArray) -> None:
    data = np.asarray(data, dtype=np.float64)
    if not np.all(np.isfinite(data)):
        raise InvalidDataError("formats", f"write {path.suffix}", "refusing to write non-finite values")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(json.dumps(header, separators=(",", ":")).encode("utf-8"))
        f.write(b"\n")
        f.write(np.ascontiguousarray(data, dtype=F32LE).tobytes())


# ---------------- Spectral cubes ----------------

def write_cube(path: str | Path, cube: SpectralCube) -> None:
    """Write a [0,1] cube; estimates must be clamped by the caller (cube.clamped())."""
    path = Path(path)
    header = {
        "width": cube.width,
        "height": cube.height,
        "bands": cube.bands,
        "wavelengths_nm": [float(w) for w in cube.wavelengths],
        "dtype": "f32le",
        "layout": "band-sequential",
    }
    if cube.estimate:
        raise InvalidDataError("formats", "write cube", "estimate cubes must be clamped before export")
    # (H, W, L) -> (L, H, W): all of band 0 row-major, then band 1, ...
    _write_with_header(path, header, cube.values.transpose(2, 0, 1))
    logger.debug(f"Wrote cube {cube.width}x{cube.height}x{cube.bands} to {path}")


def _cube_from_header(header: dict, payload: bytes, path: Path, what: str) -> tuple[NDArray, NDArray]:
    if header.get("dtype") != "f32le" or header.get("layout") != "band-sequential":
        raise FormatError("formats", f"read {what}", f"{path}: unsupported dtype/layout {header.get('dtype')}/{header.get('layout')}")
    width = _require_int(header, "width", path, what)
    height = _require_int(header, "height", path, what)
    bands = _require_int(header, "bands", path, what)
    wavelengths = header.get("wavelengths_nm")
    if not isinstance(wavelengths, list) or len(wavelengths) != bands:
        raise FormatError("formats", f"read {what}", f"{path}: 'wavelengths_nm' must list {bands} values")
    try:
        wl = np.array([float(w) for w in wavelengths])
    except (TypeError, ValueError) as e:
        raise FormatError("formats", f"read {what}", f"{path}: non-numeric wavelength ({e})") from e
    if not np.all(np.isfinite(wl)) or (bands > 1 and not np.all(np.diff(wl) > 0)):
        raise FormatError("formats", f"read {what}", f"{path}: wavelengths must be finite and strictly increasing")
    data = _decode_payload(payload, width * height * bands, path, what)
    values = data.reshape(bands, height, width).transpose(1, 2, 0)
    return values, wl


def read_cube(path: str | Path) -> SpectralCube:
    path = Path(path)
    header, payload = _read_header_line(path, "cube")
    values, wl = _cube_from_header(header, payload, path, "cube")
    try:
        return SpectralCube(values, wl)
    except MsfaForgeError as e:
        raise FormatError("formats", "read cube", f"{path}: {e.details}") from e


# ---------------- Mosaics ----------------

def write_mosaic(path: str | Path, mosaic: MosaicImage, wavelengths_nm: float = 0.0) -> None:
    header = {
        "width": mosaic.width,
        "height": mosaic.height,
        "bands": 1,
        "wavelengths_nm": [float(wavelengths_nm)],
        "dtype": "f32le",
        "layout": "band-sequential",
        "msfa_id": mosaic.msfa_id,
        "block_w": mosaic.block.block_w,
        "block_h": mosaic.block.block_h,
    }
    _write_with_header(Path(path), header, mosaic.values)


def read_mosaic(path: str | Path) -> MosaicImage:
    path = Path(path)
    header, payload = _read_header_line(path, "mosaic")
    values, _ = _cube_from_header(header, payload, path, "mosaic")
    if values.shape[2] != 1:
        raise FormatError("formats", "read mosaic", f"{path}: a mosaic has exactly one band, got {values.shape[2]}")
    msfa_id = header.get("msfa_id")
    if not isinstance(msfa_id, str) or not msfa_id:
        raise FormatError("formats", "read mosaic", f"{path}: missing 'msfa_id'")
    block = BlockShape(_require_int(header, "block_w", path, "mosaic"), _require_int(header, "block_h", path, "mosaic"))
    try:
        return MosaicImage(values[:, :, 0], msfa_id, block)
    except MsfaForgeError as e:
        raise FormatError("formats", "read mosaic", f"{path}: {e.details}") from e


# ---------------- Filter arrays ----------------

def msfa_to_document(msfa: MsfaBlock) -> dict[str, Any]:
    return {
        "block_w": msfa.shape.block_w,
        "block_h": msfa.shape.block_h,
        "bands": msfa.bands,
        "wavelengths_nm": [float(w) for w in msfa.wavelengths],
        "sensitivities": [[float(x) for x in row] for row in msfa.sensitivities],
    }


def write_msfa(path: str | Path, msfa: MsfaBlock) -> None:
    """repr-precision floats in JSON, so read_msfa(write_msfa(m)) is bit-exact."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(msfa_to_document(msfa), indent=1) + "\n", encoding="utf-8")


def read_msfa(path: str | Path) -> MsfaBlock:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError("formats", "read msfa", f"{path}: {e}") from e
    if not isinstance(doc, dict):
        raise FormatError("formats", "read msfa", f"{path}: root must be a JSON object")
    block = BlockShape(_require_int(doc, "block_w", path, "msfa"), _require_int(doc, "block_h", path, "msfa"))
    bands = _require_int(doc, "bands", path, "msfa")
    rows = doc.get("sensitivities")
    if (not isinstance(rows, list) or len(rows) != block.n_pixels
            or any(not isinstance(r, list) or len(r) != bands for r in rows)):
        raise FormatError("formats", "read msfa", f"{path}: 'sensitivities' must be a {block.n_pixels} x {bands} array")
    try:
        sens = np.array(rows, dtype=np.float64)
        wl = np.array(doc.get("wavelengths_nm"), dtype=np.float64).reshape(-1)
    except (TypeError, ValueError) as e:
        raise FormatError("formats", "read msfa", f"{path}: non-numeric entry ({e})") from e
    if wl.size != bands:
        raise FormatError("formats", "read msfa", f"{path}: 'wavelengths_nm' must list {bands} values")
    try:
        return MsfaBlock(block, sens, wl)
    except MsfaForgeError as e:
        raise FormatError("formats", "read msfa", f"{path}: {e.details}") from e


# ---------------- Dense matrices ----------------

def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_mat32(path: str | Path, matrix: NDArray, metadata: dict[str, Any] | None = None) -> None:
    path = Path(path)
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    if matrix.ndim != 2:
        raise InvalidDataError("formats", "write mat32", f"expected a 2-D matrix, got shape {matrix.shape}")
    header = {"rows": int(matrix.shape[0]), "cols": int(matrix.shape[1]), "dtype": "f32le"}
    _write_with_header(path, header, matrix)
    if metadata is not None:
        sidecar_path(path).write_text(json.dumps(metadata, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def read_mat32(path: str | Path) -> NDArray[np.float64]:
    path = Path(path)
    header, payload = _read_header_line(path, "mat32")
    if header.get("dtype") != "f32le":
        raise FormatError("formats", "read mat32", f"{path}: unsupported dtype {header.get('dtype')!r}")
    rows = _require_int(header, "rows", path, "mat32")
    cols = _require_int(header, "cols", path, "mat32")
    return _decode_payload(payload, rows * cols, path, "mat32").reshape(rows, cols)


def read_sidecar(path: str | Path) -> dict[str, Any]:
    side = sidecar_path(path)
    if not side.is_file():
        raise FormatError("formats", "read sidecar", f"missing metadata sidecar {side}")
    try:
        doc = json.loads(side.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError("formats", "read sidecar", f"{side}: {e}") from e
    if not isinstance(doc, dict):
        raise FormatError("formats", "read sidecar", f"{side}: root must be a JSON object")
    return doc


# ---------------- PPM ----------------

def write_ppm(path: str | Path, rgb: NDArray) -> None:
    """rgb: (H, W, 3) sRGB-encoded values in [0,1] (clamped here), stored as 8-bit P6."""
    path = Path(path)
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise InvalidDataError("formats", "write ppm", f"expected (H, W, 3), got {rgb.shape}")
    data = np.round(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(f"P6\n{rgb.shape[1]} {rgb.shape[0]}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def read_ppm(path: str | Path) -> NDArray[np.float64]:
    path = Path(path)
    raw = path.read_bytes()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos:pos + 1] == b"#":
            end = raw.find(b"\n", pos)
            if end < 0:
                raise FormatError("formats", "read ppm", f"{path}: truncated header")
            pos = end + 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("formats", "read ppm", f"{path}: truncated header")
        tokens.append(raw[start:pos])
    pos += 1
    if tokens[0] != b"P6" or tokens[3] != b"255":
        raise FormatError("formats", "read ppm", f"{path}: only 8-bit P6 is supported")
    try:
        width, height = int(tokens[1]), int(tokens[2])
    except ValueError as e:
        raise FormatError("formats", "read ppm", f"{path}: bad image size {tokens[1]!r} x {tokens[2]!r}") from e
    if width < 1 or height < 1:
        raise FormatError("formats", "read ppm", f"{path}: image size must be >= 1x1, got {width}x{height}")
    payload = raw[pos:pos + width * height * 3]
    if len(payload) != width * height * 3:
        raise FormatError("formats", "read ppm", f"{path}: payload shorter than {width}x{height}x3")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3).astype(np.float64) / 255.0


def format_db(value: float) -> float | str:
    """JSON-safe decibels: +inf becomes the string 'inf'."""
    if math.isinf(value) and value > 0:
        return "inf"
    return float(value)
