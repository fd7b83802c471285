# cli/commands.py
from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Any

import numpy as np

from config_utils.config_manager import ConfigManager
from config_utils.run_config import RunConfig, load_run_config
from core.block_mode import BlockMode
from core.config_keys import ConfigKeys
from core.errors import FormatError, InvalidDataError, ShapeMismatchError
from msfa import formats
from msfa.evaluation import (
    DesignSpec,
    bandpass_msfa,
    bayer_cfa,
    evaluate_design,
    mask_by_threshold,
    mask_from_box,
    mean_spectrum,
    psnr,
    render_msfa_colors,
    render_srgb,
    spectrum_rmse,
)
from msfa.mosaic import build_phi, expand_nine, mosaic_image
from msfa.optimizer import build_training_set, optimize_with_restarts, write_trace_csv
from msfa.spectral_core import MsfaBlock, SpectralCube, select_bands, split_quadrants
from msfa.stats import empirical_autocorr, markov_autocorr
from msfa.synthetic import synth_hne, uniform_grid
from msfa.wiener import DemosaicMatrix, demosaic, wiener_matrix
from utils.common.html_report_utils import generate_html_table
from utils.common.logger import get_logger

"""
Subcommand implementations. Each returns a JSON-serialisable payload that main() prints
on stdout; human-readable progress goes to the logger (stderr + log file).

| Command  | Delegates to                                  | Writes                            |
|----------|-----------------------------------------------|-----------------------------------|
| optimize | optimizer.optimize_with_restarts              | msfa.msfa, w9.mat32(+json), trace |
| mosaic   | mosaic.mosaic_image                           | mosaic .mscube                    |
| demosaic | wiener.demosaic                               | clamped .mscube                   |
| eval     | evaluation.psnr                               | stdout only                       |
| render   | evaluation.render_srgb / render_msfa_colors  | .ppm                              |
| synth    | synthetic.synth_hne                           | .mscube                           |
| baseline | evaluation.bandpass_msfa / bayer_cfa (+Markov)| .msfa (+ .mat32)                  |
| compare  | evaluation.evaluate_design per design & image | report.json, report.html          |
| spectrum | evaluation.mean_spectrum / spectrum_rmse      | stdout only                       |
| bands    | spectral_core.select_bands / split_quadrants  | .mscube                           |
"""

logger = get_logger("msfa_forge.cli")

TRAINED_MSFA = "msfa.msfa"
TRAINED_MATRIX = "w9.mat32"
TRACE_CSV = "trace.csv"


def _summary(message: str) -> None:
    print(message, file=sys.stderr)


def save_matrix(path: Path, matrix: DemosaicMatrix) -> None:
    formats.write_mat32(path, matrix.matrix, metadata=matrix.metadata())


def load_matrix(path: str | Path) -> DemosaicMatrix:
    meta = formats.read_sidecar(path)
    try:
        mode = BlockMode(meta.get("mode"))
        return DemosaicMatrix(
            formats.read_mat32(path),
            mode,
            float(meta.get("ridge", 0.0)),
            str(meta.get("msfa_id", "")),
            str(meta.get("autocorr", "empirical")),
        )
    except ValueError as e:
        raise FormatError("cli", "load matrix", f"{path}: bad sidecar metadata ({e})") from e


def _load_cubes(paths: list[Path]) -> list[SpectralCube]:
    return [formats.read_cube(p) for p in paths]


# ---------------- optimize ----------------

def cmd_optimize(config_path: str, overrides: dict[str, Any], threads: int) -> dict[str, Any]:
    run = load_run_config(config_path, overrides)
    return run_optimize(run, threads)


def run_optimize(run: RunConfig, threads: int) -> dict[str, Any]:
    cfg = run.optim_config()
    training = build_training_set(
        _load_cubes(run.training_cubes), run.block,
        max_samples=run.optim.max_training_samples, seed=cfg.seed,
    )
    msfa, w_nine, trace = optimize_with_restarts(training, cfg, run.optim.restarts, threads)

    out = Path(run.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    formats.write_msfa(out / TRAINED_MSFA, msfa)
    save_matrix(out / TRAINED_MATRIX, w_nine)
    write_trace_csv(trace, out / TRACE_CSV, include_timing=not run.deterministic_trace)
    _summary(
        f"Optimized {run.block} MSFA ({msfa.bands} bands): objective "
        f"{trace.objectives[0]:.4e} -> {trace.final_objective:.4e} in {trace.iterations[-1]} iterations"
    )
    return {
        "msfa": str(out / TRAINED_MSFA),
        "matrix": str(out / TRAINED_MATRIX),
        "trace": str(out / TRACE_CSV),
        "msfa_id": msfa.msfa_id,
        "initial_objective": trace.objectives[0],
        "final_objective": trace.final_objective,
        "outer_iterations": trace.iterations[-1],
    }


# ---------------- mosaic / demosaic ----------------

def cmd_mosaic(cube_path: str, msfa_path: str, out_path: str, threads: int) -> dict[str, Any]:
    cube = formats.read_cube(cube_path)
    msfa = formats.read_msfa(msfa_path)
    mosaic = mosaic_image(msfa, cube, threads)
    formats.write_mosaic(out_path, mosaic)
    _summary(f"Mosaicked {cube.width}x{cube.height}x{cube.bands} cube into {mosaic.width}x{mosaic.height}")
    return {"mosaic": out_path, "msfa_id": mosaic.msfa_id, "width": mosaic.width, "height": mosaic.height}


def cmd_demosaic(mosaic_path: str, msfa_path: str, matrix_path: str, out_path: str,
                 width: int | None, height: int | None, threads: int) -> dict[str, Any]:
    mosaic = formats.read_mosaic(mosaic_path)
    msfa = formats.read_msfa(msfa_path)
    matrix = load_matrix(matrix_path)
    if matrix.msfa_id and matrix.msfa_id != msfa.msfa_id:
        raise ShapeMismatchError("cli", "demosaic", f"matrix was built for MSFA {matrix.msfa_id}, not {msfa.msfa_id}")
    estimate = demosaic(matrix, msfa, mosaic, threads)
    if width or height:
        estimate = SpectralCube(
            estimate.values[:height or estimate.height, :width or estimate.width],
            estimate.wavelengths, estimate=True,
        )
    formats.write_cube(out_path, estimate.clamped())
    _summary(f"Demosaicked {mosaic.width}x{mosaic.height} mosaic ({matrix.mode.value}) into {out_path}")
    return {"cube": out_path, "mode": matrix.mode.value, "width": estimate.width, "height": estimate.height}


# ---------------- eval / render ----------------

def cmd_eval(reference_path: str, test_path: str) -> dict[str, Any]:
    reference = formats.read_cube(reference_path)
    test = formats.read_cube(test_path)
    msi = psnr(reference, test)
    rgb = psnr(render_srgb(reference), render_srgb(test))
    _summary(f"PSNR MSI {msi:.3f} dB, RGB {rgb:.3f} dB")
    return {"psnr_msi_db": formats.format_db(msi), "psnr_rgb_db": formats.format_db(rgb)}


def cmd_render(cube_path: str | None, out_path: str, msfa_path: str | None = None, scale: int = 1) -> dict[str, Any]:
    """Render a cube, or with msfa_path the filter pattern itself; scale repeats each pixel."""
    if scale < 1:
        raise InvalidDataError("cli", "render", f"scale must be >= 1, got {scale}")
    if (cube_path is None) == (msfa_path is None):
        raise InvalidDataError("cli", "render", "pass exactly one of a cube or an MSFA")
    if msfa_path is not None:
        rgb = render_msfa_colors(formats.read_msfa(msfa_path))
    else:
        rgb = render_srgb(formats.read_cube(cube_path))
    values = np.repeat(np.repeat(rgb.values, scale, axis=0), scale, axis=1)
    formats.write_ppm(out_path, values)
    return {"ppm": out_path, "width": values.shape[1], "height": values.shape[0]}


# ---------------- synth / bands ----------------

def cmd_synth(width: int, height: int, bands: int, start_nm: float, stop_nm: float, seed: int, out_path: str) -> dict[str, Any]:
    cube = synth_hne(width, height, uniform_grid(start_nm, stop_nm, bands), seed)
    formats.write_cube(out_path, cube)
    _summary(f"Synthesized {width}x{height}x{bands} H&E phantom (seed {seed})")
    return {"cube": out_path, "width": width, "height": height, "bands": bands, "seed": seed}


def cmd_bands(cube_path: str, out_path: str, start_nm: float | None, stop_nm: float | None,
              step_nm: float | None, quadrants: bool) -> dict[str, Any]:
    cube = formats.read_cube(cube_path)
    if start_nm is not None:
        if stop_nm is None or step_nm is None:
            raise InvalidDataError("cli", "bands", "--start-nm needs --stop-nm and --step-nm")
        cube = select_bands(cube, start_nm, stop_nm, step_nm)
    written = []
    if quadrants:
        out = Path(out_path)
        for label, part in split_quadrants(cube).items():
            target = out.with_name(f"{out.stem}_{label}{out.suffix}")
            formats.write_cube(target, part)
            written.append(str(target))
    else:
        formats.write_cube(out_path, cube)
        written.append(out_path)
    return {"cubes": written, "bands": cube.bands}


# ---------------- baselines ----------------

def _markov_matrix(msfa: MsfaBlock, mode: BlockMode, rho_s: float, rho_l: float, ridge: float | None) -> DemosaicMatrix:
    r = markov_autocorr(msfa.shape, msfa.bands, mode, rho_s, rho_l)
    phi = build_phi(msfa)
    return wiener_matrix(r, expand_nine(phi) if mode is BlockMode.NINE_BLOCK else phi, ridge)


def cmd_baseline(kind: str, cube_path: str, out_path: str, matrix_out: str | None,
                 rho_spatial: float | None, rho_spectral: float | None, ridge: float | None) -> dict[str, Any]:
    wavelengths = formats.read_cube(cube_path).wavelengths
    msfa = bandpass_msfa(wavelengths) if kind == "bandpass" else bayer_cfa(wavelengths)
    formats.write_msfa(out_path, msfa)
    payload: dict[str, Any] = {"msfa": out_path, "kind": kind, "msfa_id": msfa.msfa_id}
    if matrix_out:
        cfg = ConfigManager()
        rho_s = rho_spatial if rho_spatial is not None else cfg.get_float(ConfigKeys.MARKOV_RHO_SPATIAL, 0.95)
        rho_l = rho_spectral if rho_spectral is not None else cfg.get_float(ConfigKeys.MARKOV_RHO_SPECTRAL, 0.95)
        save_matrix(Path(matrix_out), _markov_matrix(msfa, BlockMode.NINE_BLOCK, rho_s, rho_l, ridge))
        payload.update({"matrix": matrix_out, "rho_spatial": rho_s, "rho_spectral": rho_l})
    return payload


# ---------------- compare ----------------

def build_designs(run: RunConfig, msfa: MsfaBlock, w_nine: DemosaicMatrix, training: list[SpectralCube],
                  threads: int) -> list[DesignSpec]:
    """Trained rows first, then the non-trained baselines switched on in the config."""
    cfg = run.optim_config()
    designs = [DesignSpec("proposed-9block", msfa, w_nine, "Proposed (9 blocks)")]
    if run.baselines.one_block:
        r_one = empirical_autocorr(training, msfa.shape, BlockMode.ONE_BLOCK, threads)
        w_one = wiener_matrix(r_one, build_phi(msfa), cfg.ridge, cfg.relative_ridge)
        designs.append(DesignSpec("proposed-1block", msfa, w_one, "Proposed (1 block)"))
    wavelengths = training[0].wavelengths
    if run.baselines.bandpass:
        bandpass = bandpass_msfa(wavelengths)
        r_nine = empirical_autocorr(training, bandpass.shape, BlockMode.NINE_BLOCK, threads)
        designs.append(DesignSpec(
            "bandpass-9block", bandpass,
            wiener_matrix(r_nine, expand_nine(build_phi(bandpass)), cfg.ridge, cfg.relative_ridge),
            "Bandpass (trained Wiener)",
        ))
    if run.baselines.markov_wiener:
        bandpass = bandpass_msfa(wavelengths)
        rho_s, rho_l = run.markov_rhos()
        designs.append(DesignSpec(
            "bandpass-markov", bandpass,
            _markov_matrix(bandpass, BlockMode.NINE_BLOCK, rho_s, rho_l, cfg.ridge),
            f"Bandpass + Markov stand-in (rho_s={rho_s:g}, rho_l={rho_l:g})",
        ))
    if run.baselines.bayer:
        bayer = bayer_cfa(wavelengths)
        r_bayer = empirical_autocorr(training, bayer.shape, BlockMode.NINE_BLOCK, threads)
        designs.append(DesignSpec(
            "model-bayer", bayer,
            wiener_matrix(r_bayer, expand_nine(build_phi(bayer)), cfg.ridge, cfg.relative_ridge),
            "model Bayer (Gaussian RGGB)",
        ))
    return designs


def _db_cell(value: float) -> str:
    shown = formats.format_db(value)
    return shown if isinstance(shown, str) else f"{shown:.3f}"


def cmd_compare(config_path: str, overrides: dict[str, Any], threads: int) -> list[dict[str, Any]]:
    run = load_run_config(config_path, overrides)
    out = Path(run.output_dir)
    if not ((out / TRAINED_MSFA).is_file() and (out / TRAINED_MATRIX).is_file()):
        logger.info(f"No trained artifacts in {out}; running optimize first")
        run_optimize(run, threads)
    msfa = formats.read_msfa(out / TRAINED_MSFA)
    w_nine = load_matrix(out / TRAINED_MATRIX)

    training = _load_cubes(run.training_cubes)
    designs = build_designs(run, msfa, w_nine, training, threads)
    test_paths = run.test_cubes or run.training_cubes

    rows: list[dict[str, Any]] = []
    html_rows: list[dict[str, str]] = []
    for path in test_paths:
        reference = formats.read_cube(path)
        for design in designs:
            result, _ = evaluate_design(reference, design, threads)
            row = {"image": Path(path).name, **result.to_json()}
            rows.append(row)
            html_rows.append({
                "Image": row["image"],
                "Design": design.design_id,
                "Description": design.label,
                "Demosaicking": result.strategy,
                "PSNR MSI [dB]": _db_cell(result.psnr_msi_db),
                "PSNR RGB [dB]": _db_cell(result.psnr_rgb_db),
                "Runtime [s]": f"{result.runtime_s:.3f}",
            })

    (out / "report.json").write_text(json.dumps(rows, indent=1) + "\n", encoding="utf-8")
    (out / "report.html").write_text(generate_html_table(html_rows, report_title="MSFA design comparison"), encoding="utf-8")
    _summary(f"Compared {len(designs)} designs on {len(test_paths)} images; report in {out / 'report.json'}")
    return rows


# ---------------- spectrum ----------------

def cmd_spectrum(reference_path: str, test_paths: list[str], box: list[int] | None,
                 threshold_nm: float | None, threshold: float | None) -> dict[str, Any]:
    reference = formats.read_cube(reference_path)
    if box is not None:
        mask = mask_from_box(reference.width, reference.height, *box)
    elif threshold_nm is not None and threshold is not None:
        mask = mask_by_threshold(reference, threshold_nm, threshold)
    else:
        raise InvalidDataError("cli", "spectrum", "give --box or both --threshold-nm and --threshold")
    ref_spectrum = mean_spectrum(reference, mask)
    result: dict[str, Any] = {
        "wavelengths_nm": [float(w) for w in reference.wavelengths],
        "pixels": mask.count,
        "reference": [float(x) for x in ref_spectrum],
        "tests": [],
    }
    for path in test_paths:
        spectrum = mean_spectrum(formats.read_cube(path), mask)
        result["tests"].append({
            "cube": path,
            "spectrum": [float(x) for x in spectrum],
            "rmse": spectrum_rmse(ref_spectrum, spectrum),
        })
    return result


def to_json(payload: Any) -> str:
    def _default(obj: Any):
        if isinstance(obj, (np.floating, np.integer)):
            return obj.item()
        if isinstance(obj, Path):
            return str(obj)
        raise TypeError(f"not JSON serialisable: {type(obj).__name__}")

    return json.dumps(payload, indent=1, default=_default)
