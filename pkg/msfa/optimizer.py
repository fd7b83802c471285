# msfa/optimizer.py
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from core.block_mode import AutocorrSource, BlockMode
from core.errors import InvalidDataError, OptimizationError, ShapeMismatchError
from msfa.spectral_core import CENTER_SLOT, BlockShape, MsfaBlock, SpectralCube
from msfa.stats import AutocorrMatrix, _validate_training, sample_vectors, second_moment
from msfa.wiener import DemosaicMatrix, wiener_from_sensitivities
from utils.common.logger import get_logger

"""
Joint optimization of the filter sensitivities Phi and the nine-block Wiener matrix W'.

Outer loop (fixed count): W'_i = Wiener(R', Phi_{i-1}); Phi_i = argmin over the box [0,1]
with W'_i fixed. The objective is the mean over training neighborhoods of
||u_c - S W' (I_9 kron Phi) u'_c||^2, a convex quadratic in the N*L entries of Phi.

With W' fixed the objective only depends on the training data through R' (the second
moment of the neighborhoods), so the inner solver works on the exact quadratic model
p^T H p - 2 b^T p + c built from W' and R'.
"""

logger = get_logger("msfa_forge.optimizer")


@dataclass(frozen=True)
class OptimConfig:
    outer_iters: int = 1000
    inner_max_iters: int = 200
    inner_tol: float = 1e-7
    seed: int = 0
    # None: relative default ridge; 0.0: exact Wiener solve
    ridge: float | None = None
    relative_ridge: float = 1e-8
    log_every: int = 50
    early_stop: bool = False
    early_stop_window: int = 10
    early_stop_rtol: float = 1e-8

    def __post_init__(self):
        if self.outer_iters < 1:
            raise InvalidDataError("optimizer", "config", f"outer_iters must be >= 1, got {self.outer_iters}")
        if self.inner_max_iters < 1:
            raise InvalidDataError("optimizer", "config", f"inner_max_iters must be >= 1, got {self.inner_max_iters}")
        if self.inner_tol <= 0 or self.early_stop_rtol <= 0:
            raise InvalidDataError("optimizer", "config", "tolerances must be > 0")
        if self.ridge is not None and self.ridge < 0:
            raise InvalidDataError("optimizer", "config", f"ridge must be >= 0, got {self.ridge}")
        if self.early_stop_window < 1 or self.log_every < 1:
            raise InvalidDataError("optimizer", "config", "early_stop_window and log_every must be >= 1")


@dataclass
class OptimTrace:
    """Row 0 is the random start; row i is after outer iteration i."""
    iterations: list[int] = field(default_factory=list)
    objectives: list[float] = field(default_factory=list)
    inner_iters: list[int] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    elements_per_sample: int = 1

    def record(self, iteration: int, objective: float, inner: int, seconds: float) -> None:
        if not np.isfinite(objective) or objective < 0:
            raise OptimizationError("optimizer", "trace", f"objective {objective!r} at iteration {iteration}")
        self.iterations.append(iteration)
        self.objectives.append(float(objective))
        self.inner_iters.append(int(inner))
        self.seconds.append(float(seconds))

    @property
    def final_objective(self) -> float:
        return self.objectives[-1]


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """Neighborhood vectors u' (rows, 9LN); the center targets u are slot 4 of each row."""
    neighborhoods: NDArray[np.float64]
    block: BlockShape
    bands: int
    wavelengths: NDArray[np.float64]

    def __post_init__(self):
        if self.neighborhoods.ndim != 2 or self.neighborhoods.shape[0] == 0:
            raise InvalidDataError("optimizer", "training set", "training set must be a non-empty 2-D array")
        if self.neighborhoods.shape[1] != 9 * self.per_block:
            raise ShapeMismatchError(
                "optimizer", "training set",
                f"rows have length {self.neighborhoods.shape[1]}, expected {9 * self.per_block}",
            )

    @property
    def per_block(self) -> int:
        return self.block.n_pixels * self.bands

    @property
    def size(self) -> int:
        return self.neighborhoods.shape[0]

    @property
    def centers(self) -> NDArray:
        return self.neighborhoods[:, CENTER_SLOT * self.per_block:(CENTER_SLOT + 1) * self.per_block]

    def second_moment(self, threads: int = 1) -> AutocorrMatrix:
        matrix = second_moment(self.neighborhoods, threads)
        return AutocorrMatrix(matrix, BlockMode.NINE_BLOCK, AutocorrSource.EMPIRICAL, self.block, self.bands, self.size)


def build_training_set(
        cubes: Sequence[SpectralCube],
        block: BlockShape,
        max_samples: int | None = None,
        seed: int = 0,
) -> TrainingSet:
    """Gather every block-aligned neighborhood (replicate padding at borders)."""
    _validate_training(cubes)
    rows = np.concatenate([sample_vectors(c, block, BlockMode.NINE_BLOCK) for c in cubes], axis=0)
    if max_samples is not None and rows.shape[0] > max_samples:
        keep = np.sort(np.random.default_rng(seed).choice(rows.shape[0], size=max_samples, replace=False))
        rows = rows[keep]
        logger.info(f"Subsampled training set to {max_samples} neighborhoods")
    return TrainingSet(np.ascontiguousarray(rows), block, cubes[0].bands, cubes[0].wavelengths)


def init_random_msfa(seed: int, block: BlockShape, wavelengths: NDArray) -> MsfaBlock:
    """Entries i.i.d. uniform on [0,1] from numpy's seeded PCG64 generator."""
    wavelengths = np.asarray(wavelengths, dtype=np.float64).reshape(-1)
    rng = np.random.default_rng(seed)
    sens = rng.uniform(0.0, 1.0, size=(block.n_pixels, wavelengths.size))
    return MsfaBlock(block, sens, wavelengths)


# ---------------- Objective ----------------

def _center_rows(w: DemosaicMatrix | NDArray, per_block: int) -> NDArray:
    matrix = w.matrix if isinstance(w, DemosaicMatrix) else np.asarray(w)
    if matrix.shape[0] == 9 * per_block:
        return matrix[CENTER_SLOT * per_block:(CENTER_SLOT + 1) * per_block]
    raise ShapeMismatchError("optimizer", "objective", f"W' has {matrix.shape[0]} rows, expected {9 * per_block}")


def _sensitivities(phi: MsfaBlock | NDArray) -> NDArray:
    return phi.sensitivities if isinstance(phi, MsfaBlock) else np.asarray(phi, dtype=np.float64)


def _residuals(sens: NDArray, wc: NDArray, training: TrainingSet) -> tuple[NDArray, NDArray]:
    n, bands = sens.shape
    u9 = training.neighborhoods.reshape(training.size, 9, n, bands)
    v9 = np.einsum("cknl,nl->ckn", u9, sens).reshape(training.size, 9 * n)
    residual = training.centers - v9 @ wc.T
    return residual, u9


def objective(phi: MsfaBlock | NDArray, w: DemosaicMatrix | NDArray, training: TrainingSet) -> float:
    """(1/|T|) sum_c ||u_c - S W' (I_9 kron Phi) u'_c||^2, evaluated directly on the samples."""
    sens = _sensitivities(phi)
    residual, _ = _residuals(sens, _center_rows(w, training.per_block), training)
    return float(np.einsum("ci,ci->", residual, residual) / training.size)


def objective_gradient(phi: MsfaBlock | NDArray, w: DemosaicMatrix | NDArray, training: TrainingSet) -> NDArray:
    """
    d objective / d phi_(n,l), shape N x L. The prediction is linear in Phi's entries, so
    grad[n,l] = -(2/|T|) sum_c sum_k (Wc^T r_c)[k,n] u'_c[k,n,l].
    """
    sens = _sensitivities(phi)
    n, _ = sens.shape
    wc = _center_rows(w, training.per_block)
    residual, u9 = _residuals(sens, wc, training)
    z = (residual @ wc).reshape(training.size, 9, n)
    return -2.0 / training.size * np.einsum("ckn,cknl->nl", z, u9)


@dataclass(frozen=True, eq=False)
class QuadraticModel:
    """objective(p) = p^T H p - 2 b^T p + c for p = vec(Phi sensitivities), row-major N x L."""
    h: NDArray[np.float64]
    b: NDArray[np.float64]
    c: float
    shape: tuple[int, int]

    def value(self, p: NDArray) -> float:
        return float(p @ (self.h @ p) - 2.0 * (self.b @ p) + self.c)

    def gradient(self, p: NDArray) -> NDArray:
        return 2.0 * (self.h @ p - self.b)


def quadratic_model(w: DemosaicMatrix | NDArray, r_nine: AutocorrMatrix | NDArray, n: int, bands: int) -> QuadraticModel:
    """
    Exact quadratic of the objective in Phi for fixed W', given R' of the training samples:
      H[(n,l),(m,j)] = sum_{k,k'} (Wc^T Wc)[(k,n),(k',m)] R'[(k,n,l),(k',m,j)]
      b[(n,l)]       = sum_k sum_i Wc[i,(k,n)] R'[(4,i),(k,n,l)]
      c              = trace of the center block of R'
    """
    r = r_nine.matrix if isinstance(r_nine, AutocorrMatrix) else np.asarray(r_nine)
    per_block = n * bands
    wc = _center_rows(w, per_block)
    k_mat = (wc.T @ wc).reshape(9, n, 9, n)
    r6 = r.reshape(9, n, bands, 9, n, bands)
    h = np.einsum("anbm,anlbmj->nlmj", k_mat, r6).reshape(per_block, per_block)
    h = 0.5 * (h + h.T)
    center = slice(CENTER_SLOT * per_block, (CENTER_SLOT + 1) * per_block)
    cross = r[center, :].reshape(per_block, 9, n, bands)
    b = np.einsum("ikn,iknl->nl", wc.reshape(per_block, 9, n), cross).reshape(per_block)
    c = float(np.trace(r[center, center]))
    return QuadraticModel(h, b, c, (n, bands))


def projected_gradient_norm(p: NDArray, g: NDArray) -> float:
    return float(np.linalg.norm(np.clip(p - g, 0.0, 1.0) - p))


def kkt_violation(phi: MsfaBlock | NDArray, gradient: NDArray) -> float:
    """Largest violation of the box KKT conditions (0 at an exact constrained minimum)."""
    p = _sensitivities(phi).reshape(-1)
    g = np.asarray(gradient).reshape(-1)
    at_lower = p <= 0.0
    at_upper = p >= 1.0
    interior = ~(at_lower | at_upper)
    violations = np.concatenate([
        np.abs(g[interior]),
        np.maximum(-g[at_lower], 0.0),
        np.maximum(g[at_upper], 0.0),
    ])
    return float(violations.max()) if violations.size else 0.0


def _minimize_box_quadratic(
        model: QuadraticModel,
        p0: NDArray,
        max_iters: int,
        tol: float,
) -> tuple[NDArray, int]:
    """
    Projected gradient with Barzilai-Borwein trial steps and Armijo backtracking along the
    projection arc. Every accepted step strictly decreases the model.
    """
    armijo = 1e-4
    p = np.clip(p0, 0.0, 1.0)
    f = model.value(p)
    g = model.gradient(p)
    if not np.isfinite(f):
        raise OptimizationError("optimizer", "inner solve", "objective is not finite at the starting point")
    # first trial step: inverse of the largest curvature along the gradient
    curvature = float(g @ (model.h @ g))
    step = float(g @ g) / (2.0 * curvature) if curvature > 0 else 1.0
    iters = 0
    while iters < max_iters:
        if projected_gradient_norm(p, g) < tol:
            break
        iters += 1
        accepted = False
        trial = step
        for _ in range(60):
            p_new = np.clip(p - trial * g, 0.0, 1.0)
            d = p_new - p
            f_new = model.value(p_new)
            if not np.isfinite(f_new):
                raise OptimizationError("optimizer", "inner solve", f"non-finite objective at inner iteration {iters}")
            if f_new <= f + armijo * float(g @ d) and f_new < f:
                accepted = True
                break
            trial *= 0.5
        if not accepted:
            break
        g_new = model.gradient(p_new)
        s, y = p_new - p, g_new - g
        sy = float(s @ y)
        step = float(s @ s) / sy if sy > 0 else trial * 2.0
        p, f, g = p_new, f_new, g_new
    return p, iters


def _inner_step(model: QuadraticModel, phi: MsfaBlock, cfg: OptimConfig) -> tuple[MsfaBlock, float, int]:
    p0 = phi.sensitivities.reshape(-1)
    start_value = model.value(p0)
    p, iters = _minimize_box_quadratic(model, p0, cfg.inner_max_iters, cfg.inner_tol)
    value = model.value(p)
    if value > start_value:
        p, value, iters = p0, start_value, 0
    return phi.with_sensitivities(p.reshape(phi.sensitivities.shape)), value, iters


def solve_inner(
        w: DemosaicMatrix | NDArray,
        training: TrainingSet,
        phi_init: MsfaBlock,
        cfg: OptimConfig,
        r_nine: AutocorrMatrix | None = None,
) -> tuple[MsfaBlock, int]:
    """
    Minimize the objective over the box [0,1]^(N x L) with W' fixed.
    Returns the new MSFA (objective never above the start) and the iterations used.
    """
    n, bands = phi_init.sensitivities.shape
    r = r_nine if r_nine is not None else training.second_moment()
    phi, _, iters = _inner_step(quadratic_model(w, r, n, bands), phi_init, cfg)
    return phi, iters


def _early_stop(trace: OptimTrace, cfg: OptimConfig) -> bool:
    if not cfg.early_stop or len(trace.objectives) <= cfg.early_stop_window:
        return False
    old = trace.objectives[-1 - cfg.early_stop_window]
    new = trace.objectives[-1]
    return (old - new) <= cfg.early_stop_rtol * max(abs(old), np.finfo(float).tiny)


def optimize(
        training: TrainingSet | Sequence[SpectralCube],
        block: BlockShape | None,
        cfg: OptimConfig,
        threads: int = 1,
) -> tuple[MsfaBlock, DemosaicMatrix, OptimTrace]:
    """
    Alternate the Wiener update and the box-constrained Phi update.
    Args:
      - training: a TrainingSet, or cubes (block then required).
      - block (BlockShape | None): MSFA block shape when cubes are given.
      - cfg (OptimConfig): iteration counts, tolerances, seed and ridge.
      - threads (int): workers for the autocorrelation accumulation.
    Returns:
      - (optimized MSFA, final W' recomputed from it, per-iteration trace)
    """
    if not isinstance(training, TrainingSet):
        if block is None:
            raise InvalidDataError("optimizer", "optimize", "block shape is required when passing cubes")
        training = build_training_set(training, block)
    r_nine = training.second_moment(threads)
    n, bands = training.block.n_pixels, training.bands

    phi = init_random_msfa(cfg.seed, training.block, training.wavelengths)
    trace = OptimTrace(elements_per_sample=n * bands)
    start = time.perf_counter()

    w_matrix, ridge = wiener_from_sensitivities(r_nine.matrix, phi.sensitivities, cfg.ridge, cfg.relative_ridge)
    start_value = quadratic_model(w_matrix, r_nine, n, bands).value(phi.sensitivities.reshape(-1))
    trace.record(0, max(start_value, 0.0), 0, 0.0)
    logger.info(
        f"Optimizing {training.block} x {bands}-band MSFA on {training.size} neighborhoods, "
        f"{cfg.outer_iters} outer iterations, start objective {trace.objectives[0]:.6e}"
    )

    for i in range(1, cfg.outer_iters + 1):
        if i > 1:
            w_matrix, ridge = wiener_from_sensitivities(r_nine.matrix, phi.sensitivities, cfg.ridge, cfg.relative_ridge)
        phi, value, inner = _inner_step(quadratic_model(w_matrix, r_nine, n, bands), phi, cfg)
        if not np.isfinite(value):
            raise OptimizationError("optimizer", "optimize", f"non-finite objective at outer iteration {i}")
        trace.record(i, max(value, 0.0), inner, time.perf_counter() - start)
        if i % cfg.log_every == 0 or i == cfg.outer_iters:
            logger.info(f"Outer iteration {i}/{cfg.outer_iters}: objective {value:.6e}, inner iterations {inner}")
        if _early_stop(trace, cfg):
            logger.info(f"Early stop at outer iteration {i}: relative decrease below {cfg.early_stop_rtol:g}")
            break

    w_matrix, ridge = wiener_from_sensitivities(r_nine.matrix, phi.sensitivities, cfg.ridge, cfg.relative_ridge)
    final = DemosaicMatrix(w_matrix, BlockMode.NINE_BLOCK, ridge, phi.msfa_id, r_nine.label)
    return phi, final, trace


def optimize_with_restarts(
        training: TrainingSet,
        cfg: OptimConfig,
        restarts: int = 1,
        threads: int = 1,
) -> tuple[MsfaBlock, DemosaicMatrix, OptimTrace]:
    """Rerun with seeds seed, seed+1, ... and keep the lowest final objective."""
    if restarts < 1:
        raise InvalidDataError("optimizer", "restarts", f"restarts must be >= 1, got {restarts}")
    best = None
    for k in range(restarts):
        run_cfg = replace(cfg, seed=cfg.seed + k)
        result = optimize(training, None, run_cfg, threads)
        logger.info(f"Restart {k + 1}/{restarts} (seed {run_cfg.seed}): final objective {result[2].final_objective:.6e}")
        if best is None or result[2].final_objective < best[2].final_objective:
            best = result
    return best


def write_trace_csv(trace: OptimTrace, path: str | Path, include_timing: bool = True) -> None:
    """Objective column is per scalar element: per-sample objective / (L * N)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# objective = mean squared error per scalar element (per-block objective / {trace.elements_per_sample})\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["iteration", "objective", "inner_iters", "seconds"])
        for it, obj, inner, sec in zip(trace.iterations, trace.objectives, trace.inner_iters, trace.seconds):
            writer.writerow([it, repr(obj / trace.elements_per_sample), inner, f"{sec if include_timing else 0.0:.6f}"])
