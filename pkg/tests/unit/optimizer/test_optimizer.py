import csv

import numpy as np
import pytest

from core.errors import InvalidDataError, OptimizationError, ShapeMismatchError
from msfa.optimizer import (
    OptimConfig,
    OptimTrace,
    TrainingSet,
    build_training_set,
    init_random_msfa,
    kkt_violation,
    objective,
    objective_gradient,
    optimize,
    optimize_with_restarts,
    quadratic_model,
    solve_inner,
    write_trace_csv,
)
from msfa.spectral_core import BlockShape, SpectralCube
from msfa.wiener import wiener_from_sensitivities

"""
Alternating optimization: objective, its quadratic model, the box-constrained inner solve and the outer loop.
"""


@pytest.fixture(scope="module")
def training(make_cube):
    cubes = [make_cube(16, 16, 4, seed) for seed in (1, 2)]
    return build_training_set(cubes, BlockShape(2, 2))


def _w_for(training, phi):
    w, _ = wiener_from_sensitivities(training.second_moment().matrix, phi.sensitivities, ridge=None)
    return w


@pytest.mark.usefixtures("apply_scenario_metadata")
def test_config_validation(scenario):
    with pytest.raises(InvalidDataError):
        OptimConfig(**scenario["config"])


def test_training_set_layout(training):
    assert training.size == 2 * 64
    assert training.per_block == 16
    assert training.neighborhoods.shape == (128, 144)
    assert np.array_equal(training.centers, training.neighborhoods[:, 64:80])


def test_training_set_subsampling(make_cube):
    cubes = [make_cube(16, 16, 4, 1)]
    sub = build_training_set(cubes, BlockShape(2, 2), max_samples=10, seed=3)
    again = build_training_set(cubes, BlockShape(2, 2), max_samples=10, seed=3)
    assert sub.size == 10
    assert np.array_equal(sub.neighborhoods, again.neighborhoods)


def test_init_random_msfa_is_seeded(wavelengths16):
    a = init_random_msfa(7, BlockShape(4, 4), wavelengths16)
    b = init_random_msfa(7, BlockShape(4, 4), wavelengths16)
    c = init_random_msfa(8, BlockShape(4, 4), wavelengths16)
    assert np.array_equal(a.sensitivities, b.sensitivities)
    assert not np.array_equal(a.sensitivities, c.sensitivities)
    assert a.sensitivities.min() >= 0.0 and a.sensitivities.max() <= 1.0


def test_quadratic_model_matches_direct_objective(training):
    phi = init_random_msfa(0, training.block, training.wavelengths)
    w = _w_for(training, init_random_msfa(1, training.block, training.wavelengths))
    model = quadratic_model(w, training.second_moment(), 4, 4)
    p = phi.sensitivities.reshape(-1)
    assert model.value(p) == pytest.approx(objective(phi, w, training), rel=1e-7)
    assert np.allclose(model.gradient(p).reshape(4, 4), objective_gradient(phi, w, training), rtol=1e-6, atol=1e-10)


def test_objective_rejects_wrong_w(training):
    phi = init_random_msfa(0, training.block, training.wavelengths)
    with pytest.raises(ShapeMismatchError):
        objective(phi, np.zeros((16, 4)), training)


def test_solve_inner_descends_and_stays_feasible(training):
    phi0 = init_random_msfa(0, training.block, training.wavelengths)
    w = _w_for(training, phi0)
    before = objective(phi0, w, training)
    phi1, iters = solve_inner(w, training, phi0, OptimConfig(inner_max_iters=100))
    after = objective(phi1, w, training)
    assert iters >= 1
    assert after <= before + 1e-12
    assert phi1.sensitivities.min() >= 0.0 and phi1.sensitivities.max() <= 1.0


def test_kkt_violation_on_box():
    phi = np.array([[0.0, 1.0, 0.5]])
    # lower bound with positive gradient, upper bound with negative gradient, interior zero: satisfied
    assert kkt_violation(phi, np.array([[2.0, -3.0, 0.0]])) == 0.0
    # wrong-signed gradients at the bounds and a nonzero interior gradient all count
    assert kkt_violation(phi, np.array([[-0.5, 0.0, 0.0]])) == 0.5
    assert kkt_violation(phi, np.array([[0.0, 0.25, 0.0]])) == 0.25
    assert kkt_violation(phi, np.array([[0.0, 0.0, -0.75]])) == 0.75


def test_optimize_trace_and_feasibility(training):
    cfg = OptimConfig(outer_iters=5, inner_max_iters=50, seed=4)
    msfa, w, trace = optimize(training, None, cfg)
    assert trace.iterations == [0, 1, 2, 3, 4, 5]
    assert trace.inner_iters[0] == 0 and trace.seconds[0] == 0.0
    assert trace.final_objective <= trace.objectives[0]
    assert trace.elements_per_sample == 16
    assert msfa.sensitivities.min() >= 0.0 and msfa.sensitivities.max() <= 1.0
    assert w.matrix.shape == (144, 36)
    assert w.msfa_id == msfa.msfa_id


def test_optimize_is_deterministic(training):
    cfg = OptimConfig(outer_iters=3, inner_max_iters=30, seed=11)
    a = optimize(training, None, cfg)
    b = optimize(training, None, cfg)
    assert np.array_equal(a[0].sensitivities, b[0].sensitivities)
    assert a[2].objectives == b[2].objectives


def test_optimize_from_cubes_needs_block(make_cube):
    with pytest.raises(InvalidDataError):
        optimize([make_cube(8, 8, 2)], None, OptimConfig(outer_iters=1))


def test_early_stop_cuts_the_run(training):
    cfg = OptimConfig(outer_iters=50, inner_max_iters=5, early_stop=True, early_stop_window=1, early_stop_rtol=0.5)
    _, _, trace = optimize(training, None, cfg)
    assert len(trace.iterations) < 51


def test_restarts_keep_the_best(training):
    cfg = OptimConfig(outer_iters=2, inner_max_iters=20, seed=5)
    _, _, best = optimize_with_restarts(training, cfg, restarts=2)
    finals = [optimize(training, None, OptimConfig(outer_iters=2, inner_max_iters=20, seed=s))[2].final_objective for s in (5, 6)]
    assert best.final_objective == min(finals)
    with pytest.raises(InvalidDataError):
        optimize_with_restarts(training, cfg, restarts=0)


def test_trace_rejects_invalid_objective():
    trace = OptimTrace()
    with pytest.raises(OptimizationError):
        trace.record(0, float("nan"), 0, 0.0)
    with pytest.raises(OptimizationError):
        trace.record(0, -1.0, 0, 0.0)


def test_write_trace_csv(tmp_path):
    trace = OptimTrace(elements_per_sample=4)
    trace.record(0, 2.0, 0, 0.0)
    trace.record(1, 1.0, 7, 0.123456789)
    path = tmp_path / "trace.csv"
    write_trace_csv(trace, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# objective = mean squared error per scalar element")
    rows = list(csv.reader(lines[1:]))
    assert rows[0] == ["iteration", "objective", "inner_iters", "seconds"]
    assert rows[1] == ["0", "0.5", "0", "0.000000"]
    assert rows[2] == ["1", "0.25", "7", "0.123457"]

    write_trace_csv(trace, path, include_timing=False)
    rows = list(csv.reader(path.read_text().splitlines()[1:]))
    assert rows[2][3] == "0.000000"


@pytest.fixture(scope="module")
def tiny_training(make_cube):
    """1x1 block, two bands: Phi has two entries, small enough for a grid search."""
    return build_training_set([make_cube(6, 6, 2, 5)], BlockShape(1, 1))


def _grid_minimum(model, steps: int = 201) -> float:
    axis = np.linspace(0.0, 1.0, steps)
    return min(model.value(np.array([a, b])) for a in axis for b in axis)


def test_solve_inner_saturates_at_the_lower_bound(tiny_training):
    # negative weights predict below every (positive) target, so Phi = 0 is best in the box
    w = -np.ones((18, 9))
    phi0 = init_random_msfa(0, tiny_training.block, tiny_training.wavelengths)
    phi1, _ = solve_inner(w, tiny_training, phi0, OptimConfig(inner_max_iters=500, inner_tol=1e-12))
    assert np.array_equal(phi1.sensitivities, np.zeros((1, 2)))
    model = quadratic_model(w, tiny_training.second_moment(), 1, 2)
    assert model.value(phi1.sensitivities.reshape(-1)) <= _grid_minimum(model) + 1e-12


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_solve_inner_matches_grid_search(tiny_training, seed):
    w = np.random.default_rng(seed).normal(0.0, 2.0, (18, 9))
    phi0 = init_random_msfa(seed, tiny_training.block, tiny_training.wavelengths)
    phi1, _ = solve_inner(w, tiny_training, phi0, OptimConfig(inner_max_iters=500, inner_tol=1e-12))
    model = quadratic_model(w, tiny_training.second_moment(), 1, 2)
    p = phi1.sensitivities.reshape(-1)
    assert model.value(p) <= _grid_minimum(model) + 1e-10
    # KKT at the returned point: bound entries have outward gradients, interior ones vanish
    start_gradient = np.abs(model.gradient(phi0.sensitivities.reshape(-1))).max()
    assert kkt_violation(phi1, model.gradient(p)) <= 1e-6 * max(1.0, start_gradient)


def test_objective_with_zero_estimator_is_mean_energy(training):
    phi = init_random_msfa(0, training.block, training.wavelengths)
    energy = float(np.mean(np.sum(training.centers ** 2, axis=1)))
    assert objective(phi, np.zeros((144, 36)), training) == pytest.approx(energy, rel=1e-12)


def test_exact_reconstruction_has_zero_objective_and_gradient(make_cube):
    # one band, unit filters, W' = I: the estimate is the mosaic itself
    single = build_training_set([make_cube(8, 8, 1, 3)], BlockShape(2, 2))
    phi = np.ones((4, 1))
    w = np.eye(36)
    assert objective(phi, w, single) == pytest.approx(0.0, abs=1e-15)
    assert np.allclose(objective_gradient(phi, w, single), 0.0, atol=1e-14)


def test_doubling_the_data_scales_objective_and_gradient_by_four(training):
    doubled = TrainingSet(2.0 * training.neighborhoods, training.block, training.bands, training.wavelengths)
    phi = init_random_msfa(2, training.block, training.wavelengths)
    w = _w_for(training, phi)
    assert objective(phi, w, doubled) == pytest.approx(4.0 * objective(phi, w, training), rel=1e-12)
    assert np.allclose(objective_gradient(phi, w, doubled), 4.0 * objective_gradient(phi, w, training), rtol=1e-12, atol=1e-15)


def test_single_band_training_reaches_zero(random_cube):
    cube = random_cube(16, 16, 1)
    single = build_training_set([cube], BlockShape(2, 2))
    _, _, trace = optimize(single, None, OptimConfig(outer_iters=3, inner_max_iters=20, seed=5))
    energy = float(np.mean(np.sum(single.centers ** 2, axis=1)))
    assert trace.final_objective <= 1e-6 * energy


def test_rank_one_training_reaches_zero():
    # every neighborhood identical: R' = u' u'^T and the Wiener estimate reproduces u
    cube = SpectralCube(np.broadcast_to([0.3, 0.8, 0.5], (8, 8, 3)), [450.0, 550.0, 650.0])
    rank_one = build_training_set([cube], BlockShape(2, 2))
    _, _, trace = optimize(rank_one, None, OptimConfig(outer_iters=3, inner_max_iters=20, seed=6))
    energy = float(np.mean(np.sum(rank_one.centers ** 2, axis=1)))
    assert trace.final_objective <= 1e-10 * energy
