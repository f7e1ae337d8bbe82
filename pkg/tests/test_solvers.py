import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from triquad.benchmarks import REGISTRY
from triquad.errors import ConvergenceError
from triquad.fixedpoint import (ProcessPair, batch_standard_error, distance, picard_map, run_picard, transport,
                                zero_pair)
from triquad.grid_paths import make_grid, simulate_brownian
from triquad.model import ProblemSpec, TerminalPart
from triquad.scalar_solver import solve_scalar_colehopf, solve_scalar_euler, zero_inputs

from conftest import constant_h_spec


@pytest.fixture(scope="module")
def wt():
    spec = REGISTRY["wt_scalar"].build(0.25)
    return spec, simulate_brownian(make_grid(0.25, 20), 20000, 1, 1)


@pytest.mark.parametrize("solver", [solve_scalar_colehopf, solve_scalar_euler])
def test_scalar_solvers_on_wt_benchmark(wt, solver):
    spec, b = wt
    sol = solver(spec, 1, zero_inputs(spec, b), b)
    assert np.array_equal(sol.Y[:, -1], np.clip(b.cumulative[:, -1, 0], -3, 3))
    se = sol.diagnostics["y0_stderr"]
    assert abs(sol.Y[:, 0].mean() - 0.125) < 4 * se + 2e-3
    assert abs(sol.Z.mean() - 1.0) < 0.05


def test_manufactured_constant_h_is_exact():
    spec = constant_h_spec(0.5, a=-0.3, C=0.3)
    b = simulate_brownian(make_grid(0.5, 10), 500, 1, 0)
    for solver in (solve_scalar_colehopf, solve_scalar_euler):
        sol = solver(spec, 1, zero_inputs(spec, b), b)
        exact = -0.3 * (0.5 - b.grid.times)
        assert np.max(np.abs(sol.Y - exact[None, :])) < 1e-12
        assert np.max(np.abs(sol.Z)) < 1e-12


def test_picard_on_triangular_benchmark_stops_after_second_pass():
    spec = REGISTRY["triangular"].build(0.25)
    b = simulate_brownian(make_grid(0.25, 20), 5000, 1, 2)
    pair, rep = run_picard(spec, b)
    assert rep.converged and len(rep.iterations) == 2
    assert rep.iterations[1]["combined"] == 0.0
    assert not rep.eta_satisfied and rep.notes
    assert rep.bound_checks["Y_sup_le_A"] and rep.bound_checks["Z_bmo_sq_le_B_sq"]


def test_convergence_error_carries_report():
    spec = ProblemSpec(1, 1, 0.25, 0.01, 0.0, [TerminalPart("clamped_affine", {"bound": 1.0})],
                       h_parts=[{"family": "bounded_sine", "offset": -0.005, "amplitude": 0.005,
                                 "frequency": 2.0}])
    b = simulate_brownian(make_grid(0.25, 10), 2000, 1, 3)
    with pytest.raises(ConvergenceError) as info:
        run_picard(spec, b, tol=1e-300, max_iter=2)
    assert len(info.value.report.iterations) == 2


def test_backends_agree_on_triangular():
    spec = REGISTRY["triangular"].build(0.25)
    b = simulate_brownian(make_grid(0.25, 20), 20000, 1, 4)
    a, _ = run_picard(spec, b, backend="colehopf")
    e, _ = run_picard(spec, b, backend="euler")
    assert np.max(np.abs(a.Y[:, 0].mean(0) - e.Y[:, 0].mean(0))) < 3 * 0.0125


def test_batch_standard_error_positive_and_shape():
    spec = REGISTRY["wt_scalar"].build(0.25)
    b = simulate_brownian(make_grid(0.25, 10), 4000, 1, 5)
    se = batch_standard_error(lambda sb: run_picard(spec, sb)[0].Y[:, 0].mean(0), b, 8)
    assert se.shape == (1,) and 0 < se[0] < 0.05
    with pytest.raises(ValueError):
        batch_standard_error(lambda sb: 0.0, b, 1)


def test_transport_preserves_functions_of_brownian_level():
    g = make_grid(0.5, 5)
    src, dst = simulate_brownian(g, 3000, 1, 6), simulate_brownian(g, 3000, 1, 7)
    Y = src.cumulative[:, :, :1] ** 2
    Z = np.ones((3000, 5, 1, 1))
    moved = transport(ProcessPair(Y, Z, g, 6), src, dst)
    assert np.allclose(moved.Y, dst.cumulative[:, :, :1] ** 2, atol=1e-8)
    assert np.allclose(moved.Z, 1.0)


@given(st.integers(0, 10_000), st.floats(-1, 1), st.floats(-1, 1))
@settings(max_examples=15, deadline=None)
def test_distance_symmetric_and_zero_on_diagonal(seed, s1, s2):
    spec = REGISTRY["triangular"].build(0.25)
    b = simulate_brownian(make_grid(0.25, 4), 64, 1, seed)
    rng = np.random.default_rng(seed)
    p = zero_pair(spec, b)
    q = ProcessPair(s1 * rng.standard_normal(p.Y.shape), s2 * rng.standard_normal(p.Z.shape), b.grid, seed)
    assert distance(p, p, b)["combined"] == 0.0
    d1, d2 = distance(p, q, b), distance(q, p, b)
    assert d1["dY_sup"] == d2["dY_sup"]
    assert d1["dZ_bmo_sq"] == pytest.approx(d2["dZ_bmo_sq"], rel=1e-12, abs=1e-15)


def test_picard_map_rejects_mismatched_pair():
    spec = REGISTRY["triangular"].build(0.25)
    b = simulate_brownian(make_grid(0.25, 4), 64, 1, 0)
    bad = ProcessPair(np.zeros((64, 5, 1)), np.zeros((64, 4, 1, 1)), b.grid, 0)
    with pytest.raises(ValueError):
        picard_map(spec, b, bad)
