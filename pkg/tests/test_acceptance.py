"""Acceptance suite: one test per exit criterion, each printing a PASS/FAIL line.

Heavy Monte Carlo solves (M = 1e5, N = 50) are shared through module-scoped
fixtures so each registry case is solved once per backend.
"""

import json
import math
import time

import numpy as np
import pytest

from triquad import cli
from triquad.benchmarks import REGISTRY
from triquad.config import Numerics, ProviderConfig, RunConfig, parse_config
from triquad.constants import beta_ode, compute_constants, local_constants, contraction_constants
from triquad.fixedpoint import batch_standard_error, run_picard
from triquad.global_solver import plan_global, solve_global
from triquad.grid_paths import make_grid, simulate_brownian
from triquad.model import CallbackGenerator, ProblemSpec, TerminalPart
from triquad.pathdep import (FUNCTIONAL_KINDS, CallbackFunctional, PathFunctional, solve_delay,
                             solve_pathdep_local, validate_functional)

from conftest import constant_h_spec, mild_table_providers, record_criterion

pytestmark = pytest.mark.acceptance

M_FULL, N_FULL, SEED = 100_000, 50, 2024
BATCHES = 10
# Absolute floor for comparisons whose Monte Carlo error is exactly zero
# (manufactured cases with Z = 0): pure floating-point roundoff.
ROUNDOFF = 1e-12


# ---------------------------------------------------------------- shared solves

@pytest.fixture(scope="module")
def full_bundle():
    return simulate_brownian(make_grid(0.25, N_FULL), M_FULL, 1, SEED)


@pytest.fixture(scope="module")
def registry_solves(full_bundle):
    """(case, backend) -> (pair, report, wall seconds) at M = 1e5, N = 50."""
    out = {}
    for name, case in REGISTRY.items():
        spec = case.build(case.horizon)
        for backend in ("colehopf", "euler"):
            t0 = time.perf_counter()
            pair, rep = run_picard(spec, full_bundle, backend=backend)
            out[name, backend] = (pair, rep, time.perf_counter() - t0)
    return out


def _batch_se(spec, bundle):
    return batch_standard_error(lambda b: run_picard(spec, b)[0].Y[:, 0].mean(axis=0), bundle, BATCHES)


@pytest.fixture(scope="module")
def batch_errors(full_bundle):
    return {name: _batch_se(REGISTRY[name].build(0.25), full_bundle) for name in ("wt_scalar", "triangular")}


def _self_consistent_horizon(make_spec, multiple, providers=None, T0=1.0):
    """Solve T = multiple * eta_lambda(T) by fixed-point iteration (eta_lambda depends on T through beta)."""
    T = T0
    for _ in range(100):
        nxt = multiple * plan_global(make_spec(T), providers).eta_lambda
        if abs(nxt - T) <= 1e-15 * T:
            return nxt
        T = nxt
    raise RuntimeError("horizon iteration did not settle")


# ---------------------------------------------------------------- criteria

def test_criterion_01_closed_form_scalar(registry_solves, batch_errors):
    pair, rep, wall = registry_solves["wt_scalar", "colehopf"]
    y0 = pair.Y[:, 0, 0].mean()
    se = batch_errors["wt_scalar"][0]
    z_mean = pair.Z[:, :, 0, 0].mean()
    clamp_prob = math.erfc(3.0 / (math.sqrt(0.25) * math.sqrt(2.0)))
    ok = abs(y0 - 0.125) <= 3 * se and abs(z_mean - 1.0) <= 0.05 and wall <= 60.0 and clamp_prob < 1e-6
    record_criterion(1, ok, f"Y0={y0:.6f} vs 0.125 (|err|={abs(y0 - 0.125):.2e}, 3SE={3 * se:.2e}), "
                            f"mean Z={z_mean:.4f}, solve {wall:.1f}s, clamp prob {clamp_prob:.1e}")
    assert ok


def test_criterion_02_triangular(registry_solves, batch_errors):
    pair, rep, _ = registry_solves["triangular", "colehopf"]
    y0 = pair.Y[:, 0].mean(axis=0)
    se = batch_errors["triangular"]
    exact = np.array([0.125, -0.25])
    err = np.abs(y0 - exact)
    ok = bool(np.all(err <= 3 * se))
    record_criterion(2, ok, f"Y0={np.round(y0, 6).tolist()} vs (T/2, -T), |err|={err.tolist()}, "
                            f"3SE={(3 * se).tolist()}")
    assert ok


def test_criterion_03_backend_equivalence(registry_solves):
    dt = 0.25 / N_FULL
    worst = []
    ok = True
    for name in REGISTRY:
        a, _, _ = registry_solves[name, "colehopf"]
        e, _, _ = registry_solves[name, "euler"]
        diff = np.abs(a.Y[:, 0].mean(axis=0) - e.Y[:, 0].mean(axis=0))
        se = np.hypot([d["y0_stderr"] for d in a.diagnostics], [d["y0_stderr"] for d in e.diagnostics])
        tol = 3 * (se + dt)
        ok &= bool(np.all(diff <= tol))
        worst.append(f"{name}: {diff.max():.1e}/{tol.min():.1e}")
    record_criterion(3, ok, "max |diff| / tolerance: " + ", ".join(worst))
    assert ok


def test_criterion_04_constants_unit_values():
    spec = ProblemSpec(1, 1, 1.0, 0.0, 0.0, [TerminalPart("constant", {"value": 0.0})])
    rep = compute_constants(spec)
    checks = {
        "A": abs(rep.A - 2.0), "B": abs(rep.B - math.sqrt(2.0)), "eta": abs(rep.eta - 1 / 16),
        "K2": abs(rep.K2), "lambda": abs(rep.lam - 6.0),
    }
    ok = all(v <= 1e-12 for v in checks.values()) and rep.epsilon0 == math.inf
    record_criterion(4, ok, f"deviations {checks}, epsilon0={rep.epsilon0}")
    assert ok


def test_criterion_05_beta_closed_form_vs_ode():
    rng = np.random.default_rng(20260)
    devs = []
    for _ in range(20):
        n = int(rng.integers(1, 3))
        C, xb, alpha, T = rng.uniform(0, 0.05), rng.uniform(0, 1), rng.uniform(-1, 0.5), rng.uniform(0.01, 1)
        terminal = [TerminalPart("constant", {"value": xb})] + [TerminalPart("constant", {"value": 0.0})] * (n - 1)
        spec = ProblemSpec(n, 1, T, C, alpha, terminal)
        devs.append(beta_ode(spec, check_points=1000).ode_check)
    ok = max(devs) <= 1e-10
    record_criterion(5, ok, f"max deviation over 20 specs x 1000 points: {max(devs):.2e}")
    assert ok


def _contraction_fraction(spec, providers, seeds, M, N):
    good = total = 0
    for seed in seeds:
        b = simulate_brownian(make_grid(spec.horizon, N), M, spec.d, seed)
        _, rep = run_picard(spec, b, tol=1e-300, max_iter=4, providers=providers, raise_on_failure=False)
        assert rep.eta_satisfied
        for it in rep.iterations[1:]:
            total += 1
            good += it["ratio"] is not None and it["ratio"] <= 0.9
    return good / total, total


def _short_horizon(make_spec, providers):
    T = 1.0
    for _ in range(20):
        spec = make_spec(T)
        loc = local_constants(spec, providers)
        con = contraction_constants(spec, providers, loc.B, horizon=T)
        eta = min(loc.eta, con.etabar1, con.etabar2)
        if T <= eta:
            return T
        T = eta
    raise RuntimeError("no admissible horizon")


def test_criterion_06_contraction():
    prov = mild_table_providers()
    # The triangular benchmark itself at a horizon meeting the short-horizon bound.
    T_tri = _short_horizon(REGISTRY["triangular"].build, prov)
    frac_tri, n_tri = _contraction_fraction(REGISTRY["triangular"].build(T_tri), prov, range(20), 5000, 50)

    # A case whose map is not constant after one pass: h reads y.
    def sine(T):
        return ProblemSpec(1, 1, T, 0.01, 0.0, [TerminalPart("clamped_affine", {"bound": 1.0})],
                           l_parts=[{"family": "constant", "value": 0.01}],
                           h_parts=[{"family": "bounded_sine", "offset": -0.005, "amplitude": 0.005,
                                     "frequency": 2.0}])

    T_sine = _short_horizon(sine, prov)
    frac_sine, n_sine = _contraction_fraction(sine(T_sine), prov, range(20), 5000, 50)
    ok = frac_tri >= 0.95 and frac_sine >= 0.95
    record_criterion(6, ok, f"triangular T={T_tri:.2e}: {frac_tri:.0%} of {n_tri} ratios <= 0.9; "
                            f"y-dependent h T={T_sine:.2e}: {frac_sine:.0%} of {n_sine}")
    assert ok


def _global_manufactured():
    T = _self_consistent_horizon(constant_h_spec, 3.5)
    spec = constant_h_spec(T)
    pair, rep = solve_global(spec, 20000, 20, SEED)
    return spec, pair, rep


@pytest.fixture(scope="module")
def global_case():
    return _global_manufactured()


def test_criterion_07_a_priori_bounds(registry_solves, batch_errors, global_case):
    lines, ok = [], True
    for name in ("wt_scalar", "triangular"):
        pair, rep, _ = registry_solves[name, "colehopf"]
        bc = rep.bound_checks
        se = float(np.max(batch_errors[name]))
        y_ok = bc["Y_sup"] <= bc["A"] + 3 * se
        z_ok = bc["Z_bmo_sq"] <= bc["B_sq"] + 3 * se
        ok &= y_ok and z_ok
        lines.append(f"{name}: Y_sup={bc['Y_sup']:.3g}<=A={bc['A']:.3g}, BMO^2={bc['Z_bmo_sq']:.3g}<=B^2={bc['B_sq']:.3g}")
    spec, pair, rep = global_case
    plan = plan_global(spec)
    se = max(e["stderr"] for e in rep["intervals"])
    beta_t = plan.beta(pair.grid.times)
    excess = float(np.max(np.max(np.abs(pair.Y), axis=(0, 2)) - beta_t))
    ok &= excess <= 3 * se and rep["bmo_ok"]
    lines.append(f"global: max(|Y_t|-beta_t)={excess:.3g}, BMO^2={rep['bmo_sq']:.3g}<=8*lambda={rep['bmo_bound']:.3g}")
    record_criterion(7, ok, "; ".join(lines))
    assert ok


def test_criterion_08_stitching(global_case):
    # Part 1: a single interval must reproduce run_picard bit for bit.
    def spec_for(T):
        return ProblemSpec(1, 1, T, 0.01, 0.0, [TerminalPart("clamped_affine", {"bound": 0.1})],
                           h_parts=[{"family": "bounded_sine", "offset": -0.005, "amplitude": 0.005,
                                     "frequency": 1.0}])

    T1 = _self_consistent_horizon(spec_for, 0.5)
    spec1 = spec_for(T1)
    assert plan_global(spec1).K == 1
    g_pair, _ = solve_global(spec1, 20000, 20, SEED)
    p_pair, _ = run_picard(spec1, simulate_brownian(make_grid(T1, 20), 20000, 1, SEED))
    identical = np.array_equal(g_pair.Y, p_pair.Y) and np.array_equal(g_pair.Z, p_pair.Z)

    # Part 2: T = 3.5 eta_lambda, stitched over several intervals.
    spec, pair, rep = global_case
    T = spec.horizon
    K = rep["plan"]["intervals"]
    jumps = max(e["knot_jump"] for e in rep["intervals"])
    exact = -0.01 * (T - pair.grid.times)
    se = max(e["stderr"] for e in rep["intervals"])
    err = float(np.max(np.abs(pair.Y[:, :, 0].mean(axis=0) - exact)))
    ok = identical and K == 4 and jumps == 0.0 and err <= 3 * se + ROUNDOFF
    record_criterion(8, ok, f"K=1 bit-identical={identical}; T={T:.4g}=3.5*eta_lambda -> K={K}, "
                            f"max knot jump={jumps}, max |Y-a(T-t)|={err:.2e} (3SE={3 * se:.1e})")
    assert ok


# Criterion 9: verdict table --------------------------------------------------

_TRI = """
problem:
  n: 2
  d: 1
  horizon: 0.25
  lipschitz_C: 1.0
  terminal: [{kind: clamped_affine, bound: 3.0}, {kind: constant, value: 0.0}]
  k: [{family: z_block_quadratic, weights: [1.0]}]
numerics: {paths: 200, steps: 4}
"""


def _tables(tmp_path):
    g = np.concatenate([[0.0], np.logspace(-3, 12, 400)])
    d_path, D_path = tmp_path / "delta.txt", tmp_path / "Delta.txt"
    d_path.write_text("".join(f"{x!r} {1 / (1 + x)!r}\n" for x in g.tolist()))
    D_path.write_text("".join(f"{x!r} {1 + x!r}\n" for x in g.tolist()))
    return ProviderConfig("table", str(d_path), str(D_path))


def _cfg_from(text):
    return parse_config(text)


def _with_spec(spec, **kw):
    return RunConfig(spec, Numerics(paths=200, steps=4), **kw)


def _delay_spec():
    return constant_h_spec(0.003)


def _case_table(tmp_path):
    tables = _tables(tmp_path)
    tri = _cfg_from(_TRI)
    base = tri.problem
    peek = CallbackFunctional(lambda y, k, grid: y[:, min(k + 1, y.shape[1] - 1)], "peek")
    upper = CallbackGenerator(lambda t, y, z: z[:, 1, 0] ** 2 / (1 + z[:, 1, 0] ** 2), "reads-own-row",
                              reads_y=False)

    def spec_with(**kw):
        fields = dict(n=base.n, d=base.d, horizon=base.horizon, lipschitz_C=base.lipschitz_C, alpha=base.alpha,
                      terminal=base.terminal, l_parts=base.l_parts, k_parts=base.k_parts, h_parts=base.h_parts)
        fields.update(kw)
        return ProblemSpec(**fields)

    # (label, config text or RunConfig, command, expected verdict, expected exit code)
    return [
        ("valid triangular benchmark", tri, "validate", True, 0),
        ("k sign violation (k^2 = -1)", _with_spec(spec_with(k_parts=[{"family": "constant", "value": -1.0}])),
         "validate", False, 2),
        ("h sign violation for global solve (h = +0.005)", _with_spec(constant_h_spec(0.003, a=0.005)),
         "solve-global", False, 2),
        ("l growth violation (|l| = 2 > C)", _with_spec(spec_with(l_parts=[{"family": "constant", "value": 2.0},
                                                                           {"family": "zero"}])),
         "validate", False, 2),
        ("h growth violation (|z|^1.5 with alpha = 0)",
         _with_spec(spec_with(h_parts=[{"family": "z_power", "coefficient": -2.0, "exponent": 1.5},
                                       {"family": "zero"}])), "validate", False, 2),
        ("k growth violation (3|z^1|^2 > C(1+|z^1|^2))",
         _with_spec(spec_with(k_parts=[{"family": "z_block_quadratic", "weights": [3.0]}])), "validate", False, 2),
        ("declared triangularity violation (k^2 reads z^2)",
         _TRI.replace("weights: [1.0]", "weights: [1.0, 1.0]"), "validate", False, 4),
        ("probed triangularity violation (callback k^2 reads z^2)", _with_spec(spec_with(k_parts=[upper])),
         "validate", False, 2),
        ("alpha out of range (alpha = 1)", _TRI.replace("lipschitz_C: 1.0", "lipschitz_C: 1.0\n  alpha: 1.0"),
         "validate", False, 4),
        ("anticipative functional", _with_spec(base, functionals=(peek, peek)), "validate", False, 2),
        ("epsilon > epsilon0", _with_spec(_delay_spec(), providers=tables,
                                          delay={"kind": "delayed_value", "epsilon": 10.0}), "validate", False, 2),
        ("epsilon <= epsilon0", _with_spec(_delay_spec(), providers=tables,
                                           delay={"kind": "delayed_value", "epsilon": 1e-3}), "validate", True, 0),
    ]


def _run_case(cfg, command):
    if isinstance(cfg, str):
        try:
            cfg = parse_config(cfg)
        except Exception as exc:
            return cli.exit_code_for(exc)
    _, code = cli.execute(cfg, command)
    return code


def test_criterion_09_validator_table(tmp_path):
    rows, ok = [], True
    cases = _case_table(tmp_path)
    for label, cfg, command, verdict, expected in cases:
        code = _run_case(cfg, command)
        good = code == expected and (code == 0) == verdict
        ok &= good
        rows.append(f"{label}: exit {code}{'' if good else f' (expected {expected})'}")
    ok &= len(cases) == 12
    record_criterion(9, ok, f"{sum(1 for r in rows if 'expected' not in r)}/{len(cases)} cases as expected")
    for r in rows:
        print("   ", r)
    assert ok, rows


def test_criterion_10_path_dependence():
    # (a) zero-window delayed value is the plain equation.
    spec = ProblemSpec(1, 1, 0.1, 0.2, 0.0, [TerminalPart("clamped_affine", {"bound": 1.0})],
                       h_parts=[{"family": "bounded_sine", "amplitude": 0.1, "frequency": 1.0, "offset": -0.1}])
    b = simulate_brownian(make_grid(0.1, 20), 20000, 1, SEED)
    plain, _ = run_picard(spec, b)
    pd, _ = solve_pathdep_local(spec, PathFunctional("delayed_value", 0.0), b)
    identical = np.array_equal(plain.Y, pd.Y) and np.array_equal(plain.Z, pd.Z)

    # (b) probe suites for every registry kind.
    worst = {}
    for kind in FUNCTIONAL_KINDS:
        rep = validate_functional(PathFunctional(kind, 0.25), probes=1000, seed=SEED)
        worst[kind] = max(c.worst_violation for c in rep.checks if c.assumption_id in ("A5", "A6"))
    probes_ok = max(worst.values()) <= 1e-12

    # (c) delay solver on the constant-h case with epsilon <= epsilon0.
    prov = mild_table_providers()
    dspec = constant_h_spec(_self_consistent_horizon(constant_h_spec, 3.5, prov))
    eps0 = compute_constants(dspec, prov).epsilon0
    eps = min(0.5 * eps0, dspec.horizon / 4)
    pair, outer = solve_delay(dspec, "delayed_value", eps, 20000, 20, SEED, providers=prov, outer_tol=1e-12)
    se = max(e["stderr"] for e in outer.global_report["intervals"])
    exact = -0.01 * (dspec.horizon - pair.grid.times)
    err = float(np.max(np.abs(pair.Y[:, :, 0].mean(axis=0) - exact)))
    delay_ok = outer.converged and err <= 3 * se + ROUNDOFF

    ok = identical and probes_ok and delay_ok
    record_criterion(10, ok, f"eps=0 bit-identical={identical}; worst A5/A6 violation {max(worst.values()):.1e}; "
                             f"delay eps={eps:.2e}<=eps0={eps0:.3f}, outer distances {outer.distances}, "
                             f"|Y-a(T-t)|={err:.1e}")
    assert ok


_REPRO = {
    "constants": _TRI,
    "validate": _TRI,
    "solve-local": _TRI.replace("paths: 200, steps: 4", "paths: 3000, steps: 10, batches: 4"),
    "solve-global": """
problem:
  n: 1
  d: 1
  horizon: 0.003
  lipschitz_C: 0.01
  terminal: [{kind: clamped_affine, bound: 0.1}]
  h: [{family: bounded_sine, offset: -0.005, amplitude: 0.005, frequency: 1.0}]
numerics: {paths: 3000, steps: 4, batches: 4}
""",
    "solve-pathdep": None,
    "solve-delay": None,
    "benchmark": None,
}


def _repro_config(tmp_path, command):
    text = _REPRO[command]
    if command == "solve-delay":
        tables = _tables(tmp_path)
        text = f"""
problem:
  n: 1
  d: 1
  horizon: 0.003
  lipschitz_C: 0.01
  terminal: [{{kind: constant, value: 0.0}}]
  h: [{{family: constant, value: -0.01}}]
  delay: {{kind: moving_average, epsilon: 0.001}}
numerics: {{paths: 3000, steps: 4, batches: 4, outer_tol: 1.0e-12}}
providers: {{name: table, delta_table: {tables.delta_table}, Delta_table: {tables.Delta_table}}}
"""
    if command == "benchmark":
        return None
    if command == "solve-pathdep":
        text = _TRI.replace("numerics: {paths: 200, steps: 4}",
                            "  functionals: [{kind: running_max, epsilon: 0.05}, {kind: moving_average, epsilon: 0.05}]\n"
                            "numerics: {paths: 3000, steps: 10, batches: 4}")
    path = tmp_path / f"{command}.yaml"
    path.write_text(text)
    return str(path)


def test_criterion_11_reproducibility(tmp_path, capsys):
    results, ok = {}, True
    for command in cli.COMMANDS:
        cfg = _repro_config(tmp_path, command)
        payloads = []
        for workers in (1, 3, 1):
            argv = [command, "--workers", str(workers), "--out", str(tmp_path / f"{command}-{workers}.json")]
            argv += ["--config", cfg] if cfg else ["--suite", "manufactured", "--paths", "3000", "--steps", "5"]
            code = cli.main(argv)
            doc = json.loads((tmp_path / f"{command}-{workers}.json").read_text())
            payloads.append(json.dumps(doc["payload"], sort_keys=True))
        same = code == 0 and len(set(payloads)) == 1
        results[command] = same
        ok &= same
    capsys.readouterr()
    record_criterion(11, ok, "bit-identical payloads across reruns and worker counts 1/3: "
                             + ", ".join(f"{c}={v}" for c, v in results.items()))
    assert ok
