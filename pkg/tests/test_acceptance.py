"""End-to-end acceptance criteria, one test per criterion.

Each test records a single PASS/FAIL line that is echoed in the pytest
terminal summary (and printed directly when run with ``-s``).
"""

import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from oracles import perturbed_linearized_error, planted_sdp
from stable_sysid.benchmark import affine_chain_cell, bound_chain_cell, recovery_cell, run_suite
from stable_sysid.constraints import check_sos
from stable_sysid.linalg import concave_quad_bound
from stable_sysid.objectives import linearized_sim_error
from stable_sysid.sdp import Status, solve
from stable_sysid.simulate import NoConvergence, solve_implicit
from stable_sysid.synthetic import random_contracting_model, random_dataset

from test_sdp import max_eig_problem, two_by_two


def record(num, ok, detail):
    line = f"criterion {num}: {'PASS' if ok else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


@pytest.fixture(scope="module")
def recovery():
    return recovery_cell(seed=0)


@pytest.fixture(scope="module")
def sweep():
    return run_suite("ee-vs-rie", seed=0)


def test_criterion_1_zero_error_recovery(recovery):
    r = recovery
    ok = (r["status"] == "OPTIMAL" and r["slack_ratio"] <= 1e-6 and r["jperf_train"] <= 1.0
          and r["jperf_val"] <= 5.0 and r["runtime"] <= 120.0)
    detail = (f"slack ratio {r.get('slack_ratio', np.nan):.2e}, J_perf train {r.get('jperf_train', np.nan):.3g}%, "
              f"validation {r.get('jperf_val', np.nan):.3g}%, {r['runtime']:.1f} s")
    assert record(1, ok, detail)


def test_criterion_2_bound_chain():
    rows = [bound_chain_cell(1000 + k) for k in range(50)]
    passed = sum(r["passed"] for r in rows)
    assert record(2, passed == 50, f"{passed}/50 draws ordered")


def test_criterion_3_affine_chain():
    rows = [affine_chain_cell(2000 + k) for k in range(25)]
    passed = sum(r["passed"] for r in rows)
    worst = max(abs(r["J_se"] - r["J0"]) / (1 + r["J_se"]) for r in rows)
    assert record(3, passed == 25, f"{passed}/25 draws ordered, worst |J_se - J0| rel {worst:.1e}")


def test_criterion_4_fitted_models_stable(recovery, sweep):
    # the storage bound only applies to certified models; EE fits are reported, not judged
    judged = [("recovery", recovery)] + [
        (f"LocalRIE d={r['degree']}", r) for r in sweep["cells"] if r["mode"] == "LocalRIE"]
    bad = [name for name, r in judged if r.get("probe_failures", 1) != 0 or r.get("worst_tail", 1.0) > 1e-6]
    ee = [f"d={r['degree']}: {r.get('probe_failures')}/20 failed" for r in sweep["cells"] if r["mode"] == "EE"]
    detail = f"{len(judged) - len(bad)}/{len(judged)} certified models, 20 pairs each; EE for reference: {'; '.join(ee)}"
    assert record(4, not bad, detail)


def test_criterion_5_ee_vs_rie(sweep):
    cells = sweep["cells"]
    rie = {r["degree"]: r for r in cells if r["mode"] == "LocalRIE"}
    flags_ok = all(bool(r.get("flag")) == (not r.get("validate", False)) for r in cells if r["mode"] == "EE")
    ok = sweep["passed"] and flags_ok
    detail = (f"LocalRIE validation J_perf d=1 {rie[1]['jperf_val']:.3g}%, d=3 {rie[3]['jperf_val']:.3g}%; "
              f"{sweep['message']}")
    assert record(5, ok, detail)


def test_criterion_6_sdp_oracles():
    t0 = time.perf_counter()
    worst = 0.0
    statuses = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        N = int(rng.integers(2, 41))
        dims = [int(d) for d in rng.integers(1, 9, size=int(rng.integers(1, 5)))]
        prob, opt, _ = planted_sdp(rng, N, dims)
        sol = solve(prob)
        statuses.append(sol.status)
        worst = max(worst, abs(sol.objective - opt) / (1 + abs(opt)))
    s1 = solve(two_by_two())
    A = np.random.default_rng(99).standard_normal((6, 6))
    S = A + A.T
    s2 = solve(max_eig_problem(S))
    runtime = time.perf_counter() - t0
    err_a = max(abs(s1.z[0] - 1.0), abs(s2.z[0] - np.linalg.eigvalsh(S)[-1]))
    ok = (all(s is Status.OPTIMAL for s in statuses) and worst <= 1e-6 and err_a <= 1e-7 and runtime <= 10.0)
    assert record(6, ok, f"worst planted rel error {worst:.1e}, analytic error {err_a:.1e}, {runtime:.2f} s")


def test_criterion_7_quad_bound():
    rng = np.random.default_rng(7)
    worst_eq, worst_ineq = 0.0, np.inf
    for _ in range(1000):
        n = int(rng.integers(1, 6))
        M = rng.standard_normal((n, n))
        P = M @ M.T + 0.1 * np.eye(n)
        b = rng.standard_normal(n)
        exact = -(P @ b) @ np.linalg.solve(P, P @ b)
        worst_eq = max(worst_eq, abs(concave_quad_bound(b, P @ b, P) - exact) / (1 + abs(exact)))
        c = rng.standard_normal(n)
        gap = concave_quad_bound(b, c, P) + c @ np.linalg.solve(P, c)
        worst_ineq = min(worst_ineq, gap)
    ok = worst_eq <= 1e-9 and worst_ineq >= -1e-9
    assert record(7, ok, f"equality error {worst_eq:.1e}, smallest gap off the tight set {worst_ineq:.2e}")


def test_criterion_8_implicit_solver():
    rng = np.random.default_rng(8)
    failures, worst_spread, uncertified = 0, 0.0, 0
    for k in range(100):
        n = 1 + k % 3
        params = random_contracting_model(rng, n=n)
        uncertified += not check_sos(params, "wellposedness")[0]
        for _ in range(100):
            z = rng.uniform(-2, 2, n)
            roots = []
            for _ in range(10):
                try:
                    roots.append(solve_implicit(params, z, rng.uniform(-3, 3, n)).x)
                except NoConvergence:
                    failures += 1
            if roots:
                R = np.array(roots)
                worst_spread = max(worst_spread, np.max(np.linalg.norm(R[:, None] - R[None], axis=-1)))
    ok = failures == 0 and worst_spread <= 1e-8 and uncertified == 0
    assert record(8, ok, f"{failures} NoConvergence events, worst pairwise root distance {worst_spread:.1e}, "
                         f"{uncertified} models without a well-posedness certificate")


def test_criterion_9_linearized_error():
    rng = np.random.default_rng(9)
    worst = 0.0
    for k in range(20):
        n = 1 + k % 3
        params = random_contracting_model(rng, n=n, nonlinear=0.1)
        data = random_dataset(rng, n, 1, 1, 40)
        j0 = linearized_sim_error(params, data)
        ref = perturbed_linearized_error(params, data)
        worst = max(worst, abs(j0 - ref) / abs(ref))
    assert record(9, worst <= 1e-3, f"worst relative gap to the perturbation oracle {worst:.1e}")
