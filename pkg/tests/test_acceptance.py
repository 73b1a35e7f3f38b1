"""Acceptance criteria, each at its stated tolerance and time limit."""

import math
import time

import numpy as np
import pytest

from invariants import InvariantChecker
from oracles import breakpoint_projection, central_difference
from pcbb.config import SolverConfig
from pcbb.corpus import active_set_oracle, quadratic_corpus, random_knapsack, random_quadratic
from pcbb.experiment import ExperimentConfig, heat_problem
from pcbb.heat_fvm import (
    Grid,
    HeatObjective,
    HeatProblem,
    assemble_and_solve_state,
    design_gradient,
    interpolate_conductivity,
    manufactured_problem,
    objective_value,
    solve_adjoint,
)
from pcbb.projection import project
from pcbb.solver import solve

PROTOCOL_RUNS = {"ratio 2": (2.0, 1.0), "ratio 100": (100.0, 10.0)}


def _best_time(fn, repeats=3):
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def test_criterion_1_projection_matches_oracle(acceptance_report):
    rng = np.random.default_rng(1001)
    worst = 0.0
    t0 = time.perf_counter()
    for _ in range(1000):
        n = int(rng.integers(2, 9))
        ks = random_knapsack(n, rng)
        x = rng.normal(scale=3, size=n)
        ref = breakpoint_projection(x, ks.a, ks.b, ks.l, ks.u)
        worst = max(worst, float(np.abs(project(x, ks) - ref).max()))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed < 10
    acceptance_report(1, ok, f"max deviation {worst:.2e} (<= 1e-10), {elapsed:.2f}s (< 10s)")
    assert worst <= 1e-10
    assert elapsed < 10


def test_criterion_2_projection_at_scale(acceptance_report):
    rng = np.random.default_rng(1002)
    n = 1_000_000
    ks = random_knapsack(n, rng)
    x = rng.normal(scale=3, size=n)
    t0 = time.perf_counter()
    y = project(x, ks)
    elapsed = time.perf_counter() - t0
    rel = abs(ks.residual(y)) / ks.feasibility_scale(y)
    in_box = bool(np.all(y >= ks.l) and np.all(y <= ks.u))

    small = random_knapsack(n // 10, rng)
    xs = rng.normal(scale=3, size=n // 10)
    ratio = _best_time(lambda: project(x, ks)) / _best_time(lambda: project(xs, small))

    ok = rel <= 1e-12 and in_box and elapsed < 1.0 and ratio <= 40
    acceptance_report(
        2,
        ok,
        f"relative residual {rel:.1e} (<= 1e-12), bounds exact {in_box}, {elapsed:.3f}s (< 1s), "
        f"time ratio 1e6/1e5 {ratio:.1f} (<= 40)",
    )
    assert rel <= 1e-12 and in_box
    assert elapsed < 1.0
    assert ratio <= 40


def test_criterion_3_adjoint_gradient(acceptance_report):
    rng = np.random.default_rng(1003)
    worst = 0.0
    t0 = time.perf_counter()
    for p in (1.0, 10.0):
        for ratio in (2.0, 100.0):
            prob = HeatProblem(Grid(2, 16), k_alpha=1.0, k_beta=ratio, p=p)
            obj = HeatObjective(prob)
            w = rng.uniform(0.1, 0.9, prob.n)
            k = interpolate_conductivity(w, prob)
            theta = assemble_and_solve_state(k, prob)
            g = design_gradient(w, theta, solve_adjoint(k, theta, prob), prob)
            for _ in range(20):
                dw = rng.normal(size=prob.n)
                dw -= dw.mean()  # keeps a.w = b
                dw /= np.abs(dw).max()  # keeps w +- t dw inside the box
                exact = float(g @ dw)
                fd = central_difference(obj.value, w, dw, 1e-6)
                worst = max(worst, abs(exact - fd) / abs(exact))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-5 and elapsed < 30
    acceptance_report(3, ok, f"max relative error {worst:.2e} (<= 1e-5), {elapsed:.2f}s (< 30s)")
    assert worst <= 1e-5
    assert elapsed < 30


def test_criterion_4_manufactured_convergence(acceptance_report):
    errs, J32 = [], None
    for N in (16, 32):
        prob, exact = manufactured_problem(N, 2)
        theta = assemble_and_solve_state(np.ones(prob.n), prob)
        errs.append(float(np.abs(theta - exact).max()))
        J32 = objective_value(theta, prob)
    order = math.log2(errs[0] / errs[1])
    J_err = abs(J32 - math.pi**2 / 4) / (math.pi**2 / 4)
    ok = abs(order - 2.0) <= 0.2 and J_err <= 0.02
    acceptance_report(4, ok, f"order {order:.3f} (2 +- 0.2), J(N=32) off pi^2/4 by {100 * J_err:.2f}% (<= 2%)")
    assert abs(order - 2.0) <= 0.2
    assert J_err <= 0.02


@pytest.fixture(scope="module")
def protocol_runs():
    """The desk-scale heat runs: N = 64, 15 iterations, default experiment settings."""
    runs = {}
    for name, (ratio, p) in PROTOCOL_RUNS.items():
        cfg = ExperimentConfig(problem="heat2d", grid=64, ratio=ratio, penalty=p, iterations=15)
        prob = heat_problem(cfg)
        kset = prob.feasible_set()
        scfg = cfg.solver_config()
        checker = InvariantChecker(kset, scfg)
        t0 = time.perf_counter()
        res = solve(HeatObjective(prob, cfg.pcg_tol), kset, prob.initial_design(), scfg, callback=checker)
        runs[name] = dict(result=res, kset=kset, cfg=scfg, checker=checker, elapsed=time.perf_counter() - t0)
    return runs


def test_criterion_5_heat_protocol(protocol_runs, acceptance_report):
    details, ok = [], True
    for name, run in protocol_runs.items():
        res, ks, cfg = run["result"], run["kset"], run["cfg"]
        assert (cfg.sufficient_decrease, cfg.backtrack_factor, cfg.step_min, cfg.step_max) == (1e-4, 0.5, 1e-30, 1e30)
        assert (cfg.unit_step_limit, cfg.reset_period, cfg.window, cfg.cycle_length) == (40, 10, 20, 4)
        assert (cfg.maxmin_ratio, cfg.max_ratio, cfg.parallel_threshold) == (2.0, 2.0, 0.975)
        assert res.iterations == 15
        w = res.x_final
        evals = res.evals
        J0, J = res.history[0].f, res.f_final
        feasible = bool(np.all(w >= 0) and np.all(w <= 1)) and abs(ks.residual(w)) <= 1e-12 * ks.feasibility_scale(w)
        run_ok = evals <= 18 and J < 0.9 * J0 and feasible and run["elapsed"] < 120
        ok &= run_ok
        details.append(
            f"{name}: {evals} evaluations (<= 18), J/J0 {J / J0:.3f} (< 0.9), feasible {feasible}, "
            f"{run['elapsed']:.2f}s"
        )
        assert evals <= 18
        assert J < 0.9 * J0
        assert feasible
        assert run["elapsed"] < 120
    acceptance_report(5, ok, "; ".join(details))


def test_criterion_6_negative_curvature_clamp(protocol_runs, acceptance_report):
    hist = protocol_runs["ratio 100"]["result"].history
    clamped = [
        prev.k for prev, nxt in zip(hist[1:], hist[2:]) if prev.sty <= 0 and nxt.alpha_bar == 1e30
    ]
    negative = [r.k for r in hist[1:] if r.sty <= 0]

    # the same run with the default controller, for the record
    cfg = ExperimentConfig(problem="heat2d", grid=64, ratio=100.0, penalty=10.0, iterations=15,
                           solver={"negative_curvature_step": "t"})
    prob = heat_problem(cfg)
    alt = solve(HeatObjective(prob), prob.feasible_set(), prob.initial_design(), cfg.solver_config())
    alt_max = max(r.alpha_bar for r in alt.history)

    ok = bool(clamped)
    acceptance_report(
        6,
        ok,
        f"s.y <= 0 at steps {negative}, stepsize clamped to 1e30 after steps {clamped} "
        f"(controller mode 'max'; mode 't' peaks at {alt_max:.3g})",
    )
    assert clamped


def test_criterion_7_quadratic_corpus(acceptance_report):
    worst, failures = 0.0, 0
    cfg = SolverConfig(tol=1e-10)
    for inst in quadratic_corpus(200, seed=1007, max_n=6):
        res = solve(inst, inst.kset, np.zeros(inst.n), cfg)
        x_star = active_set_oracle(inst.Q, inst.q, inst.kset)
        err = float(np.abs(res.x_final - x_star).max())
        worst = max(worst, err)
        failures += err > 1e-6
    ok = failures == 0
    acceptance_report(7, ok, f"max distance to oracle {worst:.2e} over 200 instances (<= 1e-6)")
    assert failures == 0


def test_criterion_8_invariant_suite(protocol_runs, acceptance_report):
    steps, problems = 0, []
    for name, run in protocol_runs.items():
        problems += [f"heat {name}: {f}" for f in run["checker"].failures]
        steps += run["checker"].steps

    rng = np.random.default_rng(1008)
    corpus = quadratic_corpus(200, seed=1007, max_n=6)
    corpus += [random_quadratic(int(rng.integers(10, 60)), rng, cond=float(rng.uniform(10, 1e5))) for _ in range(40)]
    for mode in ("t", "beta", "max"):
        cfg = SolverConfig(tol=1e-9, max_iter=400, negative_curvature_step=mode)
        for inst in corpus:
            chk = InvariantChecker(inst.kset, cfg)
            solve(inst, inst.kset, rng.normal(size=inst.n), cfg, callback=chk)
            problems += chk.failures
            steps += chk.steps
        # nonconvex instances exercise the negative curvature branches
        for _ in range(20):
            n = int(rng.integers(5, 30))
            ks = random_knapsack(n, rng)
            A = rng.normal(size=(n, n))
            A = 0.5 * (A + A.T)
            fun = lambda x, A=A: (0.5 * float(x @ A @ x) + float(np.sum(np.sin(3 * x))), A @ x + 3 * np.cos(3 * x))
            chk = InvariantChecker(ks, cfg)
            solve(fun, ks, np.zeros(n), cfg, callback=chk)
            problems += chk.failures
            steps += chk.steps
    ok = not problems
    acceptance_report(8, ok, f"{steps} iterations checked, {len(problems)} violations")
    assert not problems, "\n".join(problems[:20])
