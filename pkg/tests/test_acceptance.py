"""Acceptance criteria 1-12.

Each test records a PASS/FAIL line in ``RESULTS``; the lines are printed at
the end of the pytest run (see conftest) or when this file is executed
directly. Criteria 1-3 run 100 seeded trials of each truck-penetration
preset and take several minutes.
"""

import itertools
import json
import math
import os
import time

import numpy as np
import pytest
from conftest import single_av_fixture, two_av_fixture, two_av_signal

import hybridtraffic.engine as engine
from hybridtraffic.cli import main as cli_main
from hybridtraffic.control import ControlSignal, RunningCost, constant_grid_search, evaluate_cost, optimize_controls
from hybridtraffic.core import CAR, TRUCK, DiscreteMeasure, VehicleClassSpec
from hybridtraffic.lane_change import ProbabilityLaw, p_j
from hybridtraffic.measures import convergence_diagnostic, generalized_wasserstein
from hybridtraffic.scenarios import ScenarioConfig, meanfield_family, paper_scenarios, run_trials, simulate_scenario

RESULTS = {}
N_TRIALS = 100
TV_SIMILARITY = 0.25  # criterion 3 threshold


def record(n, title, ok, detail):
    RESULTS[n] = (title, bool(ok), detail)
    assert ok, f"criterion {n} ({title}): {detail}"


def iqr(x):
    q25, q75 = np.percentile(x, [25, 75])
    return q75 - q25


@pytest.fixture(scope="module")
def paper_runs():
    out = {}
    for cfg in paper_scenarios():
        t0 = time.perf_counter()
        res = run_trials(cfg, N_TRIALS, base_seed=1000, jobs=min(4, os.cpu_count() or 1))
        out[cfg.name] = (res, time.perf_counter() - t0)
    return out


# ---------------------------------------------------------------- 1-3 truck-penetration trends


@pytest.mark.slow
def test_criterion_01_cars_lower_total_variation(paper_runs):
    res, secs = paper_runs["paper-10pct"]
    cars, trucks = res.values("total_var", CAR), res.values("total_var", TRUCK)
    ok = cars.mean() < trucks.mean() and iqr(cars) < iqr(trucks) and secs < 300 and not res.failed
    detail = (
        f"mean car {cars.mean():.3f} vs truck {trucks.mean():.3f}; IQR car {iqr(cars):.3f} vs truck {iqr(trucks):.3f}; "
        f"{len(res.failed)} failed trials; runtime {secs:.0f} s"
    )
    record(1, "10% trucks: cars have lower, tighter total variation", ok, detail)


@pytest.mark.slow
def test_criterion_02_tightest_max_variation_at_10pct(paper_runs):
    stds = {name: float(np.std(r.values("max_var"), ddof=1)) for name, (r, _) in paper_runs.items()}
    ok = min(stds, key=stds.get) == "paper-10pct"
    detail = ", ".join(f"{k} std {v:.4f}" for k, v in stds.items())
    record(2, "max-variation spread smallest in the 10% preset", ok, detail)


@pytest.mark.slow
def test_criterion_03_similar_total_variation_at_20_30pct(paper_runs):
    parts, ok = [], True
    for name in ("paper-20pct", "paper-30pct"):
        r = paper_runs[name][0]
        cars, trucks, all_ = r.values("total_var", CAR), r.values("total_var", TRUCK), r.values("total_var")
        rel = abs(cars.mean() - trucks.mean()) / all_.mean()
        ok = ok and rel <= TV_SIMILARITY
        parts.append(f"{name} rel diff {rel:.3f}")
    record(3, f"20%/30%: car and truck total variation within {TV_SIMILARITY}", ok, "; ".join(parts))


# ---------------------------------------------------------------- 4-6 engine


def test_criterion_04_equilibrium_invariance():
    cfg = ScenarioConfig.from_dict(
        ScenarioConfig(
            name="equilibrium",
            ring_length=750.0,
            n_lanes=3,
            counts={CAR: 99},
            init="uniform",
            delta_simple=1e6,
            incentive={1: {1: 1e6}},
            safety={1: 1e6},
            M_bound=1e6,
            horizon=100.0,
        ).to_dict()
    )
    traj, s0 = simulate_scenario(cfg, seed=0)
    dev = float(np.abs(traj.v - s0.v[None, :]).max())
    steps = traj.n_samples - 1
    ok = steps == 1000 and dev <= 1e-9 and traj.events == [] and not traj.failed
    record(4, "uniform ring flow stays at equilibrium", ok, f"{steps} steps, max |v - v0| = {dev:.2e}, {len(traj.events)} lane changes")


def test_criterion_05_rk4_order():
    alpha, T, v0, vmax = 2.0, 5.0, 1.0, 5.0
    spec = VehicleClassSpec(CAR, length=4.5, alpha=alpha, beta=20.0, v_max=vmax, name="car")

    def err(dt):
        cfg = ScenarioConfig.from_dict(
            ScenarioConfig(
                name="relax",
                topology="open",
                ring_length=None,
                n_lanes=1,
                counts={CAR: 1},
                classes={CAR: {k: getattr(spec, k) for k in ("name", "length", "alpha", "beta", "v_max", "d_safe")}},
                init_velocity=v0,
                dt=dt,
                horizon=T,
            ).to_dict()
        )
        traj, s0 = simulate_scenario(cfg, seed=0)
        x_exact = s0.x[0] + vmax * T + (v0 - vmax) * (1 - math.exp(-alpha * T)) / alpha
        v_exact = vmax + (v0 - vmax) * math.exp(-alpha * T)
        return abs(traj.x[-1, 0] - x_exact) + abs(traj.v[-1, 0] - v_exact)

    errs = [err(dt) for dt in (0.1, 0.05, 0.025, 0.0125)]
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    record(5, "observed RK4 order >= 3.9", min(orders) >= 3.9, "orders " + ", ".join(f"{o:.3f}" for o in orders))


@pytest.mark.slow
def test_criterion_06_cool_down(monkeypatch):
    epochs = [0]
    real = engine.attempt_lane_change

    def counting(*a, **k):
        epochs[0] += 1
        return real(*a, **k)

    monkeypatch.setattr(engine, "attempt_lane_change", counting)
    violations, accepted, closest = 0, 0, math.inf
    for tau, horizon, seed in ((0.1, 700.0, 1), (0.25, 600.0, 2), (0.45, 1000.0, 3)):
        cfg = ScenarioConfig.from_dict(
            ScenarioConfig(
                name="aggressive",
                ring_length=750.0,
                n_lanes=3,
                counts={CAR: 80, TRUCK: 20},
                condition_mode="typed",
                tau_bar=tau,
                incentive={1: {1: 0.01, 2: 0.01}, 2: {1: 0.01, 2: 0.01}},
                safety={1: 5.0, 2: 5.0},
                delta_simple=0.01,
                gammas=[100.0, 100.0, 100.0],
                velocity_noise=2.0,
                horizon=horizon,
                sample_every=100,
            ).to_dict()
        )
        traj, _ = simulate_scenario(cfg, seed=seed)
        assert not traj.failed, traj.failure
        by_vehicle = {}
        for e in traj.events:
            by_vehicle.setdefault(e.vehicle_id, []).append(e.time)
        accepted += len(traj.events)
        for times in by_vehicle.values():
            gaps = np.diff(times)
            if gaps.size:
                closest = min(closest, float(gaps.min() / tau))
                violations += int(np.sum(gaps < tau - 1e-9))
    ok = epochs[0] >= 1_000_000 and violations == 0
    record(
        6,
        "no two accepted lane changes closer than the cool-down",
        ok,
        f"{epochs[0]} vehicle-epochs, {accepted} accepted changes, {violations} violations, closest spacing {closest:.2f} x cool-down",
    )


# ---------------------------------------------------------------- 7-8 probability and transport


def test_criterion_07_probability_law():
    law = ProbabilityLaw((1.0, 0.7, 2.0), M_bound=10.0, delta=0.5)
    edge = law.box_edge
    zero_ok = corner_ok = mono_ok = True
    grid = np.linspace(0.0, edge, 5)
    for j in (1, 2, 3):
        for k in range(5):
            b = [edge] * 5
            b[k] = 0.0
            zero_ok = zero_ok and p_j(b, law, j) == 0.0
        corner_ok = corner_ok and abs(p_j([edge] * 5, law, j) - 1.0) <= 1e-12
        vals = np.empty((5,) * 5)
        for idx in itertools.product(range(5), repeat=5):
            vals[idx] = p_j(grid[list(idx)], law, j)
        for axis in range(5):
            mono_ok = mono_ok and bool(np.all(np.diff(vals, axis=axis) >= 0))
    record(7, "probability law zeros, corner, monotonicity", zero_ok and corner_ok and mono_ok, f"zero {zero_ok}, corner {corner_ok}, monotone on 5^5 grid {mono_ok}")


def _brute_force(units_mu, units_nu, xy_mu, xy_nu, q):
    m, n = len(units_mu), len(units_nu)
    d = [[abs(xy_mu[i][0] - xy_nu[j][0]) + abs(xy_mu[i][1] - xy_nu[j][1]) for j in range(n)] for i in range(m)]
    total = sum(units_mu) + sum(units_nu)
    cells = [(i, j) for i in range(m) for j in range(n)]
    row, col = list(units_mu), list(units_nu)
    best = [float(total)]

    def rec(k, cost, moved):
        if k == len(cells):
            best[0] = min(best[0], cost + total - 2 * moved)
            return
        i, j = cells[k]
        for t in range(min(row[i], col[j]) + 1):
            row[i] -= t
            col[j] -= t
            rec(k + 1, cost + t * d[i][j], moved + t)
            row[i] += t
            col[j] += t

    rec(0, 0.0, 0)
    return best[0] / q


def test_criterion_08_wasserstein_oracle_and_axioms():
    rng = np.random.default_rng(88)
    worst = 0.0
    for _ in range(200):
        q = int(rng.integers(1, 4))
        m, n = int(rng.integers(0, 5)), int(rng.integers(0, 5))
        um, un = rng.integers(1, 3, m).tolist(), rng.integers(1, 3, n).tolist()
        xm, xn = rng.uniform(0, 3, (m, 2)).tolist(), rng.uniform(0, 3, (n, 2)).tolist()
        mu = DiscreteMeasure.from_atoms([(a, b, u / q) for (a, b), u in zip(xm, um)])
        nu = DiscreteMeasure.from_atoms([(a, b, u / q) for (a, b), u in zip(xn, un)])
        worst = max(worst, abs(generalized_wasserstein(mu, nu) - _brute_force(um, un, xm, xn, q)))

    def rand_measure():
        k = int(rng.integers(0, 6))
        return DiscreteMeasure(rng.uniform(0, 4, k), rng.uniform(0, 2, k), rng.uniform(0.05, 1.0, k))

    sym = tri = 0.0
    for _ in range(1000):
        a, b, c = rand_measure(), rand_measure(), rand_measure()
        ab, ba = generalized_wasserstein(a, b), generalized_wasserstein(b, a)
        ac, cb = generalized_wasserstein(a, c), generalized_wasserstein(c, b)
        sym = max(sym, abs(ab - ba))
        tri = max(tri, ab - ac - cb)
    ok = worst <= 1e-6 and sym <= 1e-9 and tri <= 1e-9
    record(8, "transport distance matches brute force; metric axioms", ok, f"max oracle error {worst:.1e}, symmetry {sym:.1e}, triangle excess {tri:.1e}")


# ---------------------------------------------------------------- 9-11 control


def test_criterion_09_cost_exactness():
    errs = []
    for c in (0.3, -0.7, 1.0):
        T = 12.0
        cost = evaluate_cost(single_av_fixture(init_velocity=4.0, horizon=T), ControlSignal.constant([0], c, 1.0), RunningCost("none"))
        errs.append(abs(cost.control_total - abs(c) * T))
    rc = RunningCost("tracking", v_ref=3.0)
    coarse = evaluate_cost(two_av_fixture(0.05), two_av_signal(), rc).total
    fine = evaluate_cost(two_av_fixture(0.0005), two_av_signal(), rc).total
    rel = abs(coarse - fine) / fine
    ok = max(errs) <= 1e-12 and rel <= 1e-4
    record(9, "control term exact; quadrature matches refined grid", ok, f"max |control - |c|T| {max(errs):.1e}; 2-AV relative error {rel:.2e}")


def test_criterion_10_optimizer_sanity():
    zero_cfg = single_av_fixture(init_velocity=2.0, horizon=5.0)
    start = ControlSignal([0.0, 2.0], {0: [0.6, -0.4]}, 1.0)
    r0 = optimize_controls(zero_cfg, RunningCost("none"), n_knots=2, budget=30)
    # from a nonzero start the shrinking step approaches 0 geometrically
    r0b = optimize_controls(zero_cfg, RunningCost("none"), n_knots=2, budget=300, initial=start)
    cfg = single_av_fixture()
    rc = RunningCost("tracking", v_ref=3.0)
    grid_best, grid_value = constant_grid_search(cfg, rc, n_values=21)
    r1 = optimize_controls(cfg, rc, n_knots=4, budget=60)
    monotone = all(
        all(b2 <= b1 for b1, b2 in zip(bs, bs[1:])) for bs in ([h["best"] for h in r.history] for r in (r0, r0b, r1))
    )
    ok = (
        r0.best.total == 0.0
        and r0.signal.max_abs() == 0.0
        and r0b.best.total <= 1e-5
        and r1.best.total < grid_best
        and monotone
    )
    detail = (
        f"pure penalty cost {r0.best.total}, max |u| {r0.signal.max_abs()}; "
        f"from a nonzero start cost {r0b.best.total:.1e} after {r0b.evaluations} evaluations; tracking optimum {r1.best.total:.4f} "
        f"vs constant-grid best {grid_best:.4f} (u = {grid_value:.2f}); histories nonincreasing {monotone}"
    )
    record(10, "optimizer sanity", ok, detail)


@pytest.mark.slow
def test_criterion_11_mean_field_shadow():
    sizes = (20, 40, 80)
    cfgs = [meanfield_family(n) for n in sizes]
    sig = ControlSignal.constant([0], 0.2, 1.0)
    rc = RunningCost("spread")
    costs = [evaluate_cost(c, sig, rc).total for c in cfgs]
    diffs = [abs(b - a) for a, b in zip(costs, costs[1:])]
    diag = convergence_diagnostic(cfgs, controls=sig, b=0.1)
    w = diag.mean_distances.tolist()
    ok = diffs[1] < diffs[0] and w[1] < w[0]
    detail = (
        "costs " + ", ".join(f"{c:.4f}" for c in costs)
        + f"; |differences| {diffs[0]:.4f} -> {diffs[1]:.4f}; mean W (b = 0.1) {w[0]:.3f} -> {w[1]:.3f}"
    )
    record(11, "mean-field shadow: cost and measure differences shrink with N", ok, detail)


# ---------------------------------------------------------------- 12 determinism


def _data_files(d):
    return {
        str(p.relative_to(d)): p.read_bytes()
        for p in sorted(d.rglob("*"))
        if p.is_file() and p.name != "manifest.json"
    }


@pytest.mark.slow
def test_criterion_12_determinism(tmp_path):
    cfg_path = tmp_path / "single.yaml"
    single_av_fixture().dump(cfg_path)
    commands = [
        ["run", "--preset", "paper-10pct", "--trials", "2", "--seed", "42", "--horizon", "60", "--trajectory"],
        ["run", "--preset", "paper-30pct", "--trials", "2", "--seed", "7", "--horizon", "60", "--format", "json"],
        ["sweep", "--trials", "1", "--seed", "5", "--horizon", "30"],
        ["optimize", str(cfg_path), "--cost", "tracking", "--budget", "20", "--seed", "3"],
    ]
    mismatched, n_files = [], 0
    for k, cmd in enumerate(commands):
        outs = []
        for rep in ("a", "b"):
            out = tmp_path / f"c{k}{rep}"
            assert cli_main(cmd + ["--out", str(out)]) == 0
            outs.append(_data_files(out))
        n_files += len(outs[0])
        if outs[0] != outs[1]:
            mismatched.append(" ".join(cmd[:3]))
    manifests = [json.loads((tmp_path / f"c0{r}" / "manifest.json").read_text())["configs"] for r in "ab"]
    ok = not mismatched and n_files > 0 and manifests[0] == manifests[1]
    record(12, "repeated commands give byte-identical data files", ok, f"{len(commands)} commands, {n_files} files compared, mismatches: {mismatched or 'none'}")


def summary_lines():
    lines = []
    for n in range(1, 13):
        if n in RESULTS:
            title, ok, detail = RESULTS[n]
            lines.append(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}: {title} ({detail})")
        else:
            lines.append(f"criterion {n:2d} NOT RUN")
    return lines


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v", "-p", "no:cacheprovider"]))
