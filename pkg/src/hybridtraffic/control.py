"""AV control signals, the hybrid cost functional and a derivative-free optimizer."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import AV
from .engine import simulate
from .errors import DomainError, OptimizationFailed

KNOT_TOL = 1e-9


@dataclass
class ControlSignal:
    """Piecewise-constant accelerations for each AV, shared knot times.

    ``values[id][k]`` applies on ``[knots[k], knots[k+1])``; the last value
    holds to the end of the horizon.
    """

    knots: np.ndarray
    values: dict
    u_max: float

    def __post_init__(self):
        self.knots = np.asarray(self.knots, dtype=float).reshape(-1)
        if len(self.knots) == 0 or self.knots[0] != 0.0:
            raise DomainError("knots must start at 0")
        if np.any(np.diff(self.knots) <= 0):
            raise DomainError("knots must be strictly increasing")
        if not self.u_max > 0:
            raise DomainError("u_max must be > 0")
        vals = {}
        for vid, arr in self.values.items():
            arr = np.asarray(arr, dtype=float).reshape(-1)
            if len(arr) != len(self.knots):
                raise DomainError(f"AV {vid}: need {len(self.knots)} values")
            if np.any(np.abs(arr) > self.u_max * (1 + 1e-12)):
                raise DomainError(f"AV {vid}: |u| exceeds u_max")
            vals[int(vid)] = arr
        self.values = vals

    @classmethod
    def constant(cls, av_ids, value, u_max, n_knots=1, horizon=1.0, dt=None):
        knots = knot_grid(n_knots, horizon, dt)
        return cls(knots, {i: np.full(len(knots), float(value)) for i in av_ids}, u_max)

    def at(self, t):
        k = int(np.searchsorted(self.knots, t + KNOT_TOL, side="right")) - 1
        k = max(k, 0)
        return {vid: float(arr[k]) for vid, arr in self.values.items()}

    def vector(self):
        return np.concatenate([self.values[i] for i in sorted(self.values)]) if self.values else np.zeros(0)

    def with_vector(self, vec):
        vec = np.clip(np.asarray(vec, dtype=float), -self.u_max, self.u_max)
        k = len(self.knots)
        vals = {vid: vec[j * k : (j + 1) * k].copy() for j, vid in enumerate(sorted(self.values))}
        return ControlSignal(self.knots.copy(), vals, self.u_max)

    def check_grid(self, dt):
        steps = self.knots / dt
        if np.any(np.abs(steps - np.round(steps)) > 1e-6):
            raise DomainError("knot times must lie on the integration grid")

    def max_abs(self):
        return max((float(np.abs(a).max()) for a in self.values.values()), default=0.0)

    def to_dict(self):
        return {
            "knots": self.knots.tolist(),
            "values": {str(k): v.tolist() for k, v in sorted(self.values.items())},
            "u_max": self.u_max,
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_dict(cls, d):
        return cls(d["knots"], {int(k): v for k, v in d["values"].items()}, d["u_max"])

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def knot_grid(n_knots, horizon, dt=None):
    """``n_knots`` equally spaced knot times on [0, horizon), snapped to the dt grid."""
    if n_knots < 1:
        raise DomainError("need at least one knot")
    t = np.arange(n_knots) * (horizon / n_knots)
    if dt is not None:
        t = np.round(t / dt) * dt
        t = np.unique(t)
        if len(t) != n_knots:
            raise DomainError("too many knots for the integration grid")
    return t


# ----------------------------------------------------------------------
# running costs

RUNNING_COSTS = ("none", "tracking", "spread")


@dataclass
class RunningCost:
    """Per-lane running cost.

    ``tracking``: mean over the lane's vehicles of ``(v - v_ref)^2``.
    ``spread``: velocity variance of the lane's combined human measure, each
    class measure normalized to unit mass. Empty lanes cost 0.
    """

    kind: str = "none"
    v_ref: float = 3.0

    def __post_init__(self):
        if self.kind not in RUNNING_COSTS:
            raise DomainError(f"running cost must be one of {RUNNING_COSTS}")

    def per_lane(self, state):
        """Array of L_k for lanes 1..n_lanes."""
        out = np.zeros(state.n_lanes)
        if self.kind == "none" or state.n == 0:
            return out
        for k in range(1, state.n_lanes + 1):
            on = state.lane == k
            if self.kind == "tracking":
                if on.any():
                    out[k - 1] = float(np.mean((state.v[on] - self.v_ref) ** 2))
            else:
                w = np.zeros(state.n)
                for c in np.unique(state.cls[on]):
                    if c == AV:
                        continue
                    m = on & (state.cls == c)
                    w[m] = 1.0 / m.sum()
                tot = w.sum()
                if tot > 0:
                    mean = float((w * state.v).sum() / tot)
                    out[k - 1] = float((w * (state.v - mean) ** 2).sum() / tot)
        return out


@dataclass
class CostBreakdown:
    running: np.ndarray
    control: np.ndarray
    failed: bool = False
    failure: str = ""

    @property
    def total(self):
        if self.failed:
            return math.inf
        return float(self.running.sum() + self.control.sum())

    @property
    def running_total(self):
        return float(self.running.sum())

    @property
    def control_total(self):
        return float(self.control.sum())

    def as_dict(self):
        return {
            "running": self.running.tolist(),
            "control": self.control.tolist(),
            "total": self.total,
            "failed": self.failed,
            "failure": self.failure,
        }


def control_effort(state, u):
    """Per-lane control term: mean |u| over the lane's AVs (0 for lanes without AVs)."""
    out = np.zeros(state.n_lanes)
    if u is None:
        return out
    avs = state.cls == AV
    for k in range(1, state.n_lanes + 1):
        m = avs & (state.lane == k)
        q = int(m.sum())
        if q:
            out[k - 1] = float(np.abs(u[m]).sum()) / q
    return out


def evaluate_cost(cfg, controls, running_cost=None, horizon=None, seed=None, initial_state=None, seeds=None):
    """Cost of ``controls`` on scenario ``cfg``.

    The running cost is integrated by the trapezoid rule over each step
    (left end after the lane-change pass, right end after the flow); the
    control term is integrated exactly since controls and lanes are constant
    within a step. ``seeds`` averages over a seed batch instead of one seed.
    """
    if seeds is not None:
        parts = [evaluate_cost(cfg, controls, running_cost, horizon, s, initial_state) for s in seeds]
        failed = [p for p in parts if p.failed]
        if failed:
            return CostBreakdown(parts[0].running * 0, parts[0].control * 0, True, failed[0].failure)
        return CostBreakdown(
            np.mean([p.running for p in parts], axis=0), np.mean([p.control for p in parts], axis=0)
        )
    from .scenarios import init_state

    running_cost = running_cost or RunningCost("none")
    seed = cfg.seed if seed is None else seed
    T = cfg.horizon if horizon is None else horizon
    if T > cfg.horizon + 1e-12:
        raise DomainError("horizon exceeds the scenario horizon")
    rng = np.random.default_rng(seed)
    state = init_state(cfg, rng) if initial_state is None else initial_state.copy()
    params = cfg.build_params()
    if controls is not None:
        controls.check_grid(params.dt)
        missing = set(controls.values) - set(state.ids[state.cls == AV].tolist())
        if missing:
            raise DomainError(f"controls for unknown AV ids {sorted(missing)}")
    dt = params.dt
    run = np.zeros(state.n_lanes)
    eff = np.zeros(state.n_lanes)

    def on_step(before, u, after):
        nonlocal run, eff
        # lanes do not change during the flow, so both ends share the lane partition
        run = run + 0.5 * dt * (running_cost.per_lane(before) + running_cost.per_lane(after))
        eff = eff + dt * control_effort(before, u)

    traj = simulate(state, params, T, rng, controls=controls, sample_every=max(1, int(round(T / dt))), on_step=on_step)
    return CostBreakdown(run, eff, traj.failed, traj.failure)


# ----------------------------------------------------------------------
# optimizer


@dataclass
class OptimizationResult:
    signal: ControlSignal
    best: CostBreakdown
    history: list = field(default_factory=list)
    evaluations: int = 0

    def history_rows(self):
        return [(h["evaluation"], h["cost"], h["best"], h["step"]) for h in self.history]


def optimize_controls(
    cfg,
    running_cost=None,
    n_knots=4,
    budget=100,
    seed=None,
    seeds=None,
    horizon=None,
    initial=None,
    step=None,
    shrink=0.5,
    min_step=1e-6,
):
    """Projected coordinate descent over knot values with a shrinking step.

    Every evaluation uses the same seed (common random numbers) unless a
    seed batch ``seeds`` is given. The best-so-far history is recorded
    after every evaluation.
    """
    from .scenarios import init_state

    if n_knots < 1 or budget < 1:
        raise DomainError("n_knots and budget must be >= 1")
    T = cfg.horizon if horizon is None else horizon
    seed = cfg.seed if seed is None else seed
    state = init_state(cfg, np.random.default_rng(seed))
    av_ids = sorted(state.ids[state.cls == AV].tolist())
    if not av_ids:
        raise DomainError("scenario has no AVs")
    u_max = cfg.u_max
    signal = initial or ControlSignal.constant(av_ids, 0.0, u_max, n_knots, T, cfg.dt)
    x = signal.vector()
    step = u_max / 2 if step is None else step
    history = []
    evals = 0

    def cost(vec):
        nonlocal evals
        evals += 1
        return evaluate_cost(cfg, signal.with_vector(vec), running_cost, T, seed, seeds=seeds)

    def record(c):
        history.append(
            {
                "evaluation": evals,
                "cost": c.total,
                "best": min(c.total, history[-1]["best"]) if history else c.total,
                "step": step,
            }
        )

    best_c = cost(x)
    record(best_c)
    while evals < budget and step >= min_step:
        improved = False
        for j in range(len(x)):
            for sgn in (1.0, -1.0):
                if evals >= budget:
                    break
                trial = x.copy()
                trial[j] = np.clip(trial[j] + sgn * step, -u_max, u_max)
                if trial[j] == x[j]:
                    continue
                c = cost(trial)
                record(c)
                if c.total < best_c.total:
                    x, best_c, improved = trial, c, True
                    break
        if not improved:
            step *= shrink
    if math.isinf(best_c.total):
        raise OptimizationFailed(f"all {evals} evaluations failed; last failure: {best_c.failure}")
    return OptimizationResult(signal.with_vector(x), best_c, history, evals)


def constant_grid_search(cfg, running_cost, n_values=21, horizon=None, seed=None):
    """Best constant control (same value for every AV) on a uniform grid."""
    from .scenarios import init_state

    T = cfg.horizon if horizon is None else horizon
    seed = cfg.seed if seed is None else seed
    state = init_state(cfg, np.random.default_rng(seed))
    av_ids = sorted(state.ids[state.cls == AV].tolist())
    best = (math.inf, None)
    for c in np.linspace(-cfg.u_max, cfg.u_max, n_values):
        sig = ControlSignal.constant(av_ids, c, cfg.u_max, 1, T, cfg.dt)
        total = evaluate_cost(cfg, sig, running_cost, T, seed).total
        if total < best[0]:
            best = (total, float(c))
    return best
