"""Empirical measures, the generalized Wasserstein distance and state distances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .core import AV, CAR, TRUCK, DiscreteMeasure
from .errors import DomainError


def empirical_measure(state, lane, class_id):
    """Normalized point masses of the ``class_id`` vehicles on ``lane``."""
    sel = (state.lane == lane) & (state.cls == class_id)
    return DiscreteMeasure.empirical(state.x[sel], state.v[sel])


def class_measure(state, class_id, per_lane_normalized=True):
    """Whole-road measure of one class: per-lane empirical measures summed."""
    if not per_lane_normalized:
        sel = state.cls == class_id
        return DiscreteMeasure.empirical(state.x[sel], state.v[sel])
    out = DiscreteMeasure()
    for k in range(1, state.n_lanes + 1):
        out = out + empirical_measure(state, k, class_id)
    return out


def ground_distance(mu, nu, ring_length=None):
    """Matrix of ``|dx| + |dv|`` between atoms (circular in x on a ring)."""
    dx = np.abs(mu.x[:, None] - nu.x[None, :])
    if ring_length is not None:
        dx = np.minimum(dx, ring_length - dx)
    return dx + np.abs(mu.v[:, None] - nu.v[None, :])


def transport_plan(mu, nu, a=1.0, b=1.0, ring_length=None):
    """Optimal value and plan of the unbalanced transport problem.

    Mass may be moved at ``b`` per unit distance or removed/created at ``a``
    per unit. Returns ``(value, plan)`` with ``plan[i, j]`` the mass moved
    from atom i of ``mu`` to atom j of ``nu``.
    """
    if not (a > 0 and b > 0):
        raise DomainError("a and b must be > 0")
    m, n = len(mu), len(nu)
    base = a * (mu.total_mass + nu.total_mass)
    plan = np.zeros((m, n))
    if m == 0 or n == 0:
        return float(base), plan
    gain = b * ground_distance(mu, nu, ring_length) - 2.0 * a
    cand = np.nonzero(gain < 0)
    if len(cand[0]) == 0:
        return float(base), plan
    rows, cols = cand
    k = len(rows)
    A = np.zeros((m + n, k))
    A[rows, np.arange(k)] = 1.0
    A[m + cols, np.arange(k)] = 1.0
    ub = np.concatenate([mu.mass, nu.mass])
    res = linprog(gain[rows, cols], A_ub=A, b_ub=ub, bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    plan[rows, cols] = res.x
    return float(max(base + res.fun, 0.0)), plan


def generalized_wasserstein(mu, nu, a=1.0, b=1.0, ring_length=None):
    """Generalized Wasserstein distance with unit creation/destruction cost ``a``."""
    return transport_plan(mu, nu, a, b, ring_length)[0]


@dataclass
class StateDistanceReport:
    av_position_term: float
    av_velocity_term: float
    car_measure_term: float
    truck_measure_term: float

    @property
    def total(self):
        return self.av_position_term + self.av_velocity_term + self.car_measure_term + self.truck_measure_term

    def as_dict(self):
        return {
            "av_position_term": self.av_position_term,
            "av_velocity_term": self.av_velocity_term,
            "car_measure_term": self.car_measure_term,
            "truck_measure_term": self.truck_measure_term,
            "total": self.total,
        }


def state_distance(s1, s2, per_lane=False, a=1.0, b=1.0):
    """Distance between two hybrid states with the same AV ids.

    AVs are compared one to one; human vehicles only through their class
    measures, so the result ignores human ids.
    """
    av1 = s1.ids[s1.cls == AV]
    av2 = s2.ids[s2.cls == AV]
    if set(av1.tolist()) != set(av2.tolist()):
        raise DomainError("states must contain the same AV ids")
    ring = s1.ring_length if s1.ring_length == s2.ring_length else None
    i1 = np.array([s1.index_of(i) for i in sorted(av1.tolist())], dtype=np.int64)
    i2 = np.array([s2.index_of(i) for i in sorted(av1.tolist())], dtype=np.int64)
    dx = np.abs(s1.x[i1] - s2.x[i2])
    if ring is not None:
        dx = np.minimum(dx, ring - dx)
    pos = float(dx.sum())
    vel = float(np.abs(s1.v[i1] - s2.v[i2]).sum())
    terms = []
    for c in (CAR, TRUCK):
        if per_lane:
            lanes = range(1, max(s1.n_lanes, s2.n_lanes) + 1)
            w = sum(
                generalized_wasserstein(empirical_measure(s1, k, c), empirical_measure(s2, k, c), a, b, ring)
                for k in lanes
            )
        else:
            w = generalized_wasserstein(class_measure(s1, c), class_measure(s2, c), a, b, ring)
        terms.append(float(w))
    return StateDistanceReport(pos, vel, terms[0], terms[1])


def snapshot_measures(traj, row, class_id, n_lanes, lanes_normalized=True):
    """Whole-road class measure at sample ``row`` of a trajectory."""
    sel = traj.classes == class_id
    x, v, lane = traj.x[row, sel], traj.v[row, sel], traj.lane[row, sel]
    if not lanes_normalized:
        return DiscreteMeasure.empirical(x, v)
    out = DiscreteMeasure()
    for k in range(1, n_lanes + 1):
        m = lane == k
        out = out + DiscreteMeasure.empirical(x[m], v[m])
    return out


@dataclass
class ConvergenceDiagnostic:
    """Distances between consecutive members of an N-indexed scenario family."""

    sizes: list
    times: np.ndarray
    distances: np.ndarray  # shape (len(sizes) - 1, len(times))

    @property
    def mean_distances(self):
        return self.distances.mean(axis=1)

    def decreasing(self):
        d = self.mean_distances
        return bool(np.all(np.diff(d) < 0))


def convergence_diagnostic(configs, seed=0, horizon=None, n_times=5, controls=None, a=1.0, b=1.0):
    """Generalized Wasserstein distances between successive empirical measures.

    ``configs`` is a sequence of scenario configs ordered by growing N that
    share AV setup and initial density. Car and truck terms are added.
    With atoms tens of meters apart and ``b = 1`` every distance sits at the
    mass cap, so a smaller transport factor ``b`` is usually needed.
    """
    from .scenarios import simulate_scenario

    trajs = []
    for cfg in configs:
        traj, _ = simulate_scenario(cfg, controls=controls, horizon=horizon, seed=seed)
        if traj.failed:
            raise DomainError(f"{cfg.name}: simulation failed ({traj.failure})")
        trajs.append((cfg, traj))
    n_rows = min(t.n_samples for _, t in trajs)
    rows = np.unique(np.linspace(0, n_rows - 1, n_times).round().astype(int))
    times = trajs[0][1].times[rows]
    out = np.zeros((len(trajs) - 1, len(rows)))
    for p in range(len(trajs) - 1):
        (c1, t1), (c2, t2) = trajs[p], trajs[p + 1]
        ring = c1.ring_length if c1.topology == "ring" else None
        for q, r in enumerate(rows):
            d = 0.0
            for c in (CAR, TRUCK):
                d += generalized_wasserstein(
                    snapshot_measures(t1, r, c, c1.n_lanes),
                    snapshot_measures(t2, r, c, c2.n_lanes),
                    a,
                    b,
                    ring_length=ring,
                )
            out[p, q] = d
    sizes = [sum(n for c, n in cfg.counts.items() if c != AV) for cfg in configs]
    return ConvergenceDiagnostic(sizes, times, out)
