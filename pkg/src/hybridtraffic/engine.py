"""Hybrid execution loop: RK4 flow between lane-change decision passes."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, HeadwayViolation, InvariantViolation
from .lane_change import TIMER_TOL, LaneChangeEvent, attempt_lane_change
from .state import HybridState, leader_table

log = logging.getLogger(__name__)


@dataclass
class CoolDownConfig:
    tau_bar: float = 1.0

    def __post_init__(self):
        if not self.tau_bar > 0:
            raise DomainError("tau_bar must be > 0")

    def initial_timers(self, n):
        """Pairwise-distinct timers ``(i + 0.5) * tau_bar / (n + 1)``."""
        return (np.arange(n) + 0.5) * self.tau_bar / (n + 1)


@dataclass
class Trajectory:
    times: np.ndarray
    ids: np.ndarray
    classes: np.ndarray
    x: np.ndarray
    v: np.ndarray
    lane: np.ndarray
    events: list = field(default_factory=list)
    attempts: int = 0
    failed: bool = False
    failure: str = ""
    max_abs_accel: float = 0.0
    final_state: HybridState | None = None

    @property
    def n_samples(self):
        return len(self.times)

    def velocity_series(self, vehicle_index):
        return self.v[:, vehicle_index]


class _ClassArrays:
    """Per-vehicle copies of class parameters."""

    def __init__(self, state, params):
        specs = [params.classes[int(c)] for c in state.cls]
        self.alpha = np.array([s.alpha for s in specs])
        self.beta = np.array([s.beta for s in specs])
        self.vmax = np.array([s.v_max for s in specs])
        self.ds = np.array([s.d_safe for s in specs])
        self.tanh_ld = np.tanh(np.array([s.length for s in specs]) + self.ds)


def _ov_arrays(h, ca):
    return ca.vmax * (np.tanh(h - ca.ds) + ca.tanh_ld) / (1.0 + ca.tanh_ld)


class _PairwiseField:
    def __init__(self, state, params, ca):
        leader, raw = leader_table(state)
        idx = np.arange(state.n)
        self.lead = np.where(leader >= 0, leader, idx)
        self.has_leader = leader >= 0
        self.raw = raw
        self.lead_len = np.where(self.has_leader, state.length[self.lead], 0.0)
        # a lone ring vehicle follows itself at a fixed distance
        self.self_lead = self.has_leader & (self.lead == idx)
        self.ca = ca
        self.state = state

    def gaps(self, dx):
        moved = np.where(self.self_lead, 0.0, dx[self.lead] - dx)
        return self.raw + moved - self.lead_len

    def __call__(self, dx, v):
        gap = self.gaps(dx)
        if gap.size and gap.min() <= 0:
            _raise_collision(self.state, gap, self.lead)
        ca = self.ca
        return ca.alpha * (_ov_arrays(gap, ca) - v) + ca.beta * (v[self.lead] - v) / (gap * gap)


class _ConvField:
    """Convolutional law over all same-lane ordered pairs (i ego, j source)."""

    def __init__(self, state, params, ca):
        self.state = state
        leader, raw = leader_table(state)
        idx = np.arange(state.n)
        self.lead = np.where(leader >= 0, leader, idx)
        self.self_lead = (leader >= 0) & (self.lead == idx)
        self.raw = raw
        same = (state.lane[:, None] == state.lane[None, :]) & ~np.eye(state.n, dtype=bool)
        I, J = np.nonzero(same)
        self.I, self.J = I, J
        counts = {}
        for k, c in zip(state.lane.tolist(), state.cls.tolist()):
            counts[(k, c)] = counts.get((k, c), 0) + 1
        cache = {}
        cols = []
        for i, j in zip(I.tolist(), J.tolist()):
            key = (int(state.cls[j]), int(state.cls[i]))
            if key not in cache:
                kern = params.kernels.get(*key)
                s = kern.optimal_velocity
                cache[key] = (kern.alpha_gamma, kern.beta_gamma, kern.epsilon_gamma, s.v_max, s.d_safe, np.tanh(s.length + s.d_safe))
            mass = 1.0 / counts[(int(state.lane[j]), int(state.cls[j]))]
            cols.append(cache[key] + (mass,))
        arr = np.array(cols, dtype=float).reshape(-1, 7)
        self.alpha, self.beta, self.eps, self.vmax, self.ds, self.tld, self.mass = arr.T
        self.L = state.ring_length

    def gaps(self, dx):
        return self.raw + np.where(self.self_lead, 0.0, dx[self.lead] - dx)

    def __call__(self, dx, v):
        st = self.state
        gap = self.gaps(dx)
        if gap.size and gap.min() <= 0:
            _raise_collision(st, gap, self.lead)
        out = np.zeros(st.n)
        if len(self.I) == 0:
            return out
        x = st.x + dx
        I, J = self.I, self.J
        if self.L is not None:
            off = -((x[J] - x[I]) % self.L)
        else:
            off = x[I] - x[J]
        half = 0.5 * self.eps
        inner = half * half - (-off - half) ** 2
        inside = (off > -self.eps) & (off < 0) & (inner > 0)
        if not inside.any():
            return out
        I, J, off, inner = I[inside], J[inside], off[inside], inner[inside]
        wm = np.exp(-1.0 / inner) * self.mass[inside]
        dist = -off
        V = self.vmax[inside] * (np.tanh(dist - self.ds[inside]) + self.tld[inside]) / (1.0 + self.tld[inside])
        contrib = self.alpha[inside] * wm * (V - v[I]) + self.beta[inside] * wm * (v[J] - v[I]) / (off * off)
        np.add.at(out, I, contrib)
        return out


def _raise_collision(state, gap, lead):
    i = int(np.argmin(gap))
    raise HeadwayViolation(int(state.ids[i]), int(state.ids[lead[i]]), float(gap[i]), state.clock)


def _field(state, params, ca=None):
    ca = _ClassArrays(state, params) if ca is None else ca
    if params.model == "convolutional":
        return _ConvField(state, params, ca)
    return _PairwiseField(state, params, ca)


def accelerations(state, params, u=None):
    """Acceleration of every vehicle in ``state`` (plus control ``u`` if given)."""
    if state.n == 0:
        return np.zeros(0)
    a = _field(state, params)(np.zeros(state.n), state.v)
    return a if u is None else a + u


def control_vector(state, controls, clock):
    """Per-vehicle control values at ``clock``; zero for uncontrolled vehicles."""
    u = np.zeros(state.n)
    if controls is None:
        return u
    for vid, val in controls.at(clock).items():
        i = state.index_of(vid)
        if state.cls[i] != 0:
            raise DomainError(f"vehicle {vid} is not controllable")
        u[i] = val
    return u


def rk4_step(state, params, u=None, dt=None, ca=None):
    """Advance the continuous state by one classical RK4 step.

    ``u`` is the per-vehicle control held constant across the substeps.
    Returns ``(new_state, accel_at_start)``. Raises HeadwayViolation if any
    gap headway is nonpositive at a substep or at the end of the step.
    """
    dt = params.dt if dt is None else dt
    if not dt > 0:
        raise DomainError("dt must be > 0")
    new = state.copy()
    new.step = state.step + 1
    new.clock = state.clock + dt
    new.timer = state.timer + dt
    if state.n == 0:
        return new, np.zeros(0)
    f = _field(state, params, ca)
    u = np.zeros(state.n) if u is None else u
    v0 = state.v
    z = np.zeros(state.n)

    a1 = f(z, v0) + u
    k1x, k1v = v0, a1
    k2x, k2v = v0 + 0.5 * dt * k1v, f(0.5 * dt * k1x, v0 + 0.5 * dt * k1v) + u
    k3x, k3v = v0 + 0.5 * dt * k2v, f(0.5 * dt * k2x, v0 + 0.5 * dt * k2v) + u
    k4x, k4v = v0 + dt * k3v, f(dt * k3x, v0 + dt * k3v) + u
    dx = dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    dv = dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)

    gap = f.gaps(dx)
    if gap.size and gap.min() <= 0:
        _raise_collision(new, gap, f.lead)
    new.x = state.x + dx
    new.v = np.maximum(v0 + dv, 0.0)
    if new.is_ring:
        new.x %= new.ring_length
    new.invalidate()
    return new, a1


def apply_event(state, event):
    """State after an accepted lane change; only lane and timer of one vehicle change."""
    i = state.index_of(event.vehicle_id)
    if state.lane[i] != event.from_lane:
        raise InvariantViolation(f"vehicle {event.vehicle_id} is not on lane {event.from_lane}")
    if not 1 <= event.to_lane <= state.n_lanes or abs(event.to_lane - event.from_lane) != 1:
        raise InvariantViolation(f"invalid target lane {event.to_lane}")
    m = state.lane_members(event.to_lane)
    if np.any(state.x[m] == state.x[i]):
        raise InvariantViolation(f"vehicle {event.vehicle_id} would share a position on lane {event.to_lane}")
    new = state.copy()
    new.lane[i] = event.to_lane
    new.timer[i] = 0.0
    new.invalidate()
    return new


def decision_pass(state, params, rng):
    """Run the cool-down-gated lane-change decisions for every due vehicle.

    Vehicles are processed in ascending id order and accepted events are
    applied immediately. Returns ``(state, accepted_events, n_attempts)``.
    """
    due = np.nonzero(state.timer >= params.tau_bar * (1.0 - TIMER_TOL))[0]
    if len(due) == 0:
        return state, [], 0
    accepted = []
    attempts = 0
    for i in due:
        ev = attempt_lane_change(state, int(i), params, rng)
        state.timer[i] = 0.0
        if ev is None:
            continue
        attempts += 1
        if ev.accepted:
            state = apply_event(state, ev)
            accepted.append(ev)
    return state, accepted, attempts


def simulate(state, params, horizon, rng, controls=None, sample_every=1, on_step=None):
    """Algorithm loop: decision pass, then one RK4 step, until ``horizon``.

    ``on_step(before, u, after)`` is called for every step with the state
    after the decision pass, the held control and the state after the flow.

    ``rng`` is a numpy Generator (or an int seed). A collision stops the run
    and returns the partial trajectory with ``failed`` set.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    dt = params.dt
    n_steps = int(round(horizon / dt))
    if abs(n_steps * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise DomainError("horizon must be a multiple of dt")
    if sample_every < 1:
        raise DomainError("sample_every must be >= 1")
    n_samples = n_steps // sample_every + 1
    N = state.n
    xs = np.empty((n_samples, N))
    vs = np.empty((n_samples, N))
    ls = np.empty((n_samples, N), dtype=np.int8)
    times = np.empty(n_samples)
    state = state.copy()
    t0 = state.clock
    s0 = state.step
    times[0], xs[0], vs[0], ls[0] = t0, state.x, state.v, state.lane
    ca = _ClassArrays(state, params) if N else None
    events = []
    attempts = 0
    max_a = 0.0
    failed = False
    failure = ""
    row = 1
    try:
        for step in range(n_steps):
            state.clock = t0 + step * dt
            state, acc, n_att = decision_pass(state, params, rng)
            events.extend(acc)
            attempts += n_att
            u = control_vector(state, controls, state.clock) if controls is not None else None
            before = state
            state, a = rk4_step(state, params, u, dt, ca)
            state.clock = t0 + (step + 1) * dt
            state.step = s0 + step + 1
            if on_step is not None:
                on_step(before, u, state)
            if a.size:
                max_a = max(max_a, float(np.abs(a).max()))
            if (step + 1) % sample_every == 0:
                times[row], xs[row], vs[row], ls[row] = state.clock, state.x, state.v, state.lane
                row += 1
    except HeadwayViolation as exc:
        failed = True
        failure = str(exc)
        log.info("trial aborted: %s", exc)
    bound = getattr(params.law, "M_bound", None)
    if bound is not None and max_a > bound:
        log.info("acceleration bound exceeded: max |a| = %.3g > M = %.3g", max_a, bound)
    return Trajectory(
        times=times[:row],
        ids=state.ids.copy(),
        classes=state.cls.copy(),
        x=xs[:row],
        v=vs[:row],
        lane=ls[:row],
        events=events,
        attempts=attempts,
        failed=failed,
        failure=failure,
        max_abs_accel=max_a,
        final_state=state,
    )


__all__ = [
    "CoolDownConfig",
    "LaneChangeEvent",
    "Trajectory",
    "accelerations",
    "apply_event",
    "control_vector",
    "decision_pass",
    "rk4_step",
    "simulate",
]
