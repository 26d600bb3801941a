"""Incentive/safety checks, lane-change probabilities and the decision procedure.

Two condition modes exist. ``simple`` uses a single threshold for every
class and follows the simulator flow: draw against a vehicle-level base
probability, pick an adjacent lane, check room, then safety and incentive.
``typed`` uses class-pair thresholds, checks conditions first and then
accepts with the assembled probability ``p_j`` of the five bracketed terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import AV, CAR, TRUCK, DiscreteMeasure, _ov, average_accel, conv_accel
from .errors import DomainError, HeadwayViolation, UndefinedAverage

# relative tolerance for the cool-down gate on a float timer
TIMER_TOL = 1e-9


def _row(c):
    """AVs read car entries of class-indexed tables."""
    return CAR if c == AV else c


@dataclass
class ThresholdTable:
    """Lane-change thresholds in m/s^2.

    ``delta_incentive`` is keyed by ``(ego_class, follower_class)``;
    ``delta_safety`` by class. Class 0 falls back to the car entries.
    """

    delta_incentive: dict = field(default_factory=dict)
    delta_safety: dict = field(default_factory=dict)
    delta_simple: float = 0.5

    def __post_init__(self):
        vals = list(self.delta_incentive.values()) + list(self.delta_safety.values()) + [self.delta_simple]
        if any(not d > 0 for d in vals):
            raise DomainError("all thresholds must be > 0")

    def incentive(self, ego_class, follower_class):
        key = (ego_class, follower_class)
        if key in self.delta_incentive:
            return self.delta_incentive[key]
        return self.delta_incentive[(_row(ego_class), _row(follower_class))]

    def safety(self, class_id):
        if class_id in self.delta_safety:
            return self.delta_safety[class_id]
        return self.delta_safety[_row(class_id)]

    def human_classes(self):
        return sorted(self.delta_safety)

    def all_values(self):
        return list(self.delta_incentive.values()) + list(self.delta_safety.values())

    @classmethod
    def default(cls, human_classes=(CAR, TRUCK), incentive=0.5, safety=2.0, simple=0.5):
        inc = {(a, b): incentive for a in human_classes for b in human_classes}
        return cls(inc, {c: safety for c in human_classes}, simple)

    @classmethod
    def uniform(cls, delta, human_classes=(CAR, TRUCK)):
        """Every threshold (typed and simple) equal to ``delta``."""
        return cls.default(human_classes, delta, delta, delta)


@dataclass
class ProbabilityLaw:
    """Parameters of the three lane-change probability functions.

    ``delta`` is the smallest of the bound and all thresholds; the
    normalizers make each ``p_j`` reach 1 at the corner of [0, 2M - delta]^5.
    """

    gammas: tuple = (1.0, 1.0, 1.0)
    M_bound: float = 10.0
    delta: float = 0.5
    n_args: int = 5

    def __post_init__(self):
        self.gammas = tuple(float(g) for g in self.gammas)
        if len(self.gammas) != 3 or any(not g > 0 for g in self.gammas):
            raise DomainError("need three positive gammas")
        if not self.M_bound > 0 or not self.delta > 0:
            raise DomainError("M_bound and delta must be > 0")
        if self.delta > self.M_bound:
            raise DomainError("delta cannot exceed M_bound")

    @classmethod
    def from_thresholds(cls, thresholds, gammas=(1.0, 1.0, 1.0), M_bound=10.0, n_args=5):
        delta = min([M_bound] + thresholds.all_values())
        return cls(gammas, M_bound, delta, n_args)

    @property
    def box_edge(self):
        return 2.0 * self.M_bound - self.delta

    def normalizer(self, j, n_args=None):
        n = self.n_args if n_args is None else n_args
        return -math.expm1(-self.gammas[j - 1] * self.box_edge**n)


@dataclass
class LaneChangeEvent:
    vehicle_id: int
    from_lane: int
    to_lane: int
    time: float
    drawn_probability: float
    accepted: bool
    probability: float = float("nan")

    def __post_init__(self):
        if abs(self.to_lane - self.from_lane) != 1:
            raise DomainError("lane changes move exactly one lane")

    def as_dict(self):
        return {
            "vehicle_id": self.vehicle_id,
            "from_lane": self.from_lane,
            "to_lane": self.to_lane,
            "time": self.time,
            "drawn_probability": _none_if_nan(self.drawn_probability),
            "probability": _none_if_nan(self.probability),
            "accepted": self.accepted,
        }


def _none_if_nan(x):
    return None if math.isnan(x) else x


def p_j(b, law, j):
    """Lane-change probability ``(1 - exp(-gamma_j * prod(b))) / C_j`` clamped to [0, 1]."""
    b = [float(bi) for bi in b]
    if any(bi < 0 for bi in b):
        raise DomainError("probability arguments must be >= 0")
    if j not in (1, 2, 3):
        raise DomainError("j must be 1, 2 or 3")
    prod = math.prod(b)
    val = -math.expm1(-law.gammas[j - 1] * prod) / law.normalizer(j, len(b))
    return min(1.0, max(0.0, val))


def _pos(r):
    return r if r > 0 else 0.0


def _wrapped_ahead(state, x_from, x_to):
    d = x_to - x_from
    if state.is_ring:
        d %= state.ring_length
    return d


def neighbors_in_lane(state, lane, x, exclude=None):
    """Array indices of the leader and follower of position ``x`` on ``lane``.

    A vehicle located exactly at ``x`` is reported as the leader (zero gap).
    ``exclude`` removes one vehicle index from consideration.
    """
    if not 1 <= lane <= state.n_lanes:
        raise DomainError(f"lane {lane} outside 1..{state.n_lanes}")
    m = state.lane_members(lane)
    if exclude is not None and len(m):
        m = m[m != exclude]
    if len(m) == 0:
        return None, None
    xs = state.x[m]
    pos = int(np.searchsorted(xs, x, side="left"))
    if pos < len(m):
        leader = int(m[pos])
    else:
        leader = int(m[0]) if state.is_ring else None
    if pos > 0:
        follower = int(m[pos - 1])
    else:
        follower = int(m[-1]) if state.is_ring else None
    return leader, follower


def _pairwise(params, ego_cls, v, lead_v, gap):
    spec = params.classes[ego_cls]
    return spec.alpha * (float(_ov(gap, spec.v_max, spec.length, spec.d_safe)) - v) + spec.beta * (lead_v - v) / (gap * gap)


def _free(params, ego_cls, v):
    spec = params.classes[ego_cls]
    return spec.alpha * (spec.v_max - v)


def lane_measures(state, lane, params, exclude=None, extra=None):
    """Per-class empirical measures on ``lane``.

    ``exclude`` drops a vehicle index; ``extra`` is an index inserted as if
    it drove on ``lane``.
    """
    m = state.lane_members(lane)
    if exclude is not None:
        m = m[m != exclude]
    if extra is not None:
        m = np.append(m, extra)
    out = {}
    for c in params.classes:
        sel = m[state.cls[m] == c]
        out[c] = DiscreteMeasure.empirical(state.x[sel], state.v[sel])
    return out


def _conv(state, params, x, v, ego_cls, measures):
    row = params.kernels.row(ego_cls, measures.keys())
    return conv_accel(x, v, measures, row, state.ring_length)


def current_accel(state, i, params):
    """Uncontrolled acceleration of vehicle ``i`` on its own lane."""
    lane = int(state.lane[i])
    c = int(state.cls[i])
    if params.model == "convolutional":
        return _conv(state, params, state.x[i], state.v[i], c, lane_measures(state, lane, params))
    leader, _ = neighbors_in_lane(state, lane, state.x[i], exclude=i)
    if leader is None:
        if state.is_ring:
            gap = state.ring_length - state.length[i]
            return _pairwise(params, c, state.v[i], state.v[i], gap)
        return _free(params, c, state.v[i])
    gap = _wrapped_ahead(state, state.x[i], state.x[leader]) - state.length[leader]
    if gap <= 0:
        raise HeadwayViolation(int(state.ids[i]), int(state.ids[leader]), gap, state.clock)
    return _pairwise(params, c, state.v[i], state.v[leader], gap)


def expected_accel_after_move(state, i, target_lane, params):
    """Accelerations after inserting vehicle ``i`` into ``target_lane``.

    Returns ``(a_ego, a_new_follower)``; the follower term is None when the
    target lane has no follower for the inserted vehicle.
    """
    x, v, c = state.x[i], state.v[i], int(state.cls[i])
    leader, follower = neighbors_in_lane(state, target_lane, x, exclude=i)
    if params.model == "convolutional":
        meas = lane_measures(state, target_lane, params, exclude=i, extra=i)
        a_ego = _conv(state, params, x, v, c, meas)
        a_f = None
        if follower is not None:
            a_f = _conv(state, params, state.x[follower], state.v[follower], int(state.cls[follower]), meas)
        return a_ego, a_f

    if leader is None:
        if state.is_ring:
            a_ego = _pairwise(params, c, v, v, state.ring_length - state.length[i])
        else:
            a_ego = _free(params, c, v)
    else:
        gap = _wrapped_ahead(state, x, state.x[leader]) - state.length[leader]
        if gap <= 0:
            raise HeadwayViolation(int(state.ids[i]), int(state.ids[leader]), gap, state.clock)
        a_ego = _pairwise(params, c, v, state.v[leader], gap)
    a_f = None
    if follower is not None:
        gap_f = _wrapped_ahead(state, state.x[follower], x) - state.length[i]
        if gap_f <= 0:
            raise HeadwayViolation(int(state.ids[follower]), int(state.ids[i]), gap_f, state.clock)
        a_f = _pairwise(params, int(state.cls[follower]), state.v[follower], v, gap_f)
    return a_ego, a_f


def room_in_lane(state, i, target_lane, gap_margin=1.0):
    """True iff inserting ``i`` leaves both new gap headways >= gap_margin and > 0."""
    x = state.x[i]
    leader, follower = neighbors_in_lane(state, target_lane, x, exclude=i)
    if leader is not None:
        gap = _wrapped_ahead(state, x, state.x[leader]) - state.length[leader]
        if not (gap > 0 and gap >= gap_margin):
            return False
    if follower is not None:
        gap = _wrapped_ahead(state, state.x[follower], x) - state.length[i]
        if not (gap > 0 and gap >= gap_margin):
            return False
    return True


def incentive_ok(a_new, a_current, ego_class, follower_class, table, mode="typed"):
    if mode == "simple":
        return a_new >= a_current + table.delta_simple
    fc = ego_class if follower_class is None else follower_class
    return a_new >= a_current + table.incentive(ego_class, fc)


def safety_ok(a_new, a_follower, ego_class, follower_class, table, mode="typed"):
    if mode == "simple":
        d_ego = d_fol = table.delta_simple
    else:
        d_ego = table.safety(ego_class)
        d_fol = None if a_follower is None else table.safety(follower_class)
    if a_new < -d_ego:
        return False
    return a_follower is None or a_follower >= -d_fol


def _finite_brackets(a_new, a_cur, a_fol, ego_class, table):
    humans = table.human_classes()
    b = [_pos(a_new - a_cur - table.incentive(ego_class, f)) for f in humans]
    b.append(_pos(a_new + table.safety(ego_class)))
    # a missing follower brakes not at all
    af = 0.0 if a_fol is None else a_fol
    b.extend(_pos(af + table.safety(f)) for f in humans)
    return b


def _lane_average(state, lane, class_id, params, exclude=None):
    meas = lane_measures(state, lane, params, exclude=exclude)
    try:
        return average_accel(meas, class_id, params.kernels, state.ring_length)
    except UndefinedAverage:
        # an empty class exerts no braking or incentive
        return 0.0


def meanfield_brackets(state, i, target_lane, params, a_new=None):
    """Five bracketed arguments of the mean-field probability for vehicle ``i``."""
    t = params.thresholds
    c = int(state.cls[i])
    k = int(state.lane[i])
    dc, dt_ = t.safety(CAR), t.safety(TRUCK)
    AP_k = _lane_average(state, k, CAR, params)
    AS_k = _lane_average(state, k, TRUCK, params)
    AP_t = _lane_average(state, target_lane, CAR, params)
    AS_t = _lane_average(state, target_lane, TRUCK, params)
    if c == AV:
        if a_new is None:
            a_new, _ = expected_accel_after_move(state, i, target_lane, params)
        return [
            _pos(a_new - AP_k - t.incentive(CAR, CAR)),
            _pos(a_new - AS_k - t.incentive(CAR, TRUCK)),
            _pos(a_new + dc),
            _pos(AS_t + dt_),
            _pos(AP_t + dt_),
        ]
    if c == CAR:
        return [
            _pos(AP_t - AP_k - t.incentive(CAR, CAR)),
            _pos(AS_t - AP_k - t.incentive(CAR, TRUCK)),
            _pos(AP_t + dc),
            _pos(AS_t + dt_),
            _pos(AS_t + dt_),
        ]
    if c == TRUCK:
        return [
            _pos(AP_t - AS_k - t.incentive(TRUCK, CAR)),
            _pos(AS_t - AS_k - t.incentive(TRUCK, TRUCK)),
            _pos(AP_t + dc),
            _pos(AS_t + dt_),
            _pos(AS_t + dt_),
        ]
    raise DomainError("the mean-field regime is defined for AVs, cars and trucks only")


def _law_index(class_id, regime):
    if regime == "meanfield" and class_id == AV:
        return 3
    return 1 if _row(class_id) == CAR else 2


def lane_change_probability(state, i, target_lane, params, regime=None):
    """Probability that vehicle ``i`` moves to ``target_lane``.

    Zero unless both the incentive and the safety conditions hold.
    """
    regime = params.regime if regime is None else regime
    mode = params.condition_mode
    table = params.thresholds
    c = int(state.cls[i])
    a_cur = current_accel(state, i, params)
    a_new, a_fol = expected_accel_after_move(state, i, target_lane, params)
    _, follower = neighbors_in_lane(state, target_lane, state.x[i], exclude=i)
    fc = None if follower is None else int(state.cls[follower])
    if not (incentive_ok(a_new, a_cur, c, fc, table, mode) and safety_ok(a_new, a_fol, c, fc, table, mode)):
        return 0.0
    j = _law_index(c, regime)
    if regime == "meanfield":
        b = meanfield_brackets(state, i, target_lane, params, a_new=a_new)
    else:
        b = _finite_brackets(a_new, a_cur, a_fol, c, table)
    return p_j(b, params.law, j)


def adjacent_lanes(lane, n_lanes):
    return [k for k in (lane - 1, lane + 1) if 1 <= k <= n_lanes]


def attempt_lane_change(state, i, params, rng):
    """One lane-change decision for vehicle ``i``.

    Returns None when the cool-down gate is closed or no target lane was
    considered, otherwise a LaneChangeEvent whose ``accepted`` flag records
    the outcome. Does not mutate ``state``.
    """
    tau = params.tau_bar
    if state.timer[i] < tau * (1.0 - TIMER_TOL):
        return None
    lane = int(state.lane[i])
    options = adjacent_lanes(lane, state.n_lanes)
    if not options:
        return None
    vid = int(state.ids[i])
    c = int(state.cls[i])

    if params.condition_mode == "simple":
        draw = float(rng.random())
        base = params.lc_base_probability(c)
        if not draw < base:
            return None
        target = options[0] if len(options) == 1 else options[int(rng.integers(len(options)))]
        ev = LaneChangeEvent(vid, lane, target, state.clock, draw, False, base)
        if not room_in_lane(state, i, target, params.gap_margin):
            return ev
        a_cur = current_accel(state, i, params)
        a_new, a_fol = expected_accel_after_move(state, i, target, params)
        t = params.thresholds
        if safety_ok(a_new, a_fol, c, None, t, "simple") and incentive_ok(a_new, a_cur, c, None, t, "simple"):
            ev.accepted = True
        return ev

    target = options[0] if len(options) == 1 else options[int(rng.integers(len(options)))]
    if not room_in_lane(state, i, target, params.gap_margin):
        return LaneChangeEvent(vid, lane, target, state.clock, float("nan"), False, 0.0)
    p = lane_change_probability(state, i, target, params)
    draw = float(rng.random())
    return LaneChangeEvent(vid, lane, target, state.clock, draw, draw < p, p)
