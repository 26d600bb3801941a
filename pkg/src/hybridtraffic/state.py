"""Hybrid state (lane labels plus continuous state) and model parameters."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import AV, KernelTable, VehicleState
from .errors import DomainError

MODELS = ("pairwise", "convolutional")
CONDITION_MODES = ("simple", "typed")
REGIMES = ("finite", "meanfield")


@dataclass
class ModelParams:
    """Everything the dynamics and the lane-change logic need besides the state.

    ``thresholds`` is a :class:`hybridtraffic.lane_change.ThresholdTable` and
    ``law`` a :class:`hybridtraffic.lane_change.ProbabilityLaw`.
    """

    classes: dict
    kernels: KernelTable
    thresholds: object
    law: object
    model: str = "pairwise"
    condition_mode: str = "simple"
    regime: str = "finite"
    dt: float = 0.1
    tau_bar: float = 1.0
    gap_margin: float = 1.0
    base_probability: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.model not in MODELS:
            raise DomainError(f"model must be one of {MODELS}")
        if self.condition_mode not in CONDITION_MODES:
            raise DomainError(f"condition_mode must be one of {CONDITION_MODES}")
        if self.regime not in REGIMES:
            raise DomainError(f"regime must be one of {REGIMES}")
        if self.dt <= 0 or self.tau_bar <= 0:
            raise DomainError("dt and tau_bar must be > 0")

    def lc_base_probability(self, class_id):
        return self.base_probability.get(class_id, 1.0)


class HybridState:
    """All vehicles, their lane labels and timers, and the clock.

    Per-vehicle quantities are stored as parallel numpy arrays ordered by
    ascending vehicle id. Per-lane orderings are derived on demand and cached
    until positions or lanes change.
    """

    def __init__(self, ids, classes, x, v, lane, timer, length, n_lanes, ring_length=None, clock=0.0, step=0):
        ids = np.asarray(ids, dtype=np.int64)
        order = np.argsort(ids, kind="stable")
        self.ids = ids[order]
        self.cls = np.asarray(classes, dtype=np.int64)[order]
        self.x = np.asarray(x, dtype=float)[order].copy()
        self.v = np.asarray(v, dtype=float)[order].copy()
        self.lane = np.asarray(lane, dtype=np.int64)[order].copy()
        self.timer = np.asarray(timer, dtype=float)[order].copy()
        self.length = np.asarray(length, dtype=float)[order]
        self.n_lanes = int(n_lanes)
        self.ring_length = None if ring_length is None else float(ring_length)
        self.clock = float(clock)
        self.step = int(step)
        self._lanes = None
        if len(np.unique(self.ids)) != len(self.ids):
            raise DomainError("vehicle ids must be unique")
        if len(self.ids) and (self.lane.min() < 1 or self.lane.max() > self.n_lanes):
            raise DomainError("lane labels must lie in 1..L")
        if self.ring_length is not None:
            self.x = self.x % self.ring_length

    @classmethod
    def empty(cls, n_lanes, ring_length=None):
        z = np.zeros(0)
        return cls(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), z, z, z, z, z, n_lanes, ring_length)

    @classmethod
    def from_vehicles(cls, vehicles, n_lanes, ring_length=None, clock=0.0):
        vehicles = list(vehicles)
        if not vehicles:
            return cls.empty(n_lanes, ring_length)
        cols = list(zip(*[(s.id, s.class_id, s.x, s.v, s.lane, s.timer, s.length) for s in vehicles]))
        return cls(*cols, n_lanes=n_lanes, ring_length=ring_length, clock=clock)

    @property
    def n(self):
        return len(self.ids)

    @property
    def is_ring(self):
        return self.ring_length is not None

    def copy(self):
        new = object.__new__(HybridState)
        new.ids = self.ids
        new.cls = self.cls
        new.length = self.length
        new.x = self.x.copy()
        new.v = self.v.copy()
        new.lane = self.lane.copy()
        new.timer = self.timer.copy()
        new.n_lanes = self.n_lanes
        new.ring_length = self.ring_length
        new.clock = self.clock
        new.step = self.step
        new._lanes = self._lanes
        return new

    def invalidate(self):
        self._lanes = None

    def index_of(self, vehicle_id):
        i = int(np.searchsorted(self.ids, vehicle_id))
        if i >= len(self.ids) or self.ids[i] != vehicle_id:
            raise KeyError(f"no vehicle with id {vehicle_id}")
        return i

    def vehicle(self, i):
        """Snapshot of the vehicle at array index ``i``."""
        return VehicleState(
            id=int(self.ids[i]),
            class_id=int(self.cls[i]),
            x=float(self.x[i]),
            v=float(self.v[i]),
            lane=int(self.lane[i]),
            timer=float(self.timer[i]),
            length=float(self.length[i]),
        )

    def vehicles(self):
        return [self.vehicle(i) for i in range(self.n)]

    def lane_members(self, lane):
        """Array indices of vehicles on ``lane`` sorted by position."""
        if self._lanes is None:
            self._build_lanes()
        return self._lanes[lane]

    def _build_lanes(self):
        order = np.lexsort((self.ids, self.x, self.lane))
        sorted_lanes = self.lane[order]
        lanes = {}
        for k in range(1, self.n_lanes + 1):
            lo, hi = np.searchsorted(sorted_lanes, [k, k + 1])
            lanes[k] = order[lo:hi]
        self._lanes = lanes

    def lane_orderings(self):
        """Per-lane vehicle ids sorted by position (wrapped order on rings)."""
        return {k: self.ids[self.lane_members(k)].tolist() for k in range(1, self.n_lanes + 1)}

    def av_indices(self):
        return np.nonzero(self.cls == AV)[0]

    def same(self, other):
        """Exact equality of every field."""
        return (
            self.n_lanes == other.n_lanes
            and self.ring_length == other.ring_length
            and self.clock == other.clock
            and all(
                np.array_equal(getattr(self, a), getattr(other, a))
                for a in ("ids", "cls", "x", "v", "lane", "timer", "length")
            )
        )


def leader_table(state, members_by_lane=None):
    """Immediate leader of every vehicle and the raw position gap to it.

    Returns ``(leader, raw_gap)`` where ``leader[i] == -1`` means no leader
    (open road). On a ring a lone vehicle leads itself at distance L.
    """
    n = state.n
    leader = np.full(n, -1, dtype=np.int64)
    raw = np.full(n, np.inf)
    for k in range(1, state.n_lanes + 1):
        m = state.lane_members(k) if members_by_lane is None else members_by_lane[k]
        if len(m) == 0:
            continue
        if state.is_ring:
            nxt = np.roll(m, -1)
            leader[m] = nxt
            d = state.x[nxt] - state.x[m]
            d[-1] += state.ring_length
            raw[m] = d
        else:
            leader[m[:-1]] = m[1:]
            raw[m[:-1]] = state.x[m[1:]] - state.x[m[:-1]]
    return leader, raw

