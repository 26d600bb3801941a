"""Vehicle classes, the optimal-velocity function and the two acceleration laws.

Two car-following laws are provided:

* the classical pairwise Bando-FtL law, where each vehicle reacts to its
  immediate leader through the gap headway, and
* the convolutional multi-class law, where each vehicle reacts to the
  empirical measures of every class on its lane through compactly
  supported kernels.

Class 0 is the autonomous (controllable) class; 1..M are human-driven.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, HeadwayViolation, UndefinedAverage

AV = 0
CAR = 1
TRUCK = 2


@dataclass(frozen=True)
class VehicleClassSpec:
    """Physical and behavioral parameters shared by one vehicle class."""

    class_id: int
    length: float
    alpha: float
    beta: float
    v_max: float
    d_safe: float = 2.5
    name: str = ""

    def __post_init__(self):
        if self.length <= 0:
            raise DomainError(f"class {self.class_id}: length must be > 0")
        if self.v_max <= 0:
            raise DomainError(f"class {self.class_id}: v_max must be > 0")
        if self.alpha < 0 or self.beta < 0 or self.d_safe < 0:
            raise DomainError(f"class {self.class_id}: alpha, beta, d_safe must be >= 0")

    @property
    def controllable(self):
        return self.class_id == AV


def car_spec(d_safe=2.5):
    return VehicleClassSpec(CAR, length=4.5, alpha=0.5, beta=20.0, v_max=5.0, d_safe=d_safe, name="car")


def truck_spec(d_safe=2.5):
    return VehicleClassSpec(TRUCK, length=13.6, alpha=0.25, beta=10.0, v_max=4.5, d_safe=d_safe, name="truck")


def av_spec(d_safe=2.5):
    """Autonomous vehicles share the car's physical parameters."""
    return VehicleClassSpec(AV, length=4.5, alpha=0.5, beta=20.0, v_max=5.0, d_safe=d_safe, name="av")


@dataclass
class VehicleState:
    id: int
    class_id: int
    x: float
    v: float
    lane: int
    timer: float = 0.0
    length: float = 4.5


@dataclass(frozen=True)
class KernelSpec:
    """Interaction kernel pair (Bando part and FtL part) for one class pair.

    ``optimal_velocity`` is the class spec whose V function the Bando part
    relaxes toward.
    """

    alpha_gamma: float
    beta_gamma: float
    epsilon_gamma: float
    optimal_velocity: VehicleClassSpec

    def __post_init__(self):
        if self.alpha_gamma <= 0 or self.beta_gamma <= 0 or self.epsilon_gamma <= 0:
            raise DomainError("kernel alpha, beta and epsilon must be > 0")


@dataclass
class KernelTable:
    """Kernels indexed by ``(source_class, ego_class)``.

    Lookups for class 0 fall back to the car class unless an explicit entry
    for the pair exists.
    """

    entries: dict = field(default_factory=dict)

    def get(self, source_class, ego_class):
        key = (source_class, ego_class)
        if key in self.entries:
            return self.entries[key]
        key = (CAR if source_class == AV else source_class, CAR if ego_class == AV else ego_class)
        try:
            return self.entries[key]
        except KeyError:
            raise KeyError(f"no kernel for class pair {(source_class, ego_class)}") from None

    def row(self, ego_class, classes):
        """Kernels acting on ``ego_class`` from each class in ``classes``."""
        return {m: self.get(m, ego_class) for m in classes}

    @classmethod
    def from_classes(cls, specs, epsilon=100.0):
        """Default table: each ego class reacts with its own alpha, beta and V."""
        entries = {}
        for n, ego in specs.items():
            for m in specs:
                entries[(m, n)] = KernelSpec(ego.alpha, ego.beta, epsilon, ego)
        return cls(entries)


def optimal_velocity(h, spec):
    """Desired speed at gap headway ``h`` (meters) for a vehicle of class ``spec``."""
    if h < 0:
        raise DomainError(f"headway must be >= 0, got {h}")
    return _ov(h, spec.v_max, spec.length, spec.d_safe)


def _ov(h, v_max, length, d_safe):
    # works elementwise on arrays; no domain check
    t = np.tanh(length + d_safe)
    return v_max * (np.tanh(h - d_safe) + t) / (1.0 + t)


def gap_headway(ego_x, leader_x, leader_length, ring_length=None):
    """Front-of-ego to rear-of-leader distance, wrapped on a ring."""
    raw = leader_x - ego_x
    if ring_length is not None:
        raw = raw % ring_length
        if raw == 0.0:
            # the vehicle is its own leader on a single-occupancy ring lane
            raw = ring_length
    return raw - leader_length


def pairwise_accel(ego, leader, spec, ring_length=None):
    """Bando-FtL acceleration of ``ego`` following ``leader``.

    Raises HeadwayViolation when the gap headway is not strictly positive.
    """
    h = gap_headway(ego.x, leader.x, leader.length, ring_length)
    if h <= 0:
        raise HeadwayViolation(ego.id, leader.id, h)
    return spec.alpha * (optimal_velocity(h, spec) - ego.v) + spec.beta * (leader.v - ego.v) / (h * h)


def free_accel(v, spec):
    """Leaderless relaxation toward V at infinite headway."""
    return spec.alpha * (spec.v_max - v)


def bump_kernel(x, epsilon):
    """Smooth bump supported on (-epsilon, 0), maximal at -epsilon/2."""
    if epsilon <= 0:
        raise DomainError("epsilon must be > 0")
    x = np.asarray(x, dtype=float)
    half = 0.5 * epsilon
    inner = half * half - (-x - half) ** 2
    inside = (x > -epsilon) & (x < 0) & (inner > 0)
    out = np.zeros_like(x)
    out[inside] = np.exp(-1.0 / inner[inside])
    return out if out.ndim else float(out)


@dataclass
class DiscreteMeasure:
    """Weighted point masses on position x velocity space."""

    x: np.ndarray = field(default_factory=lambda: np.zeros(0))
    v: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mass: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).reshape(-1)
        self.v = np.asarray(self.v, dtype=float).reshape(-1)
        self.mass = np.asarray(self.mass, dtype=float).reshape(-1)
        if not (len(self.x) == len(self.v) == len(self.mass)):
            raise DomainError("atom arrays must have equal length")
        if np.any(self.mass < 0):
            raise DomainError("atom masses must be >= 0")

    @classmethod
    def empirical(cls, x, v):
        x = np.asarray(x, dtype=float).reshape(-1)
        n = len(x)
        mass = np.full(n, 1.0 / n) if n else np.zeros(0)
        return cls(x, v, mass)

    @classmethod
    def from_atoms(cls, atoms):
        atoms = list(atoms)
        if not atoms:
            return cls()
        x, v, m = zip(*atoms)
        return cls(x, v, m)

    @property
    def atoms(self):
        return list(zip(self.x.tolist(), self.v.tolist(), self.mass.tolist()))

    @property
    def total_mass(self):
        return float(self.mass.sum())

    def __len__(self):
        return len(self.x)

    def __add__(self, other):
        return DiscreteMeasure(
            np.concatenate([self.x, other.x]),
            np.concatenate([self.v, other.v]),
            np.concatenate([self.mass, other.mass]),
        )

    def shifted(self, dx=0.0, dv=0.0):
        return DiscreteMeasure(self.x + dx, self.v + dv, self.mass.copy())


def _kernel_terms(offsets, v_ego, v_src, mass, kernel):
    """Mass-weighted Bando and FtL kernel contributions for source atoms.

    ``offsets`` are ego position minus source position (the kernel argument).
    """
    w = bump_kernel(offsets, kernel.epsilon_gamma)
    w = np.atleast_1d(w)
    hit = w > 0
    if not np.any(hit):
        return 0.0
    off = offsets[hit]
    wm = w[hit] * mass[hit]
    spec = kernel.optimal_velocity
    bando = kernel.alpha_gamma * wm * (_ov(-off, spec.v_max, spec.length, spec.d_safe) - v_ego)
    # full convolution in velocity: the FtL kernel sees ego minus source velocity
    ftl = kernel.beta_gamma * wm * (-(v_ego - v_src[hit])) / (off * off)
    return float(bando.sum() + ftl.sum())


def conv_accel(x, v, lane_measures, kernels, ring_length=None):
    """Convolutional multi-class acceleration at the point (x, v).

    Args:
        x, v: ego position and velocity
        lane_measures: mapping class_id -> DiscreteMeasure on the ego's lane
        kernels: mapping class_id -> KernelSpec acting on the ego's class
        ring_length: wrap offsets onto (-L, 0] when given

    Returns:
        sum over classes of the Bando and FtL convolutions evaluated at (x, v)
    """
    total = 0.0
    for m, mu in lane_measures.items():
        if len(mu) == 0:
            continue
        kernel = kernels[m]
        offsets = x - mu.x
        if ring_length is not None:
            # source atoms ahead map to offsets in (-L, 0]
            offsets = -((mu.x - x) % ring_length)
        # the bump vanishes at 0, so the ego's own atom drops out
        total += _kernel_terms(offsets, v, mu.v, mu.mass, kernel)
    return total


def average_accel(lane_measures, class_id, kernels, ring_length=None):
    """Mass-weighted mean convolutional acceleration of one class on a lane."""
    mu = lane_measures.get(class_id)
    if mu is None or len(mu) == 0 or mu.total_mass == 0:
        raise UndefinedAverage(f"class {class_id} has no mass on this lane")
    row = kernels.row(class_id, lane_measures.keys())
    acc = np.array([conv_accel(xi, vi, lane_measures, row, ring_length) for xi, vi in zip(mu.x, mu.v)])
    return float(np.dot(acc, mu.mass) / mu.total_mass)


def classical_ov_inverse(v, spec):
    """Headway at which V(h) equals ``v`` (for equilibrium fixtures)."""
    t = math.tanh(spec.length + spec.d_safe)
    y = v * (1.0 + t) / spec.v_max - t
    if not -1.0 < y < 1.0:
        raise DomainError(f"velocity {v} is not attained by V")
    return spec.d_safe + math.atanh(y)
