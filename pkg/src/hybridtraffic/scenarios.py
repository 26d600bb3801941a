"""Scenario configuration, initialization, velocity-variation metrics and trials."""

from __future__ import annotations

import copy
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import yaml

from .core import AV, CAR, TRUCK, KernelSpec, KernelTable, VehicleClassSpec, _ov
from .engine import CoolDownConfig, simulate
from .errors import ConfigError, DomainError
from .lane_change import ProbabilityLaw, ThresholdTable
from .state import CONDITION_MODES, MODELS, REGIMES, HybridState, ModelParams

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
INIT_POLICIES = ("random", "uniform", "quantile")

CAR_PARAMS = {"name": "car", "length": 4.5, "alpha": 0.5, "beta": 20.0, "v_max": 5.0, "d_safe": 2.5}
TRUCK_PARAMS = {"name": "truck", "length": 13.6, "alpha": 0.25, "beta": 10.0, "v_max": 4.5, "d_safe": 2.5}
AV_PARAMS = dict(CAR_PARAMS, name="av")


def _default_classes():
    return {AV: dict(AV_PARAMS), CAR: dict(CAR_PARAMS), TRUCK: dict(TRUCK_PARAMS)}


@dataclass
class ScenarioConfig:
    """A complete, serializable scenario description.

    Units: meters, seconds, m/s, m/s^2. ``classes`` maps class id to the
    parameter dict of a VehicleClassSpec; ``counts`` maps class id to the
    number of vehicles.
    """

    name: str = "scenario"
    schema_version: int = SCHEMA_VERSION
    topology: str = "ring"
    ring_length: float | None = 750.0
    n_lanes: int = 3
    counts: dict = field(default_factory=lambda: {CAR: 90, TRUCK: 10})
    classes: dict = field(default_factory=_default_classes)
    kernel_epsilon: float = 100.0
    kernel_overrides: list = field(default_factory=list)
    incentive: dict = field(default_factory=lambda: {1: {1: 0.5, 2: 0.5}, 2: {1: 0.5, 2: 0.5}})
    safety: dict = field(default_factory=lambda: {1: 2.0, 2: 2.0})
    delta_simple: float = 0.5
    gammas: list = field(default_factory=lambda: [1.0, 1.0, 1.0])
    M_bound: float = 10.0
    base_probability: dict = field(default_factory=dict)
    dt: float = 0.1
    tau_bar: float = 1.0
    horizon: float = 300.0
    sample_every: int = 1
    model: str = "pairwise"
    condition_mode: str = "simple"
    regime: str = "finite"
    gap_margin: float = 1.0
    seed: int = 0
    init: str = "random"
    velocity_noise: float = 0.5
    min_init_gap: float | None = None
    initial_timers: list | None = None
    av_positions: list = field(default_factory=list)
    density_amplitude: float = 0.3
    velocity_amplitude: float = 0.5
    u_max: float = 1.0
    init_velocity: float | None = None

    # ------------------------------------------------------------------
    def to_dict(self):
        return copy.deepcopy(asdict(self))

    @classmethod
    def from_dict(cls, data):
        problems = validate_dict(data)
        if problems:
            raise ConfigError(problems)
        known = {f for f in cls.__dataclass_fields__}
        cfg = cls(**{k: copy.deepcopy(v) for k, v in data.items() if k in known})
        cfg.counts = {int(k): int(v) for k, v in cfg.counts.items()}
        cfg.classes = {int(k): dict(v) for k, v in cfg.classes.items()}
        cfg.incentive = {int(a): {int(b): float(d) for b, d in row.items()} for a, row in cfg.incentive.items()}
        cfg.safety = {int(k): float(v) for k, v in cfg.safety.items()}
        cfg.base_probability = {int(k): float(v) for k, v in cfg.base_probability.items()}
        problems = cfg.check()
        if problems:
            raise ConfigError(problems)
        return cfg

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            try:
                data = yaml.safe_load(fh)
            except yaml.YAMLError as exc:
                mark = getattr(exc, "problem_mark", None)
                where = f"line {mark.line + 1}" if mark is not None else ""
                raise ConfigError([(where, f"YAML parse error: {exc}")]) from None
        if not isinstance(data, dict):
            raise ConfigError([("", "top level must be a mapping")])
        return cls.from_dict(data)

    def dump(self, path=None):
        text = yaml.safe_dump(self.to_dict(), sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def replace(self, **changes):
        d = self.to_dict()
        d.update(changes)
        return ScenarioConfig.from_dict(d)

    # ------------------------------------------------------------------
    def check(self):
        """Invariant checks on a typed config; returns ``(field, message)`` pairs."""
        out = []
        for c, p in self.classes.items():
            for key in ("length", "v_max"):
                if not p.get(key, 0) > 0:
                    out.append((f"classes.{c}.{key}", "must be > 0"))
            for key in ("alpha", "beta", "d_safe"):
                if p.get(key, 0) < 0:
                    out.append((f"classes.{c}.{key}", "must be >= 0"))
        for c, n in self.counts.items():
            if n < 0:
                out.append((f"counts.{c}", "must be >= 0"))
            elif n > 0 and c not in self.classes:
                out.append((f"counts.{c}", "no class definition for this class id"))
        if self.n_lanes < 1:
            out.append(("n_lanes", "must be >= 1"))
        if self.topology not in ("ring", "open"):
            out.append(("topology", "must be 'ring' or 'open'"))
        if self.topology == "ring":
            if self.ring_length is None or not self.ring_length > 0:
                out.append(("ring_length", "must be > 0 on a ring"))
            elif self.kernel_epsilon >= self.ring_length:
                out.append(("kernel_epsilon", "must be smaller than the ring length"))
        for key in ("dt", "tau_bar", "horizon", "kernel_epsilon", "M_bound", "delta_simple"):
            if not getattr(self, key) > 0:
                out.append((key, "must be > 0"))
        if self.gap_margin < 0:
            out.append(("gap_margin", "must be >= 0"))
        if not self.u_max > 0:
            out.append(("u_max", "must be > 0"))
        if self.init_velocity is not None and self.init_velocity < 0:
            out.append(("init_velocity", "must be >= 0"))
        if self.velocity_noise < 0:
            out.append(("velocity_noise", "must be >= 0"))
        if self.sample_every < 1:
            out.append(("sample_every", "must be >= 1"))
        if self.dt > 0 and self.horizon > 0:
            n = self.horizon / self.dt
            if abs(n - round(n)) > 1e-9 * max(1.0, n):
                out.append(("horizon", "must be a multiple of dt"))
        if self.model not in MODELS:
            out.append(("model", f"must be one of {MODELS}"))
        if self.condition_mode not in CONDITION_MODES:
            out.append(("condition_mode", f"must be one of {CONDITION_MODES}"))
        if self.regime not in REGIMES:
            out.append(("regime", f"must be one of {REGIMES}"))
        if self.init not in INIT_POLICIES:
            out.append(("init", f"must be one of {INIT_POLICIES}"))
        if len(self.gammas) != 3 or any(not g > 0 for g in self.gammas):
            out.append(("gammas", "need three values > 0"))
        for a, row in self.incentive.items():
            for b, d in row.items():
                if not d > 0:
                    out.append((f"incentive.{a}.{b}", "must be > 0"))
        for c, d in self.safety.items():
            if not d > 0:
                out.append((f"safety.{c}", "must be > 0"))
        for c, p in self.base_probability.items():
            if not 0 <= p <= 1:
                out.append((f"base_probability.{c}", "must lie in [0, 1]"))
        if self.initial_timers is not None:
            t = list(self.initial_timers)
            if len(t) != self.total_vehicles:
                out.append(("initial_timers", f"need {self.total_vehicles} values"))
            if len(set(t)) != len(t):
                out.append(("initial_timers", "initial timers must be pairwise distinct"))
            if any(not 0 <= x < self.tau_bar for x in t):
                out.append(("initial_timers", "values must lie in [0, tau_bar)"))
        if self.topology == "ring" and self.ring_length and not out:
            out.extend(self._packing_problems())
        if self.counts.get(AV, 0) and self.av_positions and len(self.av_positions) != self.counts[AV]:
            out.append(("av_positions", "need one [lane, x] pair per AV"))
        return out

    def _packing_problems(self):
        lanes = _round_robin_lengths(self)
        margin = self.effective_min_gap
        out = []
        for k, lengths in lanes.items():
            need = sum(lengths) + margin * len(lengths)
            if lengths and not self.ring_length > need:
                out.append(
                    ("ring_length", f"lane {k}: {len(lengths)} vehicles need more than {need:.3f} m with min gap {margin}")
                )
        return out

    @property
    def total_vehicles(self):
        return int(sum(self.counts.values()))

    @property
    def effective_min_gap(self):
        return self.gap_margin if self.min_init_gap is None else self.min_init_gap

    # ------------------------------------------------------------------
    def class_specs(self):
        return {c: VehicleClassSpec(class_id=c, **p) for c, p in self.classes.items()}

    def threshold_table(self):
        inc = {(a, b): d for a, row in self.incentive.items() for b, d in row.items()}
        return ThresholdTable(inc, dict(self.safety), self.delta_simple)

    def kernel_table(self):
        specs = self.class_specs()
        table = KernelTable.from_classes(specs, self.kernel_epsilon)
        for o in self.kernel_overrides:
            key = (int(o["source"]), int(o["ego"]))
            base = table.get(*key)
            table.entries[key] = KernelSpec(
                o.get("alpha", base.alpha_gamma),
                o.get("beta", base.beta_gamma),
                o.get("epsilon", base.epsilon_gamma),
                specs[int(o.get("ov_class", key[1]))],
            )
        return table

    def build_params(self):
        thresholds = self.threshold_table()
        return ModelParams(
            classes=self.class_specs(),
            kernels=self.kernel_table(),
            thresholds=thresholds,
            law=ProbabilityLaw.from_thresholds(thresholds, tuple(self.gammas), self.M_bound),
            model=self.model,
            condition_mode=self.condition_mode,
            regime=self.regime,
            dt=self.dt,
            tau_bar=self.tau_bar,
            gap_margin=self.gap_margin,
            base_probability=dict(self.base_probability),
        )


_TYPES = {
    "name": str,
    "schema_version": int,
    "topology": str,
    "n_lanes": int,
    "counts": dict,
    "classes": dict,
    "kernel_epsilon": (int, float),
    "kernel_overrides": list,
    "incentive": dict,
    "safety": dict,
    "delta_simple": (int, float),
    "gammas": list,
    "M_bound": (int, float),
    "base_probability": dict,
    "dt": (int, float),
    "tau_bar": (int, float),
    "horizon": (int, float),
    "sample_every": int,
    "model": str,
    "condition_mode": str,
    "regime": str,
    "gap_margin": (int, float),
    "seed": int,
    "init": str,
    "velocity_noise": (int, float),
    "av_positions": list,
    "density_amplitude": (int, float),
    "velocity_amplitude": (int, float),
    "u_max": (int, float),
}
_CLASS_KEYS = {"name", "length", "alpha", "beta", "v_max", "d_safe"}


def validate_dict(data):
    """Schema-level checks on a raw mapping; returns ``(field, message)`` pairs."""
    out = []
    known = set(ScenarioConfig.__dataclass_fields__)
    for key in data:
        if key not in known:
            out.append((str(key), "unknown field"))
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        out.append(("schema_version", f"unsupported version {version!r} (expected {SCHEMA_VERSION})"))
    for key, typ in _TYPES.items():
        if key in data and data[key] is not None:
            val = data[key]
            if isinstance(val, bool) or not isinstance(val, typ):
                out.append((key, f"expected {_typename(typ)}, got {type(val).__name__}"))
    for key in ("ring_length", "min_init_gap", "init_velocity"):
        val = data.get(key)
        if val is not None and (isinstance(val, bool) or not isinstance(val, (int, float))):
            out.append((key, "expected number or null"))
    classes = data.get("classes")
    if isinstance(classes, dict):
        for c, p in classes.items():
            if not isinstance(p, dict):
                out.append((f"classes.{c}", "expected mapping"))
                continue
            for k in p:
                if k not in _CLASS_KEYS:
                    out.append((f"classes.{c}.{k}", "unknown class parameter"))
            for k in _CLASS_KEYS - {"name", "d_safe"}:
                if k not in p:
                    out.append((f"classes.{c}.{k}", "missing"))
                elif isinstance(p[k], bool) or not isinstance(p[k], (int, float)):
                    out.append((f"classes.{c}.{k}", "expected number"))
    timers = data.get("initial_timers")
    if timers is not None and not isinstance(timers, list):
        out.append(("initial_timers", "expected list or null"))
    return out


def _typename(typ):
    if isinstance(typ, tuple):
        return "number"
    return typ.__name__


def _class_sequence(cfg):
    """Vehicle classes in id order: AVs first, then humans by class id."""
    seq = []
    for c in sorted(cfg.counts):
        seq.extend([c] * cfg.counts[c])
    return seq


def _round_robin_lengths(cfg):
    lanes = {k: [] for k in range(1, cfg.n_lanes + 1)}
    for n, c in enumerate(_class_sequence(cfg)):
        lanes[n % cfg.n_lanes + 1].append(cfg.classes[c]["length"])
    return lanes


def _timers(cfg, n):
    if cfg.initial_timers is not None:
        return np.asarray(cfg.initial_timers, dtype=float)
    return CoolDownConfig(cfg.tau_bar).initial_timers(n)


def init_state(cfg, rng):
    """Initial hybrid state for ``cfg`` according to its initialization policy."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    problems = cfg.check()
    if problems:
        raise ConfigError(problems)
    if cfg.total_vehicles == 0:
        return HybridState.empty(cfg.n_lanes, cfg.ring_length if cfg.topology == "ring" else None)
    if cfg.init == "quantile":
        return _init_quantile(cfg)
    if cfg.topology != "ring":
        return _init_open(cfg)
    return init_ring(cfg, rng)


def init_ring(cfg, rng):
    """Place vehicles on a ring with random gaps and noisy equilibrium velocities.

    Slots are shuffled, dealt round-robin across lanes, and each lane's
    free length beyond the minimum gaps is split by a flat Dirichlet draw.
    ``init == "uniform"`` uses equal gaps and exact V(h) velocities.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    L = cfg.ring_length
    specs = cfg.class_specs()
    classes = np.array(_class_sequence(cfg), dtype=np.int64)
    n = len(classes)
    if n == 0:
        return HybridState.empty(cfg.n_lanes, L)
    # slots are filled in a shuffled order; ids keep the class sequence so AVs are 0..Q-1
    perm = rng.permutation(n) if cfg.init == "random" else np.arange(n)
    classes = classes[perm]
    lane_of = np.arange(n) % cfg.n_lanes + 1
    lengths = np.array([specs[c].length for c in classes])
    x = np.empty(n)
    gap = np.empty(n)
    min_gap = cfg.effective_min_gap
    for k in range(1, cfg.n_lanes + 1):
        sel = np.nonzero(lane_of == k)[0]
        if len(sel) == 0:
            continue
        free = L - lengths[sel].sum() - min_gap * len(sel)
        if not free > 0:
            raise ConfigError([("ring_length", f"lane {k} cannot hold its vehicles")])
        if cfg.init == "random":
            g = min_gap + free * rng.dirichlet(np.ones(len(sel)))
            start = rng.uniform(0.0, L)
        else:
            g = np.full(len(sel), min_gap + free / len(sel))
            start = 0.0
        # gap[j] is the gap from vehicle j to the vehicle ahead of it
        nxt_len = np.roll(lengths[sel], -1)
        pos = start + np.concatenate([[0.0], np.cumsum(g[:-1] + nxt_len[:-1])])
        x[sel] = pos % L
        gap[sel] = g
    v = np.array([float(_ov(gap[i], specs[c].v_max, specs[c].length, specs[c].d_safe)) for i, c in enumerate(classes)])
    if cfg.init == "random" and cfg.velocity_noise > 0:
        v = np.maximum(v + rng.uniform(-cfg.velocity_noise, cfg.velocity_noise, n), 0.0)
    inv = np.argsort(perm)
    return HybridState(
        np.arange(n), classes[inv], x[inv], v[inv], lane_of[inv], _timers(cfg, n), lengths[inv], cfg.n_lanes, L
    )


def _init_open(cfg):
    """Open road: one platoon per lane at uniform spacing behind x = 0."""
    specs = cfg.class_specs()
    classes = np.array(_class_sequence(cfg), dtype=np.int64)
    n = len(classes)
    lane_of = np.arange(n) % cfg.n_lanes + 1
    lengths = np.array([specs[c].length for c in classes])
    x = np.empty(n)
    spacing = 20.0
    for k in range(1, cfg.n_lanes + 1):
        sel = np.nonzero(lane_of == k)[0]
        x[sel] = -spacing * np.arange(len(sel))[::-1]
    v0 = cfg.init_velocity
    v = np.array([specs[c].v_max if v0 is None else v0 for c in classes], dtype=float)
    return HybridState(np.arange(n), classes, x, v, lane_of, _timers(cfg, n), lengths, cfg.n_lanes, None)


def density_quantiles(n, L, amplitude):
    """Positions of ``n`` quantiles of the ring density proportional to 1 + a cos(2 pi x / L)."""
    if n == 0:
        return np.zeros(0)
    grid = np.linspace(0.0, L, 20001)
    cdf = (grid + amplitude * L / (2 * np.pi) * np.sin(2 * np.pi * grid / L)) / L
    q = (np.arange(n) + 0.5) / n
    return np.interp(q, cdf, grid)


def _init_quantile(cfg):
    """Deterministic quantile sampling of a fixed density, for N-refinement studies.

    Human vehicles of each class take the quantiles of the same density and
    are dealt across lanes in position order; AVs sit at ``av_positions``.
    Velocities follow the profile ``0.8 v_max + a sin(2 pi x / L)``.
    """
    L = cfg.ring_length
    specs = cfg.class_specs()
    ids, cls, xs, lanes = [], [], [], []
    nid = 0
    av_pos = cfg.av_positions or [[1 + (j % cfg.n_lanes), (j + 0.5) * L / max(1, cfg.counts.get(AV, 0))] for j in range(cfg.counts.get(AV, 0))]
    for lane, x in av_pos:
        ids.append(nid)
        cls.append(AV)
        xs.append(float(x))
        lanes.append(int(lane))
        nid += 1
    for c in sorted(k for k in cfg.counts if k != AV):
        pos = density_quantiles(cfg.counts[c], L, cfg.density_amplitude)
        for j, x in enumerate(pos):
            ids.append(nid)
            cls.append(c)
            xs.append(float(x))
            lanes.append(j % cfg.n_lanes + 1)
            nid += 1
    xs = np.array(xs)
    cls = np.array(cls, dtype=np.int64)
    base = np.array([0.8 * specs[c].v_max for c in cls])
    v = np.maximum(base + cfg.velocity_amplitude * np.sin(2 * np.pi * xs / L), 0.0)
    lengths = np.array([specs[c].length for c in cls])
    n = len(ids)
    return HybridState(ids, cls, xs, v, lanes, _timers(cfg, n), lengths, cfg.n_lanes, L)


# ----------------------------------------------------------------------
# metrics


def max_velocity_variation(series):
    """Maximum minus minimum of a velocity series."""
    s = np.asarray(series, dtype=float)
    if s.size == 0:
        raise DomainError("empty series")
    return float(s.max() - s.min())


def total_velocity_variation(series):
    """Sum of absolute successive differences of a velocity series."""
    s = np.asarray(series, dtype=float)
    if s.size < 2:
        raise DomainError("need at least two samples")
    return float(np.abs(np.diff(s)).sum())


@dataclass
class TrialMetrics:
    """Per-vehicle variation metrics for one trial."""

    trial: int
    seed: int
    vehicle_ids: np.ndarray
    classes: np.ndarray
    max_var: np.ndarray
    total_var: np.ndarray
    n_events: int
    n_attempts: int
    failed: bool = False
    failure: str = ""


def trial_metrics(traj, trial=0, seed=0):
    v = traj.v
    if v.shape[0] >= 2:
        mx = v.max(axis=0) - v.min(axis=0)
        tv = np.abs(np.diff(v, axis=0)).sum(axis=0)
    else:
        mx = np.zeros(v.shape[1])
        tv = np.zeros(v.shape[1])
    return TrialMetrics(trial, seed, traj.ids, traj.classes, mx, tv, len(traj.events), traj.attempts, traj.failed, traj.failure)


def simulate_scenario(cfg, controls=None, horizon=None, seed=None, sample_every=None):
    """Initialize from ``seed`` and run; returns ``(trajectory, initial_state)``."""
    seed = cfg.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    state = init_state(cfg, rng)
    params = cfg.build_params()
    T = cfg.horizon if horizon is None else horizon
    every = cfg.sample_every if sample_every is None else sample_every
    traj = simulate(state, params, T, rng, controls=controls, sample_every=every)
    return traj, state


def _run_one(args):
    cfg_dict, trial, seed = args
    cfg = ScenarioConfig.from_dict(cfg_dict)
    traj, _ = simulate_scenario(cfg, seed=seed)
    return trial_metrics(traj, trial, seed), [e.as_dict() for e in traj.events]


@dataclass
class TrialsResult:
    config: ScenarioConfig
    base_seed: int
    trials: list
    events: dict

    @property
    def ok(self):
        return [t for t in self.trials if not t.failed]

    @property
    def failed(self):
        return [t for t in self.trials if t.failed]

    def rows(self):
        """Long-format rows ``(trial, vehicle_id, class, max_var, total_var)`` of successful trials."""
        out = []
        for t in self.ok:
            for vid, c, mx, tv in zip(t.vehicle_ids.tolist(), t.classes.tolist(), t.max_var.tolist(), t.total_var.tolist()):
                out.append((t.trial, vid, c, mx, tv))
        return out

    def values(self, metric, class_id=None):
        arrs = []
        for t in self.ok:
            vals = getattr(t, metric)
            if class_id is not None:
                vals = vals[t.classes == class_id]
            arrs.append(vals)
        return np.concatenate(arrs) if arrs else np.zeros(0)

    def aggregate(self):
        """Per-class and all-vehicle summaries of both metrics."""
        out = []
        present = sorted({int(c) for t in self.ok for c in t.classes.tolist()})
        for label, cid in [("all", None)] + [(self.class_name(c), c) for c in present]:
            for metric in ("max_var", "total_var"):
                vals = self.values(metric, cid)
                out.append(_summary(label, metric, vals))
        return out

    def class_name(self, c):
        return self.config.classes.get(c, {}).get("name") or f"class{c}"


def _summary(label, metric, vals):
    if vals.size == 0:
        nan = float("nan")
        return {"class": label, "metric": metric, "n": 0, "mean": nan, "std": nan, "q25": nan, "median": nan, "q75": nan}
    q25, med, q75 = np.percentile(vals, [25, 50, 75])
    return {
        "class": label,
        "metric": metric,
        "n": int(vals.size),
        "mean": float(vals.mean()),
        "std": float(vals.std(ddof=1)) if vals.size > 1 else 0.0,
        "q25": float(q25),
        "median": float(med),
        "q75": float(q75),
    }


def run_trials(cfg, n_trials, base_seed=None, jobs=1):
    """Run ``n_trials`` seeded trials (seed = base_seed + trial index)."""
    if n_trials < 1:
        raise DomainError("n_trials must be >= 1")
    base_seed = cfg.seed if base_seed is None else base_seed
    cfg_dict = cfg.to_dict()
    work = [(cfg_dict, t, base_seed + t) for t in range(n_trials)]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, work))
    else:
        results = [_run_one(w) for w in work]
    trials = [r[0] for r in results]
    events = {r[0].trial: r[1] for r in results}
    n_failed = sum(t.failed for t in trials)
    if n_failed:
        log.warning("%s: %d of %d trials failed", cfg.name, n_failed, n_trials)
    return TrialsResult(cfg, base_seed, trials, events)


# ----------------------------------------------------------------------
# presets

PAPER_PRESETS = {
    "paper-10pct": (90, 10, 750.0),
    "paper-20pct": (80, 20, 895.0),
    "paper-30pct": (70, 30, 1040.0),
}


def paper_scenarios():
    """The three truck-penetration scenarios: 100 vehicles on a 3-lane ring."""
    out = []
    for name, (cars, trucks, length) in PAPER_PRESETS.items():
        out.append(
            ScenarioConfig(
                name=name,
                ring_length=length,
                n_lanes=3,
                counts={CAR: cars, TRUCK: trucks},
                classes={CAR: dict(CAR_PARAMS), TRUCK: dict(TRUCK_PARAMS)},
            )
        )
    return out


def av_scenario(n_avs=1, cars=20, trucks=0, ring_length=500.0, n_lanes=2, **kw):
    """Mixed scenario with autonomous vehicles, for control experiments."""
    base = dict(
        name=f"av-{n_avs}",
        ring_length=ring_length,
        n_lanes=n_lanes,
        counts={AV: n_avs, CAR: cars, TRUCK: trucks},
        horizon=60.0,
    )
    base.update(kw)
    return ScenarioConfig.from_dict(ScenarioConfig(**base).to_dict())


def meanfield_family(n_humans, truck_fraction=0.25, ring_length=1000.0, n_lanes=2, **kw):
    """Scenario with ``n_humans`` human vehicles sampled from a fixed density.

    Uses the convolutional law, quantile initialization, uniform initial
    velocity and prohibitive lane-change thresholds so that successive
    members differ only in N.
    """
    trucks = int(round(truck_fraction * n_humans))
    base = dict(
        name=f"meanfield-{n_humans}",
        ring_length=ring_length,
        n_lanes=n_lanes,
        counts={AV: 1, CAR: n_humans - trucks, TRUCK: trucks},
        model="convolutional",
        init="quantile",
        av_positions=[[1, 0.25 * ring_length]],
        delta_simple=1e6,
        incentive={1: {1: 1e6, 2: 1e6}, 2: {1: 1e6, 2: 1e6}},
        safety={1: 1e6, 2: 1e6},
        M_bound=1e6,
        velocity_amplitude=0.0,
        horizon=20.0,
    )
    base.update(kw)
    return ScenarioConfig.from_dict(ScenarioConfig(**base).to_dict())


def preset(name):
    for cfg in paper_scenarios():
        if cfg.name == name:
            return cfg
    if name == "av-demo":
        return av_scenario()
    raise KeyError(f"unknown preset {name!r}; choose from {sorted(list(PAPER_PRESETS) + ['av-demo'])}")
