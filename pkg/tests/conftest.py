import numpy as np
import pytest

from hybridtraffic.core import AV, CAR, TRUCK, KernelTable, av_spec, car_spec, truck_spec
from hybridtraffic.lane_change import ProbabilityLaw, ThresholdTable
from hybridtraffic.state import HybridState, ModelParams


def make_params(thresholds=None, **kw):
    specs = {AV: av_spec(), CAR: car_spec(), TRUCK: truck_spec()}
    thresholds = thresholds or ThresholdTable.default()
    law = ProbabilityLaw.from_thresholds(thresholds, kw.pop("gammas", (1.0, 1.0, 1.0)), kw.pop("M_bound", 10.0))
    return ModelParams(
        classes=specs,
        kernels=KernelTable.from_classes(specs, kw.pop("epsilon", 100.0)),
        thresholds=thresholds,
        law=law,
        **kw,
    )


def make_state(rows, n_lanes=2, ring_length=None, timers=None):
    """``rows`` are ``(class, x, v, lane)``; ids follow row order."""
    lengths = {AV: 4.5, CAR: 4.5, TRUCK: 13.6}
    n = len(rows)
    cls = [r[0] for r in rows]
    return HybridState(
        np.arange(n),
        cls,
        [r[1] for r in rows],
        [r[2] for r in rows],
        [r[3] for r in rows],
        np.zeros(n) if timers is None else timers,
        [lengths[c] for c in cls],
        n_lanes,
        ring_length,
    )


@pytest.fixture
def params():
    return make_params()


def two_av_fixture(dt=0.05):
    """Two AVs on an open two-lane road, no lane changes, tracking cost target 3 m/s."""
    from hybridtraffic.scenarios import ScenarioConfig

    return ScenarioConfig.from_dict(
        ScenarioConfig(
            name="two-av",
            topology="open",
            ring_length=None,
            n_lanes=2,
            counts={AV: 2},
            init_velocity=1.0,
            base_probability={AV: 0.0},
            horizon=10.0,
            dt=dt,
        ).to_dict()
    )


def two_av_signal():
    from hybridtraffic.control import ControlSignal

    return ControlSignal([0.0, 5.0], {0: [0.5, -0.5], 1: [-0.2, 0.4]}, 1.0)


def single_av_fixture(init_velocity=0.0, horizon=20.0):
    """One AV alone on a one-lane open road."""
    from hybridtraffic.scenarios import ScenarioConfig

    return ScenarioConfig.from_dict(
        ScenarioConfig(
            name="single-av",
            topology="open",
            ring_length=None,
            n_lanes=1,
            counts={AV: 1},
            init_velocity=init_velocity,
            horizon=horizon,
        ).to_dict()
    )


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
