"""Exception types raised by the simulator."""


class HybridTrafficError(Exception):
    """Base class for all package errors."""


class DomainError(HybridTrafficError, ValueError):
    """An argument lies outside the domain of a function."""


class HeadwayViolation(HybridTrafficError):
    """A gap headway became nonpositive (collision).

    Attributes:
        follower: id of the trailing vehicle
        leader: id of the leading vehicle
        gap: offending gap headway in meters
        time: simulation clock at detection, if known
    """

    def __init__(self, follower, leader, gap, time=None):
        self.follower = follower
        self.leader = leader
        self.gap = gap
        self.time = time
        msg = f"headway violation: vehicle {follower} behind {leader}, gap={gap!r}"
        if time is not None:
            msg += f" at t={time!r}"
        super().__init__(msg)


class UndefinedAverage(HybridTrafficError):
    """Average acceleration requested over an empty class measure."""


class InvariantViolation(HybridTrafficError):
    """A state or event would break a hybrid-state invariant."""


class ConfigError(HybridTrafficError):
    """A scenario configuration failed validation.

    ``problems`` is a list of ``(field_path, message)`` pairs.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [("", problems)]
        self.problems = list(problems)
        lines = [f"{path}: {msg}" if path else msg for path, msg in self.problems]
        super().__init__("; ".join(lines))


class OptimizationFailed(HybridTrafficError):
    """Every candidate evaluated by the optimizer was infeasible."""
