"""
Time-varying parameters delta, epsilon, gamma, sigma and w, and the
grid-based checks of the sufficient convergence conditions.

Every family has closed-form value and derivative and accepts scalar or
array time arguments.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np
from scipy.integrate import cumulative_trapezoid

from app.errors import InvalidArgumentError

logger = logging.getLogger("penaltynash.schedules")

GROWTH_THRESHOLD = 1e-3
DIVERGENCE_THRESHOLD = 1.0
DECAY_FACTOR = 10.0

Variant = Literal["full", "partial"]


def _time(t) -> np.ndarray:
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise InvalidArgumentError("schedules are defined for t >= 0")
    return arr


def _out(value: np.ndarray, t):
    return float(value) if np.ndim(t) == 0 else value


class ParamSchedule(ABC):
    kind: str

    @abstractmethod
    def _value(self, t: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def _derivative(self, t: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def to_spec(self) -> dict[str, Any]: ...

    def value(self, t):
        return _out(self._value(_time(t)), t)

    def derivative(self, t):
        return _out(self._derivative(_time(t)), t)


def _check_coefficient(c: float):
    if not np.isfinite(c) or c < 0:
        raise InvalidArgumentError("schedule coefficient must be finite and nonnegative", c=c)


@dataclass(frozen=True)
class Constant(ParamSchedule):
    c: float
    kind: str = field(default="const", init=False)

    def __post_init__(self):
        _check_coefficient(self.c)

    def _value(self, t):
        return np.full(np.shape(t), self.c, dtype=float)

    def _derivative(self, t):
        return np.zeros(np.shape(t))

    def to_spec(self):
        return {"kind": "const", "c": self.c}


@dataclass(frozen=True)
class Power(ParamSchedule):
    """c (1 + t)^p"""

    c: float
    p: float
    kind: str = field(default="power", init=False)

    def __post_init__(self):
        _check_coefficient(self.c)

    def _value(self, t):
        return self.c * (1.0 + t) ** self.p

    def _derivative(self, t):
        return self.c * self.p * (1.0 + t) ** (self.p - 1.0)

    def to_spec(self):
        return {"kind": "power", "c": self.c, "p": self.p}


@dataclass(frozen=True)
class Exponential(ParamSchedule):
    """c e^{r t}"""

    c: float
    r: float
    kind: str = field(default="exp", init=False)

    def __post_init__(self):
        _check_coefficient(self.c)

    def _value(self, t):
        return self.c * np.exp(self.r * t)

    def _derivative(self, t):
        return self.r * self._value(t)

    def to_spec(self):
        return {"kind": "exp", "c": self.c, "r": self.r}


@dataclass(frozen=True)
class Sum(ParamSchedule):
    terms: tuple[ParamSchedule, ...]
    kind: str = field(default="sum", init=False)

    def __post_init__(self):
        if not self.terms:
            raise InvalidArgumentError("sum schedule needs at least one term")
        object.__setattr__(self, "terms", tuple(self.terms))

    def _value(self, t):
        return sum((term._value(t) for term in self.terms), np.zeros(np.shape(t)))

    def _derivative(self, t):
        return sum((term._derivative(t) for term in self.terms), np.zeros(np.shape(t)))

    def to_spec(self):
        return {"kind": "sum", "terms": [term.to_spec() for term in self.terms]}


@dataclass(frozen=True)
class DerivedGamma(ParamSchedule):
    """gamma = delta / (N b1^2 + N b2^2 eps^2 + delta^2 [+ 1 for the partial variant])"""

    n_players: int
    b1: float
    b2: float
    delta: ParamSchedule
    epsilon: ParamSchedule
    variant: Variant = "full"
    kind: str = field(default="derived-gamma", init=False)

    def __post_init__(self):
        if self.n_players < 1:
            raise InvalidArgumentError("n_players must be positive", n_players=self.n_players)
        if not (self.b1 > 0 and self.b2 >= 0):
            raise InvalidArgumentError("b1 must be positive and b2 nonnegative", b1=self.b1, b2=self.b2)
        if self.variant not in ("full", "partial"):
            raise InvalidArgumentError("variant must be 'full' or 'partial'", variant=self.variant)

    def denominator(self, t):
        d, e = self.delta._value(t), self.epsilon._value(t)
        extra = 1.0 if self.variant == "partial" else 0.0
        n = self.n_players
        return n * self.b1**2 + n * self.b2**2 * e**2 + d**2 + extra

    def _value(self, t):
        return self.delta._value(t) / self.denominator(t)

    def _derivative(self, t):
        d, dd = self.delta._value(t), self.delta._derivative(t)
        e, de = self.epsilon._value(t), self.epsilon._derivative(t)
        D = self.denominator(t)
        dD = 2.0 * self.n_players * self.b2**2 * e * de + 2.0 * d * dd
        return (dd * D - d * dD) / D**2

    def to_spec(self):
        return {"kind": "derived-gamma", "variant": self.variant, "b1": self.b1, "b2": self.b2}


def evaluate(s: ParamSchedule, t):
    return s.value(t)


def evaluate_derivative(s: ParamSchedule, t):
    return s.derivative(t)


def derive_gamma(
    n_players: int, b1: float, b2: float, delta: ParamSchedule, epsilon: ParamSchedule, variant: Variant = "full"
) -> DerivedGamma:
    return DerivedGamma(n_players=n_players, b1=b1, b2=b2, delta=delta, epsilon=epsilon, variant=variant)


@dataclass(frozen=True)
class ScheduleSet:
    delta: ParamSchedule
    epsilon: ParamSchedule
    gamma: ParamSchedule
    sigma: ParamSchedule
    w: ParamSchedule = field(default_factory=lambda: Constant(1.0))

    def at(self, t: float) -> dict[str, float]:
        return {name: float(getattr(self, name).value(t)) for name in ("delta", "epsilon", "gamma", "sigma", "w")}


# --- condition checks --------------------------------------------------------


@dataclass
class ConditionResult:
    name: str
    description: str
    passed: bool
    proxy_checked: bool = False
    detail: str = ""
    witnesses: list[float] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "description": self.description,
            "passed": self.passed,
            "proxy_checked": self.proxy_checked,
            "detail": self.detail,
            "witnesses": self.witnesses,
        }


@dataclass
class ConditionReport:
    variant: Variant
    horizon: float
    grid_size: int
    conditions: list[ConditionResult]
    c0: float
    min_theta_margin: float | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def failures(self) -> list[ConditionResult]:
        return [c for c in self.conditions if not c.passed]

    def condition(self, name: str) -> ConditionResult:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict[str, Any]:
        return {
            "variant": self.variant,
            "horizon": self.horizon,
            "grid_size": self.grid_size,
            "passed": self.passed,
            "c0": self.c0,
            "min_theta_margin": self.min_theta_margin,
            "conditions": [c.to_dict() for c in self.conditions],
        }

    def format_table(self) -> str:
        lines = [f"{'condition':<14} {'result':<6} {'proxy':<5}  detail"]
        for c in self.conditions:
            lines.append(f"{c.name:<14} {'PASS' if c.passed else 'FAIL':<6} {'yes' if c.proxy_checked else 'no':<5}  {c.detail}")
        return "\n".join(lines)


def check_grid(horizon: float, grid_size: int) -> np.ndarray:
    """0 followed by a log-spaced grid ending at the horizon."""
    if horizon <= 0:
        raise InvalidArgumentError("horizon must be positive", horizon=horizon)
    if grid_size < 100:
        raise InvalidArgumentError("grid_size must be at least 100", grid_size=grid_size)
    start = min(1e-3, horizon / 100.0)
    return np.concatenate([[0.0], np.geomspace(start, horizon, grid_size - 1)])


def _witnesses(t: np.ndarray, bad: np.ndarray, limit: int = 5) -> list[float]:
    return [float(v) for v in t[bad][:limit]]


def _elasticity(t: np.ndarray, v: np.ndarray, last: np.ndarray) -> float:
    """d ln v / d ln(1+t) across the last decade of the grid."""
    vs, ts = v[last], t[last]
    if np.any(vs <= 0) or not np.all(np.isfinite(vs)):
        return float("nan")
    return float((np.log(vs[-1]) - np.log(vs[0])) / (np.log1p(ts[-1]) - np.log1p(ts[0])))


def _monotone(v: np.ndarray, increasing: bool) -> bool:
    steps = np.diff(v)
    slack = 1e-12 * np.maximum(np.abs(v[1:]), np.abs(v[:-1]))
    return bool(np.all(steps >= -slack) if increasing else np.all(steps <= slack))


def _trend(name: str, description: str, t, v, last, increasing: bool) -> ConditionResult:
    el = _elasticity(t, v, last)
    mono = _monotone(v[last], increasing)
    ok = bool(np.isfinite(el) and mono and (el >= GROWTH_THRESHOLD if increasing else el <= -GROWTH_THRESHOLD))
    detail = f"elasticity over last decade {el:.4g}, monotone={mono}"
    return ConditionResult(name, description, ok, proxy_checked=True, detail=detail, witnesses=[] if ok else [float(t[-1])])


def _integral_ratio(t: np.ndarray, r2: np.ndarray, E: np.ndarray) -> np.ndarray:
    """R(t) = e^{-E(t)} int_0^t r2(s) e^{E(s)} ds, stepped without forming e^E."""
    R = np.zeros_like(t)
    h = np.diff(t)
    dE = np.diff(E)
    safe = np.where(dE > 1e-12, dE, 1.0)
    weight = np.where(dE > 1e-12, -np.expm1(-safe) / safe, 1.0)
    r2_mid = 0.5 * (r2[1:] + r2[:-1])
    for k in range(t.size - 1):
        R[k + 1] = R[k] * np.exp(-dE[k]) + h[k] * r2_mid[k] * weight[k]
    return R


def _ratio_condition(name: str, t, R, last) -> tuple[ConditionResult, float]:
    c0 = float(np.max(R))
    before = float(np.max(R[~last])) if np.any(~last) else 0.0
    stable = _monotone(R[last], increasing=False) or float(np.max(R[last])) <= before
    detail = f"running max {c0:.4g}, last-decade max {float(np.max(R[last])):.4g}"
    result = ConditionResult(
        name,
        "integral ratio bounded (running maximum stabilises)",
        bool(stable and np.isfinite(c0)),
        proxy_checked=True,
        detail=detail,
        witnesses=[] if stable else [float(t[-1])],
    )
    return result, c0


def _common_conditions(t, schedules: ScheduleSet, rate: np.ndarray, sigma: np.ndarray, divisor: float):
    """Conditions shared by the full and partial checks; ``rate`` is r1 (full) or u1 (partial)."""
    delta, eps = schedules.delta.value(t), schedules.epsilon.value(t)
    d_delta, d_eps = schedules.delta.derivative(t), schedules.epsilon.derivative(t)
    last = t >= t[-1] / 10.0
    results: list[ConditionResult] = []

    bad = ~((rate > 0) & (rate < 1))
    results.append(
        ConditionResult(
            "rate_in_unit",
            "step rate strictly between 0 and 1",
            not bool(np.any(bad)),
            detail=f"range [{float(np.min(rate)):.4g}, {float(np.max(rate)):.4g}]",
            witnesses=_witnesses(t, bad),
        )
    )

    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = (np.abs(d_delta) + np.abs(d_eps)) / delta
        q = r2 / (rate * sigma)
    results.append(_trend("ratio_to_zero", "parameter drift over rate tends to 0", t, q, last, increasing=False))

    integrand = rate * sigma / divisor
    E = np.concatenate([[0.0], cumulative_trapezoid(integrand, t)])
    el = _elasticity(t, np.maximum(E, 1e-300), last)
    diverges = bool(E[-1] >= DIVERGENCE_THRESHOLD and np.isfinite(el) and el >= GROWTH_THRESHOLD)
    results.append(
        ConditionResult(
            "integral_diverges",
            "integral of rate times sigma diverges",
            diverges,
            proxy_checked=True,
            detail=f"integral {float(E[-1]):.4g}, elasticity {el:.4g}",
            witnesses=[] if diverges else [float(t[-1])],
        )
    )

    decays = bool(delta[-1] < delta[0] / DECAY_FACTOR and _monotone(delta, increasing=False))
    results.append(
        ConditionResult(
            "delta_to_zero",
            "delta decreases to 0",
            decays,
            proxy_checked=True,
            detail=f"delta(0)={float(delta[0]):.4g}, delta(T)={float(delta[-1]):.4g}",
            witnesses=[] if decays else [float(t[-1])],
        )
    )

    results.append(_trend("epsilon_grows", "epsilon grows without bound", t, eps, last, increasing=True))
    results.append(_trend("delta2_eps_grows", "delta^2 epsilon grows without bound", t, delta**2 * eps, last, True))

    ratio, c0 = _ratio_condition("integral_ratio", t, _integral_ratio(t, r2, E), last)
    results.append(ratio)
    return results, c0


def check_theorem1_conditions(
    schedules: ScheduleSet, n_players: int, b1: float, b2: float, horizon: float, grid_size: int = 400
) -> ConditionReport:
    """Full-decision conditions evaluated on a log-spaced grid over [0, horizon]."""
    t = check_grid(horizon, grid_size)
    delta, eps = schedules.delta.value(t), schedules.epsilon.value(t)
    gamma, sigma = schedules.gamma.value(t), schedules.sigma.value(t)
    D = n_players * b1**2 + n_players * b2**2 * eps**2 + delta**2
    r1 = -(gamma**2) * D + 2.0 * gamma * delta

    conditions, c0 = _common_conditions(t, schedules, r1, sigma, divisor=2.0)
    report = ConditionReport("full", horizon, grid_size, conditions, c0)
    for failure in report.failures():
        logger.warning("Schedule condition %s failed: %s", failure.name, failure.detail)
    return report


def check_theorem3_conditions(
    schedules: ScheduleSet,
    n_players: int,
    b1p: float,
    b2: float,
    b3: float,
    lambda_min: float,
    horizon: float,
    grid_size: int = 400,
) -> ConditionReport:
    """Partial-decision conditions, including the consensus-gain margin theta >= u1 sigma / 4."""
    if not lambda_min > 0:
        raise InvalidArgumentError("lambda_min must be positive", lambda_min=lambda_min)
    t = check_grid(horizon, grid_size)
    delta, eps = schedules.delta.value(t), schedules.epsilon.value(t)
    gamma, sigma, w = schedules.gamma.value(t), schedules.sigma.value(t), schedules.w.value(t)
    n = n_players
    D = n * b1p**2 + n * b2**2 * eps**2 + delta**2 + 1.0
    u1 = -(gamma**2) * D + 2.0 * gamma * delta
    u2 = (gamma**2 + 1.0) * (b3**2 + b2**2 * eps**2)

    conditions, c0 = _common_conditions(t, schedules, u1, sigma, divisor=4.0)

    with np.errstate(divide="ignore", invalid="ignore"):
        w_term = w * lambda_min if np.isfinite(lambda_min) else np.full_like(t, np.inf)
        theta = w_term - u2 * sigma / 2.0 - sigma * (2.0 - u1) * (n - 1) ** 2 / u1 - u1 * u2 * sigma / (4.0 * (2.0 - u1))
        margin = theta - u1 * sigma / 4.0
    bad = ~(margin >= 0)
    min_margin = float(np.nanmin(margin)) if np.any(np.isfinite(margin)) else float("-inf")
    conditions.append(
        ConditionResult(
            "consensus_gain",
            "theta >= u1 sigma / 4 (w large enough)",
            not bool(np.any(bad)),
            detail=f"minimal margin {min_margin:.4g}",
            witnesses=_witnesses(t, bad),
        )
    )
    report = ConditionReport("partial", horizon, grid_size, conditions, c0, min_theta_margin=min_margin)
    for failure in report.failures():
        logger.warning("Schedule condition %s failed: %s", failure.name, failure.detail)
    return report
