import re
from typing import Annotated, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.constants import (
    DEFAULT_CHECK_GRID_SIZE,
    DEFAULT_SUMMARY_FILE,
    DEFAULT_TRAJECTORY_FILE,
    ROBOT_COEFFICIENTS,
    SCHEMA_VERSION,
)

_STRICT = ConfigDict(extra="forbid")


# Schedule schemas
class ConstScheduleSpec(BaseModel):
    model_config = _STRICT

    kind: Literal["const"] = "const"
    c: float = Field(ge=0)


class PowerScheduleSpec(BaseModel):
    """c (1 + t)^p"""

    model_config = _STRICT

    kind: Literal["power"] = "power"
    c: float = Field(ge=0)
    p: float


class ExpScheduleSpec(BaseModel):
    """c e^{r t}"""

    model_config = _STRICT

    kind: Literal["exp"] = "exp"
    c: float = Field(ge=0)
    r: float


class SumScheduleSpec(BaseModel):
    model_config = _STRICT

    kind: Literal["sum"] = "sum"
    terms: list["ScheduleSpec"] = Field(min_length=1)


class DerivedGammaSpec(BaseModel):
    """gamma from delta and epsilon. Missing constants are taken from the game's Lipschitz estimates."""

    model_config = _STRICT

    kind: Literal["derived-gamma"] = "derived-gamma"
    variant: Literal["full", "partial"] | None = None
    b1: float | None = Field(default=None, gt=0)
    b2: float | None = Field(default=None, ge=0)


ScheduleSpec = Annotated[
    ConstScheduleSpec | PowerScheduleSpec | ExpScheduleSpec | SumScheduleSpec | DerivedGammaSpec,
    Field(discriminator="kind"),
]
SumScheduleSpec.model_rebuild()


def _contains_derived(spec) -> bool:
    if isinstance(spec, DerivedGammaSpec):
        return True
    if isinstance(spec, SumScheduleSpec):
        return any(_contains_derived(term) for term in spec.terms)
    return False


class SchedulesConfig(BaseModel):
    model_config = _STRICT

    delta: ScheduleSpec
    epsilon: ScheduleSpec
    gamma: ScheduleSpec
    sigma: ScheduleSpec
    w: ScheduleSpec = Field(default_factory=lambda: ConstScheduleSpec(c=1.0))

    @model_validator(mode="after")
    def _derived_only_for_gamma(self):
        for name in ("delta", "epsilon", "sigma", "w"):
            if _contains_derived(getattr(self, name)):
                raise ValueError(f"derived-gamma is only allowed for gamma, not {name}")
        if isinstance(self.gamma, SumScheduleSpec) and _contains_derived(self.gamma):
            raise ValueError("derived-gamma cannot be part of a sum")
        return self


# Game schemas
class GameConfig(BaseModel):
    model_config = _STRICT

    builtin: Literal["five-player", "five-player-noshared", "robot-swarm", "consensus"] | None = None
    matrix: list[list[float]] | None = None
    offset: list[float] | None = None
    coefficients: list[float] | None = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.builtin is None) == (self.matrix is None):
            raise ValueError("give either a builtin game name or an explicit matrix")
        if self.matrix is not None:
            n = len(self.matrix)
            if n == 0 or any(len(row) != n for row in self.matrix):
                raise ValueError("matrix must be square and nonempty")
            if self.offset is not None and len(self.offset) != n:
                raise ValueError("offset must have one entry per player")
        if self.coefficients is not None and self.builtin != "robot-swarm":
            raise ValueError("coefficients only apply to the robot-swarm game")
        if self.builtin == "robot-swarm" and self.coefficients is None:
            self.coefficients = list(ROBOT_COEFFICIENTS)
        return self


class ConstraintsConfig(BaseModel):
    model_config = _STRICT

    boxes: list[tuple[float, float]] = Field(min_length=1)
    A: list[list[float]] | None = None
    b: list[float] | None = None

    @model_validator(mode="after")
    def _shared_shape(self):
        if (self.A is None) != (self.b is None):
            raise ValueError("A and b must be given together")
        if self.A is not None:
            n = len(self.boxes)
            if len(self.A) != len(self.b) or any(len(row) != n for row in self.A):
                raise ValueError("A must be (number of rows of b) x (number of players)")
        for lo, hi in self.boxes:
            if lo > hi:
                raise ValueError("each box needs lo <= hi")
        return self


class GraphConfig(BaseModel):
    """Explicit edge list with 1-based node ids and optional weights."""

    model_config = _STRICT

    n: int = Field(ge=1)
    edges: list[list[float]] = Field(default_factory=list)

    @field_validator("edges")
    @classmethod
    def _edge_shape(cls, v):
        for edge in v:
            if len(edge) not in (2, 3):
                raise ValueError("edges are [i, j] or [i, j, weight]")
        return v


_GRAPH_NAME = re.compile(r"^(ring|path|complete):(\d+)$")


def graph_size(graph: "str | GraphConfig | None") -> int | None:
    if graph is None:
        return None
    if isinstance(graph, GraphConfig):
        return graph.n
    match = _GRAPH_NAME.match(graph.strip())
    return int(match.group(2)) if match else None


# Run schemas
class IntegratorSettings(BaseModel):
    model_config = _STRICT

    method: Literal["rk4", "rk45", "reparam_rk45"] = "rk45"
    horizon: float = Field(gt=0)
    h: float = Field(default=0.01, gt=0)
    rtol: float = Field(default=1e-6, gt=0)
    atol: float = Field(default=1e-8, gt=0)
    h_min: float = Field(default=1e-12, gt=0)
    h_max: float = Field(default=0.1, gt=0)
    sample_stride: int = Field(default=1, ge=1)
    max_steps: int = Field(default=10_000_000, ge=1)

    @model_validator(mode="after")
    def _step_bounds(self):
        if self.h_min > self.h_max:
            raise ValueError("h_min must not exceed h_max")
        return self


class InitialState(BaseModel):
    model_config = _STRICT

    x: list[float] = Field(min_length=1)
    y_offdiag: float = 0.0
    Y: list[list[float]] | None = None


class LipschitzOverride(BaseModel):
    model_config = _STRICT

    b1: float | None = Field(default=None, gt=0)
    b2: float | None = Field(default=None, gt=0)
    b3: float | None = Field(default=None, gt=0)


class OracleSettings(BaseModel):
    model_config = _STRICT

    tol: float = Field(default=1e-4, gt=0)
    delta0: float = Field(default=1.0, gt=0)
    epsilon0: float = Field(default=1.0, gt=0)
    rho: float = Field(default=0.5, gt=0, lt=1)
    epsilon_exponent: float = Field(default=2.5, gt=0)
    max_steps: int = Field(default=60, ge=1)


class OutputSettings(BaseModel):
    model_config = _STRICT

    trajectory: str = DEFAULT_TRAJECTORY_FILE
    summary: str = DEFAULT_SUMMARY_FILE


class ExperimentConfig(BaseModel):
    model_config = _STRICT

    schema_version: Literal[1] = SCHEMA_VERSION
    name: str = Field(min_length=1)
    description: str = ""
    game: GameConfig
    constraints: ConstraintsConfig | None = None
    graph: str | GraphConfig | None = None
    schedules: SchedulesConfig
    algorithm: Literal["full", "partial", "unconstrained"]
    integrator: IntegratorSettings
    initial: InitialState
    reference: Literal["oracle", "none"] | list[float] = "oracle"
    lipschitz: LipschitzOverride | None = None
    oracle: OracleSettings = Field(default_factory=OracleSettings)
    check_horizon: float = Field(default=10.0, gt=0)
    check_grid_size: int = Field(default=DEFAULT_CHECK_GRID_SIZE, ge=100)
    published_equilibrium: list[float] | None = None
    output: OutputSettings = Field(default_factory=OutputSettings)

    @field_validator("graph")
    @classmethod
    def _graph_name(cls, v):
        if isinstance(v, str) and not _GRAPH_NAME.match(v.strip()):
            raise ValueError("graph must be ring:N, path:N, complete:N or an edge list")
        return v

    def n_players(self) -> int:
        if self.game.matrix is not None:
            return len(self.game.matrix)
        if self.game.builtin in ("five-player", "five-player-noshared"):
            return 5
        n = graph_size(self.graph)
        if n is None:
            raise ValueError(f"the {self.game.builtin} game needs a graph")
        return n

    @model_validator(mode="after")
    def _consistent(self):
        if self.algorithm in ("partial", "unconstrained") and self.graph is None:
            raise ValueError(f"algorithm '{self.algorithm}' needs a communication graph")
        n = self.n_players()
        n_graph = graph_size(self.graph)
        if n_graph is not None and n_graph != n:
            raise ValueError(f"graph has {n_graph} nodes but the game has {n} players")
        if self.game.coefficients is not None and len(self.game.coefficients) != n:
            raise ValueError("robot-swarm needs one coefficient per robot")
        if self.constraints is not None and len(self.constraints.boxes) != n:
            raise ValueError(f"constraints need {n} boxes")
        if self.game.matrix is not None and self.constraints is None and self.algorithm != "unconstrained":
            raise ValueError("an explicit game needs constraints unless it runs unconstrained")
        if len(self.initial.x) != n:
            raise ValueError(f"initial x needs {n} entries")
        if self.initial.Y is not None and (len(self.initial.Y) != n or any(len(r) != n for r in self.initial.Y)):
            raise ValueError(f"initial Y must be {n}x{n}")
        if isinstance(self.reference, list) and len(self.reference) != n:
            raise ValueError(f"reference needs {n} entries")
        if self.published_equilibrium is not None and len(self.published_equilibrium) != n:
            raise ValueError(f"published_equilibrium needs {n} entries")
        return self
