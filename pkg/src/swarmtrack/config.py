"""Scenario files: JSON schema, validation and conversion to runtime objects."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from swarmtrack.de import DEParams
from swarmtrack.metrics import OspaParams
from swarmtrack.planning import PolicyKind, RolloutParams
from swarmtrack.sensing import AgentState
from swarmtrack.tracking import TrackingParams
from swarmtrack.world import LevyParams, Rect, SemanticMap

Quad = tuple[float, float, float, float]
Point = tuple[float, float]


class ScenarioError(ValueError):
    """Invalid scenario; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class MapConfig(_Strict):
    bounds: Quad
    occlusions: list[Quad] = []

    @model_validator(mode="after")
    def _geometry(self):
        bounds = Rect.from_seq(self.bounds)
        if bounds.xmax <= bounds.xmin or bounds.ymax <= bounds.ymin:
            raise ValueError("bounds must have positive width and height")
        for k, occ in enumerate(self.occlusions):
            rect = Rect.from_seq(occ)
            if not bounds.intersects(rect):
                raise ValueError(f"occlusions[{k}] does not intersect the map bounds")
        return self


class AgentConfig(_Strict):
    id: int
    pos: Point
    fov_side: float = Field(gt=0)
    alpha: float = Field(gt=0)
    v_max: float = Field(default=5.0, gt=0)
    # defaults to the FoV diagonal
    d0: Optional[float] = Field(default=None, gt=0)
    comm_range: float = Field(default=150.0, gt=0)


class LevyConfig(_Strict):
    alpha: float = Field(default=1.5, gt=0)
    x_min: float = Field(default=2.0, gt=0)
    l_max: float = Field(default=40.0, gt=0)

    @model_validator(mode="after")
    def _order(self):
        if self.l_max < self.x_min:
            raise ValueError("l_max must be >= x_min")
        return self


class TargetsConfig(_Strict):
    count: int = Field(ge=0)
    initial_positions: list[Point]
    speed_range: tuple[float, float] = (1.0, 3.0)
    levy: LevyConfig = LevyConfig()

    @model_validator(mode="after")
    def _consistent(self):
        if len(self.initial_positions) != self.count:
            raise ValueError(f"count is {self.count} but {len(self.initial_positions)} initial_positions given")
        lo, hi = self.speed_range
        if not 0 < lo <= hi:
            raise ValueError("speed_range must satisfy 0 < min <= max")
        return self


class RatesConfig(_Strict):
    obs_hz: int = Field(default=5, gt=0)
    control_hz: int = Field(default=1, gt=0)

    @model_validator(mode="after")
    def _multiple(self):
        if self.obs_hz % self.control_hz:
            raise ValueError(f"obs_hz ({self.obs_hz}) must be an integer multiple of control_hz ({self.control_hz})")
        return self


class TrackingConfig(_Strict):
    gate: float = Field(default=9.21, gt=0)
    m_confirm: int = Field(default=2, ge=1)
    n_confirm: int = Field(default=3, ge=1)
    m_delete: int = Field(default=5, ge=1)
    n_delete: int = Field(default=6, ge=1)
    p_detect: float = Field(default=0.95, gt=0, le=1)
    clutter_density: float = Field(default=0.0, ge=0)
    init_cov: tuple[float, float, float, float] = (4.0, 4.0, 9.0, 9.0)
    r0: float = Field(default=1.0, gt=0)
    q: float = Field(default=0.5, ge=0)
    event_cap: int = Field(default=10_000, ge=1)

    @model_validator(mode="after")
    def _windows(self):
        if self.m_confirm > self.n_confirm or self.m_delete > self.n_delete:
            raise ValueError("M must not exceed N in the M-of-N rules")
        if min(self.init_cov) <= 0:
            raise ValueError("init_cov entries must be positive")
        return self


class ConsensusConfig(_Strict):
    L: int = Field(default=10, ge=1)
    association_gate: float = Field(default=5.0, gt=0)


class DEConfig(_Strict):
    population: int = Field(default=16, ge=4)
    generations: int = Field(default=30, ge=0)
    generations_joint: int = Field(default=60, ge=0)
    weight: float = Field(default=0.7, gt=0, le=2)
    crossover: float = Field(default=0.9, ge=0, le=1)


class PlanningConfig(_Strict):
    policy: str = "rollout_sequential"
    horizon: int = Field(default=5, ge=1)
    mc_samples: int = Field(default=50, ge=1)
    v0: float = Field(default=5.0, gt=0)
    de: DEConfig = DEConfig()
    agent_order: Optional[list[int]] = None

    @field_validator("policy")
    @classmethod
    def _known_policy(cls, v: str) -> str:
        try:
            return PolicyKind.parse(v).value
        except ValueError:
            raise ValueError(f"unknown policy {v!r}; expected one of {[p.value for p in PolicyKind]}") from None


class ExperimentConfig(_Strict):
    trials: int = Field(default=20, ge=1)
    epochs: int = Field(default=40, ge=1)
    base_seed: int = Field(default=0, ge=0)
    ospa_mode: Literal["reporting_agent", "agent_mean"] = "reporting_agent"
    reporting_agent: int = 0


class OspaConfig(_Strict):
    c: float = Field(default=40.0, gt=0)
    p: float = Field(default=2.0, ge=1)


class ScenarioConfig(_Strict):
    name: str = "scenario"
    notes: str = ""
    map: MapConfig
    agents: list[AgentConfig] = Field(min_length=1)
    targets: TargetsConfig
    rates: RatesConfig = RatesConfig()
    tracking: TrackingConfig = TrackingConfig()
    consensus: ConsensusConfig = ConsensusConfig()
    planning: PlanningConfig = PlanningConfig()
    experiment: ExperimentConfig = ExperimentConfig()
    ospa: OspaConfig = OspaConfig()

    @model_validator(mode="after")
    def _cross_checks(self):
        ids = [a.id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ValueError(f"agent ids must be unique, got {ids}")
        order = self.planning.agent_order
        if order is not None and sorted(order) != sorted(ids):
            raise ValueError(f"planning.agent_order {order} is not a permutation of agent ids {ids}")
        if self.experiment.reporting_agent not in ids:
            raise ValueError(f"experiment.reporting_agent {self.experiment.reporting_agent} is not an agent id")
        bounds = Rect.from_seq(self.map.bounds)
        for k, p in enumerate(self.targets.initial_positions):
            if not bounds.contains(p):
                raise ValueError(f"targets.initial_positions[{k}] {list(p)} lies outside the map")
        for a in self.agents:
            if not bounds.contains(a.pos):
                raise ValueError(f"agent {a.id} starts outside the map")
        return self

    # runtime views

    @property
    def control_dt(self) -> float:
        return 1.0 / self.rates.control_hz

    @property
    def obs_dt(self) -> float:
        return 1.0 / self.rates.obs_hz

    @property
    def substeps(self) -> int:
        return self.rates.obs_hz // self.rates.control_hz

    def semantic_map(self) -> SemanticMap:
        return SemanticMap.from_lists(self.map.bounds, self.map.occlusions)

    def agent_states(self) -> list[AgentState]:
        out = []
        for a in self.agents:
            d0 = float(a.d0) if a.d0 is not None else float(a.fov_side * np.sqrt(2.0))
            out.append(
                AgentState(
                    id=a.id,
                    pos=np.array(a.pos, dtype=float),
                    fov_side=a.fov_side,
                    alpha=a.alpha,
                    v_max=a.v_max,
                    d0=d0,
                    comm_range=a.comm_range,
                )
            )
        return out

    def levy_params(self) -> LevyParams:
        lo, hi = self.targets.speed_range
        lv = self.targets.levy
        return LevyParams(speed_min=lo, speed_max=hi, alpha=lv.alpha, x_min=lv.x_min, l_max=lv.l_max)

    def tracking_params(self) -> TrackingParams:
        t = self.tracking
        return TrackingParams(
            gate=t.gate,
            p_detect=t.p_detect,
            clutter_density=t.clutter_density,
            m_confirm=t.m_confirm,
            n_confirm=t.n_confirm,
            m_delete=t.m_delete,
            n_delete=t.n_delete,
            init_cov=tuple(t.init_cov),
            event_cap=t.event_cap,
        )

    def rollout_params(self) -> RolloutParams:
        p = self.planning
        de = DEParams(**p.de.model_dump())
        order = tuple(p.agent_order) if p.agent_order is not None else None
        return RolloutParams(
            horizon=p.horizon,
            mc_samples=p.mc_samples,
            control_dt=self.control_dt,
            consensus_L_plan=self.consensus.L,
            de=de,
            agent_order=order,
            v0=p.v0,
            q=self.tracking.q,
            r0=self.tracking.r0,
        )

    def ospa_params(self) -> OspaParams:
        return OspaParams(c=self.ospa.c, p=self.ospa.p)

    def policy(self) -> PolicyKind:
        return PolicyKind.parse(self.planning.policy)

    def with_overrides(self, **sections) -> "ScenarioConfig":
        """Return a copy with fields of nested sections replaced, e.g.
        ``with_overrides(experiment={"trials": 3})``; the result is revalidated."""
        data = self.model_dump()
        for section, values in sections.items():
            if isinstance(values, dict):
                data[section] = {**data[section], **values}
            else:
                data[section] = values
        return parse_scenario(data)


def _first_error(exc: ValidationError) -> ScenarioError:
    err = exc.errors()[0]
    field = ".".join(str(p) for p in err["loc"]) or "<root>"
    msg = err["msg"]
    if err["type"] == "extra_forbidden":
        msg = "unknown key"
    return ScenarioError(field, msg)


def parse_scenario(data: dict) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise _first_error(exc) from exc
    except ValueError as exc:
        raise ScenarioError("<root>", str(exc)) from exc


def bundled_scenario_path(name: str = "parkinglot") -> Path:
    return Path(str(resources.files("swarmtrack") / "scenarios" / f"{name}.json"))


def resolve_scenario_path(path_or_name: str | Path) -> Path:
    p = Path(path_or_name)
    if p.exists():
        return p
    bundled = bundled_scenario_path(str(path_or_name))
    if bundled.exists():
        return bundled
    raise ScenarioError("scenario", f"file not found: {path_or_name}")


def load_scenario(path: str | Path) -> ScenarioConfig:
    """Read and validate a JSON scenario (a bundled name such as ``parkinglot`` also works)."""
    p = resolve_scenario_path(path)
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError("<file>", f"{p}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ScenarioError("<root>", "scenario must be a JSON object")
    return parse_scenario(data)
