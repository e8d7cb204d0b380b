"""
Result records produced by training runs and theorem checks
"""

import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any


CURVE_COLUMNS = ("env_step", "eval_return", "critic_loss", "actor_loss", "alpha", "q_mean")


@dataclass
class CurvePoint:
    """One evaluation of the deterministic policy plus the latest update metrics."""

    env_step: int
    eval_return: float
    critic_loss: float = math.nan
    actor_loss: float = math.nan
    alpha: float = math.nan
    q_mean: float = math.nan

    def to_row(self) -> list[str]:
        return [str(self.env_step), *(repr(float(getattr(self, c))) for c in CURVE_COLUMNS[1:])]


@dataclass
class RunSummary:
    """Outcome of one seed's training run."""

    seed: int
    config: dict[str, Any]
    final_return: float
    wall_time: float
    env_steps: int
    clamp_count: int = 0

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "config": self.config,
            "final_return": self.final_return,
            "wall_time": self.wall_time,
            "env_steps": self.env_steps,
            "clamp_count": self.clamp_count,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunSummary":
        return cls(
            seed=data["seed"],
            config=data["config"],
            final_return=data["final_return"],
            wall_time=data["wall_time"],
            env_steps=data["env_steps"],
            clamp_count=data.get("clamp_count", 0),
        )


@dataclass
class RunManifest:
    """Provenance of a run: what was asked for and where the results went."""

    config: dict[str, Any]
    seed: int
    config_hash: str
    outputs: dict[str, str] = field(default_factory=dict)
    started_at: datetime | None = None
    finished_at: datetime | None = None

    def __post_init__(self):
        if self.started_at is None:
            self.started_at = datetime.now(timezone.utc)

    def finish(self) -> None:
        self.finished_at = datetime.now(timezone.utc)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "outputs": self.outputs,
            "started_at": self.started_at.isoformat() if self.started_at else None,
            "finished_at": self.finished_at.isoformat() if self.finished_at else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunManifest":
        return cls(
            config=data["config"],
            seed=data["seed"],
            config_hash=data["config_hash"],
            outputs=data.get("outputs", {}),
            started_at=datetime.fromisoformat(data["started_at"]) if data.get("started_at") else None,
            finished_at=datetime.fromisoformat(data["finished_at"]) if data.get("finished_at") else None,
        )


@dataclass
class CheckOutcome:
    """One measured quantity compared against its bound.

    With `upper` the observed value must not exceed the bound; otherwise it
    must not fall below it. Unasserted outcomes are reported only.
    """

    name: str
    observed: float
    bound: float
    upper: bool = True
    asserted: bool = True

    @property
    def margin(self) -> float:
        return self.bound - self.observed if self.upper else self.observed - self.bound

    @property
    def passed(self) -> bool:
        return self.margin >= 0

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "observed": self.observed,
            "bound": self.bound,
            "upper": self.upper,
            "asserted": self.asserted,
            "pass": self.passed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CheckOutcome":
        return cls(
            name=data["name"],
            observed=data["observed"],
            bound=data["bound"],
            upper=data.get("upper", True),
            asserted=data.get("asserted", True),
        )


@dataclass
class TheoremReport:
    """Outcome of one theorem check for one seed.

    The headline observed/bound/margin come from the first failing asserted
    check, or the first asserted check when everything passes.
    """

    theorem: str
    seed: int
    parameters: dict[str, Any] = field(default_factory=dict)
    checks: list[CheckOutcome] = field(default_factory=list)
    error: str | None = None

    @property
    def name(self) -> str:
        return f"{self.theorem}-seed{self.seed}"

    @property
    def passed(self) -> bool:
        return self.error is None and all(c.passed for c in self.checks if c.asserted)

    @property
    def primary(self) -> CheckOutcome | None:
        asserted = [c for c in self.checks if c.asserted]
        failing = [c for c in asserted if not c.passed]
        if failing:
            return failing[0]
        return asserted[0] if asserted else None

    @property
    def failures(self) -> list[str]:
        names = [c.name for c in self.checks if c.asserted and not c.passed]
        return names + (["error"] if self.error else [])

    def to_dict(self) -> dict:
        primary = self.primary
        return {
            "theorem": self.theorem,
            "parameters": self.parameters,
            "seed": self.seed,
            "pass": self.passed,
            "check": primary.name if primary else None,
            "observed": primary.observed if primary else math.nan,
            "bound": primary.bound if primary else math.nan,
            "margin": primary.margin if primary else math.nan,
            "checks": [c.to_dict() for c in self.checks],
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TheoremReport":
        return cls(
            theorem=data["theorem"],
            seed=data["seed"],
            parameters=data.get("parameters", {}),
            checks=[CheckOutcome.from_dict(c) for c in data.get("checks", [])],
            error=data.get("error"),
        )
