"""Problem definitions: error measures, power objectives, and test configurations."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace

__all__ = ["ErrorMeasure", "PowerKind", "Config", "ProblemSpec"]

MAX_K = 8
MAX_SOLVE_K = 3


class ErrorMeasure(str, enum.Enum):
    """False-discovery measure under strong control."""

    FWER = "fwer"
    FDR = "fdr"


class PowerKind(str, enum.Enum):
    """Power objective: average power over L false nulls, or P(any rejection)."""

    AVG = "avg"
    ANY = "any"


@dataclass(frozen=True)
class Config:
    """A configuration of false nulls: which of the K hypotheses are non-null.

    Indices are 0-based.  The canonical configuration with L false nulls
    puts them at positions 0..L-1.
    """

    false_nulls: frozenset = field(default_factory=frozenset)
    k: int = 3

    def __post_init__(self):
        fn = frozenset(int(i) for i in self.false_nulls)
        object.__setattr__(self, "false_nulls", fn)
        if any(i < 0 or i >= self.k for i in fn):
            raise ValueError("false-null index out of range")

    @classmethod
    def canonical(cls, L: int, k: int) -> "Config":
        if not 0 <= L <= k:
            raise ValueError(f"L must be in [0, {k}]")
        return cls(frozenset(range(L)), k)

    @property
    def L(self) -> int:
        return len(self.false_nulls)

    @property
    def true_nulls(self) -> frozenset:
        return frozenset(range(self.k)) - self.false_nulls

    def indicator(self) -> tuple:
        return tuple(1 if i in self.false_nulls else 0 for i in range(self.k))


@dataclass(frozen=True)
class ProblemSpec:
    """One optimal-testing instance: K exchangeable normal-means hypotheses.

    Parameters
    ----------
    k : int
        Number of hypotheses (2..8; the deterministic solver handles k <= 3).
    alpha : float
        Error-control level in (0, 1).
    error : ErrorMeasure
        FWER or FDR, controlled strongly over all configurations.
    power : PowerKind
        Average power over ``L`` false nulls, or probability of any rejection.
    L : int or None
        Number of false nulls in the average-power objective (defaults to k).
        Ignored for the any-rejection objective.
    theta_obj : float
        Signal (standardized mean shift, < 0) used in the power objective.
    theta_con : float or None
        Signal used in the error constraints (defaults to theta_obj).
    """

    k: int = 3
    alpha: float = 0.05
    error: ErrorMeasure = ErrorMeasure.FWER
    power: PowerKind = PowerKind.AVG
    L: int | None = None
    theta_obj: float = -1.0
    theta_con: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "error", ErrorMeasure(self.error))
        object.__setattr__(self, "power", PowerKind(self.power))
        if not 2 <= self.k <= MAX_K:
            raise ValueError(f"k must be in [2, {MAX_K}], got {self.k}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if not self.theta_obj < 0.0:
            raise ValueError("theta_obj must be negative")
        if self.theta_con is None:
            object.__setattr__(self, "theta_con", float(self.theta_obj))
        if not self.theta_con < 0.0:
            raise ValueError("theta_con must be negative")
        if self.power is PowerKind.AVG:
            L = self.k if self.L is None else int(self.L)
            if not 1 <= L <= self.k:
                raise ValueError(f"L must be in [1, {self.k}], got {L}")
            object.__setattr__(self, "L", L)
        else:
            object.__setattr__(self, "L", None)

    @property
    def theta_constraint(self) -> float:
        return self.theta_obj if self.theta_con is None else self.theta_con

    @property
    def objective_L(self) -> int:
        """Number of false nulls the objective averages over (k for any-power)."""
        return self.k if self.L is None else self.L

    def with_thetas(self, theta_obj: float, theta_con: float) -> "ProblemSpec":
        return replace(self, theta_obj=theta_obj, theta_con=theta_con)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "alpha": self.alpha,
            "error": self.error.value,
            "power": self.power.value,
            "L": self.L,
            "theta_obj": self.theta_obj,
            "theta_con": self.theta_constraint,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemSpec":
        return cls(
            k=int(d["k"]),
            alpha=float(d["alpha"]),
            error=ErrorMeasure(d["error"]),
            power=PowerKind(d["power"]),
            L=None if d.get("L") is None else int(d["L"]),
            theta_obj=float(d["theta_obj"]),
            theta_con=None if d.get("theta_con") is None else float(d["theta_con"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "ProblemSpec":
        return cls.from_dict(json.loads(s))
