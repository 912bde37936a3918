from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ConfigError, DomainError


class ModelKind(str, enum.Enum):
    UNER = "uner"
    NER = "ner"


@dataclass(frozen=True, eq=False)
class ModelParams:
    """One parameter point (beta, sigma2, tau2, p). NER ignores ``p``."""

    beta: np.ndarray
    sigma2: float
    tau2: float
    p: float = 1.0
    model_kind: ModelKind = ModelKind.UNER

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float, copy=True).reshape(-1)
        beta.flags.writeable = False
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "model_kind", ModelKind(self.model_kind))
        for name in ("sigma2", "tau2", "p"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not self.sigma2 > 0.0 or not math.isfinite(self.sigma2):
            raise DomainError(f"sigma2 must be positive and finite, got {self.sigma2}")
        if not self.tau2 > 0.0 or not math.isfinite(self.tau2):
            raise DomainError(f"tau2 must be positive and finite, got {self.tau2}")
        if not 0.0 <= self.p <= 1.0:
            raise DomainError(f"p must lie in [0, 1], got {self.p}")
        if not np.all(np.isfinite(beta)):
            raise DomainError("beta must be finite")

    @property
    def effective_p(self) -> float:
        return 1.0 if self.model_kind is ModelKind.NER else self.p

    def vector(self) -> np.ndarray:
        """Flat (beta, sigma2, tau2[, p]) vector."""
        tail = [self.sigma2, self.tau2]
        if self.model_kind is ModelKind.UNER:
            tail.append(self.p)
        return np.concatenate([self.beta, tail])


@dataclass(frozen=True, eq=False)
class LatentState:
    """Indicators ``u`` and random effects ``v``; ``u_i = 0`` forces ``v_i = 0``."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.array(self.u, dtype=np.int8, copy=True).reshape(-1)
        v = np.array(self.v, dtype=float, copy=True).reshape(-1)
        if u.shape != v.shape:
            raise DomainError("u and v must have the same length")
        if not np.all((u == 0) | (u == 1)):
            raise DomainError("u must be binary")
        if np.any(v[u == 0] != 0.0):
            raise DomainError("v_i must be exactly 0 wherever u_i = 0")
        u.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def z(self) -> int:
        return int(self.u.sum())


@dataclass(frozen=True)
class PriorConfig:
    """Prior switch for tau2: improper 1/tau when z > a, IG(b1, b2) otherwise.

    With ``auto_hyper`` the inverse-gamma hyperparameters come from the
    within-area variance estimate V as b1 = V + 2, b2 = V (V + 1) via
    :meth:`resolve`. Explicit values must satisfy b1 > 3 and b2 > 0; derived
    values only need to give a proper prior (b1 > 0, b2 > 0), since V < 1
    already puts b1 below 3.
    """

    a: int = 5
    b1: Optional[float] = None
    b2: Optional[float] = None
    auto_hyper: bool = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.auto_hyper is None:
            object.__setattr__(self, "auto_hyper", self.b1 is None and self.b2 is None)
        if int(self.a) != self.a or self.a < 1:
            raise ConfigError(f"a must be a positive integer, got {self.a}")
        object.__setattr__(self, "a", int(self.a))
        if self.auto_hyper:
            if self.b1 is not None and not self.b1 > 0:
                raise ConfigError(f"b1 must be positive, got {self.b1}")
            if self.b2 is not None and not self.b2 > 0:
                raise ConfigError(f"b2 must be positive, got {self.b2}")
            return
        if self.b1 is None or self.b2 is None:
            raise ConfigError("b1 and b2 are required unless auto_hyper is set")
        if not self.b1 > 3:
            raise ConfigError(f"b1 must exceed 3, got {self.b1}")
        if not self.b2 > 0:
            raise ConfigError(f"b2 must be positive, got {self.b2}")

    @property
    def resolved(self) -> bool:
        return self.b1 is not None and self.b2 is not None

    @classmethod
    def from_variance(cls, V: float, a: int = 5) -> "PriorConfig":
        if not V > 0:
            raise ConfigError(f"cannot derive hyperparameters from V = {V}")
        return cls(a=a, b1=V + 2.0, b2=V * (V + 1.0), auto_hyper=True)

    def resolve(self, data) -> "PriorConfig":
        """Fill in b1/b2 from the data when ``auto_hyper`` is set."""
        if self.resolved:
            return self
        from .posterior import estimate_sampling_variance

        return self.from_variance(estimate_sampling_variance(data), a=self.a)
