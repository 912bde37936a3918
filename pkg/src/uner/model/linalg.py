"""Closed-form algebra for compound-symmetry blocks sigma2 * I_n + c * J_n."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DomainError


@dataclass(frozen=True)
class CompoundSymmetry:
    n: int
    diag: float
    common: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise DomainError(f"block size must be >= 1, got {self.n}")
        if not self.diag > 0.0:
            raise DomainError(f"diagonal variance must be positive, got {self.diag}")
        if not self.common >= 0.0:
            raise DomainError(f"common term must be non-negative, got {self.common}")

    def dense(self) -> np.ndarray:
        return self.diag * np.eye(self.n) + self.common * np.ones((self.n, self.n))


def cs_solve_logdet(cs: CompoundSymmetry, rhs):
    """Solve (sigma2 I + c J) x = rhs and return (x, log-determinant).

    Uses (sigma2 I + c J)^-1 = (I - c / (sigma2 + n c) J) / sigma2 and
    log|sigma2 I + c J| = (n - 1) log sigma2 + log(sigma2 + n c).
    ``rhs`` may be a vector (n,) or a matrix (n, k).
    """
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != cs.n:
        raise DomainError(f"rhs has {rhs.shape[0]} rows, block size is {cs.n}")
    s2, c, n = cs.diag, cs.common, cs.n
    denom = s2 + n * c
    sol = (rhs - (c / denom) * rhs.sum(axis=0)) / s2
    logdet = (n - 1) * math.log(s2) + math.log(denom)
    return sol, logdet
