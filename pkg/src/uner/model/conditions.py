"""Runtime checks of the sufficient conditions for posterior propriety."""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .data import UnitDataset
from .params import PriorConfig


class Strictness(str, enum.Enum):
    PROPRIETY = "propriety"
    FINITE_VARIANCE = "finite_variance"


@dataclass(frozen=True)
class ConditionReport:
    strictness: Strictness
    passed: bool
    failures: tuple  # human-readable inequalities that do not hold

    def __bool__(self):
        return self.passed

    def message(self) -> str:
        if self.passed:
            return f"{self.strictness.value} conditions hold"
        return f"{self.strictness.value} conditions fail: " + "; ".join(self.failures)


def check_counts(N: int, q: int, m: int, a: int, strictness=Strictness.PROPRIETY) -> ConditionReport:
    strictness = Strictness(strictness)
    if strictness is Strictness.PROPRIETY:
        n_off, a_min = 2, 1
    else:
        n_off, a_min = 6, 5
    failures = []
    if not N > q + n_off:
        failures.append(f"N > q + {n_off} violated (N={N}, q+{n_off}={q + n_off})")
    if not m > a:
        failures.append(f"m > a violated (m={m}, a={a})")
    if not a >= a_min:
        failures.append(f"a >= {a_min} violated (a={a})")
    return ConditionReport(strictness, not failures, tuple(failures))


def validate_conditions(
    data: UnitDataset, prior: PriorConfig, strictness=Strictness.PROPRIETY
) -> ConditionReport:
    """Propriety needs N > q+2 and m > a >= 1; finite variances need N > q+6 and m > a >= 5."""
    return check_counts(data.N, data.q, data.m, prior.a, strictness)
