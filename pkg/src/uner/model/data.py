"""Grouped unit-level data and small-area targets."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Hashable, NamedTuple, Sequence

import numpy as np

from ..errors import DataError

RANK_RTOL = 1e-10


def _frozen(a, dtype=float):
    out = np.array(a, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class AreaData:
    """Observations of one area: response ``y`` (n,) and covariates ``X`` (n, q)."""

    area_id: Hashable
    y: np.ndarray
    X: np.ndarray
    ybar: float = field(init=False)
    xbar: np.ndarray = field(init=False)

    def __post_init__(self):
        y = _frozen(self.y)
        X = _frozen(self.X)
        if X.ndim == 1:
            X = _frozen(X[:, None])
        if y.ndim != 1 or y.shape[0] < 1:
            raise DataError(f"area {self.area_id!r}: y must be a non-empty vector")
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise DataError(
                f"area {self.area_id!r}: X has shape {X.shape}, expected ({y.shape[0]}, q)"
            )
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise DataError(f"area {self.area_id!r}: non-finite values")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "ybar", float(np.mean(y)))
        object.__setattr__(self, "xbar", _frozen(X.mean(axis=0)))

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def q(self) -> int:
        return self.X.shape[1]


class StackedArrays(NamedTuple):
    """Flattened views and per-area sufficient statistics used by the kernels."""

    y: np.ndarray  # (N,)
    X: np.ndarray  # (N, q)
    idx: np.ndarray  # (N,) area index of each unit
    ni: np.ndarray  # (m,) float
    ybar: np.ndarray  # (m,)
    xbar: np.ndarray  # (m, q)
    S: np.ndarray  # (m, q) per-area column sums of X
    ysum: np.ndarray  # (m,)
    XtX: np.ndarray  # (q, q)
    Xty: np.ndarray  # (q,)


@dataclass(frozen=True, eq=False)
class UnitDataset:
    """Ordered collection of areas sharing one covariate dimension.

    Construction checks that the stacked design matrix has full column rank,
    using an SVD with tolerance ``1e-10 * s_max``.
    """

    areas: tuple

    def __post_init__(self):
        areas = tuple(self.areas)
        if not areas:
            raise DataError("dataset needs at least one area")
        q = areas[0].q
        seen = set()
        for a in areas:
            if a.q != q:
                raise DataError(f"area {a.area_id!r} has {a.q} covariates, expected {q}")
            if a.area_id in seen:
                raise DataError(f"duplicate area id {a.area_id!r}")
            seen.add(a.area_id)
        object.__setattr__(self, "areas", areas)
        rank = self.rank
        if rank < q:
            raise DataError(f"stacked X has rank {rank} < q = {q}; beta is not identifiable")

    @classmethod
    def from_arrays(cls, y, X, area_ids: Sequence[Hashable]) -> "UnitDataset":
        """Group unit rows by ``area_ids``, in order of first appearance."""
        y = np.asarray(y, dtype=float)
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        ids = list(area_ids)
        if not (len(ids) == y.shape[0] == X.shape[0]):
            raise DataError("y, X and area_ids must have the same number of rows")
        order: dict = {}
        for j, a in enumerate(ids):
            order.setdefault(a, []).append(j)
        return cls(tuple(AreaData(a, y[rows], X[rows]) for a, rows in order.items()))

    @property
    def m(self) -> int:
        return len(self.areas)

    @property
    def q(self) -> int:
        return self.areas[0].q

    @property
    def N(self) -> int:
        return sum(a.n for a in self.areas)

    @property
    def area_ids(self) -> list:
        return [a.area_id for a in self.areas]

    @cached_property
    def rank(self) -> int:
        s = np.linalg.svd(self.arrays.X, compute_uv=False)
        if s.size == 0 or s[0] == 0.0:
            return 0
        return int(np.sum(s > RANK_RTOL * s[0]))

    @cached_property
    def arrays(self) -> StackedArrays:
        y = np.concatenate([a.y for a in self.areas])
        X = np.vstack([a.X for a in self.areas])
        ni = np.array([a.n for a in self.areas], dtype=float)
        idx = np.repeat(np.arange(self.m, dtype=np.int64), ni.astype(np.int64))
        ybar = np.array([a.ybar for a in self.areas])
        xbar = np.vstack([a.xbar for a in self.areas])
        S = np.vstack([a.X.sum(axis=0) for a in self.areas])
        ysum = np.array([a.y.sum() for a in self.areas])
        out = StackedArrays(y, X, idx, ni, ybar, xbar, S, ysum, X.T @ X, X.T @ y)
        for arr in out:
            arr.flags.writeable = False
        return out

    @cached_property
    def fingerprint(self) -> str:
        """SHA-256 over area ids (as text), responses and covariates (exact bytes)."""
        h = hashlib.sha256()
        for a in self.areas:
            h.update(str(a.area_id).encode() + b"\0")
            h.update(np.ascontiguousarray(a.y, dtype="<f8").tobytes())
            h.update(np.ascontiguousarray(a.X, dtype="<f8").tobytes())
        return h.hexdigest()

    def ols(self) -> np.ndarray:
        """Pooled ordinary least squares fit of y on X."""
        arr = self.arrays
        return np.linalg.lstsq(arr.X, arr.y, rcond=None)[0]


@dataclass(frozen=True, eq=False)
class TargetSpec:
    """Per-area vectors c_i defining mu_i = c_i' beta + v_i."""

    c: np.ndarray  # (m, q)

    def __post_init__(self):
        c = _frozen(self.c)
        if c.ndim != 2:
            raise DataError("target matrix must be (m, q)")
        object.__setattr__(self, "c", c)

    @classmethod
    def area_means(cls, data: UnitDataset) -> "TargetSpec":
        return cls(data.arrays.xbar)

    def check(self, data: UnitDataset) -> None:
        if self.c.shape != (data.m, data.q):
            raise DataError(f"target has shape {self.c.shape}, expected {(data.m, data.q)}")
