"""Decay functions F on a finite metric graph and their certificates.

Three families are supported:

* ``PowerLaw(nu, eps)``:        F(r) = (1 + r)^-(nu + eps)
* ``Weighted(a, theta, base)``: F(r) = exp(-a r^theta) * base(r)
* ``LogWeighted(a, base)``:     F(r) = exp(-a r / log(1 + r)^2) * base(r), F(0) = base(0)

On a finite graph the uniform l1 norm and the convolution constant are plain
finite maxima, so both are computed exactly rather than bounded.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import InvalidFFunctionError
from .lattice import MetricGraph


@dataclass(frozen=True)
class PowerLaw:
    nu: float = 1.0
    eps: float = 1.0

    def __post_init__(self):
        if self.nu + self.eps <= 0:
            raise InvalidFFunctionError("power-law exponent nu + eps must be positive")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return (1.0 + r) ** -(self.nu + self.eps)


@dataclass(frozen=True)
class Weighted:
    a: float
    theta: float = 1.0
    base: "FFunction" = PowerLaw()

    def __post_init__(self):
        if self.a <= 0:
            raise InvalidFFunctionError("weight exponent a must be positive")
        if not 0 < self.theta <= 1:
            raise InvalidFFunctionError("theta must lie in (0, 1]")

    def g(self, r):
        return np.asarray(r, dtype=float) ** self.theta

    def __call__(self, r):
        return np.exp(-self.a * self.g(r)) * self.base(r)


@dataclass(frozen=True)
class LogWeighted:
    a: float
    base: "FFunction" = PowerLaw()

    def __post_init__(self):
        if self.a <= 0:
            raise InvalidFFunctionError("weight exponent a must be positive")

    @staticmethod
    def g(r):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        pos = r > 0
        out[pos] = r[pos] / np.log1p(r[pos]) ** 2
        return out

    def __call__(self, r):
        return np.exp(-self.a * self.g(r)) * self.base(r)


FFunction = Union[PowerLaw, Weighted, LogWeighted]


@dataclass(frozen=True)
class FCertificate:
    norm1: float
    cF: float
    nonincreasing: bool = True


def evaluate(F: FFunction, r) -> np.ndarray | float:
    """F(r) for a scalar or array of non-negative distances."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise InvalidFFunctionError("F is only defined for r >= 0")
    out = F(r_arr)
    return float(out) if out.ndim == 0 else out


def distance_table(F: FFunction, g: MetricGraph) -> np.ndarray:
    """Matrix ``F(d(x, y))`` over all site pairs."""
    return F(g.dist.astype(float))


def norm_1(F: FFunction, g: MetricGraph) -> float:
    """sup_y sum_x F(d(x, y)) over the graph."""
    return float(distance_table(F, g).sum(axis=0).max())


def convolution_constant(F: FFunction, g: MetricGraph) -> float:
    """Least C with sum_z F(d(x,z)) F(d(z,y)) <= C F(d(x,y)) for all x, y."""
    T = distance_table(F, g)
    return float(((T @ T) / T).max())


def is_nonincreasing(F: FFunction, g: MetricGraph) -> bool:
    vals = F(np.arange(g.diameter + 1, dtype=float))
    return bool(np.all(np.diff(vals) <= 0))


def certify(F: FFunction, g: MetricGraph) -> FCertificate:
    vals = F(np.arange(g.diameter + 1, dtype=float))
    if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
        raise InvalidFFunctionError(f"{F!r} is not strictly positive and finite on the graph")
    norm1 = norm_1(F, g)
    cF = convolution_constant(F, g)
    if not (np.isfinite(norm1) and np.isfinite(cF) and norm1 > 0 and cF > 0):
        raise InvalidFFunctionError("certificate constants are not finite and positive")
    return FCertificate(norm1=norm1, cF=cF, nonincreasing=is_nonincreasing(F, g))


def is_subadditive(g_func, rs) -> bool:
    """Check g(r + s) <= g(r) + g(s) on the grid ``rs x rs``."""
    rs = np.asarray(rs, dtype=float)
    lhs = g_func(rs[:, None] + rs[None, :])
    rhs = g_func(rs)[:, None] + g_func(rs)[None, :]
    return bool(np.all(lhs <= rhs * (1 + 1e-15)))


def from_config(cfg: dict) -> FFunction:
    """``{"family": "power"|"weighted"|"logweighted", "nu", "eps", "a", "theta"}``."""
    family = cfg.get("family", "power")
    base_cfg = cfg.get("base")
    if base_cfg is not None:
        base = from_config(base_cfg)
    else:
        base = PowerLaw(float(cfg.get("nu", 1.0)), float(cfg.get("eps", 1.0)))
    if family == "power":
        return base
    if family == "weighted":
        return Weighted(float(cfg.get("a", 1.0)), float(cfg.get("theta", 1.0)), base)
    if family == "logweighted":
        return LogWeighted(float(cfg.get("a", 1.0)), base)
    raise InvalidFFunctionError(f"unknown F-function family {family!r}")
