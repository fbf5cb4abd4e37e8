"""Benchmark data: the borehole function, Latin hypercube designs, GP draws.

All randomness comes from numpy's PCG64 generator seeded explicitly, so a
seed reproduces the same numbers on any platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack

from .errors import ParameterError, SingularityError
from .gp import Hyperparameters, correlation_matrix

# (name, low, high) in the order of the unit-cube coordinates
BOREHOLE_RANGES = (
    ("rw", 0.05, 0.15),
    ("r", 100.0, 50000.0),
    ("Tu", 63070.0, 115600.0),
    ("Hu", 990.0, 1110.0),
    ("Tl", 63.1, 116.0),
    ("Hl", 700.0, 820.0),
    ("L", 1120.0, 1680.0),
    ("Kw", 9855.0, 12045.0),
)


def rng_from_seed(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def borehole(x):
    """Water flow through a borehole, inputs scaled to the unit cube.

    Accepts a single 8-vector (returns a float) or an ``n x 8`` matrix.
    """
    a = np.asarray(x, dtype=np.float64)
    single = a.ndim == 1
    a = np.atleast_2d(a)
    if a.shape[1] != 8:
        raise ParameterError(f"borehole takes 8 inputs, got {a.shape[1]}")
    if np.any(a < 0.0) or np.any(a > 1.0) or not np.all(np.isfinite(a)):
        raise ParameterError("borehole inputs must lie in [0, 1]")
    lo = np.array([r[1] for r in BOREHOLE_RANGES])
    hi = np.array([r[2] for r in BOREHOLE_RANGES])
    rw, r, Tu, Hu, Tl, Hl, L, Kw = (lo + a * (hi - lo)).T
    lr = np.log(r / rw)
    f = 2.0 * math.pi * Tu * (Hu - Hl) / (lr * (1.0 + 2.0 * L * Tu / (lr * rw**2 * Kw) + Tu / Tl))
    return float(f[0]) if single else f


@dataclass(frozen=True)
class LhsSpec:
    n: int
    p: int
    seed: int = 0
    ranges: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise ParameterError(f"need n >= 1 and p >= 1, got n={self.n}, p={self.p}")
        if self.ranges is not None:
            if len(self.ranges) != self.p:
                raise ParameterError(f"{len(self.ranges)} ranges for p={self.p}")
            for lo, hi in self.ranges:
                if not lo < hi:
                    raise ParameterError(f"range ({lo}, {hi}) is empty")


def lhs_sample(spec: LhsSpec) -> np.ndarray:
    """Random Latin hypercube: one point per stratum in every coordinate."""
    rng = rng_from_seed(spec.seed)
    U = np.empty((spec.n, spec.p))
    for i in range(spec.p):
        U[:, i] = (rng.permutation(spec.n) + rng.random(spec.n)) / spec.n
    if spec.ranges is not None:
        lo = np.array([r[0] for r in spec.ranges])
        hi = np.array([r[1] for r in spec.ranges])
        U = lo + U * (hi - lo)
    return U


def gp_sample_path(inputs, hyper: Hyperparameters, seed) -> np.ndarray:
    """Draw ``Y ~ N(0, K)`` at the given inputs."""
    X = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    K = correlation_matrix(X, hyper)
    chol, info = lapack.dpotrf(K, lower=1, clean=1)
    if info > 0:
        raise SingularityError(int(info), K.shape[0])
    z = rng_from_seed(seed).standard_normal(X.shape[0])
    return chol @ z
