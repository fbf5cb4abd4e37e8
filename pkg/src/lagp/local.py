"""Greedy per-location sub-design selection and the multi-stage local fit."""

from __future__ import annotations

import time
import weakref
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .alc import CandidateSet, alc_scores_batch, alc_scores_serial
from .errors import LagpError, NearSingularExtension, ParameterError, PartialDesignError
from .gp import (
    DEFAULT_ETA,
    Design,
    Hyperparameters,
    LocalState,
    Prediction,
    build_gp,
    default_theta_bounds,
    mle_theta,
    predict,
    update_gp,
)

MAX_LOCAL_SIZE = 1024
BRUTE_FORCE_NN_LIMIT = 20000

_trees: "weakref.WeakKeyDictionary[Design, cKDTree]" = weakref.WeakKeyDictionary()


@dataclass(frozen=True)
class LocalDesignParams:
    """Settings for one local fit.

    ``n_close`` and ``theta0`` may be left as ``None``: the candidate pool then
    defaults to ``min(N - n, 100 n)`` nearest neighbours, and the starting
    lengthscale to the mean squared distance from the reference point to
    that pool.  ``theta_bounds`` likewise defaults per location (see
    :func:`lagp.gp.default_theta_bounds`).
    """

    n0: int = 6
    n: int = 50
    n_close: int | None = None
    theta0: float | None = None
    eta: float = DEFAULT_ETA
    stages: int = 2
    method: str = "alc"
    theta_bounds: tuple[float, float] | None = None

    def __post_init__(self):
        if self.method not in ("alc", "nn"):
            raise ParameterError(f"method must be 'alc' or 'nn', got {self.method!r}")
        if not 2 <= self.n0 < self.n:
            raise ParameterError(f"need 2 <= n0 < n, got n0={self.n0}, n={self.n}")
        if self.n >= MAX_LOCAL_SIZE:
            raise ParameterError(f"n must be below {MAX_LOCAL_SIZE}, got {self.n}")
        if self.n_close is not None and self.n_close < self.n:
            raise ParameterError(f"need n <= n_close, got n={self.n}, n_close={self.n_close}")
        if self.stages < 1:
            raise ParameterError(f"stages must be >= 1, got {self.stages}")
        if self.theta0 is not None and not self.theta0 > 0:
            raise ParameterError(f"theta0 must be positive, got {self.theta0}")
        if not self.eta >= 0:
            raise ParameterError(f"eta must be non-negative, got {self.eta}")
        if self.theta_bounds is not None:
            lo, hi = self.theta_bounds
            if not 0 < lo < hi:
                raise ParameterError(f"theta_bounds must satisfy 0 < lo < hi, got {self.theta_bounds}")

    def pool_size(self, N: int) -> int:
        m = self.n_close if self.n_close is not None else min(N - self.n, 100 * self.n)
        if m < self.n:
            raise ParameterError(f"design of {N} rows is too small for n={self.n} (pool {m})")
        if m > N:
            raise ParameterError(f"n_close={m} exceeds the design size N={N}")
        return m


@dataclass(frozen=True, eq=False)
class LocalFit:
    state: LocalState
    theta_hat: float
    x_ref: np.ndarray
    stage_count: int
    prediction: Prediction
    mle_failed: bool = False
    warnings: tuple[str, ...] = ()
    timing: dict = field(default_factory=dict)


def _tree_for(design: Design) -> cKDTree:
    tree = _trees.get(design)
    if tree is None:
        tree = cKDTree(design.inputs)
        _trees[design] = tree
    return tree


def nearest_neighbors(design: Design, x_ref, m: int, *, use_tree: bool | None = None) -> np.ndarray:
    """Exact m nearest rows, ordered by distance then by row index."""
    N = design.N
    if not 1 <= m <= N:
        raise ParameterError(f"need 1 <= m <= N={N}, got m={m}")
    x = np.asarray(x_ref, dtype=np.float64).ravel()
    if x.size != design.p:
        raise ParameterError(f"reference point has {x.size} coordinates, design has p={design.p}")
    if use_tree is None:
        use_tree = N > BRUTE_FORCE_NN_LIMIT
    if use_tree and m < N:
        tree = _tree_for(design)
        dist, _ = tree.query(x, k=m)
        radius = float(np.max(dist)) * (1.0 + 1e-9) + 1e-300
        idx = np.asarray(tree.query_ball_point(x, radius), dtype=np.intp)
    else:
        idx = np.arange(N)
    diff = design.inputs[idx] - x
    d2 = np.einsum("ij,ij->i", diff, diff)
    if idx.size > m:
        cut = np.partition(d2, m - 1)[m - 1]
        keep = d2 <= cut
        idx, d2 = idx[keep], d2[keep]
    order = np.lexsort((idx, d2))
    return idx[order[:m]]


def _default_theta0(design: Design, x: np.ndarray, pool: np.ndarray) -> float:
    diff = design.inputs[pool] - x
    return float(np.mean(np.einsum("ij,ij->i", diff, diff)))


def local_design(
    design: Design,
    x_ref,
    params: LocalDesignParams,
    theta_x: float,
    *,
    evaluator: str = "batch",
    pool: np.ndarray | None = None,
    backend: str | None = None,
) -> LocalState:
    """Select an n-point local design for prediction at ``x_ref``.

    ``method='alc'`` starts from the ``n0`` nearest neighbours and adds, one
    at a time, the pool member with the largest reduction in predictive
    variance at ``x_ref``; ``method='nn'`` takes the ``n`` nearest neighbours.
    """
    x = np.asarray(x_ref, dtype=np.float64).ravel()
    hyper = Hyperparameters(theta_x, params.eta)
    if pool is None:
        pool = nearest_neighbors(design, x, params.pool_size(design.N))
    if params.method == "nn":
        chosen = pool[: params.n]
        return build_gp(design.subset(chosen), hyper, chosen_indices=chosen)

    if evaluator == "batch":
        score = alc_scores_batch
    elif evaluator == "serial":
        score = alc_scores_serial
    else:
        raise ParameterError(f"evaluator must be 'batch' or 'serial', got {evaluator!r}")

    init = pool[: params.n0]
    state = build_gp(design.subset(init), hyper, chosen_indices=init)
    remaining = np.array(pool[params.n0:], dtype=np.intp)
    X, Y = design.inputs, design.responses
    while state.j < params.n:
        if remaining.size == 0:
            raise PartialDesignError(state.j, params.n, "candidate pool exhausted")
        cands = CandidateSet(X[remaining], remaining)
        scores = score(state, x, cands, False, check=False, backend=backend)
        if scores.best < 0:
            raise PartialDesignError(state.j, params.n, "all remaining candidates near singular")
        gi = int(remaining[scores.best])
        try:
            state = update_gp(state, X[gi], Y[gi], gi)
        except NearSingularExtension:
            pass  # rounding put it just past the tolerance; drop it
        remaining = np.delete(remaining, scores.best)
    return state


def local_fit(
    design: Design,
    x_ref,
    params: LocalDesignParams,
    *,
    evaluator: str = "batch",
    backend: str | None = None,
) -> LocalFit:
    """Multi-stage local GP: design search and lengthscale MLE, then predict.

    Each stage selects a local design with the current lengthscale and then
    re-estimates the lengthscale on it.  If the MLE fails the incoming
    lengthscale is kept and ``mle_failed`` is set.
    """
    x = np.asarray(x_ref, dtype=np.float64).ravel()
    pool = nearest_neighbors(design, x, params.pool_size(design.N))
    theta_x = params.theta0 if params.theta0 is not None else _default_theta0(design, x, pool)
    failed = False
    notes = []
    t_design = t_mle = 0.0
    for stage in range(params.stages):
        t0 = time.perf_counter()
        state = local_design(design, x, params, theta_x, evaluator=evaluator, pool=pool, backend=backend)
        t1 = time.perf_counter()
        sub = design.subset(state.chosen_indices)
        try:
            lo, hi = params.theta_bounds or default_theta_bounds(sub.inputs)
            start = min(max(theta_x, lo), hi)
            theta_x = mle_theta(sub, start, (lo, hi), params.eta).theta_hat
        except LagpError as exc:
            failed = True
            notes.append(f"stage {stage + 1}: MLE failed, keeping theta={theta_x!r}: {exc}")
        t_mle += time.perf_counter() - t1
        t_design += t1 - t0
    final = build_gp(sub, Hyperparameters(theta_x, params.eta), chosen_indices=state.chosen_indices)
    return LocalFit(
        state=final,
        theta_hat=theta_x,
        x_ref=x,
        stage_count=params.stages,
        prediction=predict(final, x),
        mle_failed=failed,
        warnings=tuple(notes),
        timing={"design": t_design, "mle": t_mle},
    )
