"""Reduction-in-variance (ALC) scoring of candidate design points.

For a local state with inverse correlation ``K^-1``, reference location ``x``
and candidate ``x_b``, the score is the drop in the unscaled predictive
variance at ``x`` obtained by adding ``x_b`` to the local design::

    v_j(x) - v_{j+1}(x) = minv (k'g)^2 + 2 (k'g) c + c^2 / minv

with ``k = k_j(x)``, ``c = K(x_b, x)``, ``minv = 1 + eta - k_b' K^-1 k_b``
and ``g = -K^-1 k_b / minv``.

Two evaluators are provided.  :func:`alc_scores_serial` assembles that
expression directly, candidate by candidate.  :func:`alc_scores_batch`
follows the staged data-parallel kernel: candidates are independent work
items, each reduction over the local design is split across ``lane_width``
lanes and finished with a logarithmic tree, and the two dot products of the
final stage share one fused reduction pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import DimensionError, ExhaustedCandidates, ParameterError
from .gp import EXTENSION_TOL, LocalState, cross_correlation

DEFAULT_CHUNK = 60000


@dataclass(frozen=True, eq=False)
class CandidateSet:
    rows: np.ndarray
    global_indices: np.ndarray

    def __post_init__(self):
        rows = np.ascontiguousarray(self.rows, dtype=np.float64)
        if rows.ndim == 1:
            rows = rows[None, :]
        idx = np.asarray(self.global_indices, dtype=np.intp).ravel()
        if rows.shape[0] < 1:
            raise ParameterError("candidate set is empty")
        if rows.shape[0] != idx.shape[0]:
            raise DimensionError(f"{rows.shape[0]} candidate rows but {idx.shape[0]} indices")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "global_indices", idx)

    def __len__(self):
        return self.rows.shape[0]

    @classmethod
    def from_design(cls, inputs: np.ndarray, indices) -> "CandidateSet":
        idx = np.asarray(indices, dtype=np.intp)
        return cls(inputs[idx], idx)


@dataclass(frozen=True, eq=False)
class AlcScores:
    delta: np.ndarray
    best: int  # -1 when every candidate is excluded
    normalized: bool
    global_indices: np.ndarray | None = None
    scratch_per_item: int | None = None


def _argmax(delta: np.ndarray) -> int:
    if delta.size == 0 or not np.any(np.isfinite(delta)):
        return -1
    # np.argmax returns the first maximum: lowest index wins ties
    return int(np.argmax(delta))


def _prepare(state: LocalState, x_ref, cands: CandidateSet, normalize: bool, check: bool):
    x = np.ascontiguousarray(x_ref, dtype=np.float64).ravel()
    if x.size != state.p:
        raise DimensionError(f"reference point has {x.size} coordinates, state has p={state.p}")
    if cands.rows.shape[1] != state.p:
        raise DimensionError(f"candidates have {cands.rows.shape[1]} columns, state has p={state.p}")
    if normalize and state.j <= 2:
        raise ParameterError(f"normalization needs j > 2, have j={state.j}")
    if check:
        chosen = np.fromiter(state.chosen_indices, dtype=np.intp, count=state.j)
        if np.isin(cands.global_indices, chosen).any():
            raise ParameterError("candidate set overlaps the local design")
        if np.unique(cands.global_indices).size != len(cands):
            raise ParameterError("candidate indices must be distinct")
    h = cross_correlation(x[None, :], state.sub_design, state.hyper.theta)[0]
    scale = state.psi / (state.j - 2) if normalize else 1.0
    return x, h, scale


def alc_scores_serial(
    state: LocalState,
    x_ref,
    cands: CandidateSet,
    normalize: bool = False,
    *,
    backend: str | None = None,
    threads: int = 1,
    check: bool = True,
) -> AlcScores:
    """Score every candidate by direct evaluation of the variance reduction.

    Candidates whose Schur complement ``minv`` is at or below 1e-12 get a
    ``-inf`` score and are never selected.
    """
    x, h, scale = _prepare(state, x_ref, cands, normalize, check)
    k = _backend.get(backend)
    delta = k.alc_serial(
        state.sub_design, state.k_inv, h, cands.rows, x,
        state.hyper.theta, state.hyper.eta, scale, EXTENSION_TOL, threads,
    )
    return AlcScores(delta, _argmax(delta), bool(normalize), cands.global_indices)


def alc_scores_batch(
    state: LocalState,
    x_ref,
    cands: CandidateSet,
    normalize: bool = False,
    lane_width: int | None = None,
    *,
    chunk: int = DEFAULT_CHUNK,
    backend: str | None = None,
    threads: int = 1,
    check: bool = True,
) -> AlcScores:
    """Score candidates with the staged, data-parallel evaluator.

    Args:
        lane_width: lanes cooperating on each reduction over the local design;
            defaults to j (one lane per element).  ``1`` gives plain
            sequential sums.
        chunk: candidates handed to the kernel per launch; larger sets are
            split and the results concatenated.
        threads: size of the kernel's worker pool.
    """
    if lane_width is None:
        lane_width = state.j
    if lane_width < 1:
        raise ParameterError(f"lane_width must be >= 1, got {lane_width}")
    if chunk < 1:
        raise ParameterError(f"chunk must be >= 1, got {chunk}")
    x, h, scale = _prepare(state, x_ref, cands, normalize, check)
    k = _backend.get(backend)
    parts = []
    for c0 in range(0, len(cands), chunk):
        parts.append(
            k.alc_batch(
                state.sub_design, state.k_inv, h, cands.rows[c0:c0 + chunk], x,
                state.hyper.theta, state.hyper.eta, int(lane_width), scale, EXTENSION_TOL, threads,
            )
        )
    delta = parts[0] if len(parts) == 1 else np.concatenate(parts)
    return AlcScores(
        delta, _argmax(delta), bool(normalize), cands.global_indices,
        scratch_per_item=k.batch_scratch_doubles(state.j, state.p),
    )


def fused_dual_reduce(v1, v2, *, backend: str | None = None) -> tuple[float, float]:
    """Sum two equal-length vectors in one logarithmic reduction pass.

    The first pass folds the upper half (rounded up to a power of two) of both
    arrays onto the lower half; the remaining power-of-two tree is split so
    that half of the workers finish each array.
    """
    a = np.asarray(v1, dtype=np.float64).ravel()
    b = np.asarray(v2, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimensionError(f"vectors have lengths {a.size} and {b.size}")
    if a.size < 1:
        raise ParameterError("vectors must be non-empty")
    return _backend.get(backend).fused_dual_reduce(a, b)


def select_next(scores: AlcScores) -> int:
    """Global design index of the best candidate."""
    if scores.best < 0:
        raise ExhaustedCandidates("every candidate was excluded as near singular")
    if scores.global_indices is None:
        return scores.best
    return int(scores.global_indices[scores.best])
