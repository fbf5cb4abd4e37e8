"""Global emulation: independent local fits over many prediction locations."""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, LagpError, ParameterError
from .gp import Design
from .local import LocalDesignParams, local_fit

# (n, N') for N = 1000 * 2^k, k = 0..10, as printed in the published schedule
FIDELITY_TABLE = (
    (40, 100), (42, 150), (44, 225), (46, 338), (48, 507), (50, 760),
    (52, 1140), (54, 1710), (56, 2565), (58, 3848), (60, 5772),
)


def _round_half_away(v: float) -> int:
    return int(math.floor(abs(v) + 0.5)) * (1 if v >= 0 else -1)


def fidelity_schedule(N: int) -> tuple[int, int]:
    """Local design size n and candidate pool size N' for a design of N rows.

    Doubling N adds 2 to n and scales N' by 1.5, anchored at N=1000.  Sizes
    between powers of two use the schedule of the largest tabulated size not
    exceeding N.
    """
    if N < 1000:
        raise ParameterError(f"fidelity schedule starts at N=1000, got {N}")
    k = 0
    while 1000 * 2 ** (k + 1) <= N:
        k += 1
    if k < len(FIDELITY_TABLE):
        return FIDELITY_TABLE[k]
    n, close = FIDELITY_TABLE[-1]
    for _ in range(k - len(FIDELITY_TABLE) + 1):
        n, close = n + 2, _round_half_away(close * 1.5)
    return n, close


@dataclass(frozen=True)
class LocationError:
    """Why one location produced no prediction."""

    kind: str
    message: str

    def __str__(self):
        return f"{self.kind}: {self.message}"


@dataclass(frozen=True, eq=False)
class EmulationJob:
    design: Design
    pred_locations: np.ndarray
    params: LocalDesignParams
    workers: int = 1
    backend_mix: float = 0.8
    chunk: tuple[int, int] | None = None
    backend: str | None = None

    def __post_init__(self):
        P = np.ascontiguousarray(self.pred_locations, dtype=np.float64)
        if P.ndim == 1:
            P = P[:, None] if self.design.p == 1 else P[None, :]
        if P.ndim != 2 or P.shape[1] != self.design.p:
            raise DimensionError(f"prediction locations have shape {P.shape}, design has p={self.design.p}")
        object.__setattr__(self, "pred_locations", P)
        if self.workers < 1:
            raise ParameterError(f"workers must be >= 1, got {self.workers}")
        if not 0.0 <= self.backend_mix <= 1.0:
            raise ParameterError(f"backend_mix must lie in [0, 1], got {self.backend_mix}")
        if self.chunk is not None:
            off, length = self.chunk
            M = P.shape[0]
            if off < 0 or length < 0 or off + length > M or (length > 0 and off >= M):
                raise ParameterError(f"chunk {self.chunk} is outside [0, {M})")

    def window(self) -> tuple[int, int]:
        if self.chunk is None:
            return 0, self.pred_locations.shape[0]
        off, length = self.chunk
        return off, off + length


@dataclass(frozen=True, eq=False)
class EmulationResult:
    """Per-location outputs in input order.

    A failed location has ``predictions[i] is None``, ``errors[i]`` set, a NaN
    lengthscale and an empty index tuple.
    """

    predictions: list
    errors: list
    per_location_theta: np.ndarray
    chosen_indices: list
    mle_failed: np.ndarray
    timing: dict = field(default_factory=dict)
    worker_stats: dict = field(default_factory=dict)
    offset: int = 0

    def __len__(self):
        return len(self.predictions)

    @property
    def n_failed(self) -> int:
        return sum(e is not None for e in self.errors)

    def _column(self, name):
        return np.array([np.nan if p is None else getattr(p, name) for p in self.predictions])

    @property
    def mean(self):
        return self._column("mean")

    @property
    def scale2(self):
        return self._column("scale2")

    @property
    def dof(self):
        return self._column("dof")

    @property
    def variance(self):
        return self._column("variance")


def uses_batch(index: int, mix: float) -> bool:
    """Whether location ``index`` is scored with the batch evaluator.

    Spreads the batch share evenly: out of any run of consecutive indices,
    ``mix`` of them (up to rounding) go to the batch evaluator.
    """
    return math.floor((index + 1) * mix) > math.floor(index * mix)


# worker-process context, set once per process by _init_worker
_ctx: tuple = ()


def _init_worker(*ctx):
    global _ctx
    _ctx = ctx


def _run_range(ctx, start: int, stop: int) -> list:
    design, P, params, mix, backend = ctx
    pid = os.getpid()
    out = []
    for i in range(start, stop):
        evaluator = "batch" if uses_batch(i, mix) else "serial"
        try:
            fit = local_fit(design, P[i], params, evaluator=evaluator, backend=backend)
        except (LagpError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            out.append((i, pid, None, LocationError(type(exc).__name__, str(exc))))
            continue
        # only what the caller needs crosses the process boundary
        info = (fit.prediction, fit.theta_hat, fit.state.chosen_indices, fit.mle_failed, fit.timing)
        out.append((i, pid, info, None))
    return out


def _run_in_worker(start: int, stop: int) -> list:
    return _run_range(_ctx, start, stop)


def _batches(start: int, stop: int, workers: int) -> list[tuple[int, int]]:
    # small batches keep the queue balanced when per-location cost varies
    n = stop - start
    size = max(1, min(64, n // (8 * workers) or 1))
    return [(s, min(s + size, stop)) for s in range(start, stop, size)]


def emulate(job: EmulationJob) -> EmulationResult:
    """Fit and predict at every location of the job's window.

    Each location is an independent, deterministic computation, so results do
    not depend on ``workers`` or on completion order.  Errors at one location
    are recorded in its slot and never stop the others.
    """
    start, stop = job.window()
    t0 = time.perf_counter()
    init = (job.design, job.pred_locations, job.params, job.backend_mix, job.backend)
    records: list = []
    if job.workers == 1 or stop - start <= 1:
        records = _run_range(init, start, stop)
    else:
        with ProcessPoolExecutor(max_workers=job.workers, initializer=_init_worker, initargs=init) as pool:
            futures = [pool.submit(_run_in_worker, a, b) for a, b in _batches(start, stop, job.workers)]
            for f in futures:
                records.extend(f.result())
    records.sort(key=lambda r: r[0])

    m = stop - start
    preds: list = [None] * m
    errors: list = [None] * m
    thetas = np.full(m, np.nan)
    chosen: list = [()] * m
    flags = np.zeros(m, dtype=bool)
    stats: dict = {}
    t_design = t_mle = 0.0
    for i, pid, info, err in records:
        slot = i - start
        stats[pid] = stats.get(pid, 0) + 1
        if info is None:
            errors[slot] = err
            continue
        pred, theta, idx, failed, timing = info
        preds[slot] = pred
        thetas[slot] = theta
        chosen[slot] = tuple(int(v) for v in idx)
        flags[slot] = failed
        t_design += timing.get("design", 0.0)
        t_mle += timing.get("mle", 0.0)
    timing = {"total": time.perf_counter() - t0, "design": t_design, "mle": t_mle}
    return EmulationResult(
        predictions=preds,
        errors=errors,
        per_location_theta=thetas,
        chosen_indices=chosen,
        mle_failed=flags,
        timing=timing,
        worker_stats=stats,
        offset=start,
    )
