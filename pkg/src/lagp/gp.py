"""Exact small-N Gaussian process machinery.

Isotropic Gaussian correlation ``K(x, x') = exp(-||x - x'||^2 / theta)`` with a
nugget ``eta`` on the diagonal, a zero-mean process, and the scale-marginalised
Student-t predictive equations.  Local states hold an explicit inverse of the
correlation matrix so that they can be grown one row at a time in O(j^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack

from .errors import (
    DimensionError,
    NearSingularExtension,
    NumericalError,
    ParameterError,
    SingularityError,
)

DEFAULT_ETA = 1e-8
EXTENSION_TOL = 1e-12


@dataclass(frozen=True)
class Hyperparameters:
    theta: float
    eta: float = DEFAULT_ETA

    def __post_init__(self):
        if not (self.theta > 0 and math.isfinite(self.theta)):
            raise ParameterError(f"theta must be positive and finite, got {self.theta!r}")
        if not (self.eta >= 0 and math.isfinite(self.eta)):
            raise ParameterError(f"eta must be non-negative and finite, got {self.eta!r}")


@dataclass(frozen=True, eq=False)
class Design:
    """Training runs: an ``N x p`` input matrix and ``N`` responses."""

    inputs: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        X = np.ascontiguousarray(self.inputs, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        y = np.ascontiguousarray(self.responses, dtype=np.float64).ravel()
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DimensionError(f"inputs must be a non-empty N x p matrix, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise DimensionError(f"{X.shape[0]} input rows but {y.shape[0]} responses")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ParameterError("design contains non-finite values")
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "responses", y)

    @property
    def N(self) -> int:
        return self.inputs.shape[0]

    @property
    def p(self) -> int:
        return self.inputs.shape[1]

    def subset(self, indices) -> "Design":
        idx = np.asarray(indices, dtype=np.intp)
        return Design(self.inputs[idx], self.responses[idx])


@dataclass(frozen=True, eq=False)
class LocalState:
    """A j-point GP: sub-design, explicit inverse correlation, and summaries.

    ``ki_y`` caches ``k_inv @ sub_responses``; ``psi`` is ``y' K^-1 y``.
    """

    sub_design: np.ndarray
    sub_responses: np.ndarray
    k_inv: np.ndarray
    psi: float
    log_det_k: float
    hyper: Hyperparameters
    chosen_indices: tuple[int, ...]
    ki_y: np.ndarray = field(repr=False, default=None)

    @property
    def j(self) -> int:
        return self.sub_design.shape[0]

    @property
    def p(self) -> int:
        return self.sub_design.shape[1]


@dataclass(frozen=True)
class Prediction:
    mean: float
    scale2: float
    dof: int
    variance: float  # nan when dof <= 2

    @property
    def variance_defined(self) -> bool:
        return self.dof > 2


def _check_theta(theta: float) -> None:
    if not theta > 0:
        raise ParameterError(f"theta must be positive, got {theta!r}")


def sq_distances(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances between the rows of A and B.

    Differences are formed explicitly (no ``|a|^2 + |b|^2 - 2ab`` expansion) so
    that coincident points give exactly zero.
    """
    diff = A[:, None, :] - B[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def correlation(x, x2, hyper: Hyperparameters) -> float:
    """Correlation between two points, without the nugget."""
    _check_theta(hyper.theta)
    a = np.asarray(x, dtype=np.float64).ravel()
    b = np.asarray(x2, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimensionError(f"points have lengths {a.size} and {b.size}")
    d = a - b
    return math.exp(-float(d @ d) / hyper.theta)


def cross_correlation(X: np.ndarray, X2: np.ndarray, theta: float) -> np.ndarray:
    _check_theta(theta)
    return np.exp(-sq_distances(X, X2) / theta)


def correlation_matrix(X: np.ndarray, hyper: Hyperparameters) -> np.ndarray:
    K = cross_correlation(X, X, hyper.theta)
    K[np.diag_indices_from(K)] = 1.0 + hyper.eta
    return K


def _factorize(K: np.ndarray) -> tuple[np.ndarray, float]:
    """Cholesky-based explicit inverse and log-determinant of an SPD matrix.

    This is the only O(j^3) path in the module.
    """
    n = K.shape[0]
    chol, info = lapack.dpotrf(K, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        raise SingularityError(int(info), n)
    if info < 0:  # pragma: no cover - argument error inside LAPACK
        raise NumericalError(f"dpotrf rejected argument {-info}")
    log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
    inv, info = lapack.dpotri(chol, lower=1)
    if info != 0:
        raise SingularityError(int(info), n)
    inv = np.tril(inv)
    inv = inv + np.tril(inv, -1).T
    return np.ascontiguousarray(inv), log_det


def _state_from_inverse(X, y, k_inv, log_det, hyper, chosen) -> LocalState:
    ki_y = k_inv @ y
    psi = float(y @ ki_y)
    return LocalState(
        sub_design=X,
        sub_responses=y,
        k_inv=k_inv,
        psi=psi,
        log_det_k=log_det,
        hyper=hyper,
        chosen_indices=tuple(int(i) for i in chosen),
        ki_y=ki_y,
    )


def build_gp(design: Design, hyper: Hyperparameters, chosen_indices=None) -> LocalState:
    """Fit a GP to every row of ``design`` by direct factorization.

    ``chosen_indices`` defaults to ``0..N-1``; local-design code passes the
    global row numbers of a sub-design instead.
    """
    K = correlation_matrix(design.inputs, hyper)
    k_inv, log_det = _factorize(K)
    if chosen_indices is None:
        chosen_indices = range(design.N)
    chosen = tuple(int(i) for i in chosen_indices)
    if len(chosen) != design.N:
        raise DimensionError(f"{len(chosen)} indices for {design.N} design rows")
    if len(set(chosen)) != len(chosen):
        raise ParameterError("chosen_indices must be distinct")
    return _state_from_inverse(design.inputs, design.responses, k_inv, log_det, hyper, chosen)


def predict(state: LocalState, x) -> Prediction:
    """Student-t predictive summary at a single location."""
    xv = np.asarray(x, dtype=np.float64).ravel()
    if xv.size != state.p:
        raise DimensionError(f"point has {xv.size} coordinates, state has p={state.p}")
    k = cross_correlation(xv[None, :], state.sub_design, state.hyper.theta)[0]
    mean = float(k @ state.ki_y)
    quad = float(k @ (state.k_inv @ k))
    n = state.j
    scale2 = state.psi * (1.0 + state.hyper.eta - quad) / n
    scale2 = max(scale2, 0.0)
    variance = scale2 * n / (n - 2) if n > 2 else math.nan
    return Prediction(mean=mean, scale2=scale2, dof=n, variance=variance)


def log_marginal_likelihood(state: LocalState) -> float:
    n = state.j
    if not state.psi > 0:
        raise NumericalError(f"psi must be positive, got {state.psi!r}", state.hyper.theta)
    return (
        math.lgamma(n / 2.0)
        - 0.5 * n * math.log(2.0 * math.pi)
        - 0.5 * state.log_det_k
        - 0.5 * n * math.log(state.psi / 2.0)
    )


def loglik_derivatives(
    D2: np.ndarray, y: np.ndarray, theta: float, eta: float
) -> tuple[float, float, float]:
    """Log-likelihood and its first two derivatives in theta.

    ``D2`` is the matrix of pairwise squared distances of the design.  With
    ``A = K^-1 dK`` and ``a = K^-1 y``::

        l'  = -tr(A)/2 + (n/2) a'dK a / psi
        l'' = (tr(A A) - tr(K^-1 d2K))/2
              + (n/2) [(a'd2K a - 2 (dK a)'K^-1 (dK a)) / psi + (a'dK a / psi)^2]
    """
    n = y.shape[0]
    C = np.exp(-D2 / theta)
    K = C.copy()
    K[np.diag_indices_from(K)] = 1.0 + eta
    k_inv, log_det = _factorize(K)
    a = k_inv @ y
    psi = float(y @ a)
    if not (psi > 0 and math.isfinite(psi)):
        raise NumericalError("non-positive psi in likelihood", theta)
    ll = (
        math.lgamma(n / 2.0)
        - 0.5 * n * math.log(2.0 * math.pi)
        - 0.5 * log_det
        - 0.5 * n * math.log(psi / 2.0)
    )
    # diagonal of D2 is zero, so the nugget never enters the derivatives
    dK = C * D2 / theta**2
    d2K = dK * (D2 / theta**2 - 2.0 / theta)
    A = k_inv @ dK
    dKa = dK @ a
    q1 = float(a @ dKa)
    d1 = -0.5 * np.trace(A) + 0.5 * n * q1 / psi
    d2 = (
        0.5 * float(np.sum(A * A.T))
        - 0.5 * float(np.sum(k_inv * d2K))
        + 0.5 * n * ((float(a @ d2K @ a) - 2.0 * float(dKa @ k_inv @ dKa)) / psi + (q1 / psi) ** 2)
    )
    if not (math.isfinite(ll) and math.isfinite(d1) and math.isfinite(d2)):
        raise NumericalError("non-finite likelihood", theta)
    return ll, float(d1), float(d2)


def default_theta_bounds(X: np.ndarray) -> tuple[float, float]:
    """``(1e-3 * dbar, 10 * dbar)`` with dbar the mean squared NN distance in X."""
    if X.shape[0] < 2:
        raise ParameterError("need at least two rows to derive lengthscale bounds")
    D2 = sq_distances(X, X)
    np.fill_diagonal(D2, np.inf)
    nn = D2.min(axis=1)
    dbar = float(np.mean(nn))
    if not dbar > 0:
        raise ParameterError("design has coincident rows only; cannot derive bounds")
    return 1e-3 * dbar, 10.0 * dbar


@dataclass(frozen=True)
class MLEResult:
    theta_hat: float
    loglik: float
    iterations: int
    at_boundary: bool = False

    def __iter__(self):
        # unpacks as (theta_hat, final_loglik, iterations)
        return iter((self.theta_hat, self.loglik, self.iterations))


def mle_theta(
    design: Design,
    theta_init: float,
    bounds: tuple[float, float] | None = None,
    eta: float = DEFAULT_ETA,
    gtol: float = 1e-7,
    max_iter: int = 100,
) -> MLEResult:
    """Maximise the marginal likelihood over the lengthscale.

    Safeguarded Newton iteration in ``log(theta)``: the root of the gradient is
    kept bracketed, and any Newton step that leaves the bracket (or is taken
    where the curvature is non-negative) is replaced by bisection.  Values of
    theta at which the correlation matrix cannot be factorized act as walls of
    the bracket.  The best point evaluated is returned, so the result is never
    worse than ``theta_init``.
    """
    if bounds is None:
        bounds = default_theta_bounds(design.inputs)
    lo, hi = float(bounds[0]), float(bounds[1])
    if not (0 < lo <= theta_init <= hi):
        raise ParameterError(f"need 0 < lo <= theta_init <= hi, got {lo}, {theta_init}, {hi}")
    Hyperparameters(theta_init, eta)
    D2 = sq_distances(design.inputs, design.inputs)
    y = design.responses

    def evaluate(theta):
        return loglik_derivatives(D2, y, theta, eta)

    def theta_of(phi):
        return min(max(math.exp(phi), lo), hi)

    try:
        ll0, d1, d2 = evaluate(theta_init)
    except SingularityError as exc:
        raise NumericalError(f"likelihood undefined at starting point: {exc}", theta_init) from exc

    best_theta, best_ll = theta_init, ll0
    a, b = math.log(lo), math.log(hi)
    probed = {a: False, b: False}
    phi = math.log(theta_init)
    it = 0
    xtol = 1e-10
    at_boundary = False
    while it < max_iter:
        it += 1
        if abs(d1) <= gtol * (1.0 + abs(ll0)):
            break
        theta = theta_of(phi)
        g = theta * d1
        h = theta * theta * d2 + theta * d1
        if g > 0:
            a = phi
        else:
            b = phi
        if b - a < xtol:
            break
        nxt = phi - g / h if h < 0 else None
        if nxt is None or not (a < nxt < b):
            edge = b if g > 0 else a
            if edge in probed and not probed[edge]:
                # try the bound itself before bisecting towards it
                probed[edge] = True
                nxt = edge
            else:
                nxt = 0.5 * (a + b)
        try:
            ll_new, d1_new, d2_new = evaluate(theta_of(nxt))
        except SingularityError:
            # factorization failure acts as a wall on that side
            if nxt > phi:
                b = nxt
            else:
                a = nxt
            continue
        phi, ll0, d1, d2 = nxt, ll_new, d1_new, d2_new
        if ll0 > best_ll:
            best_theta, best_ll = theta_of(phi), ll0
        if phi in probed and (d1 >= 0) == (phi == math.log(hi)) and ll0 >= best_ll:
            # gradient still points out of the box at a bound
            at_boundary = True
            break
    if not math.isfinite(best_ll):
        raise NumericalError("non-finite likelihood", best_theta)
    return MLEResult(best_theta, best_ll, it, at_boundary)


def update_gp(state: LocalState, x_new, y_new: float, global_index: int) -> LocalState:
    """Grow a j-point state to j+1 points via the partitioned inverse.

    With ``u = K^-1 k(x_new)`` and Schur complement ``minv = 1 + eta - k'u``,
    ``g = -u / minv`` and the new inverse is
    ``[[K^-1 + g g' minv, g], [g', 1/minv]]``; ``log|K|`` grows by
    ``log(minv)``.  ``u`` gets one step of iterative refinement against the
    local correlation matrix, which stops rounding error in the stored
    inverse from compounding across updates when ``minv`` is small.
    """
    if global_index in state.chosen_indices:
        raise ParameterError(f"design row {global_index} is already in the local design")
    xv = np.asarray(x_new, dtype=np.float64).ravel()
    if xv.size != state.p:
        raise DimensionError(f"point has {xv.size} coordinates, state has p={state.p}")
    hyper = state.hyper
    k = cross_correlation(xv[None, :], state.sub_design, hyper.theta)[0]
    u = state.k_inv @ k
    u += state.k_inv @ (k - correlation_matrix(state.sub_design, hyper) @ u)
    minv = 1.0 + hyper.eta - float(k @ u)
    if not minv > EXTENSION_TOL:
        raise NearSingularExtension(minv, global_index)
    g = -u / minv
    j = state.j
    k_inv = np.empty((j + 1, j + 1))
    k_inv[:j, :j] = state.k_inv + np.outer(g, g) * minv
    k_inv[:j, j] = g
    k_inv[j, :j] = g
    k_inv[j, j] = 1.0 / minv
    X = np.vstack([state.sub_design, xv])
    y = np.append(state.sub_responses, float(y_new))
    return _state_from_inverse(
        X, y, k_inv, state.log_det_k + math.log(minv), hyper, state.chosen_indices + (int(global_index),)
    )
