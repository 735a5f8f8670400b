"""Entropy-regularized Cauchy-Schwarz divergence clustering.

Soft memberships m_i on the probability simplex are parameterized as
squared components of unit vectors v_i (m_ik = v_ik^2).  The objective

    J(m) = U / V  -  psi * sum_ik m_ik log m_ik

is minimized by a Lagrange-multiplier fixed-point update on the v_i,
where U is the total between-cluster kernel mass and V the geometric
mean-style product of within-cluster kernel masses:

    U   = 1/2 sum_ij (1 - m_i . m_j) G_ij
    V   = sqrt(prod_k v_k),   v_k = sum_ij m_ik m_jk G_ij

with G the Gaussian Gram matrix of the features.  The kernel width is
annealed linearly from a Silverman estimate down to a quarter of it,
and the gradient may be estimated on a row subsample for speed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateClusterError,
    DegenerateDataError,
    DimensionError,
    DomainError,
)

#: floor used inside log(m) when a membership component reaches zero
LOG_EPS = 1e-12


@dataclass
class FeatureMatrix:
    """n samples by d features, finite values only."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise DimensionError("feature matrix must be 2-D")
        if not np.all(np.isfinite(self.values)):
            raise DomainError("feature matrix contains non-finite values")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass
class MembershipMatrix:
    """Soft cluster memberships m = v**2 with unit-norm rows of v."""

    m: np.ndarray
    v: np.ndarray

    @property
    def n(self) -> int:
        return self.m.shape[0]

    @property
    def K(self) -> int:
        return self.m.shape[1]

    def labels(self) -> np.ndarray:
        """Hard assignment by row-wise argmax (ties -> lowest index)."""
        return np.argmax(self.m, axis=1)


@dataclass
class ClusterParams:
    K: int
    psi: float = 1e-3
    iterations: int = 30
    sample_fraction: float = 0.33
    alpha: float = 0.05
    gamma: float = 1e-3
    seed: int = 0
    sigma_override: float | None = None  # fixed kernel width, disables annealing
    max_restarts: int = 3

    def __post_init__(self):
        if self.K < 1:
            raise DomainError("K must be >= 1")
        if self.iterations < 1:
            raise DomainError("iterations must be >= 1")
        if not 0.0 < self.sample_fraction <= 1.0:
            raise DomainError("sample_fraction must be in (0, 1]")


def gaussian_kernel(x: np.ndarray, y: np.ndarray, sigma: float) -> float:
    """exp(-||x - y||^2 / (2 sigma^2)); symmetric, in (0, 1]."""
    if sigma <= 0:
        raise DomainError(f"sigma must be > 0, got {sigma}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise DimensionError("kernel arguments must have equal dimension")
    d2 = float(np.dot(x - y, x - y))
    return math.exp(-d2 / (2.0 * sigma * sigma))


def gram_matrix(X: np.ndarray, sigma: float, Y: np.ndarray | None = None) -> np.ndarray:
    """Gaussian Gram matrix between rows of X and rows of Y (default X)."""
    if sigma <= 0:
        raise DomainError(f"sigma must be > 0, got {sigma}")
    X = np.asarray(X, dtype=float)
    Y = X if Y is None else np.asarray(Y, dtype=float)
    d2 = (
        np.sum(X * X, axis=1)[:, None]
        + np.sum(Y * Y, axis=1)[None, :]
        - 2.0 * (X @ Y.T)
    )
    np.maximum(d2, 0.0, out=d2)
    a = d2
    a *= -1.0 / (2.0 * sigma * sigma)
    # flush negligible weights (< ~2e-35) to exact zero: they are far below
    # solver precision, and letting them through breeds subnormals inside
    # downstream factorizations, which run orders of magnitude slower
    dead = a < -80.0
    np.maximum(a, -80.0, out=a)
    out = np.exp(a)
    out[dead] = 0.0
    return out


def _mass_terms(M: np.ndarray, G: np.ndarray):
    """U, V, per-cluster masses v_k and the kernel-weighted memberships G @ M."""
    S = G @ M
    vk = np.einsum("ik,ik->k", M, S)
    if np.any(vk <= 0.0) or not np.all(np.isfinite(vk)):
        raise DegenerateClusterError(
            "a cluster has zero total kernel mass (V = 0)"
        )
    U = 0.5 * float(np.sum((1.0 - M @ M.T) * G))
    V = math.sqrt(float(np.prod(vk)))
    if V <= 0.0 or not math.isfinite(V):
        raise DegenerateClusterError("within-cluster mass product underflowed")
    return U, V, vk, S


def jcs_estimate(M: MembershipMatrix | np.ndarray, G: np.ndarray, psi: float) -> float:
    """Regularized Cauchy-Schwarz clustering objective U/V - psi*sum m log m.

    0*log(0) is taken as 0.  Raises DegenerateClusterError when a cluster
    carries zero kernel mass.
    """
    m = M.m if isinstance(M, MembershipMatrix) else np.asarray(M, dtype=float)
    U, V, _, _ = _mass_terms(m, G)
    ent = float(np.sum(np.where(m > 0.0, m * np.log(np.where(m > 0.0, m, 1.0)), 0.0)))
    return U / V - psi * ent


def jcs_gradient(M: MembershipMatrix | np.ndarray, G: np.ndarray, psi: float) -> np.ndarray:
    """Gradient of :func:`jcs_estimate` with respect to the memberships.

    Row i, component k:

        -(G M)_ik * (1/V + U / (V v_k))  -  psi * (1 + log m_ik)

    with log floored at LOG_EPS for zero memberships.
    """
    m = M.m if isinstance(M, MembershipMatrix) else np.asarray(M, dtype=float)
    U, V, vk, S = _mass_terms(m, G)
    quot = -S * (1.0 / V + (U / V) / vk[None, :])
    return quot - psi * (1.0 + np.log(np.maximum(m, LOG_EPS)))


def update_membership_row(v_i: np.ndarray, grad_v_i: np.ndarray) -> np.ndarray:
    """One Lagrange-multiplier step: v+ = -grad / ||grad||, unit norm.

    grad_v_i is the objective gradient with respect to v_i (already
    chain-ruled through m = v**2).  A zero gradient is a fixed point and
    returns v_i unchanged.
    """
    norm = float(np.linalg.norm(grad_v_i))
    if norm == 0.0:
        return np.array(v_i, dtype=float, copy=True)
    lam = 0.5 * norm
    return -grad_v_i / (2.0 * lam)


def silverman_sigma(X: FeatureMatrix | np.ndarray) -> float:
    """Silverman's rule of thumb: sigma_X * (4 / (N (2d+1)))^(1/(d+4)).

    sigma_X^2 is the mean of the per-dimension sample variances.
    """
    x = X.values if isinstance(X, FeatureMatrix) else np.asarray(X, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, d = x.shape
    if n < 2:
        raise DomainError(f"need at least 2 samples, got {n}")
    sigma_x = math.sqrt(float(np.mean(np.var(x, axis=0, ddof=1))))
    if sigma_x == 0.0:
        raise DegenerateDataError("data has zero variance in every dimension")
    return sigma_x * (4.0 / (n * (2.0 * d + 1.0))) ** (1.0 / (d + 4.0))


def anneal_schedule(sigma_sil: float, n_iters: int) -> np.ndarray:
    """Linear kernel-width descent from sigma_sil to sigma_sil / 4.

    The rate is 3*sigma_sil / (4 * steps) with steps = n_iters - 1 so
    that both endpoints are hit exactly; a single iteration keeps the
    Silverman width.
    """
    if n_iters < 1:
        raise DomainError("n_iters must be >= 1")
    if n_iters == 1:
        return np.array([sigma_sil])
    return np.linspace(sigma_sil, sigma_sil / 4.0, n_iters)


def cluster(
    X: FeatureMatrix | np.ndarray,
    params: ClusterParams,
    snapshot_hook=None,
) -> MembershipMatrix:
    """Optimize soft memberships for K clusters over the feature rows.

    Each iteration recomputes the Gram at the annealed kernel width,
    estimates the objective gradient on a random row subsample (scaled
    to approximate the full-data sums), and renormalizes the sampled
    rows through the Lagrange update.  Rows outside the subsample keep
    their memberships.  Deterministic given params.seed.

    snapshot_hook, when given, is called with (iteration, MembershipMatrix)
    after every iteration; used for convergence traces.

    A degenerate collapse (a cluster losing all kernel mass) triggers a
    restart with a fresh seed, at most params.max_restarts times.
    """
    x = X.values if isinstance(X, FeatureMatrix) else np.asarray(X, dtype=float)
    n = x.shape[0]
    if params.K > n:
        raise DomainError(f"K={params.K} exceeds sample count {n}")

    sigma0 = params.sigma_override
    if sigma0 is None:
        sigma0 = silverman_sigma(x)
    schedule = anneal_schedule(sigma0, params.iterations)

    last_err: Exception | None = None
    for attempt in range(params.max_restarts + 1):
        rng = np.random.default_rng(params.seed + attempt)
        try:
            return _cluster_once(x, params, schedule, rng, snapshot_hook)
        except DegenerateClusterError as exc:
            last_err = exc
    raise DegenerateClusterError(
        f"clustering collapsed after {params.max_restarts} restarts: {last_err}"
    )


def _cluster_once(x, params, schedule, rng, snapshot_hook) -> MembershipMatrix:
    n = x.shape[0]
    K = params.K
    v = np.abs(rng.normal(0.0, params.gamma, size=(n, K)))
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    zero = norms[:, 0] == 0.0
    if np.any(zero):  # measure-zero draw, fall back to uniform rows
        v[zero] = 1.0
        norms[zero] = math.sqrt(K)
    v /= norms
    m = v * v

    n_sample = max(1, int(round(params.sample_fraction * n)))
    scale = n / n_sample

    for it, sigma in enumerate(schedule):
        idx = rng.choice(n, size=n_sample, replace=False)
        G_sub = gram_matrix(x[idx], sigma, x)

        S_sub = G_sub @ m                       # (n_sample, K)
        m_sub = m[idx]
        vk = scale * np.einsum("ik,ik->k", m_sub, S_sub)
        if np.any(vk <= 0.0) or not np.all(np.isfinite(vk)):
            raise DegenerateClusterError("cluster kernel mass vanished")
        U = scale * 0.5 * (G_sub.sum() - np.einsum("ik,ik->", m_sub, S_sub))
        V = math.sqrt(float(np.prod(vk)))
        if V <= 0.0 or not math.isfinite(V):
            raise DegenerateClusterError("within-cluster mass product underflowed")

        grad_m = -(scale * S_sub) * (1.0 / V + (U / V) / vk[None, :])
        grad_m -= params.psi * (1.0 + np.log(np.maximum(m_sub, LOG_EPS)))
        # positive reparameterization scaling: offset by alpha so rows with
        # zero components keep a usable update direction
        grad_v = 2.0 * np.sqrt(m_sub + params.alpha) * grad_m

        gnorm = np.linalg.norm(grad_v, axis=1, keepdims=True)
        live = gnorm[:, 0] > 0.0
        v_new = v[idx].copy()
        v_new[live] = -grad_v[live] / gnorm[live]
        v[idx] = v_new
        m[idx] = v_new * v_new

        if snapshot_hook is not None:
            snapshot_hook(it, MembershipMatrix(m=m.copy(), v=v.copy()))

    return MembershipMatrix(m=m, v=v)
