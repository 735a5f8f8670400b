"""Kernel ridge regression in dual form with constant-feature augmentation.

Training rows are standardized column-wise (targets too), a constant
feature 1 is appended, and the dual weights solve the symmetric
positive-definite system (mu I + K) w = y on the Gaussian Gram matrix.
Predictions are kernel-weighted sums of the dual weights, mapped back
to the original target scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionError, DomainError, SolverError
from .itclust import gram_matrix, silverman_sigma


@dataclass
class KernelModel:
    """A fitted dual-form kernel regressor."""

    x_train: np.ndarray        # standardized + augmented training inputs
    weights: np.ndarray        # dual weights, one per training row
    sigma: float               # Gaussian kernel width
    mu: float                  # ridge constant
    feat_mean: np.ndarray
    feat_scale: np.ndarray
    y_mean: float
    y_scale: float

    @property
    def n_train(self) -> int:
        return self.x_train.shape[0]


def _column_standardizer(X: np.ndarray):
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0.0] = 1.0  # constant columns contribute 0 after centering
    return mean, scale


def _augment(X: np.ndarray) -> np.ndarray:
    return np.hstack([X, np.ones((X.shape[0], 1))])


def fit(X: np.ndarray, y: np.ndarray, mu: float, sigma: float | None = None,
        sigma_scale: float = 1.0) -> KernelModel:
    """Fit dual weights w = (mu I + K)^-1 y on standardized, augmented inputs.

    sigma defaults to the Silverman width of the standardized training
    features times sigma_scale.  mu must be >= 0; at mu = 0 a
    rank-deficient Gram (e.g. duplicate rows) raises SolverError advising
    mu > 0.
    """
    return fit_mu_family(X, y, [mu], sigma, sigma_scale)[0]


def fit_mu_family(X: np.ndarray, y: np.ndarray, mus, sigma: float | None = None,
                  sigma_scale: float = 1.0) -> list[KernelModel]:
    """Fit one model per ridge constant, sharing a single Gram matrix.

    Equivalent to calling :func:`fit` once per mu; used when scanning a
    regularization grid (cross-validation, shrinkage checks).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise DimensionError(
            f"{X.shape[0]} feature rows vs {y.shape[0]} targets"
        )
    if X.shape[0] < 1:
        raise DomainError("need at least one training row")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DomainError("training data contains non-finite values")
    if any(mu < 0 for mu in mus):
        raise DomainError("mu must be >= 0")

    feat_mean, feat_scale = _column_standardizer(X)
    Xs = _augment((X - feat_mean) / feat_scale)
    y_mean = float(y.mean())
    y_scale = float(y.std())
    if y_scale == 0.0:
        y_scale = 1.0
    ys = (y - y_mean) / y_scale

    if sigma is None:
        if X.shape[0] >= 2:
            try:
                sigma = sigma_scale * silverman_sigma(Xs[:, :-1])
            except Exception:
                sigma = sigma_scale
        else:
            sigma = sigma_scale

    K = gram_matrix(Xs, sigma)
    models = []
    for mu in mus:
        Kmu = K.copy()
        Kmu[np.diag_indices_from(Kmu)] += mu
        try:
            cho = scipy.linalg.cho_factor(Kmu, lower=True, check_finite=False)
            w = scipy.linalg.cho_solve(cho, ys, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise SolverError(
                f"singular Gram system (mu={mu}); duplicate training rows need mu > 0"
            ) from exc
        models.append(KernelModel(
            x_train=Xs,
            weights=w,
            sigma=float(sigma),
            mu=float(mu),
            feat_mean=feat_mean,
            feat_scale=feat_scale,
            y_mean=y_mean,
            y_scale=y_scale,
        ))
    return models


def predict(model: KernelModel, x: np.ndarray) -> float:
    """Kernel-weighted prediction for a single input vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != model.feat_mean.shape[0]:
        raise DimensionError(
            f"expected a {model.feat_mean.shape[0]}-vector, got shape {x.shape}"
        )
    return float(predict_batch(model, x[None, :])[0])


def predict_batch(model: KernelModel, X: np.ndarray) -> np.ndarray:
    """Predictions for each row of X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.feat_mean.shape[0]:
        raise DimensionError(
            f"expected {model.feat_mean.shape[0]} features, got {X.shape[1]}"
        )
    Xs = _augment((X - model.feat_mean) / model.feat_scale)
    Kx = gram_matrix(Xs, model.sigma, model.x_train)
    return Kx @ model.weights * model.y_scale + model.y_mean


def predict_family(models: list[KernelModel], X: np.ndarray) -> np.ndarray:
    """Column-stacked predictions for models sharing training inputs.

    All models must come from one :func:`fit_mu_family` call (same rows,
    kernel width, and standardization), so the cross-kernel is reused.
    """
    first = models[0]
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != first.feat_mean.shape[0]:
        raise DimensionError(
            f"expected {first.feat_mean.shape[0]} features, got {X.shape[1]}"
        )
    Xs = _augment((X - first.feat_mean) / first.feat_scale)
    Kx = gram_matrix(Xs, first.sigma, first.x_train)
    W = np.column_stack([m.weights for m in models])
    return Kx @ W * first.y_scale + first.y_mean
