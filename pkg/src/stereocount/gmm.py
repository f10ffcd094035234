"""1-D Gaussian mixture over pixel intensities, fitted by EM.

The stain/background decomposition drives thresholding: the foreground is
the component with the lowest mean (dark stain on a light background) and a
pixel is foreground when its posterior probability meets the threshold.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .validation import check_gray

VARIANCE_FLOOR = 1e-6


class IntensityMixture(BaseEstimator):
    """Gaussian mixture over scalar intensities in [0, 1].

    Fitted attributes
    -----------------
    weights_, means_, variances_ : (K,) arrays
    log_likelihood_path_ : per-iteration total log-likelihood (nondecreasing)
    n_iter_ : EM iterations actually run
    """

    def __init__(self, n_components=2, max_iter=200, tol=1e-7, seed=0,
                 variance_floor=VARIANCE_FLOOR):
        self.n_components = n_components
        self.max_iter = max_iter
        self.tol = tol
        self.seed = seed
        self.variance_floor = variance_floor

    def fit(self, x: np.ndarray) -> "IntensityMixture":
        x = np.asarray(x, dtype=np.float64).ravel()
        k = int(self.n_components)
        if x.size == 0:
            raise ValueError("empty intensity sample")
        if k < 1:
            raise ValueError(f"n_components must be >= 1, got {k}")
        n_distinct = np.unique(x).size
        if k > n_distinct:
            raise ValueError(
                f"n_components={k} exceeds {n_distinct} distinct intensity values"
            )

        if k == 1:
            self.weights_ = np.array([1.0])
            self.means_ = np.array([x.mean()])
            self.variances_ = np.array([max(x.var(), self.variance_floor)])
            self.log_likelihood_path_ = [float(_log_likelihood(
                x, self.weights_, self.means_, self.variances_))]
            self.n_iter_ = 0
            return self

        means = _seed_means(x, k, np.random.default_rng(self.seed))
        weights = np.full(k, 1.0 / k)
        variances = np.full(k, max(x.var(), self.variance_floor))

        path: list[float] = []
        prev_ll = -np.inf
        n_iter = 0
        for n_iter in range(1, int(self.max_iter) + 1):
            log_resp, ll = _e_step(x, weights, means, variances)
            path.append(float(ll))
            resp = np.exp(log_resp)
            total = resp.sum(axis=0)
            weights = total / x.size
            means = (resp * x[:, None]).sum(axis=0) / total
            variances = (resp * (x[:, None] - means) ** 2).sum(axis=0) / total
            variances = np.maximum(variances, self.variance_floor)
            if ll - prev_ll < self.tol and np.isfinite(prev_ll):
                break
            prev_ll = ll

        self.weights_ = weights
        self.means_ = means
        self.variances_ = variances
        self.log_likelihood_path_ = path
        self.n_iter_ = n_iter
        return self

    def posterior(self, x: np.ndarray) -> np.ndarray:
        """Per-sample component posteriors, shape (..., K)."""
        self._check_fitted()
        x = np.asarray(x, dtype=np.float64)
        log_p = _log_weighted_pdf(x[..., None], self.weights_, self.means_,
                                  self.variances_)
        log_norm = _logsumexp(log_p, axis=-1, keepdims=True)
        return np.exp(log_p - log_norm)

    def score(self, x: np.ndarray) -> float:
        """Total log-likelihood of the samples under the fitted mixture."""
        self._check_fitted()
        x = np.asarray(x, dtype=np.float64).ravel()
        return float(_log_likelihood(x, self.weights_, self.means_, self.variances_))

    def foreground_component(self, dark_foreground: bool = True) -> int:
        self._check_fitted()
        return int(np.argmin(self.means_) if dark_foreground
                   else np.argmax(self.means_))

    def _check_fitted(self) -> None:
        if not hasattr(self, "means_"):
            raise ValueError("mixture is not fitted")


def fit_gmm(intensities, n_components=2, max_iter=200, tol=1e-7,
            seed=0) -> IntensityMixture:
    return IntensityMixture(n_components=n_components, max_iter=max_iter,
                            tol=tol, seed=seed).fit(intensities)


def gmm_threshold(model: IntensityMixture, img: np.ndarray, t: float = 0.5,
                  dark_foreground: bool = True) -> np.ndarray:
    """Binary mask of pixels whose foreground posterior is >= t."""
    img = check_gray(img)
    if not (0.0 < t < 1.0):
        raise ValueError(f"threshold must be in (0, 1), got {t}")
    fg = model.foreground_component(dark_foreground)
    post = model.posterior(img)[..., fg]
    return (post >= t).astype(np.uint8)


def _seed_means(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    # k-means++-style: first mean uniform, later means weighted by squared
    # distance to the nearest mean already chosen.
    means = [x[rng.integers(x.size)]]
    for _ in range(1, k):
        d2 = np.min((x[:, None] - np.asarray(means)) ** 2, axis=1)
        total = d2.sum()
        if total <= 0:
            # only possible when remaining values coincide with chosen means
            means.append(x[rng.integers(x.size)])
            continue
        means.append(x[rng.choice(x.size, p=d2 / total)])
    return np.asarray(means, dtype=np.float64)


def _log_weighted_pdf(x, weights, means, variances):
    return (
        np.log(weights)
        - 0.5 * np.log(2.0 * np.pi * variances)
        - (x - means) ** 2 / (2.0 * variances)
    )


def _logsumexp(a, axis, keepdims=False):
    peak = np.max(a, axis=axis, keepdims=True)
    out = peak + np.log(np.sum(np.exp(a - peak), axis=axis, keepdims=True))
    return out if keepdims else np.squeeze(out, axis=axis)


def _e_step(x, weights, means, variances):
    log_p = _log_weighted_pdf(x[:, None], weights, means, variances)
    log_norm = _logsumexp(log_p, axis=1, keepdims=True)
    return log_p - log_norm, log_norm.sum()


def _log_likelihood(x, weights, means, variances):
    log_p = _log_weighted_pdf(x[:, None], weights, means, variances)
    return _logsumexp(log_p, axis=1).sum()
