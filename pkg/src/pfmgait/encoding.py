"""Descriptor encoders: diagonal-covariance GMM (EM), Fisher vectors, PCA and
the bag-of-words baseline."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.cluster import KMeans
from sklearn.utils.validation import check_is_fitted

from .validation import as_float_2d, check_feature_dim

LOG_2PI = np.log(2.0 * np.pi)


class DiagonalGmm(BaseEstimator):
    """Gaussian mixture with diagonal covariances, fitted by EM.

    Parameters
    ----------
    n_components : int
        Number of mixture components.
    max_iter : int
        Maximum EM iterations.
    tol : float
        Stop when the average log-likelihood gain per point drops below this.
    variance_floor_frac : float
        Per-dimension variance floor as a fraction of the data variance.
    random_state : int or None
        Seed for the k-means initialization.

    Attributes
    ----------
    weights_ : (n_components,) mixture weights, positive, summing to 1.
    means_ : (n_components, n_features)
    variances_ : (n_components, n_features) diagonal covariances.
    log_likelihoods_ : per-iteration average log-likelihood (nondecreasing).
    """

    def __init__(self, n_components=100, max_iter=100, tol=1e-6,
                 variance_floor_frac=1e-4, random_state=None):
        self.n_components = n_components
        self.max_iter = max_iter
        self.tol = tol
        self.variance_floor_frac = variance_floor_frac
        self.random_state = random_state

    def fit(self, X, y=None):
        X = as_float_2d(X)
        n_samples, n_features = X.shape
        if n_samples < 10 * self.n_components:
            raise ValueError(
                f"need at least {10 * self.n_components} samples to fit "
                f"{self.n_components} components, got {n_samples}"
            )
        data_var = X.var(axis=0)
        self._floor = np.maximum(self.variance_floor_frac * data_var, 1e-12)

        km = KMeans(n_clusters=self.n_components, n_init=1,
                    random_state=self.random_state).fit(X)
        self.means_ = km.cluster_centers_.astype(np.float64).copy()
        counts = np.bincount(km.labels_, minlength=self.n_components)
        self.weights_ = np.maximum(counts / n_samples, 1e-10)
        self.weights_ /= self.weights_.sum()
        self.variances_ = np.empty((self.n_components, n_features))
        for k in range(self.n_components):
            members = X[km.labels_ == k]
            self.variances_[k] = members.var(axis=0) if len(members) > 1 else data_var
        self.variances_ = np.maximum(self.variances_, self._floor)

        self.log_likelihoods_ = []
        prev_ll = -np.inf
        for iteration in range(self.max_iter):
            log_resp, point_ll = self._estimate_log_resp(X)
            avg_ll = point_ll.mean()
            self.log_likelihoods_.append(avg_ll)
            if iteration > 0 and avg_ll - prev_ll < self.tol:
                break
            prev_ll = avg_ll
            self._m_step(X, log_resp, point_ll)
        self.n_iter_ = len(self.log_likelihoods_)
        return self

    def _estimate_log_resp(self, X):
        log_prob = self._log_prob(X)
        point_ll = logsumexp(log_prob, axis=1)
        return log_prob - point_ll[:, None], point_ll

    def _log_prob(self, X):
        precision = 1.0 / self.variances_
        log_det = np.sum(np.log(self.variances_), axis=1)
        quad = (
            (X ** 2) @ precision.T
            - 2.0 * X @ (self.means_ * precision).T
            + np.sum(self.means_ ** 2 * precision, axis=1)
        )
        return -0.5 * (X.shape[1] * LOG_2PI + log_det + quad) + np.log(self.weights_)

    def _m_step(self, X, log_resp, point_ll):
        resp = np.exp(log_resp)
        nk = resp.sum(axis=0)
        weights = nk / X.shape[0]
        collapsed = weights < 1e-8
        safe_nk = np.maximum(nk, np.finfo(float).tiny)
        means = (resp.T @ X) / safe_nk[:, None]
        avg_sq = (resp.T @ (X ** 2)) / safe_nk[:, None]
        variances = np.maximum(avg_sq - means ** 2, self._floor)
        if np.any(collapsed):
            warnings.warn(
                f"{collapsed.sum()} mixture component(s) collapsed; re-seeding "
                "from the lowest-likelihood point"
            )
            worst = int(np.argmin(point_ll))
            for k in np.nonzero(collapsed)[0]:
                means[k] = X[worst]
                variances[k] = np.maximum(X.var(axis=0), self._floor)
                weights[k] = 1.0 / X.shape[0]
        self.weights_ = weights / weights.sum()
        self.means_ = means
        self.variances_ = variances

    def score_samples(self, X):
        """Per-point log density under the mixture."""
        check_is_fitted(self, "means_")
        X = as_float_2d(X)
        check_feature_dim(X, self.means_.shape[1])
        return logsumexp(self._log_prob(X), axis=1)

    def predict_proba(self, X):
        """Posterior responsibilities, rows summing to 1."""
        check_is_fitted(self, "means_")
        X = as_float_2d(X)
        check_feature_dim(X, self.means_.shape[1])
        log_resp, _ = self._estimate_log_resp(X)
        return np.exp(log_resp)

    def sample(self, n_samples, random_state=None):
        """Draw i.i.d. samples from the fitted mixture."""
        check_is_fitted(self, "means_")
        seed = self.random_state if random_state is None else random_state
        rng = np.random.default_rng(seed)
        components = rng.choice(self.n_components, size=n_samples, p=self.weights_)
        noise = rng.standard_normal((n_samples, self.means_.shape[1]))
        return self.means_[components] + noise * np.sqrt(self.variances_[components])


@dataclass
class FisherVector:
    """Gradient encoding of a descriptor set; dimension 2 * N * D."""

    values: np.ndarray
    normalized: bool
    empty: bool = False


def apply_ssr_l2(vector: np.ndarray) -> np.ndarray:
    """Signed square root then L2 normalization; zero maps to zero."""
    vector = np.asarray(vector, dtype=np.float64)
    if not np.isfinite(vector).all():
        raise ValueError("vector contains NaN or Inf")
    rooted = np.sign(vector) * np.sqrt(np.abs(vector))
    norm = np.linalg.norm(rooted)
    return rooted / norm if norm > 0 else rooted


def fisher_vector(descriptors, gmm: DiagonalGmm, normalize: bool = True) -> FisherVector:
    """Average likelihood gradient w.r.t. the GMM means and variances.

    The closed-form diagonal Fisher-information normalization is folded in
    analytically; with normalize=True the signed square root and L2
    normalization are applied afterwards. An empty descriptor set yields the
    zero vector, flagged.
    """
    check_is_fitted(gmm, "means_")
    n_components, n_features = gmm.means_.shape
    dim = 2 * n_components * n_features
    descriptors = np.asarray(descriptors, dtype=np.float64)
    if descriptors.size == 0:
        return FisherVector(values=np.zeros(dim), normalized=normalize, empty=True)
    X = as_float_2d(descriptors, "descriptors")
    check_feature_dim(X, n_features, "descriptors")

    T = X.shape[0]
    resp = gmm.predict_proba(X)
    s0 = resp.sum(axis=0)
    s1 = resp.T @ X
    s2 = resp.T @ (X ** 2)

    sqrt_w = np.sqrt(gmm.weights_)[:, None]
    sigma = np.sqrt(gmm.variances_)
    g_mean = (s1 - gmm.means_ * s0[:, None]) / (T * sqrt_w * sigma)
    g_var = (
        s2 - 2.0 * gmm.means_ * s1 + (gmm.means_ ** 2 - gmm.variances_) * s0[:, None]
    ) / (T * np.sqrt(2.0) * sqrt_w * gmm.variances_)

    values = np.concatenate([g_mean.ravel(), g_var.ravel()])
    if normalize:
        values = apply_ssr_l2(values)
    return FisherVector(values=values, normalized=normalize)


class FisherVectorEncoder(BaseEstimator, TransformerMixin):
    """fit() trains the GMM on stacked descriptors; transform() encodes one
    descriptor set (2-D array) or a sequence of sets into normalized FVs."""

    def __init__(self, n_components=100, max_iter=100, tol=1e-6, random_state=None):
        self.n_components = n_components
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state

    def fit(self, X, y=None):
        self.gmm_ = DiagonalGmm(
            n_components=self.n_components,
            max_iter=self.max_iter,
            tol=self.tol,
            random_state=self.random_state,
        ).fit(X)
        return self

    def transform(self, X):
        check_is_fitted(self, "gmm_")
        if isinstance(X, np.ndarray) and X.ndim == 2:
            X = [X]
        return np.stack([fisher_vector(x, self.gmm_).values for x in X])


class Pca(BaseEstimator, TransformerMixin):
    """Projection onto the top principal directions after mean centering.

    eigenvalues_ holds the full descending spectrum of the (1/n) data
    covariance, so the discarded-eigenvalue sum equals the average squared
    reconstruction error exactly.
    """

    def __init__(self, n_components):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = as_float_2d(X)
        n_samples, n_features = X.shape
        k = self.n_components
        if not 1 <= k <= min(n_samples, n_features):
            raise ValueError(
                f"n_components={k} out of range for data {n_samples}x{n_features}"
            )
        self.mean_ = X.mean(axis=0)
        _, svals, vt = np.linalg.svd(X - self.mean_, full_matrices=False)
        # deterministic sign: largest-magnitude coefficient of each direction positive
        flip = np.sign(vt[np.arange(len(vt)), np.argmax(np.abs(vt), axis=1)])
        vt = vt * flip[:, None]
        self.eigenvalues_ = svals ** 2 / n_samples
        self.components_ = vt[:k]
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = as_float_2d(X)
        check_feature_dim(X, self.mean_.shape[0])
        return (X - self.mean_) @ self.components_.T

    def inverse_transform(self, Y):
        check_is_fitted(self, "components_")
        Y = as_float_2d(Y)
        return Y @ self.components_ + self.mean_


class KMeansCodebook(BaseEstimator):
    """Seeded k-means visual vocabulary for the bag-of-words baseline."""

    def __init__(self, n_words=500, max_iter=300, random_state=None):
        self.n_words = n_words
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, y=None):
        if self.n_words < 2:
            raise ValueError("a codebook needs at least 2 words")
        X = as_float_2d(X)
        km = KMeans(n_clusters=self.n_words, n_init=1, max_iter=self.max_iter,
                    random_state=self.random_state).fit(X)
        self.centroids_ = km.cluster_centers_.astype(np.float64).copy()
        return self


def bow_encode(descriptors, codebook: KMeansCodebook) -> np.ndarray:
    """Nearest-centroid counts, L1-normalized, then componentwise square root."""
    check_is_fitted(codebook, "centroids_")
    centroids = codebook.centroids_
    descriptors = np.asarray(descriptors, dtype=np.float64)
    if descriptors.size == 0:
        return np.zeros(len(centroids))
    X = as_float_2d(descriptors, "descriptors")
    check_feature_dim(X, centroids.shape[1], "descriptors")
    dist = (
        (X ** 2).sum(axis=1)[:, None]
        - 2.0 * X @ centroids.T
        + (centroids ** 2).sum(axis=1)
    )
    counts = np.bincount(np.argmin(dist, axis=1), minlength=len(centroids))
    return np.sqrt(counts / len(X))
