"""Principal component (EOF) reduction of stacked ensemble output."""

import json
import os

import numpy as np

from autocal import containers
from autocal.validation import as_2d


class PcaReducer:
    """Rank-k principal component basis of the column-centered ensemble.

    Follows the fit/transform estimator convention. After :meth:`fit` the
    instance carries:

    - ``mean_``: column means of the training matrix (length m)
    - ``components_``: (k, m) orthonormal rows, ordered by singular value
    - ``scores_``: (n, k) projection coefficients of the training rows
    - ``singular_values_``: length-k nonincreasing
    - ``explained_fraction_``: cumulative variance fractions through each k'

    The orientation of each component is fixed so its largest-magnitude
    entry is positive, which keeps fits reproducible across platforms.
    """

    def __init__(self, n_components=16):
        self.n_components = int(n_components)

    def fit(self, Y):
        Y = self._as_matrix(Y)
        n, m = Y.shape
        k = self.n_components
        if not 1 <= k <= min(n - 1, m):
            raise ValueError(
                f"n_components={k} out of range [1, {min(n - 1, m)}] for a {n}x{m} ensemble"
            )
        mean = Y.mean(axis=0)
        centered = Y - mean
        _, svals, vt = np.linalg.svd(centered, full_matrices=False)
        components = vt[:k]
        flip = np.take_along_axis(
            components, np.argmax(np.abs(components), axis=1)[:, None], axis=1
        )[:, 0]
        signs = np.where(flip < 0, -1.0, 1.0)
        components = components * signs[:, None]
        scores = centered @ components.T
        total = float(np.sum(svals**2))
        explained = np.cumsum(svals[:k] ** 2) / total if total > 0 else np.ones(k)
        self.mean_ = mean
        self.components_ = components
        self.scores_ = scores
        self.singular_values_ = svals[:k].copy()
        self.explained_fraction_ = explained
        self._total_variance = total
        return self

    def transform(self, Y):
        Y = self._as_matrix(Y)
        return (Y - self.mean_) @ self.components_.T

    def inverse_transform(self, scores):
        scores = np.asarray(scores, dtype=float)
        single = scores.ndim == 1
        if single:
            scores = scores[None, :]
        if scores.shape[1] != self.components_.shape[0]:
            raise ValueError(
                f"expected {self.components_.shape[0]} scores, got {scores.shape[1]}"
            )
        if not np.all(np.isfinite(scores)):
            raise ValueError("scores contain non-finite entries")
        out = self.mean_ + scores @ self.components_
        return out[0] if single else out

    def reconstruct(self, scores_row):
        """Mean plus the weighted sum of components for one score vector."""
        return self.inverse_transform(np.asarray(scores_row, dtype=float))

    def variance_curve(self):
        """Cumulative explained-variance fraction for k' = 1..k."""
        return [(k1 + 1, float(f)) for k1, f in enumerate(self.explained_fraction_)]

    @property
    def k(self):
        return self.components_.shape[0]

    @staticmethod
    def _as_matrix(Y):
        if hasattr(Y, "values") and hasattr(Y, "schema"):
            Y = Y.values
        return as_2d(Y, "ensemble matrix")

    def save(self, directory, name="basis"):
        os.makedirs(directory, exist_ok=True)
        containers.save_matrix(os.path.join(directory, f"{name}_mean"), self.mean_[None, :])
        containers.save_matrix(os.path.join(directory, f"{name}_components"), self.components_)
        containers.save_matrix(os.path.join(directory, f"{name}_scores"), self.scores_)
        containers.save_matrix(
            os.path.join(directory, f"{name}_singular_values"), self.singular_values_[None, :]
        )
        meta = {
            "n_components": self.k,
            "total_variance": float(self._total_variance),
            "explained_fraction": [float(f) for f in self.explained_fraction_],
        }
        with open(os.path.join(directory, f"{name}.json"), "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, directory, name="basis"):
        with open(os.path.join(directory, f"{name}.json"), encoding="utf-8") as fh:
            meta = json.load(fh)
        obj = cls(n_components=meta["n_components"])
        obj.mean_ = containers.load_matrix(os.path.join(directory, f"{name}_mean"))[0]
        obj.components_ = containers.load_matrix(os.path.join(directory, f"{name}_components"))
        obj.scores_ = containers.load_matrix(os.path.join(directory, f"{name}_scores"))
        obj.singular_values_ = containers.load_matrix(
            os.path.join(directory, f"{name}_singular_values")
        )[0]
        obj.explained_fraction_ = np.array(meta["explained_fraction"], dtype=float)
        obj._total_variance = float(meta["total_variance"])
        return obj


def fit_pca(ensemble, k):
    """Fit a rank-k principal component basis to an ensemble."""
    return PcaReducer(n_components=k).fit(ensemble)
