"""Gaussian calibration objective over the surrogate.

Per-field weighted errors are standardized by each field's observational
variance; per-field scale factors s_p^2 balance the fields and carry an
inverse-gamma prior. The log-likelihood uses the standard Gaussian form

    sum_p [ -e_p(theta) / (2 s_p^2) - (m_p / 2) log s_p^2 ]

with additive constants dropped, so for fixed theta each s_p^2 has the
closed-form maximizer exposed by :meth:`CalibrationLoss.profile_scales`.
"""

from dataclasses import dataclass

import numpy as np

from autocal.validation import as_1d, require_positive

MODE_MLE = "mle"
MODE_MAP = "map"


@dataclass(frozen=True)
class PriorConfig:
    """Inverse-gamma prior on every per-field variance; uniform box prior on theta."""

    alpha: float = 3.0
    beta: float = 0.5

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("prior hyperparameters must be positive")


class CalibrationLoss:
    """Joint objective over parameters and per-field scales.

    The surrogate's field error is a quadratic function of the predicted
    component scores, so evaluations reduce to small dense forms in the
    k-dimensional score space; no full-length prediction is materialized.
    Instances are immutable and safe to evaluate concurrently.

    ``fixed_scales`` maps field keys to frozen s_p^2 values; frozen fields
    keep their supplied scale through profiling and optimization.
    """

    def __init__(self, surrogate, obs, prior=None, fixed_scales=None):
        if surrogate.schema.keys != obs.schema.keys:
            raise ValueError("surrogate and observations must share a schema")
        self.surrogate = surrogate
        self.obs = obs
        self.prior = prior or PriorConfig()
        schema = surrogate.schema
        self.schema = schema
        self.n_fields = schema.n_fields
        self.field_sizes = schema.field_sizes.astype(float)
        fixed = np.full(self.n_fields, np.nan)
        if fixed_scales:
            for key, value in fixed_scales.items():
                if not value > 0:
                    raise ValueError(f"fixed scale for {key!r} must be positive")
                fixed[schema.index_of(key)] = float(value)
        self.fixed_scales = fixed
        self.free_mask = ~np.isfinite(fixed)
        self._precompute()

    def _precompute(self):
        basis = self.surrogate.basis
        k = basis.k
        offset = basis.mean_ - self.obs.values
        P = self.n_fields
        self._quad = np.empty((P, k, k))
        self._lin = np.empty((P, k))
        self._const = np.empty(P)
        for p, spec in enumerate(self.schema.fields):
            sl = self.schema.slice_of(p)
            psi = basis.components_[:, sl]
            w = spec.weights / spec.sigma_sq
            c = offset[sl]
            psi_w = psi * w
            self._quad[p] = psi_w @ psi.T
            self._lin[p] = 2.0 * (psi_w @ c)
            self._const[p] = float(np.sum(w * c * c))

    # -- field errors ----------------------------------------------------

    def field_error_from_scores(self, g):
        quad = np.einsum("pij,i,j->p", self._quad, g, g)
        return quad + self._lin @ g + self._const

    def field_error(self, theta):
        """Weighted standardized mean-squared error e_p per field."""
        g = self.surrogate.component_scores(theta)
        return self.field_error_from_scores(g)

    def field_error_direct(self, theta):
        """Reference path: e_p from the full stacked prediction."""
        pred = self.surrogate.predict(theta)
        out = np.empty(self.n_fields)
        for p, spec in enumerate(self.schema.fields):
            resid = pred.field_values(p) - self.obs.field_values(p)
            out[p] = float(np.sum(spec.weights * resid**2) / spec.sigma_sq)
        return out

    # -- log densities ----------------------------------------------------

    def log_likelihood(self, theta, s_sq):
        s_sq = require_positive(as_1d(s_sq, "s_sq", length=self.n_fields), "s_sq")
        e = self.field_error(theta)
        return float(np.sum(-e / (2.0 * s_sq) - 0.5 * self.field_sizes * np.log(s_sq)))

    def log_prior_scales(self, s_sq):
        s_sq = require_positive(as_1d(s_sq, "s_sq", length=self.n_fields), "s_sq")
        a, b = self.prior.alpha, self.prior.beta
        return float(np.sum((-a - 1.0) * np.log(s_sq) - b / s_sq))

    def log_posterior(self, theta, s_sq):
        """Joint log-density; -inf outside the uniform theta box."""
        if not self.surrogate.space.contains(theta):
            return -np.inf
        return self.log_likelihood(theta, s_sq) + self.log_prior_scales(s_sq)

    def log_objective(self, theta, s_sq, mode=MODE_MAP):
        if mode == MODE_MAP:
            return self.log_posterior(theta, s_sq)
        if mode == MODE_MLE:
            if not self.surrogate.space.contains(theta):
                return -np.inf
            return self.log_likelihood(theta, s_sq)
        raise ValueError(f"unknown mode {mode!r}")

    # -- profiling ---------------------------------------------------------

    def profile_scales(self, theta, mode=MODE_MAP):
        """Closed-form maximizer of the objective over each free s_p^2.

        MAP: (e_p/2 + beta) / (m_p/2 + alpha + 1). MLE (alpha = beta = 0):
        e_p / m_p, floored at a tiny positive value for degenerate zero-error
        fields. Frozen fields return their fixed values.
        """
        e = self.field_error(theta)
        if mode == MODE_MAP:
            prof = (e / 2.0 + self.prior.beta) / (self.field_sizes / 2.0 + self.prior.alpha + 1.0)
        elif mode == MODE_MLE:
            prof = np.maximum(e / self.field_sizes, 1e-300)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        return np.where(self.free_mask, prof, self.fixed_scales)

    # -- gradients ----------------------------------------------------------

    def _field_error_gradient(self, theta):
        g = self.surrogate.component_scores(theta)
        dg = self.surrogate.component_score_gradient(theta)
        de_dg = 2.0 * np.einsum("pij,j->pi", self._quad, g) + self._lin
        return self.field_error_from_scores(g), de_dg @ dg

    def gradient_log_objective(self, theta, s_sq, mode=MODE_MAP):
        """Gradient of the joint objective: (d theta terms, d s_sq terms)."""
        s_sq = require_positive(as_1d(s_sq, "s_sq", length=self.n_fields), "s_sq")
        e, de_dtheta = self._field_error_gradient(theta)
        grad_theta = -(de_dtheta / (2.0 * s_sq)[:, None]).sum(axis=0)
        grad_s = e / (2.0 * s_sq**2) - self.field_sizes / (2.0 * s_sq)
        if mode == MODE_MAP:
            a, b = self.prior.alpha, self.prior.beta
            grad_s = grad_s + (-a - 1.0) / s_sq + b / s_sq**2
        elif mode != MODE_MLE:
            raise ValueError(f"unknown mode {mode!r}")
        return grad_theta, grad_s

    def gradient_log_posterior(self, theta, s_sq):
        return self.gradient_log_objective(theta, s_sq, mode=MODE_MAP)
