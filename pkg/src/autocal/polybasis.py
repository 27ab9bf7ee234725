"""Multivariate Legendre polynomial basis over the canonical cube.

A basis is defined by a multi-index set (total-order or hyperbolic
truncation). Term values are products of univariate Legendre polynomials
with the standard P_n(1) = 1 normalization, evaluated via numpy's
recurrence-based Vandermonde builder.
"""

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import legvander

_Z_TOL = 1e-12

KIND_TOTAL = "total-order"
KIND_HYPERBOLIC = "hyperbolic"


@dataclass(frozen=True)
class MultiIndexSet:
    """Polynomial degree tuples defining the terms of an expansion.

    ``indices`` is (n_terms, d) of nonnegative integers in graded
    lexicographic order (total degree first, then lexicographic), always
    starting with the zero index.
    """

    indices: np.ndarray
    kind: str
    order: int
    q: float = None

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return self.indices.shape[0]

    @property
    def dimension(self):
        return self.indices.shape[1]

    @property
    def max_order(self):
        return int(self.indices.sum(axis=1).max())

    def to_json_dict(self):
        d = {"kind": self.kind, "order": int(self.order),
             "indices": self.indices.tolist()}
        if self.q is not None:
            d["q"] = float(self.q)
        return d

    @classmethod
    def from_json_dict(cls, data):
        return cls(
            indices=np.array(data["indices"], dtype=np.int64),
            kind=data["kind"],
            order=int(data["order"]),
            q=data.get("q"),
        )


def _compositions(total, d):
    """All d-tuples of nonnegative integers summing to ``total``, lex order."""
    if d == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, d - 1):
            yield (first,) + rest


def build_index_set(d, p, kind=KIND_TOTAL, q=0.5):
    """Build the multi-index set of dimension ``d`` and order ``p``.

    ``total-order`` keeps every index with total degree at most p, giving
    (d+p)!/(d!p!) terms. ``hyperbolic`` keeps the subset whose q-quasi-norm
    (sum of alpha_i^q) ** (1/q) is at most p, pruning high-order
    interactions.
    """
    if d < 1:
        raise ValueError("dimension must be at least 1")
    if p < 0:
        raise ValueError("order must be nonnegative")
    indices = []
    for total in range(p + 1):
        indices.extend(sorted(_compositions(total, d)))
    if kind == KIND_TOTAL:
        kept = indices
        q = None
    elif kind == KIND_HYPERBOLIC:
        if not 0 < q <= 1:
            raise ValueError("hyperbolic q must lie in (0, 1]")
        kept = []
        for alpha in indices:
            qnorm = float(np.sum(np.asarray(alpha, dtype=float) ** q)) ** (1.0 / q)
            if qnorm <= p + 1e-9:
                kept.append(alpha)
    else:
        raise ValueError(f"unknown index-set kind {kind!r}")
    return MultiIndexSet(indices=np.array(kept, dtype=np.int64), kind=kind, order=int(p), q=q)


def _check_canonical(Z, strict=False):
    Z = np.asarray(Z, dtype=float)
    single = Z.ndim == 1
    if single:
        Z = Z[None, :]
    limit = 1.0 if strict else 1.0 + _Z_TOL
    if np.any(np.abs(Z) > limit):
        raise ValueError("canonical coordinates must lie in [-1, 1]")
    return np.clip(Z, -1.0, 1.0), single


def legendre_design(z_column, max_order):
    """Univariate Legendre Vandermonde: column n holds P_n at each input."""
    return legvander(np.asarray(z_column, dtype=float), max_order)


def legendre_derivative_design(z_column, max_order):
    """Values of P_n' at each input, via (2n+1) P_n = P_{n+1}' - P_{n-1}'."""
    z = np.asarray(z_column, dtype=float)
    V = legvander(z, max_order)
    D = np.zeros_like(V)
    if max_order >= 1:
        D[:, 1] = 1.0
    for n in range(1, max_order):
        D[:, n + 1] = D[:, n - 1] + (2 * n + 1) * V[:, n]
    return D


def eval_basis(index_set, Z):
    """Evaluate every basis term at canonical points.

    Accepts a single point (d,) or a batch (n, d); returns (n_terms,) or
    (n, n_terms).
    """
    Z, single = _check_canonical(Z)
    if Z.shape[1] != index_set.dimension:
        raise ValueError(
            f"points have dimension {Z.shape[1]}, index set expects {index_set.dimension}"
        )
    p_max = index_set.max_order if len(index_set) else 0
    idx = index_set.indices
    out = np.ones((Z.shape[0], len(index_set)))
    for i in range(index_set.dimension):
        V = legendre_design(Z[:, i], p_max)
        out *= V[:, idx[:, i]]
    return out[0] if single else out


def eval_basis_gradient(index_set, Z):
    """Partial derivatives of every basis term at canonical points.

    Returns (n_terms, d) for a single point or (n, n_terms, d) for a batch.
    Exact for polynomials, including at the cube boundary.
    """
    Z, single = _check_canonical(Z)
    if Z.shape[1] != index_set.dimension:
        raise ValueError(
            f"points have dimension {Z.shape[1]}, index set expects {index_set.dimension}"
        )
    d = index_set.dimension
    p_max = index_set.max_order if len(index_set) else 0
    idx = index_set.indices
    values = [legendre_design(Z[:, i], p_max) for i in range(d)]
    derivs = [legendre_derivative_design(Z[:, i], p_max) for i in range(d)]
    n = Z.shape[0]
    out = np.empty((n, len(index_set), d))
    for k in range(d):
        term = np.ones((n, len(index_set)))
        for i in range(d):
            table = derivs[i] if i == k else values[i]
            term *= table[:, idx[:, i]]
        out[:, :, k] = term
    return out[0] if single else out
