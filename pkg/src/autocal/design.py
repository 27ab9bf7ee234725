"""Tunable parameter space and Latin hypercube designs over it.

Physical-unit values are carried at every API surface; the canonical cube
[-1, 1]^d is an internal coordinate system for the polynomial surrogate.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from autocal.validation import as_1d, as_2d

_BOUNDS_RTOL = 1e-12


@dataclass(frozen=True)
class ParameterSpace:
    """Names and box bounds of the tunable inputs.

    Owns the affine map between physical units and the canonical cube
    [-1, 1]^d (lower bound maps to -1, upper bound to +1, componentwise).
    """

    names: tuple
    lower: np.ndarray = field(repr=False)
    upper: np.ndarray = field(repr=False)

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        lower = as_1d(self.lower, "lower", length=len(names))
        upper = as_1d(self.upper, "upper", length=len(names))
        if len(names) < 1:
            raise ValueError("parameter space needs at least one parameter")
        if len(set(names)) != len(names) or any(not n for n in names):
            raise ValueError("parameter names must be unique and nonempty")
        if not np.all(lower < upper):
            bad = [names[i] for i in np.nonzero(~(lower < upper))[0]]
            raise ValueError(f"lower bound must be strictly below upper for: {bad}")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dimension(self):
        return len(self.names)

    @property
    def span(self):
        return self.upper - self.lower

    def to_canonical(self, theta_phys):
        """Map physical coordinates to the canonical cube [-1, 1]^d."""
        theta = as_1d(theta_phys, "theta", length=self.dimension)
        tol = _BOUNDS_RTOL * self.span
        bad = (theta < self.lower - tol) | (theta > self.upper + tol)
        if np.any(bad):
            i = int(np.nonzero(bad)[0][0])
            raise ValueError(
                f"parameter '{self.names[i]}'={theta[i]!r} outside bounds "
                f"[{self.lower[i]!r}, {self.upper[i]!r}]"
            )
        z = 2.0 * (theta - self.lower) / self.span - 1.0
        return np.clip(z, -1.0, 1.0)

    def from_canonical(self, z):
        """Inverse of :meth:`to_canonical`."""
        z = as_1d(z, "z", length=self.dimension)
        if np.any(np.abs(z) > 1.0 + _BOUNDS_RTOL):
            i = int(np.nonzero(np.abs(z) > 1.0 + _BOUNDS_RTOL)[0][0])
            raise ValueError(f"canonical coordinate '{self.names[i]}'={z[i]!r} outside [-1, 1]")
        z = np.clip(z, -1.0, 1.0)
        return self.lower + 0.5 * (z + 1.0) * self.span

    def to_canonical_matrix(self, thetas):
        thetas = as_2d(thetas, "thetas", cols=self.dimension)
        return np.vstack([self.to_canonical(row) for row in thetas])

    def contains(self, theta_phys):
        theta = as_1d(theta_phys, "theta", length=self.dimension)
        tol = _BOUNDS_RTOL * self.span
        return bool(np.all(theta >= self.lower - tol) and np.all(theta <= self.upper + tol))

    def to_json_dict(self):
        return {
            "parameters": [
                {"name": n, "low": float(lo), "high": float(hi)}
                for n, lo, hi in zip(self.names, self.lower, self.upper)
            ]
        }

    @classmethod
    def from_json_dict(cls, data):
        params = data["parameters"]
        return cls(
            names=tuple(p["name"] for p in params),
            lower=np.array([p["low"] for p in params], dtype=float),
            upper=np.array([p["high"] for p in params], dtype=float),
        )

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


@dataclass(frozen=True)
class DesignMatrix:
    """A set of sampled parameter vectors in physical units (one per row)."""

    values: np.ndarray
    space: ParameterSpace

    def __post_init__(self):
        values = as_2d(self.values, "values", cols=self.space.dimension)
        if values.shape[0] < 1:
            raise ValueError("design must contain at least one sample")
        tol = _BOUNDS_RTOL * self.space.span
        if np.any(values < self.space.lower - tol) or np.any(values > self.space.upper + tol):
            raise ValueError("design contains values outside the parameter bounds")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self):
        return self.values.shape[0]

    def to_canonical(self):
        return self.space.to_canonical_matrix(self.values)

    def save_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.space.names)
            for row in self.values:
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def load_csv(cls, path, space):
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != space.names:
                raise ValueError(
                    f"design header {header!r} does not match parameter names {space.names!r}"
                )
            rows = [[float(v) for v in row] for row in reader if row]
        return cls(values=np.array(rows, dtype=float), space=space)


def lhs_sample(space, n, seed):
    """Draw a Latin hypercube design of ``n`` points over ``space``.

    Each dimension is divided into ``n`` equal-width strata; every stratum
    receives exactly one sample, placed uniformly at random within it.
    Reproducible given ``seed``.
    """
    if n < 1:
        raise ValueError("invalid design: n must be at least 1")
    rng = np.random.default_rng(seed)
    d = space.dimension
    unit = np.empty((n, d))
    for i in range(d):
        strata = rng.permutation(n)
        jitter = rng.random(n)
        unit[:, i] = (strata + jitter) / n
    values = space.lower + unit * space.span
    return DesignMatrix(values=values, space=space)
