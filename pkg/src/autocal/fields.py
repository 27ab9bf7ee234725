"""Stacked multi-field data model: masks, area weights, normalizers, and I/O.

Target output is a collection of spatial fields (gridded or scalar) stacked
into one long vector. Each field keeps its own retained-point mask, area
weights normalized to sum one, and a variance normalizer used by the
calibration likelihood.
"""

import json
from dataclasses import dataclass, field, replace

import numpy as np

from autocal import containers
from autocal.validation import as_1d, as_2d, require_finite

GRID_KINDS = ("latlon", "latplev", "scalar")


@dataclass(frozen=True)
class Grid:
    """Native grid of one field: a 2-d map, a lat-pressure section, or a scalar."""

    kind: str
    shape: tuple = ()

    def __post_init__(self):
        if self.kind not in GRID_KINDS:
            raise ValueError(f"unknown grid kind {self.kind!r}; expected one of {GRID_KINDS}")
        shape = tuple(int(s) for s in self.shape)
        if self.kind == "scalar":
            if shape != ():
                raise ValueError("scalar grids carry no shape")
        elif len(shape) != 2 or any(s < 1 for s in shape):
            raise ValueError(f"{self.kind} grid needs a positive 2-d shape, got {shape}")
        object.__setattr__(self, "shape", shape)

    @property
    def size(self):
        return 1 if self.kind == "scalar" else self.shape[0] * self.shape[1]

    @property
    def is_scalar(self):
        return self.kind == "scalar"


def latlon_grid(nlat, nlon):
    """Equal-angle lat-lon grid; returns (Grid, per-point latitude in degrees)."""
    grid = Grid("latlon", (nlat, nlon))
    edges = np.linspace(-90.0, 90.0, nlat + 1)
    lats = 0.5 * (edges[:-1] + edges[1:])
    return grid, np.repeat(lats, nlon)


def latplev_grid(nlat, nplev):
    """Latitude by pressure-level grid; returns (Grid, per-point latitude in degrees)."""
    grid = Grid("latplev", (nlat, nplev))
    edges = np.linspace(-90.0, 90.0, nlat + 1)
    lats = 0.5 * (edges[:-1] + edges[1:])
    return grid, np.repeat(lats, nplev)


@dataclass(frozen=True)
class RawField:
    """One declared target field on its native grid, before masking.

    ``members`` is (n_members, grid.size) and may contain NaN; ``obs`` is the
    matching observation vector. ``latitudes`` gives the latitude of each
    native grid point in degrees (ignored for scalars).
    """

    name: str
    season: str
    grid: Grid
    members: np.ndarray
    obs: np.ndarray
    latitudes: np.ndarray = None

    def __post_init__(self):
        members = as_2d(self.members, f"{self.name} members", cols=self.grid.size)
        obs = as_1d(self.obs, f"{self.name} obs", length=self.grid.size)
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "obs", obs)
        if not self.grid.is_scalar:
            if self.latitudes is None:
                raise ValueError(f"field {self.name!r}: gridded fields need latitudes")
            lats = as_1d(self.latitudes, f"{self.name} latitudes", length=self.grid.size)
            object.__setattr__(self, "latitudes", lats)


@dataclass(frozen=True)
class FieldSpec:
    """Layout of one field inside the stacked vector.

    ``mask`` flags the retained native grid points; ``weights`` are the
    nonnegative area weights over retained points, normalized to sum one;
    ``sigma_sq`` is the positive variance normalizer of the observed field.
    """

    name: str
    season: str
    grid: Grid
    mask: np.ndarray
    weights: np.ndarray
    sigma_sq: float
    latitudes: np.ndarray = None

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != (self.grid.size,):
            raise ValueError(f"field {self.name!r}: mask must cover the native grid")
        size = int(mask.sum())
        if size < 1:
            raise ValueError(f"field {self.name!r} has no retained points")
        weights = as_1d(self.weights, f"{self.name} weights", length=size)
        if np.any(weights < 0):
            raise ValueError(f"field {self.name!r}: weights must be nonnegative")
        if abs(weights.sum() - 1.0) > 1e-10:
            raise ValueError(f"field {self.name!r}: weights must sum to 1")
        if not self.sigma_sq > 0:
            raise ValueError(f"field {self.name!r}: sigma_sq must be positive")
        mask.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "sigma_sq", float(self.sigma_sq))
        if self.latitudes is not None:
            lats = as_1d(self.latitudes, f"{self.name} latitudes", length=size)
            lats.setflags(write=False)
            object.__setattr__(self, "latitudes", lats)

    @property
    def key(self):
        return f"{self.name}:{self.season}"

    @property
    def size(self):
        return int(self.mask.sum())


@dataclass(frozen=True)
class FieldSchema:
    """Ordered collection of field specs and their offsets in the stacked vector."""

    fields: tuple

    def __post_init__(self):
        fields = tuple(self.fields)
        if not fields:
            raise ValueError("schema needs at least one field")
        keys = [f.key for f in fields]
        if len(set(keys)) != len(keys):
            raise ValueError("field name:season pairs must be unique")
        offsets = np.zeros(len(fields) + 1, dtype=int)
        for i, f in enumerate(fields):
            offsets[i + 1] = offsets[i] + f.size
        offsets.setflags(write=False)
        object.__setattr__(self, "fields", fields)
        object.__setattr__(self, "_offsets", offsets)

    @property
    def offsets(self):
        return self._offsets

    @property
    def total_size(self):
        return int(self._offsets[-1])

    @property
    def n_fields(self):
        return len(self.fields)

    @property
    def keys(self):
        return tuple(f.key for f in self.fields)

    @property
    def field_sizes(self):
        return np.diff(self._offsets)

    def index_of(self, key):
        if isinstance(key, (int, np.integer)):
            return int(key)
        for i, f in enumerate(self.fields):
            if f.key == key or f.name == key:
                return i
        raise KeyError(f"no field {key!r} in schema")

    def spec(self, key):
        return self.fields[self.index_of(key)]

    def slice_of(self, key):
        i = self.index_of(key)
        return slice(int(self._offsets[i]), int(self._offsets[i + 1]))

    @property
    def seasons(self):
        out = []
        for f in self.fields:
            if f.season not in out:
                out.append(f.season)
        return out

    @property
    def variables(self):
        out = []
        for f in self.fields:
            if f.name not in out:
                out.append(f.name)
        return out

    def to_json_dict(self):
        return {"fields": [_spec_to_json(f) for f in self.fields]}

    @classmethod
    def from_json_dict(cls, data):
        return cls(fields=tuple(_spec_from_json(d) for d in data["fields"]))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


def _rle_encode(mask):
    """Run-length encode a boolean vector as {'start': bool, 'runs': [...]}. """
    mask = np.asarray(mask, dtype=bool)
    runs = []
    start = bool(mask[0]) if mask.size else True
    current, count = start, 0
    for v in mask:
        if bool(v) == current:
            count += 1
        else:
            runs.append(count)
            current, count = bool(v), 1
    runs.append(count)
    return {"start": start, "runs": runs}


def _rle_decode(data):
    out = []
    value = bool(data["start"])
    for run in data["runs"]:
        out.extend([value] * int(run))
        value = not value
    return np.array(out, dtype=bool)


def _spec_to_json(f):
    d = {
        "name": f.name,
        "season": f.season,
        "grid": {"kind": f.grid.kind, "shape": list(f.grid.shape)},
        "mask": _rle_encode(f.mask),
        "weights": [float(w) for w in f.weights],
        "sigma_sq": float(f.sigma_sq),
    }
    if f.latitudes is not None:
        d["latitudes"] = [float(v) for v in f.latitudes]
    return d


def _spec_from_json(d):
    lats = d.get("latitudes")
    return FieldSpec(
        name=d["name"],
        season=d["season"],
        grid=Grid(d["grid"]["kind"], tuple(d["grid"]["shape"])),
        mask=_rle_decode(d["mask"]),
        weights=np.array(d["weights"], dtype=float),
        sigma_sq=float(d["sigma_sq"]),
        latitudes=None if lats is None else np.array(lats, dtype=float),
    )


@dataclass(frozen=True)
class StackedVector:
    """A length-m vector indexed by a field schema."""

    values: np.ndarray
    schema: FieldSchema

    def __post_init__(self):
        values = as_1d(self.values, "values", length=self.schema.total_size)
        require_finite(values, "stacked values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def field_values(self, key):
        return self.values[self.schema.slice_of(key)]

    def to_grid(self, key, fill=np.nan):
        """Scatter a field back onto its native grid; masked points get ``fill``."""
        spec = self.schema.spec(key)
        if spec.grid.is_scalar:
            raise ValueError(f"field {spec.key!r} is scalar and has no grid")
        full = np.full(spec.grid.size, fill, dtype=float)
        full[spec.mask] = self.field_values(key)
        return full.reshape(spec.grid.shape)


@dataclass(frozen=True)
class DiagnosticVector(StackedVector):
    """Stacked layer of diagnostic values; NaN marks undefined cells."""

    def __post_init__(self):
        values = as_1d(self.values, "values", length=self.schema.total_size)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class EnsembleOutput:
    """Stacked output of every ensemble member (n rows of length m)."""

    values: np.ndarray
    schema: FieldSchema
    design: object = None

    def __post_init__(self):
        values = as_2d(self.values, "ensemble values", cols=self.schema.total_size)
        require_finite(values, "ensemble values")
        if self.design is not None and self.design.n != values.shape[0]:
            raise ValueError(
                f"ensemble has {values.shape[0]} rows but design has {self.design.n}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self):
        return self.values.shape[0]

    def member(self, i):
        return StackedVector(values=self.values[i].copy(), schema=self.schema)


def build_schema(raw_fields, design=None):
    """Assemble the stacked data model from native-grid fields.

    A grid point is dropped if it is non-finite in any ensemble member or in
    the observations, so the surrogate and loss share a fixed support.
    Weights are cos(latitude) over retained points, renormalized to sum one;
    scalar fields get the single weight 1. The normalizer ``sigma_sq`` is the
    population variance of the retained observation values (scalars default
    to 1.0; override via :func:`set_scalar_sigma`).

    Returns (schema, stacked ensemble, stacked observations).
    """
    if not raw_fields:
        raise ValueError("no fields supplied")
    specs = []
    member_blocks = []
    obs_blocks = []
    n_members = None
    for raw in raw_fields:
        if n_members is None:
            n_members = raw.members.shape[0]
        elif raw.members.shape[0] != n_members:
            raise ValueError(
                f"field {raw.name!r} has {raw.members.shape[0]} members, expected {n_members}"
            )
        finite = np.isfinite(raw.obs) & np.all(np.isfinite(raw.members), axis=0)
        if not finite.any():
            raise ValueError(f"field {raw.name!r}:{raw.season} retains no grid points")
        obs_kept = raw.obs[finite]
        if raw.grid.is_scalar:
            weights = np.array([1.0])
            sigma_sq = 1.0
            lats = None
        else:
            lats = raw.latitudes[finite]
            w = np.cos(np.deg2rad(lats))
            w = np.clip(w, 0.0, None)
            total = w.sum()
            if total <= 0:
                raise ValueError(f"field {raw.name!r}: area weights sum to zero")
            weights = w / total
            sigma_sq = float(np.var(obs_kept))
            if sigma_sq <= 0:
                raise ValueError(
                    f"field {raw.name!r}:{raw.season} has zero observation variance"
                )
        specs.append(
            FieldSpec(
                name=raw.name,
                season=raw.season,
                grid=raw.grid,
                mask=finite,
                weights=weights,
                sigma_sq=sigma_sq,
                latitudes=lats,
            )
        )
        member_blocks.append(raw.members[:, finite])
        obs_blocks.append(obs_kept)
    schema = FieldSchema(fields=tuple(specs))
    ensemble = EnsembleOutput(
        values=np.hstack(member_blocks), schema=schema, design=design
    )
    obs = StackedVector(values=np.concatenate(obs_blocks), schema=schema)
    return schema, ensemble, obs


def set_scalar_sigma(schema, key, sigma_sq):
    """Return a schema with the normalizer of one scalar field overridden."""
    if not sigma_sq > 0:
        raise ValueError("sigma_sq must be strictly positive")
    i = schema.index_of(key)
    spec = schema.fields[i]
    if not spec.grid.is_scalar:
        raise ValueError(f"field {spec.key!r} is not scalar")
    fields = list(schema.fields)
    fields[i] = replace(spec, sigma_sq=float(sigma_sq))
    return FieldSchema(fields=tuple(fields))


def weighted_rmse(model, obs, key):
    """Area-weighted RMSE of one field between two stacked vectors."""
    if model.schema is not obs.schema and model.schema.keys != obs.schema.keys:
        raise ValueError("stacked vectors must share a schema")
    spec = model.schema.spec(key)
    resid = model.field_values(key) - obs.field_values(key)
    return float(np.sqrt(np.sum(spec.weights * resid**2)))


def rmse_change_table(run_a, run_b, obs):
    """Percent change in per-field RMSE from run_a to run_b against obs.

    Rows are variables, columns are seasons; a trailing column and row hold
    simple means of the displayed percentages. Fields where the baseline
    RMSE is zero get a NaN marker.
    """
    schema = obs.schema
    variables = schema.variables
    seasons = schema.seasons
    cells = np.full((len(variables), len(seasons)), np.nan)
    for f in schema.fields:
        r = variables.index(f.name)
        c = seasons.index(f.season)
        rmse_a = weighted_rmse(run_a, obs, f.key)
        rmse_b = weighted_rmse(run_b, obs, f.key)
        if rmse_a == 0.0:
            cells[r, c] = np.nan
        else:
            cells[r, c] = 100.0 * (rmse_b - rmse_a) / rmse_a
    with np.errstate(invalid="ignore"):
        row_avg = np.array([np.nanmean(row) if np.any(np.isfinite(row)) else np.nan
                            for row in cells])
        col_avg = np.array([np.nanmean(col) if np.any(np.isfinite(col)) else np.nan
                            for col in cells.T])
        finite = cells[np.isfinite(cells)]
        overall = float(finite.mean()) if finite.size else np.nan
    return {
        "variables": variables,
        "seasons": seasons,
        "cells": cells,
        "row_avg": row_avg,
        "col_avg": col_avg,
        "overall": overall,
    }


def save_ensemble(base, ensemble):
    containers.save_matrix(base, ensemble.values)


def load_ensemble(base, schema, design=None):
    return EnsembleOutput(values=containers.load_matrix(base), schema=schema, design=design)


def save_stacked(base, stacked):
    containers.save_vector(base, stacked.values)


def load_stacked(base, schema):
    return StackedVector(values=containers.load_vector(base), schema=schema)
