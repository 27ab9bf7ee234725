"""Fast synthetic stand-in simulator with known ground truth.

Maps d parameters to a multi-field stacked output through seeded low-order
polynomials weighting seeded smooth spatial modes. Polynomial-dominant by
design so the surrogate can recover it exactly; ``hard_mode`` mixes in a
bounded non-polynomial term so model selection is exercised nontrivially.
"""

import os
from dataclasses import dataclass

import numpy as np

from autocal.design import DesignMatrix, ParameterSpace, lhs_sample
from autocal.fields import RawField, StackedVector, build_schema, latlon_grid, latplev_grid
from autocal.polybasis import build_index_set, eval_basis
from autocal.validation import as_1d, derive_seed

DEFAULT_THETA_STAR_FRACTIONS = (0.30, 0.62, 0.44, 0.27, 0.71)


def default_parameter_space():
    """Five-parameter atmosphere tuning box used as the default input space."""
    return ParameterSpace(
        names=("ice_sed_ai", "clubb_c1", "clubb_gamma_coef", "zmconv_tau", "zmconv_dmpdz"),
        lower=np.array([350.0, 1.0, 0.10, 1800.0, -2.0e-3]),
        upper=np.array([1400.0, 5.0, 0.50, 14400.0, -0.1e-3]),
    )


def default_field_templates():
    """Three lat-lon maps, one lat-pressure section, one scalar."""
    return (
        ("SWCF", "ANN", "latlon", (24, 48)),
        ("LWCF", "ANN", "latlon", (24, 48)),
        ("PRECT", "ANN", "latlon", (24, 48)),
        ("T", "ANN", "latplev", (24, 37)),
        ("RESTOM", "global", "scalar", ()),
    )


@dataclass(frozen=True)
class ToyModelConfig:
    space: ParameterSpace = None
    field_templates: tuple = None
    n_modes: int = 4
    noise_sd: float = 0.01
    seed: int = 0
    theta_star: np.ndarray = None
    hard_mode: bool = False

    def __post_init__(self):
        space = self.space or default_parameter_space()
        templates = self.field_templates or default_field_templates()
        if self.n_modes < 1:
            raise ValueError("n_modes must be at least 1")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be nonnegative")
        if self.theta_star is None:
            frac = np.array(DEFAULT_THETA_STAR_FRACTIONS[: space.dimension])
            if frac.size != space.dimension:
                raise ValueError("supply theta_star for non-default parameter spaces")
            theta_star = space.lower + frac * space.span
        else:
            theta_star = as_1d(self.theta_star, "theta_star", length=space.dimension)
            if not space.contains(theta_star):
                raise ValueError("theta_star must lie within the parameter bounds")
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "field_templates", tuple(templates))
        object.__setattr__(self, "theta_star", theta_star)


class ToyModel:
    """Deterministic synthetic simulator built from a config.

    Each gridded field is sum_r g_r(z) * M_r with z the canonical image of
    theta, g_r seeded polynomials of degree at most 3 (plus a bounded tanh
    term in hard mode) and M_r seeded smooth spatial modes. The scalar
    field is a seeded cubic of z. Every coordinate enters every g_r with a
    nonzero linear coefficient, so the map is non-constant along each axis.
    """

    def __init__(self, config=None):
        self.config = config or ToyModelConfig()
        self.space = self.config.space
        d = self.space.dimension
        self._index_set = build_index_set(d, 3)
        self._build_fields()
        self._schema_cache = None

    def _build_fields(self):
        cfg = self.config
        d = self.space.dimension
        degrees = self._index_set.indices.sum(axis=1)
        linear_rows = np.nonzero(degrees == 1)[0]
        cubic_pure = np.nonzero((degrees == 3) & (self._index_set.indices.max(axis=1) == 3))[0]
        self._fields = []
        for f_idx, (name, season, kind, shape) in enumerate(cfg.field_templates):
            rng = np.random.default_rng(
                np.random.SeedSequence([int(cfg.seed), 11, f_idx])
            )
            if kind == "scalar":
                grid, lats = None, None
                n_modes = 1
                size = 1
            elif kind == "latlon":
                grid, lats = latlon_grid(*shape)
                n_modes = cfg.n_modes
                size = grid.size
            elif kind == "latplev":
                grid, lats = latplev_grid(*shape)
                n_modes = cfg.n_modes
                size = grid.size
            else:
                raise ValueError(f"unknown toy grid kind {kind!r}")
            coefs = np.empty((n_modes, len(self._index_set)))
            for r in range(n_modes):
                c = rng.standard_normal(len(self._index_set)) * 0.5**degrees
                c[linear_rows] = np.where(
                    rng.random(d) < 0.5, -1.0, 1.0
                ) * rng.uniform(0.4, 1.0, d)
                c[cubic_pure] = rng.uniform(0.2, 0.6, d) * np.where(
                    rng.random(d) < 0.5, -1.0, 1.0
                )
                coefs[r] = c
            hard = None
            if cfg.hard_mode:
                hard = (
                    rng.uniform(0.2, 0.5, n_modes),
                    rng.uniform(-1.0, 1.0, (n_modes, d)),
                    rng.uniform(-0.5, 0.5, n_modes),
                )
            if kind == "scalar":
                modes = np.ones((1, 1))
            else:
                modes = self._smooth_modes(rng, n_modes, grid)
            self._fields.append(
                {
                    "name": name,
                    "season": season,
                    "kind": kind,
                    "grid": grid,
                    "lats": lats,
                    "size": size,
                    "coefs": coefs,
                    "modes": modes,
                    "hard": hard,
                }
            )

    @staticmethod
    def _smooth_modes(rng, n_modes, grid):
        nrow, ncol = grid.shape
        u = np.linspace(0.0, 1.0, nrow)[:, None]
        v = np.linspace(0.0, 1.0, ncol)[None, :]
        modes = np.empty((n_modes, grid.size))
        for r in range(n_modes):
            fu = rng.integers(1, 4)
            fv = rng.integers(1, 4)
            pu = rng.uniform(0, 2 * np.pi)
            pv = rng.uniform(0, 2 * np.pi)
            amp = rng.uniform(0.5, 2.0)
            pattern = amp * np.sin(np.pi * fu * u + pu) * np.cos(np.pi * fv * v + pv)
            modes[r] = pattern.ravel()
        return modes

    def _mode_weights(self, Z, entry):
        basis = eval_basis(self._index_set, Z)
        G = basis @ entry["coefs"].T
        if entry["hard"] is not None:
            amp, direction, offset = entry["hard"]
            G = G + amp[None, :] * np.tanh(Z @ direction.T + offset[None, :])
        return G

    def evaluate_matrix(self, thetas):
        """Noiseless stacked outputs for many parameter vectors: (n, m)."""
        Z = self.space.to_canonical_matrix(thetas)
        blocks = [self._mode_weights(Z, e) @ e["modes"] for e in self._fields]
        return np.hstack(blocks)

    def evaluate_values(self, theta):
        """Noiseless stacked output at one parameter vector."""
        return self.evaluate_matrix(np.asarray(theta, dtype=float)[None, :])[0]

    @property
    def stacked_size(self):
        return sum(e["size"] for e in self._fields)

    @property
    def schema(self):
        """Schema of the noiseless model (normalizers from the ground truth)."""
        if self._schema_cache is None:
            schema, _, _ = self._campaign_pieces(
                self.theta_star_matrix(), self.evaluate_values(self.config.theta_star)
            )
            self._schema_cache = schema
        return self._schema_cache

    def theta_star_matrix(self):
        return DesignMatrix(
            values=self.config.theta_star[None, :], space=self.space
        )

    def evaluate(self, theta, schema=None):
        values = self.evaluate_values(theta)
        return StackedVector(values=values, schema=schema or self.schema)

    def _campaign_pieces(self, design, obs_values):
        members = self.evaluate_matrix(design.values)
        raw_fields = []
        pos = 0
        for e in self._fields:
            size = e["size"]
            if e["kind"] == "scalar":
                from autocal.fields import Grid

                grid = Grid("scalar")
                lats = None
            else:
                grid = e["grid"]
                lats = e["lats"]
            raw_fields.append(
                RawField(
                    name=e["name"],
                    season=e["season"],
                    grid=grid,
                    members=members[:, pos : pos + size],
                    obs=obs_values[pos : pos + size],
                    latitudes=lats,
                )
            )
            pos += size
        return build_schema(raw_fields, design=design)


def toy_evaluate(config, theta):
    """Deterministic stacked output of the toy simulator at one point."""
    return ToyModel(config).evaluate(theta)


def toy_generate_campaign(config, n):
    """Latin hypercube campaign through the toy simulator.

    Observations are the ground-truth output plus seeded Gaussian noise of
    standard deviation noise_sd times each field's spread (scalars, having
    no spread, stay noiseless). Returns (ensemble, observations).
    """
    if n < 2:
        raise ValueError("campaign needs at least 2 members")
    model = ToyModel(config)
    cfg = model.config
    design = lhs_sample(model.space, n, derive_seed(cfg.seed, "toy-design"))
    truth = model.evaluate_values(cfg.theta_star)
    rng = np.random.default_rng(derive_seed(cfg.seed, "toy-noise"))
    obs_values = truth.copy()
    pos = 0
    for e in model._fields:
        size = e["size"]
        block = truth[pos : pos + size]
        scale = cfg.noise_sd * float(np.std(block))
        if scale > 0:
            obs_values[pos : pos + size] = block + scale * rng.standard_normal(size)
        pos += size
    _, ensemble, obs = model._campaign_pieces(design, obs_values)
    return ensemble, obs


def write_campaign(directory, ensemble, obs):
    """Emit the standard on-disk inputs: containers, schema, design, space."""
    from autocal import containers

    os.makedirs(directory, exist_ok=True)
    containers.save_matrix(os.path.join(directory, "ensemble"), ensemble.values)
    containers.save_vector(os.path.join(directory, "obs"), obs.values)
    ensemble.schema.save(os.path.join(directory, "schema.json"))
    if ensemble.design is not None:
        ensemble.design.save_csv(os.path.join(directory, "design.csv"))
        ensemble.design.space.save(os.path.join(directory, "space.json"))
