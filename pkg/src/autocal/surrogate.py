"""Cross-validated Legendre polynomial-chaos surrogates on the reduced basis.

One regression model is fitted per retained principal component over a
brute-force hyperparameter grid (polynomial order, index-set truncation,
solver, penalty), scored by k-fold cross validation with a shared seeded
fold partition. The composite surrogate maps physical parameters to the
full stacked output vector and exposes exact polynomial gradients.
"""

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from autocal import containers, solvers
from autocal.exceptions import ConvergenceError
from autocal.fields import DiagnosticVector, StackedVector
from autocal.polybasis import (
    KIND_HYPERBOLIC,
    KIND_TOTAL,
    MultiIndexSet,
    build_index_set,
    eval_basis,
    eval_basis_gradient,
    legendre_design,
    legendre_derivative_design,
)
from autocal.validation import as_1d, as_2d, derive_seed, require_finite

DEFAULT_ORDERS = tuple(range(1, 13))
DEFAULT_KINDS = (KIND_TOTAL, KIND_HYPERBOLIC)
DEFAULT_PENALTIES = tuple(np.logspace(-8.0, 4.0, 20))

_TYPE_RANK = {solvers.FIT_LINEAR: 0, solvers.FIT_LASSO: 1, solvers.FIT_ELASTIC_NET: 2}


@dataclass(frozen=True)
class HyperGrid:
    """Search grid for the per-component surrogate selection."""

    orders: tuple = DEFAULT_ORDERS
    kinds: tuple = DEFAULT_KINDS
    hyperbolic_q: float = 0.5
    fit_types: tuple = solvers.FIT_TYPES
    penalties: tuple = DEFAULT_PENALTIES
    folds: int = 5

    def __post_init__(self):
        orders = tuple(sorted(set(int(p) for p in self.orders)))
        kinds = tuple(self.kinds)
        fit_types = tuple(self.fit_types)
        penalties = tuple(float(v) for v in self.penalties)
        if not orders or orders[0] < 0:
            raise ValueError("grid needs at least one nonnegative order")
        if not kinds or any(k not in (KIND_TOTAL, KIND_HYPERBOLIC) for k in kinds):
            raise ValueError(f"grid kinds must be drawn from {(KIND_TOTAL, KIND_HYPERBOLIC)}")
        if not fit_types or any(t not in solvers.FIT_TYPES for t in fit_types):
            raise ValueError(f"grid fit types must be drawn from {solvers.FIT_TYPES}")
        needs_penalty = any(t != solvers.FIT_LINEAR for t in fit_types)
        if needs_penalty and (not penalties or any(v <= 0 for v in penalties)):
            raise ValueError("penalties must be positive")
        if self.folds < 2:
            raise ValueError("cross validation needs at least two folds")
        if not 0 < self.hyperbolic_q <= 1:
            raise ValueError("hyperbolic_q must lie in (0, 1]")
        object.__setattr__(self, "orders", orders)
        object.__setattr__(self, "kinds", kinds)
        object.__setattr__(self, "fit_types", fit_types)
        object.__setattr__(self, "penalties", penalties)
        object.__setattr__(self, "folds", int(self.folds))

    @property
    def max_order(self):
        return self.orders[-1]


@dataclass
class PceRegressor:
    """One fitted polynomial-chaos regression in the Legendre basis."""

    index_set: MultiIndexSet
    coefficients: np.ndarray
    fit_type: str
    penalty: float
    cv_rmse: float

    def __post_init__(self):
        coef = as_1d(self.coefficients, "coefficients", length=len(self.index_set))
        require_finite(coef, "coefficients")
        self.coefficients = coef
        if self.cv_rmse < 0:
            raise ValueError("cv_rmse must be nonnegative")

    def predict(self, Z):
        return eval_basis(self.index_set, Z) @ self.coefficients

    def gradient(self, Z):
        """Derivative with respect to canonical coordinates: (d,) or (n, d)."""
        G = eval_basis_gradient(self.index_set, Z)
        return np.tensordot(G, self.coefficients, axes=([G.ndim - 2], [0]))

    @property
    def order(self):
        return self.index_set.order

    @property
    def kind(self):
        return self.index_set.kind


def fit_component(X_canonical, eta_j, fit_type, penalty, index_set):
    """Fit one component model at fixed hyperparameters (no cross validation)."""
    Z = as_2d(X_canonical, "X_canonical", cols=index_set.dimension)
    y = as_1d(eta_j, "eta_j", length=Z.shape[0])
    basis = eval_basis(index_set, Z)
    require_finite(basis, "basis matrix")
    coef = solvers.fit_penalized(basis, y, fit_type, 0.0 if penalty is None else penalty)
    return PceRegressor(
        index_set=index_set,
        coefficients=coef,
        fit_type=fit_type,
        penalty=0.0 if penalty is None else float(penalty),
        cv_rmse=0.0,
    )


@dataclass(frozen=True)
class _Cell:
    kind: str
    order: int
    fit_type: str
    penalty: float  # 0.0 for linear

    @property
    def tie_key(self):
        # lower order, then stronger penalty, then linear < lasso < elastic-net,
        # then total-order before hyperbolic
        kind_rank = 0 if self.kind == KIND_TOTAL else 1
        return (self.order, -self.penalty, _TYPE_RANK[self.fit_type], kind_rank)


def _make_folds(n, n_folds, seed):
    if n < n_folds:
        raise ValueError(f"need at least {n_folds} samples for {n_folds}-fold CV, got {n}")
    rng = np.random.default_rng(seed)
    return [np.sort(part) for part in np.array_split(rng.permutation(n), n_folds)]


class _KindPlan:
    """Master index set of one truncation kind plus per-order column positions."""

    def __init__(self, d, grid, kind):
        self.kind = kind
        p_max = grid.max_order
        if kind == KIND_TOTAL:
            self.master = build_index_set(d, p_max, KIND_TOTAL)
            self.levels = self.master.indices.sum(axis=1)
        else:
            self.master = build_index_set(d, p_max, KIND_HYPERBOLIC, q=grid.hyperbolic_q)
            alpha = self.master.indices.astype(float)
            qn = np.sum(alpha**grid.hyperbolic_q, axis=1) ** (1.0 / grid.hyperbolic_q)
            self.levels = np.maximum(np.ceil(qn - 1e-9).astype(int),
                                     self.master.indices.max(axis=1))
        self.q = grid.hyperbolic_q if kind == KIND_HYPERBOLIC else None

    def columns(self, order):
        return np.nonzero(self.levels <= order)[0]

    def subset(self, order):
        cols = self.columns(order)
        return MultiIndexSet(
            indices=self.master.indices[cols], kind=self.kind, order=order, q=self.q
        )


class _CvEngine:
    """Evaluates every grid cell for every target with shared fold work.

    Ordinary-least-squares cells are scored through the training-fold Gram
    matrix, accumulated incrementally across nested polynomial orders, so
    one eigendecomposition per (kind, fold, order) serves all targets.
    Penalized cells run warm-started coordinate-descent paths over the
    penalty grid, sharing the standardized basis across targets.
    """

    def __init__(self, Z, grid, seed):
        self.Z = as_2d(Z, "X_canonical")
        self.grid = grid
        self.folds = _make_folds(self.Z.shape[0], grid.folds, seed)
        self.plans = {kind: _KindPlan(self.Z.shape[1], grid, kind) for kind in grid.kinds}
        self.basis_full = {
            kind: eval_basis(plan.master, self.Z) for kind, plan in self.plans.items()
        }
        for kind, B in self.basis_full.items():
            require_finite(B, f"{kind} basis matrix")
        self.cells = self._enumerate_cells()
        self._cell_pos = {c: i for i, c in enumerate(self.cells)}

    def _enumerate_cells(self):
        cells = []
        for kind in self.grid.kinds:
            for order in self.grid.orders:
                for fit_type in self.grid.fit_types:
                    if fit_type == solvers.FIT_LINEAR:
                        cells.append(_Cell(kind, order, fit_type, 0.0))
                    else:
                        for lam in self.grid.penalties:
                            cells.append(_Cell(kind, order, fit_type, lam))
        return cells

    def run(self, targets, threads=None):
        """Score every cell for every target column; returns fitted winners.

        Returns (components, report_rows) where components is one fitted
        PceRegressor per target column.
        """
        targets = as_2d(targets, "targets")
        n, k = targets.shape
        n_cells = len(self.cells)
        rmse_sum = np.zeros((n_cells, k))
        failed = np.zeros((n_cells, k), dtype=bool)

        for kind in self.grid.kinds:
            self._score_linear(kind, targets, rmse_sum, failed)
            self._score_penalized(kind, targets, rmse_sum, failed, threads)

        components = []
        for j in range(k):
            best = None
            best_key = None
            for i, cell in enumerate(self.cells):
                if failed[i, j]:
                    continue
                key = (rmse_sum[i, j] / self.grid.folds,) + cell.tie_key
                if best_key is None or key < best_key:
                    best, best_key = cell, key
            if best is None:
                raise ConvergenceError(
                    f"every grid cell failed for component {j + 1}"
                )
            components.append(self._refit(best, targets[:, j], best_key[0]))
        return components

    def _score_linear(self, kind, targets, rmse_sum, failed):
        if solvers.FIT_LINEAR not in self.grid.fit_types:
            return
        plan = self.plans[kind]
        B = self.basis_full[kind]
        for test_idx in self.folds:
            train_mask = np.ones(B.shape[0], dtype=bool)
            train_mask[test_idx] = False
            Btr, Bte = B[train_mask], B[test_idx]
            Ytr, Yte = targets[train_mask], targets[test_idx]
            ntr = Btr.shape[0]
            K_tr = np.zeros((ntr, ntr))
            K_x = np.zeros((Bte.shape[0], ntr))
            prev = -1
            for order in self.grid.orders:
                new = np.nonzero((plan.levels > prev) & (plan.levels <= order))[0]
                prev = order
                if new.size:
                    Xn = Btr[:, new]
                    K_tr += Xn @ Xn.T
                    K_x += Bte[:, new] @ Xn.T
                lam, V = np.linalg.eigh(K_tr)
                cutoff = (solvers.RANK_RCOND**2) * max(float(lam[-1]), 0.0)
                inv = np.where(lam > cutoff, 1.0, 0.0) / np.where(lam > cutoff, lam, 1.0)
                alpha = V @ (inv[:, None] * (V.T @ Ytr))
                preds = K_x @ alpha
                fold_rmse = np.sqrt(np.mean((preds - Yte) ** 2, axis=0))
                pos = self._cell_pos[_Cell(kind, order, solvers.FIT_LINEAR, 0.0)]
                rmse_sum[pos] += fold_rmse

    def _score_penalized(self, kind, targets, rmse_sum, failed, threads):
        path_types = [t for t in self.grid.fit_types if t != solvers.FIT_LINEAR]
        if not path_types:
            return
        plan = self.plans[kind]
        B = self.basis_full[kind]
        lam_desc = sorted(self.grid.penalties, reverse=True)
        k = targets.shape[1]
        universes = {}
        for order in self.grid.orders:
            cols = plan.columns(order)
            universes[order] = cols[cols > 0] - 1  # standardized coords drop col 0
        for test_idx in self.folds:
            train_mask = np.ones(B.shape[0], dtype=bool)
            train_mask[test_idx] = False
            Ytr, Yte = targets[train_mask], targets[test_idx]
            std = solvers._Standardized(B[train_mask])
            A_te = (B[test_idx][:, 1:] - std.col_mean) / std.col_scale

            def score_target(j):
                y = Ytr[:, j]
                y_mean = float(y.mean())
                yc = y - y_mean
                for order in self.grid.orders:
                    for fit_type in path_types:
                        solver = solvers.WorkingSetSolver(
                            std, yc, universe=universes[order]
                        )
                        prev = None
                        for lam in lam_desc:
                            pos = self._cell_pos[_Cell(kind, order, fit_type, lam)]
                            try:
                                solver.solve_path_to(fit_type, lam, from_penalty=prev)
                            except ConvergenceError:
                                failed[pos, j] = True
                                prev = lam
                                continue
                            prev = lam
                            nz = np.nonzero(solver.w)[0]
                            pred = y_mean + A_te[:, nz] @ solver.w[nz]
                            rmse_sum[pos, j] += float(
                                np.sqrt(np.mean((pred - Yte[:, j]) ** 2))
                            )

            if threads and threads > 1 and k > 1:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    list(pool.map(score_target, range(k)))
            else:
                for j in range(k):
                    score_target(j)

    def _refit(self, cell, y, cv_rmse):
        plan = self.plans[cell.kind]
        cols = plan.columns(cell.order)
        basis = self.basis_full[cell.kind][:, cols]
        coef = solvers.fit_penalized(basis, y, cell.fit_type, cell.penalty)
        return PceRegressor(
            index_set=plan.subset(cell.order),
            coefficients=coef,
            fit_type=cell.fit_type,
            penalty=cell.penalty,
            cv_rmse=float(cv_rmse),
        )


def cv_select(X_canonical, eta_j, grid=None, seed=0, threads=None):
    """Grid-search one component over the hyperparameter grid.

    Every cell is scored with the same seeded fold partition; the winner
    (lowest mean RMSE across folds, deterministic tie-breaking) is refitted
    on all data.
    """
    grid = grid or HyperGrid()
    eta = as_1d(eta_j, "eta_j")
    engine = _CvEngine(X_canonical, grid, seed)
    components = engine.run(eta[:, None], threads=threads)
    return components[0]


class SurrogateModel:
    """Composite surrogate: PCA basis plus one PCE per retained component.

    Predictions are ``mean + sum_j f_j(z) psi_j`` with z the canonical image
    of the physical parameter vector.
    """

    def __init__(self, space, basis, components, schema):
        if len(components) != basis.k:
            raise ValueError("number of component models must match the basis rank")
        for c in components:
            if c.index_set.dimension != space.dimension:
                raise ValueError("component dimension does not match the parameter space")
        self.space = space
        self.basis = basis
        self.components = list(components)
        self.schema = schema
        self._build_eval_tables()

    def _build_eval_tables(self):
        idx = np.vstack([c.index_set.indices for c in self.components])
        self._all_indices = idx
        self._coef = np.concatenate([c.coefficients for c in self.components])
        lengths = [len(c.index_set) for c in self.components]
        self._bounds = np.concatenate([[0], np.cumsum(lengths)])
        self._p_max = int(idx.max()) if idx.size else 0

    @property
    def k(self):
        return len(self.components)

    def _term_values(self, Z):
        vals = np.ones((Z.shape[0], self._all_indices.shape[0]))
        for i in range(Z.shape[1]):
            V = legendre_design(Z[:, i], self._p_max)
            vals *= V[:, self._all_indices[:, i]]
        return vals

    def component_scores(self, theta_phys):
        """Predicted principal-component scores at one physical point."""
        z = self.space.to_canonical(theta_phys)
        terms = self._term_values(z[None, :])[0] * self._coef
        return np.add.reduceat(terms, self._bounds[:-1])

    def component_scores_matrix(self, thetas_phys):
        Z = self.space.to_canonical_matrix(thetas_phys)
        terms = self._term_values(Z) * self._coef
        return np.add.reduceat(terms, self._bounds[:-1], axis=1)

    def component_score_gradient(self, theta_phys):
        """Jacobian of the predicted scores w.r.t. physical parameters: (k, d)."""
        z = self.space.to_canonical(theta_phys)
        d = self.space.dimension
        values = [legendre_design(z[i : i + 1], self._p_max)[0] for i in range(d)]
        derivs = [legendre_derivative_design(z[i : i + 1], self._p_max)[0] for i in range(d)]
        idx = self._all_indices
        grad_terms = np.empty((idx.shape[0], d))
        for kdim in range(d):
            t = np.ones(idx.shape[0])
            for i in range(d):
                table = derivs[i] if i == kdim else values[i]
                t *= table[idx[:, i]]
            grad_terms[:, kdim] = t
        grad_terms *= self._coef[:, None]
        dg_dz = np.add.reduceat(grad_terms, self._bounds[:-1], axis=0)
        return dg_dz * (2.0 / self.space.span)[None, :]

    def predict(self, theta_phys):
        """Full stacked prediction at a physical parameter vector."""
        g = self.component_scores(theta_phys)
        values = self.basis.mean_ + g @ self.basis.components_
        return StackedVector(values=values, schema=self.schema)

    def predict_matrix(self, thetas_phys):
        G = self.component_scores_matrix(thetas_phys)
        return self.basis.mean_ + G @ self.basis.components_

    def predict_gradient(self, theta_phys):
        """Jacobian of the stacked prediction w.r.t. physical parameters: (m, d)."""
        dg = self.component_score_gradient(theta_phys)
        return self.basis.components_.T @ dg

    def surrogate_r2(self, ensemble):
        """Overall pooled R-squared and the per-grid-point R-squared map."""
        if ensemble.schema.keys != self.schema.keys:
            raise ValueError("ensemble and surrogate must share a schema")
        if ensemble.design is None:
            raise ValueError("ensemble must carry its design to score the surrogate")
        preds = self.predict_matrix(ensemble.design.values)
        truth = ensemble.values
        resid_sq = np.sum((truth - preds) ** 2, axis=0)
        centered = truth - truth.mean(axis=0)
        var_sq = np.sum(centered**2, axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            r2 = np.where(var_sq > 0, 1.0 - resid_sq / np.where(var_sq > 0, var_sq, 1.0), np.nan)
        total_var = float(var_sq.sum())
        overall = 1.0 - float(resid_sq.sum()) / total_var if total_var > 0 else np.nan
        return overall, DiagnosticVector(values=r2, schema=self.schema)

    def selection_report(self):
        """Per-component selection summary in component order."""
        rows = []
        for j, c in enumerate(self.components, start=1):
            rows.append(
                {
                    "pc": j,
                    "fit_type": c.fit_type,
                    "order": c.order,
                    "kind": c.kind,
                    "penalty": c.penalty,
                    "cv_rmse": c.cv_rmse,
                }
            )
        return rows

    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        self.basis.save(directory)
        self.schema.save(os.path.join(directory, "schema.json"))
        self.space.save(os.path.join(directory, "space.json"))
        meta = []
        for j, c in enumerate(self.components):
            containers.save_matrix(
                os.path.join(directory, f"component_{j:03d}"), c.coefficients[None, :]
            )
            meta.append(
                {
                    "fit_type": c.fit_type,
                    "penalty": float(c.penalty),
                    "cv_rmse": float(c.cv_rmse),
                    "index_set": c.index_set.to_json_dict(),
                }
            )
        with open(os.path.join(directory, "model.json"), "w", encoding="utf-8") as fh:
            json.dump({"components": meta}, fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, directory):
        from autocal.design import ParameterSpace
        from autocal.fields import FieldSchema
        from autocal.reduction import PcaReducer

        space = ParameterSpace.load(os.path.join(directory, "space.json"))
        schema = FieldSchema.load(os.path.join(directory, "schema.json"))
        basis = PcaReducer.load(directory)
        with open(os.path.join(directory, "model.json"), encoding="utf-8") as fh:
            meta = json.load(fh)
        components = []
        for j, entry in enumerate(meta["components"]):
            coef = containers.load_matrix(os.path.join(directory, f"component_{j:03d}"))[0]
            components.append(
                PceRegressor(
                    index_set=MultiIndexSet.from_json_dict(entry["index_set"]),
                    coefficients=coef,
                    fit_type=entry["fit_type"],
                    penalty=entry["penalty"],
                    cv_rmse=entry["cv_rmse"],
                )
            )
        return cls(space=space, basis=basis, components=components, schema=schema)


def fit_surrogate(ensemble, basis, grid=None, seed=0, threads=None):
    """Fit the composite surrogate to a reduced ensemble.

    Each retained component gets an independent grid search, all sharing
    one seeded fold partition so fold-level basis work is reused. Fitting
    is deterministic for a fixed seed regardless of thread count.
    """
    if ensemble.design is None:
        raise ValueError("ensemble must carry its design to fit a surrogate")
    grid = grid or HyperGrid()
    space = ensemble.design.space
    Z = ensemble.design.to_canonical()
    engine = _CvEngine(Z, grid, derive_seed(seed, "cv-folds"))
    components = engine.run(basis.scores_, threads=threads)
    return SurrogateModel(space=space, basis=basis, components=components,
                          schema=ensemble.schema)
