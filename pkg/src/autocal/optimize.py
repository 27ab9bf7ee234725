"""Bound-constrained quasi-Newton maximization of the calibration objective.

The search runs jointly over (theta, log s^2): the log transform removes
the positivity constraint on the scales, while canonical theta keeps box
bounds that the limited-memory solver projects onto. Multiple seeded
starts guard against the multimodal posteriors this problem produces.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from autocal import tables
from autocal.design import ParameterSpace, lhs_sample
from autocal.exceptions import OptimizationError
from autocal.loss import MODE_MAP, MODE_MLE
from autocal.validation import derive_seed

_LOG_S_LIMIT = 60.0  # s^2 confined to [e^-60, e^60]; effectively unbounded


@dataclass(frozen=True)
class OptimizerConfig:
    memory: int = 10
    max_iters: int = 500
    grad_tol: float = 1e-6
    n_starts: int = 50
    seed: int = 0
    max_line_search: int = 40

    def __post_init__(self):
        if min(self.memory, self.max_iters, self.n_starts, self.max_line_search) < 1:
            raise ValueError("optimizer counts must be positive")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")


@dataclass
class StartRecord:
    start_index: int
    objective: float
    converged: bool
    n_iters: int
    n_evals: int
    message: str


@dataclass
class CalibrationResult:
    """Calibrated parameter set with convergence metadata."""

    theta_hat: np.ndarray
    s_sq_hat: np.ndarray
    objective: float
    mode: str
    converged: bool
    n_evals: int
    start_index: int
    starts: list = field(default_factory=list)
    parameter_names: tuple = ()

    def to_json_dict(self):
        return {
            "mode": self.mode,
            "objective": float(self.objective),
            "converged": bool(self.converged),
            "n_evals": int(self.n_evals),
            "start_index": int(self.start_index),
            "parameter_names": list(self.parameter_names),
            "theta_hat": [float(v) for v in self.theta_hat],
            "s_sq_hat": [float(v) for v in self.s_sq_hat],
            "starts": [
                {
                    "start_index": s.start_index,
                    "objective": float(s.objective),
                    "converged": bool(s.converged),
                    "n_iters": int(s.n_iters),
                    "n_evals": int(s.n_evals),
                    "message": s.message,
                }
                for s in self.starts
            ],
        }

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)
            fh.write("\n")


def maximize(loss, mode=MODE_MAP, config=None, callback=None):
    """Maximize the calibration objective with multi-start projected L-BFGS.

    Starts are a seeded Latin hypercube over the parameter box; scales are
    initialized at their profiled values. The best start by final objective
    wins (ties broken by start index). ``callback``, when given, is invoked
    as callback(start_index, objective_trace) after each start.
    """
    if mode not in (MODE_MAP, MODE_MLE):
        raise ValueError(f"unknown mode {mode!r}")
    config = config or OptimizerConfig()
    space = loss.surrogate.space
    d = space.dimension
    free = loss.free_mask
    n_free = int(free.sum())

    cube = ParameterSpace(
        names=space.names, lower=-np.ones(d), upper=np.ones(d)
    )
    starts_z = lhs_sample(cube, config.n_starts, derive_seed(config.seed, "opt-starts")).values

    def unpack(x):
        theta = space.from_canonical(np.clip(x[:d], -1.0, 1.0))
        s_sq = loss.fixed_scales.copy()
        s_sq[free] = np.exp(x[d:])
        return theta, s_sq

    def neg_objective(x):
        theta, s_sq = unpack(x)
        value = loss.log_objective(theta, s_sq, mode=mode)
        return -value

    def neg_gradient(x):
        theta, s_sq = unpack(x)
        g_theta, g_s = loss.gradient_log_objective(theta, s_sq, mode=mode)
        g_z = g_theta * (space.span / 2.0)
        g_u = g_s[free] * s_sq[free]
        return -np.concatenate([g_z, g_u])

    bounds = [(-1.0, 1.0)] * d + [(-_LOG_S_LIMIT, _LOG_S_LIMIT)] * n_free
    best = None
    records = []
    for i in range(config.n_starts):
        z0 = starts_z[i]
        theta0 = space.from_canonical(z0)
        s0 = loss.profile_scales(theta0, mode=mode)
        x0 = np.concatenate([z0, np.log(s0[free])])
        trace = []

        def record_trace(xk):
            trace.append(-neg_objective(xk))

        res = minimize(
            neg_objective,
            x0,
            jac=neg_gradient,
            method="L-BFGS-B",
            bounds=bounds,
            callback=record_trace,
            options={
                "maxcor": config.memory,
                "maxiter": config.max_iters,
                "gtol": config.grad_tol,
                "ftol": 1e-14,
                "maxls": config.max_line_search,
            },
        )
        objective = -float(res.fun)
        records.append(
            StartRecord(
                start_index=i,
                objective=objective,
                converged=bool(res.success),
                n_iters=int(res.nit),
                n_evals=int(res.nfev),
                message=str(res.message),
            )
        )
        if callback is not None:
            callback(i, trace)
        if np.isfinite(objective) and (best is None or objective > best[0]):
            best = (objective, i, res)
    if best is None:
        raise OptimizationError("every optimization start failed", traces=records)
    objective, start_index, res = best
    theta_hat, s_sq_hat = unpack(res.x)
    return CalibrationResult(
        theta_hat=theta_hat,
        s_sq_hat=s_sq_hat,
        objective=objective,
        mode=mode,
        converged=records[start_index].converged,
        n_evals=records[start_index].n_evals,
        start_index=start_index,
        starts=records,
        parameter_names=space.names,
    )


BOUNDARY_RTOL = 1e-9


def compare_parameter_table(result, reference_sets, space):
    """Tabulate the estimate against named reference parameter sets.

    Rows are parameters; columns are each reference, the estimate, and the
    box bounds. Estimates within 1e-9 of a bound (relative to the bound
    range) are flagged as boundary solutions.
    """
    names = space.names
    refs = {k: np.asarray(v, dtype=float) for k, v in reference_sets.items()}
    for label, vec in refs.items():
        if vec.shape != (space.dimension,):
            raise ValueError(f"reference {label!r} has wrong dimension")
    rows = []
    for i, name in enumerate(names):
        span = space.span[i]
        est = float(result.theta_hat[i])
        at_bound = (
            abs(est - space.lower[i]) <= BOUNDARY_RTOL * span
            or abs(est - space.upper[i]) <= BOUNDARY_RTOL * span
        )
        row = {"parameter": name}
        for label, vec in refs.items():
            row[label] = float(vec[i])
        row["estimate"] = est
        row["min"] = float(space.lower[i])
        row["max"] = float(space.upper[i])
        row["at_bound"] = at_bound
        rows.append(row)
    return rows


def save_parameter_table(path, rows):
    if not rows:
        raise ValueError("empty comparison table")
    header = list(rows[0].keys())
    tables.write_csv(path, header, [[row[h] for h in header] for row in rows])


def load_parameter_table(path):
    header, raw = tables.read_csv(path)
    rows = []
    for line in raw:
        row = {}
        for h, cell in zip(header, line):
            if h == "parameter":
                row[h] = cell
            elif h == "at_bound":
                row[h] = cell == "True"
            else:
                row[h] = tables.parse_float(cell)
        rows.append(row)
    return rows
