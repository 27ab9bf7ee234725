"""Regression solvers for polynomial-chaos coefficients.

Ordinary least squares goes through a rank-revealing solve (singular values
below 1e-10 of the largest are dropped). Lasso and elastic-net are solved
by cyclic coordinate descent on internally standardized columns with an
unpenalized intercept; coefficients come back in the unstandardized basis.

The descent drives a screened working set (strong-rule candidates plus
KKT violators), walks penalty values by geometric continuation for warm
starts, and fast-forwards stalls with an exact solve on the active sign
pattern. Convergence is still declared by the cyclic criterion: a full
pass moving no coefficient by more than the tolerance.
"""

import numpy as np
from numba import njit

from autocal.exceptions import ConvergenceError

RANK_RCOND = 1e-10
CD_TOL = 1e-8
CD_MAX_ITER = 100_000

FIT_LINEAR = "linear"
FIT_LASSO = "lasso"
FIT_ELASTIC_NET = "elastic-net"
FIT_TYPES = (FIT_LINEAR, FIT_LASSO, FIT_ELASTIC_NET)

ELASTIC_NET_L1_RATIO = 0.5

_PATH_RATIO = 1.6  # max penalty ratio between continuation steps


@njit(cache=True, nogil=True)
def _cd_sweep(A, colsq, r, w, l1, l2, active_only):  # pragma: no cover - jit
    n, p = A.shape
    max_delta = 0.0
    for j in range(p):
        wj = w[j]
        if active_only and wj == 0.0:
            continue
        cj = colsq[j]
        if cj <= 0.0:
            continue
        rho = cj * wj
        for i in range(n):
            rho += A[i, j] * r[i]
        if rho > l1:
            new = (rho - l1) / (cj + l2)
        elif rho < -l1:
            new = (rho + l1) / (cj + l2)
        else:
            new = 0.0
        delta = new - wj
        if delta != 0.0:
            for i in range(n):
                r[i] -= delta * A[i, j]
            w[j] = new
            if abs(delta) > max_delta:
                max_delta = abs(delta)
    return max_delta


@njit(cache=True, nogil=True)
def _objective(r, w, l1, l2):  # pragma: no cover - jit
    value = 0.0
    for i in range(r.shape[0]):
        value += r[i] * r[i]
    for j in range(w.shape[0]):
        value += 2.0 * l1 * abs(w[j]) + l2 * w[j] * w[j]
    return value


@njit(cache=True, nogil=True)
def _active_set_solve(A, y, w, r, l1, l2):  # pragma: no cover - jit
    """Jump to the stationary point on the current active sign pattern.

    The candidate is accepted only when signs stay consistent (flipped
    coordinates are dropped and the solve retried) and the objective does
    not increase, so this only accelerates; cyclic sweeps afterwards still
    decide convergence.
    """
    n, p = A.shape
    members = np.empty(p, dtype=np.int64)
    ns = 0
    for j in range(p):
        if w[j] != 0.0:
            members[ns] = j
            ns += 1
    if ns == 0 or ns > 1200:  # cubic-solve cost guard
        return False
    for _ in range(30):
        As = np.empty((n, ns))
        signs = np.empty(ns)
        for k in range(ns):
            j = members[k]
            for i in range(n):
                As[i, k] = A[i, j]
            signs[k] = 1.0 if w[j] > 0.0 else -1.0
        M = As.T @ As
        trace = 0.0
        for k in range(ns):
            trace += M[k, k]
        b = As.T @ y
        for k in range(ns):
            b[k] -= l1 * signs[k]
        if l2 <= 0.0 and ns >= n:
            # singular sign-fixed system: take its least-squares point
            ws, _, _, _ = np.linalg.lstsq(M, b, rcond=1e-12)
        else:
            ridge = l2 + 1e-12 * trace / ns
            for k in range(ns):
                M[k, k] += ridge
            ws = np.linalg.solve(M, b)
        finite = True
        for k in range(ns):
            if not np.isfinite(ws[k]):
                finite = False
                break
        if not finite:
            return False
        n_flipped = 0
        for k in range(ns):
            if ws[k] * signs[k] < 0.0:
                n_flipped += 1
        if n_flipped == 0:
            r_new = y - As @ ws
            f_new = _objective(r_new, ws, l1, l2)
            f_cur = _objective(r, w, l1, l2)
            if f_new <= f_cur + 1e-12 * (1.0 + abs(f_cur)):
                for k in range(ns):
                    w[members[k]] = ws[k]
                for i in range(n):
                    r[i] = r_new[i]
                return True
            return False
        kept = 0
        for k in range(ns):
            if ws[k] * signs[k] < 0.0:
                w[members[k]] = 0.0
            else:
                members[kept] = members[k]
                kept += 1
        ns = kept
        if ns == 0:
            for i in range(n):
                r[i] = y[i]
            return False
        r_tmp = y.copy()
        for k in range(ns):
            j = members[k]
            for i in range(n):
                r_tmp[i] -= A[i, j] * w[j]
        for i in range(n):
            r[i] = r_tmp[i]
    return False


@njit(cache=True, nogil=True)
def _cd_solve(A, colsq, y, w, l1, l2, tol, max_iter):  # pragma: no cover - jit
    """Minimize ||y - A w||^2 + 2*l1*||w||_1 + l2*||w||_2^2 in place.

    Returns the sweep count, or -1 at the iteration cap.
    """
    r = y - A @ w
    sweeps = 0
    cooldown = 0  # rounds to skip exact solves after a rejected attempt
    skip_until = 0
    rounds = 0
    while sweeps < max_iter:
        delta = _cd_sweep(A, colsq, r, w, l1, l2, False)
        sweeps += 1
        if delta <= tol:
            return sweeps
        inner = 0
        while inner < 4 and sweeps < max_iter:
            delta = _cd_sweep(A, colsq, r, w, l1, l2, True)
            sweeps += 1
            inner += 1
            if delta <= tol:
                break
        rounds += 1
        if delta > tol and sweeps < max_iter and rounds >= skip_until:
            if _active_set_solve(A, y, w, r, l1, l2):
                cooldown = 0
            else:
                cooldown = min(2 * cooldown + 1, 64)
            skip_until = rounds + cooldown
            sweeps += 1
    return -1


def l1_l2(fit_type, penalty):
    """Kernel parameters for one penalized cell.

    The kernel minimizes ||y - A w||^2 + 2*l1*||w||_1 + l2*||w||_2^2, so
    the published objective ||y - A w||^2 + penalty*Pen(w) maps to
    l1 = penalty/2 for lasso (Pen the L1 norm) and, for elastic-net,
    Pen(w) = r*||w||_1 + (1-r)/2*||w||_2^2 with L1 ratio r = 0.5.
    """
    if fit_type == FIT_LASSO:
        return 0.5 * penalty, 0.0
    if fit_type == FIT_ELASTIC_NET:
        r = ELASTIC_NET_L1_RATIO
        return 0.5 * penalty * r, 0.5 * penalty * (1.0 - r)
    raise ValueError(f"fit type {fit_type!r} takes no penalty")


def ols_min_norm(A, y, rcond=RANK_RCOND):
    """Least-squares solve with singular values below rcond*max dropped.

    For wide matrices this is the minimum-norm interpolator; computed via
    the Gram matrix of the smaller side so cost scales with min(n, p).
    """
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = A.shape
    if n <= p:
        K = A @ A.T
        lam, V = np.linalg.eigh(K)
        cutoff = (rcond**2) * max(lam[-1], 0.0)
        inv = np.where(lam > cutoff, 1.0, 0.0) / np.where(lam > cutoff, lam, 1.0)
        alpha = V @ (inv * (V.T @ y))
        return A.T @ alpha
    K = A.T @ A
    lam, V = np.linalg.eigh(K)
    cutoff = (rcond**2) * max(lam[-1], 0.0)
    inv = np.where(lam > cutoff, 1.0, 0.0) / np.where(lam > cutoff, lam, 1.0)
    return V @ (inv * (V.T @ (A.T @ y)))


class _Standardized:
    """Centered, unit-scale view of a basis matrix without its intercept column."""

    def __init__(self, basis):
        basis = np.asarray(basis, dtype=float)
        self.X = np.ascontiguousarray(basis[:, 1:])
        self.col_mean = self.X.mean(axis=0)
        centered = self.X - self.col_mean
        scale = np.sqrt((centered**2).mean(axis=0))
        self.col_scale = np.where(scale > 0, scale, 1.0)
        self.A = np.ascontiguousarray(centered / self.col_scale)
        self.colsq = np.ascontiguousarray((self.A**2).sum(axis=0))

    def destandardize(self, w_std, y_mean):
        coef = np.empty(w_std.shape[0] + 1)
        coef[1:] = w_std / self.col_scale
        coef[0] = y_mean - float(self.col_mean @ coef[1:])
        return coef


class WorkingSetSolver:
    """Screened coordinate descent over a (possibly restricted) column universe.

    ``universe`` holds global column ids of the standardized matrix that a
    fit may use; the working set starts from strong-rule candidates and
    grows by KKT violators until a full pass over the universe would move
    nothing beyond the tolerance.
    """

    def __init__(self, std, yc, universe=None, tol=CD_TOL, max_iter=CD_MAX_ITER):
        self.std = std
        self.yc = np.ascontiguousarray(yc)
        self.universe = (
            np.arange(std.A.shape[1]) if universe is None else np.asarray(universe)
        )
        self.tol = tol
        self.max_iter = max_iter
        self.w = np.zeros(std.A.shape[1])
        self._corr = None  # universe correlations at the last solution
        self._prev_l1 = None

    def _residual(self):
        nz = np.nonzero(self.w)[0]
        if nz.size == 0:
            return self.yc.copy()
        return self.yc - self.std.A[:, nz] @ self.w[nz]

    def solve(self, l1, l2):
        """Converge at one penalty; returns total sweeps. Raises at the cap."""
        A, colsq = self.std.A, self.std.colsq
        r = self._residual()
        if self._corr is not None and self._prev_l1 is not None:
            keep = np.abs(self._corr) >= max(2.0 * l1 - self._prev_l1, 0.0)
        else:
            self._corr = A[:, self.universe].T @ r
            keep = np.abs(self._corr) >= l1
        working = self.universe[keep]
        working = np.union1d(working, np.nonzero(self.w)[0])
        sweeps_total = 0
        for _ in range(40):
            if working.size:
                sub = np.ascontiguousarray(A[:, working])
                w_sub = self.w[working].copy()
                sweeps = _cd_solve(
                    sub, colsq[working], self.yc, w_sub, l1, l2,
                    self.tol, self.max_iter - sweeps_total,
                )
                if sweeps < 0:
                    raise ConvergenceError(
                        f"coordinate descent hit the {self.max_iter}-sweep cap "
                        f"(l1={l1!r}, columns={working.size})"
                    )
                sweeps_total += sweeps
                self.w[working] = w_sub
                r = self._residual()
            self._corr = A[:, self.universe].T @ r
            gain = (np.abs(self._corr) - l1) / (colsq[self.universe] + l2)
            violating = self.universe[gain > self.tol]
            new = np.setdiff1d(violating, working, assume_unique=False)
            if new.size == 0:
                self._prev_l1 = l1
                return max(sweeps_total, 1)
            working = np.union1d(working, new)
            sweeps_total += 1
        raise ConvergenceError("working set failed to stabilize")

    def solve_path_to(self, fit_type, penalty, from_penalty=None):
        """Continuation from ``from_penalty`` (or cold) down to ``penalty``."""
        if from_penalty is None or from_penalty <= penalty:
            lam_hi = 2.0 * float(np.abs(self._corr_at_current()).max()) + 1e-300
            if penalty >= lam_hi:
                return self.solve(*l1_l2(fit_type, penalty))
            from_penalty = lam_hi
        steps = max(int(np.ceil(np.log(from_penalty / penalty) / np.log(_PATH_RATIO))), 1)
        sweeps = 0
        for t in range(1, steps):
            lam_mid = from_penalty * (penalty / from_penalty) ** (t / steps)
            sweeps += self.solve(*l1_l2(fit_type, lam_mid))
        sweeps += self.solve(*l1_l2(fit_type, penalty))
        return sweeps

    def _corr_at_current(self):
        if self._corr is None:
            self._corr = self.std.A[:, self.universe].T @ self._residual()
        return self._corr


def fit_penalized(basis, y, fit_type, penalty, tol=CD_TOL, max_iter=CD_MAX_ITER):
    """Solve min ||y - basis @ coef||^2 + penalty * Pen(coef) for the coefficients.

    ``linear`` ignores the penalty and uses the rank-revealing solve. Lasso
    and elastic-net standardize the non-intercept columns internally, never
    penalize the intercept (column 0), and return coefficients in the
    unstandardized basis.
    """
    y = np.asarray(y, dtype=float)
    if fit_type == FIT_LINEAR:
        return ols_min_norm(basis, y)
    if fit_type not in (FIT_LASSO, FIT_ELASTIC_NET):
        raise ValueError(f"unknown fit type {fit_type!r}")
    if penalty < 0:
        raise ValueError("penalty must be nonnegative")
    std = _Standardized(basis)
    y_mean = float(y.mean())
    solver = WorkingSetSolver(std, y - y_mean, tol=tol, max_iter=max_iter)
    solver.solve_path_to(fit_type, float(penalty))
    return std.destandardize(solver.w, y_mean)
