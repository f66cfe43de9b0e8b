"""Backward solution of the recursive cost by least-squares Monte Carlo.

The pair (Y, Z) solves

    -dY(t) = f(t, X, X1, X2, Y, Z, u) dt - Z(t) dW(t),
     Y(T)  = phi(X(T), X1(T)),

and the cost of the run is J = -Y(s).  Conditional expectations are
estimated by ridge-regularized polynomial regression on (x, x1); the
discrete delay x2 is excluded from the basis by default (the value
function is treated as independent of it) and can be re-admitted for
diagnostics.  A plain Monte Carlo oracle for drivers of the linear form
a + fbar(t) y + gbar(t) z provides an independent second route to Y(s).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from itertools import combinations_with_replacement
from typing import List, Optional, Tuple

import numpy as np

from .core import ConfigurationError, LinearDriver, derived_rng
from .smdde import TrajectoryBundle


# ---------------------------------------------------------------------------
# regression basis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegressionBasis:
    """Polynomial basis in (x, x1) of total degree <= degree.

    ``eps_reg`` is the relative ridge weight; ``include_x2`` re-admits the
    discrete delay into the feature set for diagnostics.
    """

    degree: int = 2
    eps_reg: float = 1e-9
    include_x2: bool = False

    def __post_init__(self):
        if self.degree < 1:
            raise ConfigurationError("basis degree must be >= 1")
        if self.eps_reg < 0:
            raise ConfigurationError("ridge weight must be >= 0")

    def design(self, x: np.ndarray, x1: np.ndarray, x2: Optional[np.ndarray] = None) -> np.ndarray:
        cols = [np.ones_like(x)]
        vars_: List[np.ndarray] = [x, x1]
        if self.include_x2:
            if x2 is None:
                raise ConfigurationError("basis includes x2 but none was supplied")
            vars_.append(x2)
        for deg in range(1, self.degree + 1):
            for combo in combinations_with_replacement(range(len(vars_)), deg):
                term = np.ones_like(x)
                for idx in combo:
                    term = term * vars_[idx]
                cols.append(term)
        return np.column_stack(cols)


class ConditionalRegression:
    """One time-step conditional-expectation operator.

    Fits ridge-regularized least squares on a fixed design matrix; columns
    with (numerically) zero variance beyond the intercept are dropped so
    degenerate states (e.g. the deterministic initial slice) reduce to a
    plain mean.
    """

    _COND_LIMIT = 1e12

    def __init__(self, design: np.ndarray, eps_reg: float):
        self.keep = np.ones(design.shape[1], dtype=bool)
        spread = design.max(axis=0) - design.min(axis=0)
        self.keep[1:] = spread[1:] > 1e-12
        A = design[:, self.keep]
        self.scale = np.maximum(np.abs(A).max(axis=0), 1.0)
        A = A / self.scale
        self.A = A
        gram = A.T @ A
        lam = eps_reg * max(float(np.trace(gram)) / gram.shape[0], 1e-300)
        # the intercept is never penalized, so constant responses fit exactly
        penalty = np.eye(gram.shape[0])
        penalty[0, 0] = 0.0
        for attempt in range(6):
            try:
                mat = gram + lam * penalty
                cond = np.linalg.cond(mat)
                if cond > self._COND_LIMIT:
                    raise np.linalg.LinAlgError(f"condition number {cond:.2e}")
                self.factor = np.linalg.cholesky(mat)
                self.lam = lam
                if attempt:
                    warnings.warn(
                        f"rank-deficient regression; ridge increased to {lam:.2e}",
                        RuntimeWarning, stacklevel=2)
                return
            except np.linalg.LinAlgError:
                lam = max(lam, 1e-12) * 100.0
        raise ConfigurationError("regression design is irreparably rank-deficient")

    def fit_values(self, response: np.ndarray) -> np.ndarray:
        """Fitted conditional expectation of response at the design points."""
        rhs = self.A.T @ response
        coef = np.linalg.solve(self.factor.T, np.linalg.solve(self.factor, rhs))
        return self.A @ coef


# ---------------------------------------------------------------------------
# backward solver
# ---------------------------------------------------------------------------

@dataclass
class BackwardSolution:
    """Per-path (Y, Z) arrays on grid indices 0..n plus the initial value.

    Y[:, n] equals phi(X(T), X1(T)) exactly per path.  ``y_s`` is the mean
    of Y at the start; ``y_s_se`` is the Monte Carlo standard error taken
    from the pathwise integral representation of Y(s).
    """

    bundle: TrajectoryBundle
    Y: np.ndarray
    Z: np.ndarray
    y_s: float
    y_s_se: float


def _lipschitz_gate(coeffs, bundle: TrajectoryBundle, dt: float):
    n = bundle.grid.n_steps
    probe_steps = sorted({0, n // 2, max(n - 1, 0)})
    worst = 0.0
    for i in probe_steps:
        t = bundle.grid.time(i)
        x = bundle.x_at(i)
        fy = coeffs.f_y(t, x, bundle.X1[:, i], bundle.X2[:, i], x * 0.0, x * 0.0,
                        bundle.u_at(i))
        fz = coeffs.f_z(t, x, bundle.X1[:, i], bundle.X2[:, i], x * 0.0, x * 0.0,
                        bundle.u_at(i))
        worst = max(worst, float(np.nanmax(np.abs(fy))), float(np.nanmax(np.abs(fz))))
    if worst * dt >= 1.0:
        raise ConfigurationError(
            f"step too large for driver Lipschitz constant ({worst:.3g} * dt >= 1)")


def solve_bsde_lsmc(bundle: TrajectoryBundle, coeffs, basis: RegressionBasis) -> BackwardSolution:
    """Backward LSMC sweep for the recursive cost.

    Per step: Z is regressed from martingale residuals
    (Y(t+dt) - E[Y(t+dt)|state]) * dW / dt, then Y(t) is the fitted
    continuation plus one implicit Picard correction of the driver (the
    contraction factor is Lipschitz * dt, so a single sweep is
    sub-tolerance).
    """
    if bundle.dW is None:
        raise ConfigurationError("bundle must store Brownian increments for the backward solve")
    grid = bundle.grid
    n, dt = grid.n_steps, grid.dt
    _lipschitz_gate(coeffs, bundle, dt)
    ok = ~bundle.diverged
    if not np.any(ok):
        raise ConfigurationError("all paths diverged; nothing to solve")
    n_paths = bundle.n_paths
    Y = np.full((n_paths, n + 1), np.nan)
    Z = np.full((n_paths, n + 1), np.nan)
    xT = bundle.x_at(n)
    Y[ok, n] = coeffs.phi(xT[ok], bundle.X1[ok, n])
    for i in range(n - 1, -1, -1):
        t = grid.time(i)
        x = bundle.x_at(i)[ok]
        x1 = bundle.X1[ok, i]
        x2 = bundle.X2[ok, i]
        design = basis.design(x, x1, x2 if basis.include_x2 else None)
        reg = ConditionalRegression(design, basis.eps_reg)
        y_next = Y[ok, i + 1]
        y_hat = reg.fit_values(y_next)
        resid = (y_next - y_hat) * bundle.dW[ok, i] / dt
        z_hat = reg.fit_values(resid)
        u_ok = bundle.u_at(i, mask=ok)
        Y[ok, i] = y_hat + coeffs.f(t, x, x1, x2, y_hat, z_hat, u_ok) * dt
        Z[ok, i] = z_hat
    Z[ok, n] = Z[ok, n - 1] if n > 0 else 0.0
    y_s = float(np.mean(Y[ok, 0]))
    y_s_se = _pathwise_se(bundle, coeffs, Y, Z, ok)
    return BackwardSolution(bundle=bundle, Y=Y, Z=Z, y_s=y_s, y_s_se=y_s_se)


def _pathwise_se(bundle: TrajectoryBundle, coeffs, Y: np.ndarray, Z: np.ndarray,
                 ok: np.ndarray) -> float:
    """Standard error of Y(s) from the pathwise representation
    phi(X_T, X1_T) + sum_i f(.) dt, using the solved (Y, Z) in the driver."""
    grid = bundle.grid
    n, dt = grid.n_steps, grid.dt
    total = coeffs.phi(bundle.x_at(n)[ok], bundle.X1[ok, n]).astype(float)
    for i in range(n):
        t = grid.time(i)
        u_ok = bundle.u_at(i, mask=ok)
        total += coeffs.f(t, bundle.x_at(i)[ok], bundle.X1[ok, i], bundle.X2[ok, i],
                          Y[ok, i], Z[ok, i], u_ok) * dt
    return float(np.std(total) / np.sqrt(total.size))


def cost_functional_J(solution: BackwardSolution) -> float:
    """Recursive cost of the run: J = -Y(s)."""
    return -solution.y_s


# ---------------------------------------------------------------------------
# independent oracle for linear drivers
# ---------------------------------------------------------------------------

def assert_linear_driver(coeffs, driver: LinearDriver, seed: int = 0, n_probe: int = 64,
                         tol: float = 1e-8):
    """Check f(t,x,x1,x2,y,z,u) == f(t,...,0,0,u) + fbar(t) y + gbar(t) z
    on random probes; raise if the driver is not of the linear form."""
    rng = derived_rng(seed, 202)
    pts = rng.normal(0.0, 2.0, size=(n_probe, 7))
    t = np.abs(pts[:, 0])
    x, x1, x2, y, z, u = (pts[:, i] for i in range(1, 7))
    full = coeffs.f(t, x, x1, x2, y, z, u)
    linear = coeffs.f(t, x, x1, x2, 0.0, 0.0, u) + driver.fbar_at(t) * y + driver.gbar_at(t) * z
    err = float(np.max(np.abs(full - linear)))
    if err > tol * (1.0 + float(np.max(np.abs(full)))):
        raise ConfigurationError(
            f"oracle inapplicable: driver deviates from the linear form by {err:.3e}")


def linear_driver_oracle(coeffs, driver: LinearDriver, bundle: TrajectoryBundle,
                         ) -> Tuple[float, float]:
    """Plain Monte Carlo estimate of Y(s) for a linear driver.

    Y(s) = E[ int_s^T e^{F(t)} a(t, X, X1, X2, u) dt + e^{F(T)} phi(X(T), X1(T)) ],
    F(t) = int_s^t fbar(r) dr, using forward paths only.  When gbar is
    nonzero the expectation is under the shifted measure, so the supplied
    bundle must have been simulated with the Girsanov-shifted drift
    b + sigma*gbar (see ``connect.girsanov_reduce``).

    Returns (estimate, standard error).
    """
    assert_linear_driver(coeffs, driver, seed=0)
    grid = bundle.grid
    n, dt = grid.n_steps, grid.dt
    times = grid.times()
    fbar = driver.fbar_at(times)
    cumF = np.concatenate([[0.0], np.cumsum(0.5 * (fbar[1:] + fbar[:-1]) * dt)])
    disc = np.exp(cumF)
    ok = ~bundle.diverged
    total = disc[n] * coeffs.phi(bundle.x_at(n)[ok], bundle.X1[ok, n]).astype(float)
    # trapezoid in time for the running-cost integral
    for i in range(n + 1):
        w = dt if 0 < i < n else 0.5 * dt
        t = times[i]
        u_ok = bundle.u_at(min(i, n - 1), mask=ok)
        a = coeffs.a_part(t, bundle.x_at(i)[ok], bundle.X1[ok, i], bundle.X2[ok, i], u_ok)
        total += w * disc[i] * a
    est = float(np.mean(total))
    se = float(np.std(total) / np.sqrt(total.size))
    return est, se
