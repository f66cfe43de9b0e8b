"""Euler-Maruyama simulation of the mixed-delay SDE.

The state follows

    dX(t) = b(t, X, X1, X2, u) dt + sigma(t, X, X1, X2, u) dW(t),  t in [s, T],
    X(t)  = history(t - s),                                        t in [s-delta, s],

with X1 the exponentially weighted distributed delay (recomputed by
trapezoidal quadrature each step) and X2(t) = X(t - delta) an exact grid
read.  Also provides the coupled-path comparison harness and the
p-th-moment-estimate harness.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Union

import numpy as np

from .core import (ConfigurationError, HistoryPath, TimeGrid, derived_rng,
                   x1_weights)

DIVERGENCE_LIMIT = 1e12

Control = Union[float, np.ndarray, Callable]


# ---------------------------------------------------------------------------
# noise
# ---------------------------------------------------------------------------

class NoiseSource:
    """Counter-based Gaussian increment streams.

    Path ``p`` owns a dedicated block of the Philox counter space (derived
    from the seed and the path index alone), and its k-th increment is the
    Box-Muller transform of the uniform pair (2k, 2k+1) from that block.
    Hence identical (seed, path, step) always yields the identical
    increment, independent of execution order, chunking, or thread count.

    ``substeps`` refines the underlying Brownian path: with substeps = r,
    increment k is the sum of r sub-increments of variance dt/r, so
    ``NoiseSource(seed, substeps=2)`` at step dt produces exactly the
    pairwise-coarsened increments of ``NoiseSource(seed)`` at step dt/2.
    That is the coupling used by strong-convergence studies.
    """

    _PATH_STRIDE = 1 << 40  # uniforms reserved per path

    def __init__(self, seed: int, substeps: int = 1):
        self.seed = int(seed)
        if self.seed < 0 or self.seed > 0xFFFFFFFFFFFFFFFF:
            raise ConfigurationError("seed must fit in 64 bits")
        if substeps < 1:
            raise ConfigurationError("substeps must be >= 1")
        self.substeps = int(substeps)

    def refine(self, factor: int) -> "NoiseSource":
        """Same Brownian paths, increments split ``factor`` times finer."""
        return NoiseSource(self.seed, self.substeps * int(factor))

    def increments(self, first_path: int, n_paths: int, n_steps: int, dt: float) -> np.ndarray:
        """Gaussian increments of variance dt, shape (n_paths, n_steps)."""
        r = self.substeps
        n_draws = n_steps * r
        if 2 * n_draws > self._PATH_STRIDE:
            raise ConfigurationError("step count exceeds the per-path counter block")
        out = np.empty((n_paths, n_steps))
        scale = np.sqrt(dt / r)
        two_pi = 2.0 * np.pi
        for row, path in enumerate(range(first_path, first_path + n_paths)):
            bg = np.random.Philox(key=self.seed)
            bg.advance(path * self._PATH_STRIDE)
            uni = np.random.Generator(bg).random(2 * n_draws)
            z = np.sqrt(-2.0 * np.log1p(-uni[0::2])) * np.cos(two_pi * uni[1::2])
            if r == 1:
                out[row] = z * scale
            else:
                out[row] = (z * scale).reshape(n_steps, r).sum(axis=1)
        return out


# ---------------------------------------------------------------------------
# trajectory container
# ---------------------------------------------------------------------------

@dataclass
class TrajectoryBundle:
    """Monte Carlo paths on a shared grid.

    ``X`` covers grid indices -m..n (column j holds index j - m); ``X1``
    covers 0..n.  ``X2`` is the exact m-step shift of X, exposed as a view.
    ``u`` is whatever control representation drove the run (scalar,
    per-step vector, or per-path matrix for feedback rules).
    """

    grid: TimeGrid
    lam: float
    X: np.ndarray
    X1: np.ndarray
    u: Optional[Union[float, np.ndarray]]
    dW: Optional[np.ndarray]
    diverged: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.X.shape[0]

    @property
    def X2(self) -> np.ndarray:
        """X2[:, i] = X(t_i - delta) for grid indices 0..n (a view on X)."""
        return self.X[:, : self.grid.n_steps + 1]

    def x_at(self, i: int) -> np.ndarray:
        """Current state at grid index i (i may be negative down to -m)."""
        return self.X[:, i + self.grid.m]

    def u_at(self, i: int, mask: Optional[np.ndarray] = None):
        """Control applied on [t_i, t_{i+1}); broadcastable against paths.

        With ``mask`` given, per-path controls are restricted to the
        selected paths (scalars pass through unchanged).
        """
        if self.u is None:
            return 0.0
        if np.isscalar(self.u):
            return self.u
        u = np.asarray(self.u)
        if u.ndim == 1:
            return u[min(i, u.size - 1)]
        col = u[:, min(i, u.shape[1] - 1)]
        return col[mask] if mask is not None else col


def _control_value(control: Control, t: float, x: np.ndarray, x1: np.ndarray, i: int):
    if callable(control):
        return np.asarray(control(t, x, x1), dtype=float)
    if np.isscalar(control):
        return float(control)
    arr = np.asarray(control, dtype=float)
    if arr.ndim == 1:
        return float(arr[i])
    return arr[:, i]


def _for_chunks(n_paths: int, chunk_size: int, threads: int, work: Callable[[int, int], None]):
    """Run work(lo, hi) over fixed-size path chunks, optionally threaded.

    Chunk boundaries are independent of the thread count and every chunk
    writes disjoint output slices, so results do not depend on scheduling.
    """
    bounds = [(lo, min(lo + chunk_size, n_paths)) for lo in range(0, n_paths, chunk_size)]
    if threads <= 1 or len(bounds) <= 1:
        for lo, hi in bounds:
            work(lo, hi)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(lambda b: work(*b), bounds))


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

def _step_chunk(coeffs, history: HistoryPath, control: Control, grid: TimeGrid,
                dW: np.ndarray, X_out: np.ndarray, X1_out: np.ndarray,
                u_out: Optional[np.ndarray]):
    """Euler-Maruyama over one path chunk; writes into the provided slices."""
    m, n, dt = grid.m, grid.n_steps, grid.dt
    w = x1_weights(m, coeffs.lam, dt)
    X_out[:, : m + 1] = history.samples
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n):
            col = i + m
            x = X_out[:, col]
            x1 = X_out[:, i : col + 1] @ w
            x2 = X_out[:, i]
            X1_out[:, i] = x1
            t = grid.time(i)
            u = _control_value(control, t, x, x1, i)
            if u_out is not None:
                u_out[:, i] = u
            drift = coeffs.b(t, x, x1, x2, u)
            diffusion = coeffs.sigma(t, x, x1, x2, u)
            nxt = x + drift * dt + diffusion * dW[:, i]
            bad = ~np.isfinite(nxt) | (np.abs(nxt) > DIVERGENCE_LIMIT)
            if np.any(bad):
                nxt = np.where(bad, np.nan, nxt)
            X_out[:, col + 1] = nxt
        X1_out[:, n] = X_out[:, n : n + m + 1] @ w


def simulate_smdde(coeffs, history: HistoryPath, control: Control, grid: TimeGrid,
                   noise: NoiseSource, n_paths: int, *, store_increments: bool = True,
                   threads: int = 1, chunk_size: int = 4096) -> TrajectoryBundle:
    """Simulate the mixed-delay SDE forward on [s, T].

    ``control`` is a scalar, a per-step vector of length n, or a feedback
    rule u(t, x, x1) evaluated pathwise.  Paths whose state leaves
    [-1e12, 1e12] or turns non-finite are aborted (NaN from that step on)
    and flagged in ``diverged``; registry families are linear-growth, so
    divergence indicates misconfiguration.
    """
    if history.m != grid.m:
        raise ConfigurationError(
            f"history has {history.m} delay steps, grid expects {grid.m}"
        )
    m, n = grid.m, grid.n_steps
    X = np.empty((n_paths, m + n + 1))
    X1 = np.empty((n_paths, n + 1))
    dW_full = np.empty((n_paths, n)) if store_increments else None
    u_full = np.empty((n_paths, n)) if callable(control) else None

    def work(lo: int, hi: int):
        dW = noise.increments(lo, hi - lo, n, grid.dt)
        if dW_full is not None:
            dW_full[lo:hi] = dW
        u_slice = u_full[lo:hi] if u_full is not None else None
        _step_chunk(coeffs, history, control, grid, dW, X[lo:hi], X1[lo:hi], u_slice)

    _for_chunks(n_paths, chunk_size, threads, work)
    diverged = ~np.all(np.isfinite(X), axis=1)
    stored_u: Optional[Union[float, np.ndarray]]
    if callable(control):
        stored_u = u_full
    elif np.isscalar(control):
        stored_u = float(control)
    else:
        stored_u = np.asarray(control, dtype=float)
    return TrajectoryBundle(grid=grid, lam=coeffs.lam, X=X, X1=X1, u=stored_u,
                            dW=dW_full, diverged=diverged)


# ---------------------------------------------------------------------------
# comparison harness
# ---------------------------------------------------------------------------

@dataclass
class ComparisonReport:
    """Outcome of a coupled-path ordering experiment.

    ``violation_fraction[i]`` is the fraction of paths with
    X1(t_i) < X2(t_i) - tol; ``worst_violation`` is the largest positive
    excursion of X2 - X1.  Hypothesis failures are reported, not raised:
    probing what happens when an assumption is dropped is part of the
    harness's job.
    """

    tol: float
    violation_fraction: np.ndarray
    worst_violation: float
    hypothesis_ok: bool
    hypothesis_failures: List[str] = field(default_factory=list)

    @property
    def max_violation_fraction(self) -> float:
        return float(self.violation_fraction.max())


def _comparison_hypotheses(coeffs1, coeffs2, hist1: HistoryPath, hist2: HistoryPath,
                           grid: TimeGrid, seed: int, n_samples: int = 512) -> List[str]:
    failures: List[str] = []
    if not np.all(hist1.samples >= hist2.samples - 1e-12):
        failures.append("history ordering violated: phi1 < phi2 somewhere")
    rng = derived_rng(seed, 101)
    scale = 1.0 + max(np.abs(hist1.samples).max(), np.abs(hist2.samples).max())
    t = rng.uniform(grid.s, grid.T, n_samples)
    x = rng.normal(0.0, scale, n_samples)
    x2 = rng.normal(0.0, scale, n_samples)
    x1 = rng.normal(0.0, scale, n_samples)
    u = np.zeros(n_samples)
    tol = 1e-9 * scale
    for label, cs in (("b1", coeffs1), ("b2", coeffs2)):
        if np.max(np.abs(cs.b_x1(t, x, x1, x2, u))) > tol:
            failures.append(f"{label} depends on x1 (outside the comparison form)")
    for label, cs in (("sigma1", coeffs1), ("sigma2", coeffs2)):
        if max(np.max(np.abs(cs.sigma_x1(t, x, x1, x2, u))),
               np.max(np.abs(cs.sigma_x2(t, x, x1, x2, u)))) > tol:
            failures.append(f"{label} depends on the delayed state (outside the comparison form)")
    b1 = coeffs1.b(t, x, x1, x2, u)
    b2 = coeffs2.b(t, x, x1, x2, u)
    if np.min(b1 - b2) < -tol:
        failures.append(f"drift ordering violated: min(b1 - b2) = {np.min(b1 - b2):.3e}")
    if np.min(coeffs1.b_x2(t, x, x1, x2, u)) < -tol:
        failures.append("b1 is decreasing in x2 somewhere")
    s_diff = np.max(np.abs(coeffs1.sigma(t, x, x1, x2, u) - coeffs2.sigma(t, x, x1, x2, u)))
    if s_diff > tol:
        failures.append(f"diffusions differ: max|sigma1 - sigma2| = {s_diff:.3e}")
    return failures


def simulate_coupled_pair(coeffs1, coeffs2, hist1: HistoryPath, hist2: HistoryPath,
                          grid: TimeGrid, noise: NoiseSource, n_paths: int, *,
                          tol: float = 0.0, threads: int = 1, chunk_size: int = 4096):
    """Simulate two instances with identical Brownian increments.

    Returns (bundle1, bundle2, ComparisonReport).  Under the ordering
    hypotheses (ordered histories and drifts, shared diffusion, drift
    increasing in the discrete delay), the coupled paths stay ordered and
    the violation fraction is zero.
    """
    if hist1.m != grid.m or hist2.m != grid.m:
        raise ConfigurationError("histories must match the grid delay depth")
    m, n = grid.m, grid.n_steps
    X_a = np.empty((n_paths, m + n + 1))
    X1_a = np.empty((n_paths, n + 1))
    X_b = np.empty((n_paths, m + n + 1))
    X1_b = np.empty((n_paths, n + 1))

    def work(lo: int, hi: int):
        dW = noise.increments(lo, hi - lo, n, grid.dt)
        _step_chunk(coeffs1, hist1, 0.0, grid, dW, X_a[lo:hi], X1_a[lo:hi], None)
        _step_chunk(coeffs2, hist2, 0.0, grid, dW, X_b[lo:hi], X1_b[lo:hi], None)

    _for_chunks(n_paths, chunk_size, threads, work)

    div_a = ~np.all(np.isfinite(X_a), axis=1)
    div_b = ~np.all(np.isfinite(X_b), axis=1)
    bundle1 = TrajectoryBundle(grid=grid, lam=coeffs1.lam, X=X_a, X1=X1_a, u=0.0,
                               dW=None, diverged=div_a)
    bundle2 = TrajectoryBundle(grid=grid, lam=coeffs2.lam, X=X_b, X1=X1_b, u=0.0,
                               dW=None, diverged=div_b)
    ok = ~(div_a | div_b)
    gap = X_b[ok, m:] - X_a[ok, m:]  # positive where ordering fails
    if gap.size:
        frac = np.mean(gap > tol, axis=0)
        worst = float(max(gap.max(), 0.0))
    else:
        frac = np.zeros(n + 1)
        worst = float("nan")
    failures = _comparison_hypotheses(coeffs1, coeffs2, hist1, hist2, grid, noise.seed)
    report = ComparisonReport(tol=tol, violation_fraction=frac, worst_violation=worst,
                              hypothesis_ok=not failures, hypothesis_failures=failures)
    return bundle1, bundle2, report


# ---------------------------------------------------------------------------
# moment-estimate harness
# ---------------------------------------------------------------------------

@dataclass
class MomentReport:
    """Both sides of the p-th-moment a priori estimate.

    lhs is the Monte Carlo estimate of E sup |X|^p over [s, T]; the rhs
    terms are sup|history|^p, (integral of |b(r,0,0,0)| dr)^p and
    (integral of |sigma(r,0,0,0)|^2 dr)^{p/2}.  The harness asserts
    lhs <= C * (sum of rhs terms) with a calibrated constant.
    """

    p: int
    lhs: float
    lhs_se: float
    rhs_history: float
    rhs_drift: float
    rhs_diffusion: float
    n_diverged: int

    @property
    def rhs_total(self) -> float:
        return self.rhs_history + self.rhs_drift + self.rhs_diffusion

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs_total if self.rhs_total > 0 else float("inf")


def estimate_moment_bound(coeffs, history: HistoryPath, grid: TimeGrid,
                          p: int, noise: NoiseSource, n_paths: int, *,
                          threads: int = 1) -> MomentReport:
    """Monte Carlo ingredients of the p-th-moment estimate (u = 0 reference).

    Divergent paths are excluded from the estimate and counted.
    """
    if p < 2 or p % 2 != 0:
        raise ConfigurationError("moment order p must be an even integer >= 2")
    bundle = simulate_smdde(coeffs, history, 0.0, grid, noise, n_paths,
                            store_increments=False, threads=threads)
    m = grid.m
    ok = ~bundle.diverged
    sup_p = np.max(np.abs(bundle.X[ok, m:]), axis=1) ** p
    lhs = float(np.mean(sup_p))
    lhs_se = float(np.std(sup_p) / np.sqrt(max(sup_p.size, 1)))
    times = grid.times()
    zeros = np.zeros_like(times)
    b0 = np.abs(coeffs.b(times, zeros, zeros, zeros, zeros))
    s0 = np.abs(coeffs.sigma(times, zeros, zeros, zeros, zeros)) ** 2
    rhs_drift = float(np.trapezoid(b0, times) ** p)
    rhs_diff = float(np.trapezoid(s0, times) ** (p / 2))
    rhs_hist = float(np.max(np.abs(history.samples)) ** p)
    return MomentReport(p=p, lhs=lhs, lhs_se=lhs_se, rhs_history=rhs_hist,
                        rhs_drift=rhs_drift, rhs_diffusion=rhs_diff,
                        n_diverged=int(np.sum(bundle.diverged)))


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def dump_trajectories(bundle: TrajectoryBundle, path: str, max_paths: Optional[int] = None,
                      solution=None):
    """Write paths as CSV with header path,step,t,X,X1,X2 (plus Y,Z when a
    backward solution is supplied)."""
    n = bundle.grid.n_steps
    m = bundle.grid.m
    times = bundle.grid.times()
    keep = bundle.n_paths if max_paths is None else min(max_paths, bundle.n_paths)
    header = ["path", "step", "t", "X", "X1", "X2"]
    if solution is not None:
        header += ["Y", "Z"]
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(header)
        for pth in range(keep):
            for i in range(n + 1):
                row = [pth, i, f"{times[i]:.17g}", f"{bundle.X[pth, i + m]:.17g}",
                       f"{bundle.X1[pth, i]:.17g}", f"{bundle.X2[pth, i]:.17g}"]
                if solution is not None:
                    row += [f"{solution.Y[pth, i]:.17g}", f"{solution.Z[pth, i]:.17g}"]
                out.writerow(row)
