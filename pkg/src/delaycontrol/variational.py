"""Perturbation machinery: coupled state variations and their scalings.

Starting from a base run under a fixed control, the state is restarted at
one grid time t with a bumped value x' = X(t) + h while keeping the
pre-t segment and the Brownian increments unchanged.  The resulting
difference paths (Xhat, Xhat1, Xhat2), the averaged-derivative remainders
(eps1, eps2) of the linearized dynamics, and the duality combination

    Ytilde(r) = -Y_pert(r) + Y_base(r) - ptilde(r)*Xhat(r) - pcheck(r)*Xhat1(r)

are the measurable quantities behind the first-order expansion of the
value process: |Xhat| scales like h, the eps-remainders like o(h^p) in
p-th mean, and E|Ytilde(t)| like o(h).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .core import ConfigurationError, TimeGrid, x1_weights
from .bsde import RegressionBasis, solve_bsde_lsmc
from .smdde import TrajectoryBundle

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)
_GL_NODES = 0.5 * (_GL_NODES + 1.0)     # map to [0, 1]
_GL_WEIGHTS = 0.5 * _GL_WEIGHTS


@dataclass
class PerturbationRun:
    """Coupled base/perturbed paths restarted at one grid time.

    All arrays live on the sub-horizon [t, T]; the difference paths are
    zero on [t - delta, t) by construction, and Xhat2 vanishes on
    [t, t + delta) exactly.
    """

    t_index: int
    offset: float
    sub_grid: TimeGrid
    base_sub: TrajectoryBundle
    pert: TrajectoryBundle
    Xhat: np.ndarray
    Xhat1: np.ndarray
    Xhat2: np.ndarray
    eps1: np.ndarray
    eps2: np.ndarray


def _sub_control(u, t_index: int):
    if u is None or np.isscalar(u):
        return u
    arr = np.asarray(u)
    return arr[t_index:] if arr.ndim == 1 else arr[:, t_index:]


def _averaged_derivative_gap(dfn, t, base_args, hat_args, u):
    """Gauss-Legendre average of dfn(base + theta*hat) - dfn(base) over
    theta in [0, 1] (exact for polynomial integrands of degree <= 15).

    Averaging the gap rather than the derivative keeps the result exactly
    zero for constant derivatives, so linear families produce identically
    vanishing remainders instead of rounding dust.
    """
    x, x1, x2 = base_args
    hx, hx1, hx2 = hat_args
    star = dfn(t, x, x1, x2, u)
    acc = 0.0
    for theta, w in zip(_GL_NODES, _GL_WEIGHTS):
        acc = acc + w * (dfn(t, x + theta * hx, x1 + theta * hx1, x2 + theta * hx2, u) - star)
    return acc


def simulate_variation(bundle: TrajectoryBundle, coeffs, t_index: int,
                       offset: float) -> PerturbationRun:
    """Re-run the dynamics from grid time t with the state bumped by ``offset``.

    The perturbed path consumes the increments stored in the base bundle
    (exact coupling: offset 0 reproduces the base bit for bit), keeps the
    same per-step control, and restarts the distributed-delay state at its
    base value.  The remainders eps1/eps2 measure how far the realized
    difference dynamics are from their linearization around the base path.
    """
    if bundle.dW is None:
        raise ConfigurationError("base bundle must store increments for coupling")
    grid = bundle.grid
    m, n, dt = grid.m, grid.n_steps, grid.dt
    if not (0 <= t_index <= n - 1):
        raise ConfigurationError("perturbation time must satisfy t + dt <= T")
    n_paths = bundle.n_paths
    w = x1_weights(m, coeffs.lam, dt)

    Xp = bundle.X.copy()
    Xp[:, t_index + m] += offset
    n_sub = n - t_index
    X1p = np.empty((n_paths, n_sub + 1))
    X1p[:, 0] = bundle.X1[:, t_index]  # distributed delay restarts at its base value
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(t_index, n):
            col = i + m
            x = Xp[:, col]
            x1 = X1p[:, i - t_index] if i == t_index else Xp[:, i : col + 1] @ w
            if i != t_index:
                X1p[:, i - t_index] = x1
            x2 = Xp[:, i]
            t = grid.time(i)
            u = bundle.u_at(i)
            nxt = (x + coeffs.b(t, x, x1, x2, u) * dt
                   + coeffs.sigma(t, x, x1, x2, u) * bundle.dW[:, i])
            if not np.all(np.isfinite(nxt)):
                bad = int(np.argmax(~np.isfinite(nxt)))
                raise RuntimeError(
                    f"perturbed path became non-finite at step {i} (path {bad}); "
                    "offset too large for this instance")
            Xp[:, col + 1] = nxt
        X1p[:, n_sub] = Xp[:, n : n + m + 1] @ w

    sub_grid = TimeGrid(s=grid.time(t_index), T=grid.T, dt=dt, delay_steps=m)
    sub_u = _sub_control(bundle.u, t_index)
    sub_dW = bundle.dW[:, t_index:]
    base_sub = TrajectoryBundle(grid=sub_grid, lam=bundle.lam,
                                X=bundle.X[:, t_index:], X1=bundle.X1[:, t_index:],
                                u=sub_u, dW=sub_dW, diverged=bundle.diverged)
    pert = TrajectoryBundle(grid=sub_grid, lam=bundle.lam,
                            X=Xp[:, t_index:], X1=X1p, u=sub_u, dW=sub_dW,
                            diverged=bundle.diverged)

    Xhat = Xp[:, t_index + m :] - bundle.X[:, t_index + m :]
    Xhat1 = X1p - bundle.X1[:, t_index:]
    Xhat2 = Xp[:, t_index : n + 1] - bundle.X[:, t_index : n + 1]

    eps1 = np.zeros((n_paths, n_sub))
    eps2 = np.zeros((n_paths, n_sub))
    for i in range(t_index, n):
        j = i - t_index
        t = grid.time(i)
        u = bundle.u_at(i)
        base_args = (bundle.x_at(i), bundle.X1[:, i], bundle.X2[:, i])
        hat_args = (Xhat[:, j], Xhat1[:, j], Xhat2[:, j])
        for store, dx, dx1, dx2 in ((eps1, coeffs.b_x, coeffs.b_x1, coeffs.b_x2),
                                    (eps2, coeffs.sigma_x, coeffs.sigma_x1, coeffs.sigma_x2)):
            store[:, j] = (
                _averaged_derivative_gap(dx, t, base_args, hat_args, u) * hat_args[0]
                + _averaged_derivative_gap(dx1, t, base_args, hat_args, u) * hat_args[1]
                + _averaged_derivative_gap(dx2, t, base_args, hat_args, u) * hat_args[2])
    return PerturbationRun(t_index=t_index, offset=offset, sub_grid=sub_grid,
                           base_sub=base_sub, pert=pert, Xhat=Xhat, Xhat1=Xhat1,
                           Xhat2=Xhat2, eps1=eps1, eps2=eps2)


# ---------------------------------------------------------------------------
# scaling regressions
# ---------------------------------------------------------------------------

@dataclass
class ScalingRow:
    quantity: str
    offset: float
    estimate: float
    std_error: float


@dataclass
class ScalingReport:
    rows: List[ScalingRow]
    slopes: Dict[str, float]

    def slope(self, quantity: str) -> float:
        return self.slopes[quantity]


def _loglog_slope(offsets: np.ndarray, estimates: np.ndarray) -> float:
    mask = estimates > 0.0
    if mask.sum() < 2:
        return float("inf")  # identically-zero remainders: faster than any power
    return float(np.polyfit(np.log(offsets[mask]), np.log(estimates[mask]), 1)[0])


def _mc_stats(values: np.ndarray) -> Tuple[float, float]:
    return float(np.mean(values)), float(np.std(values) / np.sqrt(values.size))


def remainder_scaling(bundle: TrajectoryBundle, coeffs, t_index: int,
                      offsets: Sequence[float], p: int = 2) -> ScalingReport:
    """Log-log slopes of the difference-path and remainder statistics.

    Expected: slope ~ p for E sup|Xhat|^p (and the delayed variants),
    slope > p for the eps integrals.  At least 3 offsets spanning a factor
    of 4 are required for a meaningful fit.
    """
    offsets = np.asarray(sorted(offsets, reverse=True), dtype=float)
    if offsets.size < 3 or offsets.max() / offsets.min() < 4.0:
        raise ConfigurationError("need >= 3 offsets spanning a factor >= 4")
    dt = bundle.grid.dt
    rows: List[ScalingRow] = []
    series: Dict[str, List[float]] = {k: [] for k in
                                      ("sup_xhat", "sup_xhat1", "sup_xhat2",
                                       "eps1_int", "eps2_int")}
    for h in offsets:
        run = simulate_variation(bundle, coeffs, t_index, float(h))
        stats = {
            "sup_xhat": np.max(np.abs(run.Xhat), axis=1) ** p,
            "sup_xhat1": np.max(np.abs(run.Xhat1), axis=1) ** p,
            "sup_xhat2": np.max(np.abs(run.Xhat2), axis=1) ** p,
            "eps1_int": (np.sum(run.eps1 ** 2, axis=1) * dt) ** (p / 2),
            "eps2_int": (np.sum(run.eps2 ** 2, axis=1) * dt) ** (p / 2),
        }
        for key, vals in stats.items():
            est, se = _mc_stats(vals)
            rows.append(ScalingRow(quantity=key, offset=float(h), estimate=est, std_error=se))
            series[key].append(est)
    slopes = {key: _loglog_slope(offsets, np.asarray(vals)) for key, vals in series.items()}
    return ScalingReport(rows=rows, slopes=slopes)


# ---------------------------------------------------------------------------
# duality processes
# ---------------------------------------------------------------------------

@dataclass
class DualityProcesses:
    """The pointwise duality pair and the combined process on [t, T].

    ``delta_y_t`` holds the per-path first-order differences
    -Y_pert(t) + Y_base(t); ``mean_abs_ytilde_t`` is E|Ytilde(t)|.
    """

    run: PerturbationRun
    Yhat: np.ndarray
    Ycheck: np.ndarray
    Ytilde: np.ndarray
    delta_y_t: np.ndarray
    mean_abs_ytilde_t: float


def duality_processes(run: PerturbationRun, adjoints, coeffs,
                      basis: RegressionBasis) -> DualityProcesses:
    """Form Yhat = ptilde*Xhat, Ycheck = pcheck*Xhat1 and the combination
    Ytilde = -Y_pert + Y_base - Yhat - Ycheck on the sub-horizon.

    Both backward solutions are recomputed on the sub-horizon with the
    same machinery so their regression biases cancel in the difference.
    """
    base_sol = solve_bsde_lsmc(run.base_sub, coeffs, basis)
    pert_sol = solve_bsde_lsmc(run.pert, coeffs, basis)
    ti = run.t_index
    pt = adjoints.ptilde[:, ti:]
    pc = adjoints.pcheck[:, ti:]
    Yhat = pt * run.Xhat
    Ycheck = pc * run.Xhat1
    Ytilde = -pert_sol.Y + base_sol.Y - Yhat - Ycheck
    delta_y = -pert_sol.Y[:, 0] + base_sol.Y[:, 0]
    ok = ~run.base_sub.diverged
    mean_abs = float(np.mean(np.abs(Ytilde[ok, 0])))
    return DualityProcesses(run=run, Yhat=Yhat, Ycheck=Ycheck, Ytilde=Ytilde,
                            delta_y_t=delta_y, mean_abs_ytilde_t=mean_abs)


def duality_scaling(bundle: TrajectoryBundle, adjoints, coeffs, basis: RegressionBasis,
                    t_index: int, offsets: Sequence[float]) -> ScalingReport:
    """Scaling of E|Ytilde(t)| and of the positive part of the first-order
    expansion defect against the offset."""
    offsets = np.asarray(sorted(offsets, reverse=True), dtype=float)
    if offsets.size < 3 or offsets.max() / offsets.min() < 4.0:
        raise ConfigurationError("need >= 3 offsets spanning a factor >= 4")
    rows: List[ScalingRow] = []
    ytilde: List[float] = []
    expansion: List[float] = []
    ok = ~bundle.diverged
    for h in offsets:
        run = simulate_variation(bundle, coeffs, t_index, float(h))
        dual = duality_processes(run, adjoints, coeffs, basis)
        est, se = _mc_stats(np.abs(dual.Ytilde[ok, 0]))
        rows.append(ScalingRow("abs_ytilde_t", float(h), est, se))
        ytilde.append(est)
        defect = dual.delta_y_t[ok] - adjoints.ptilde[ok, t_index] * float(h)
        pos, pos_se = _mc_stats(np.maximum(defect, 0.0))
        rows.append(ScalingRow("expansion_defect_pos", float(h), pos, pos_se))
        expansion.append(pos)
    slopes = {
        "abs_ytilde_t": _loglog_slope(offsets, np.asarray(ytilde)),
        "expansion_defect_pos": _loglog_slope(offsets, np.asarray(expansion)),
    }
    return ScalingReport(rows=rows, slopes=slopes)


def write_scaling_report(report: ScalingReport, path: str):
    """CSV with header quantity,offset,estimate,std_error plus slope rows."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["quantity", "offset", "estimate", "std_error"])
        for row in report.rows:
            out.writerow([row.quantity, f"{row.offset:.17g}", f"{row.estimate:.17g}",
                          f"{row.std_error:.17g}"])
        for key, slope in sorted(report.slopes.items()):
            out.writerow([key, "slope", f"{slope:.17g}", ""])
