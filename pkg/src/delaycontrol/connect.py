"""Headline cross-checks: adjoint/value-function duality, verification of
candidate controls, and the measure-change reduction.

* duality: along an optimal trajectory the normalized adjoint ptilde(t)
  belongs to the one-sided x-superdifferential of the value function at
  (t, X(t), X1(t)); where V is numerically smooth the subdifferential is
  the singleton {V_x} and ptilde must match it (the smooth-case identity).
* verification: grid-extracted jets (theta, p, q, P) along a candidate
  trajectory certify optimality when the jet lies in the superdifferential
  and the expected integral of theta - Gtilde(...) is nonpositive; the
  report also compares the independently estimated cost J with V.
* measure change: for drivers a + fbar(t) y + gbar(t) z, shifting the
  drift by sigma*gbar removes the z term; Radon-Nikodym weights translate
  expectations between the two measures.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .core import (ConfigurationError, Instance, LinearDriver, derived_rng,
                   eval_G, eval_X1_quadrature)
from .coeffs import CoefficientSet
from .bsde import (RegressionBasis, assert_linear_driver, linear_driver_oracle,
                   solve_bsde_lsmc)
from .adjoint import solve_adjoints
from .hjb import GridValueFunction, Jet, jet_membership
from .smdde import NoiseSource, TrajectoryBundle, simulate_smdde


def start_state(instance: Instance) -> Tuple[float, float]:
    """(x, x1) seen by the value function at the start time."""
    x0 = float(instance.history.samples[-1])
    x10 = float(eval_X1_quadrature(instance.history.samples, instance.coeffs.lam,
                                   instance.grid.dt))
    return x0, x10


# ---------------------------------------------------------------------------
# duality inclusion
# ---------------------------------------------------------------------------

@dataclass
class DualityTimeRecord:
    t: float
    n_points: int
    n_skipped: int
    membership_pass_fraction: float
    smooth_fraction: float
    median_identity_rel_err: float


@dataclass
class DualityReport:
    """Per-time-sample duality records along the candidate trajectory.

    ``applicable`` reflects the reduction-hypothesis gate max|p3| <= tol:
    when it fails the theorem's premise is absent and the records are
    informational only.  The identity statistics double as the sub-jet
    check: at numerically smooth points the subdifferential is the
    singleton {V_x}, so equality with ptilde is what "nonempty sub-jet
    implies equality" reduces to on a grid.
    """

    applicable: bool
    max_abs_p3: float
    p3_tol: float
    records: List[DualityTimeRecord] = field(default_factory=list)
    coverage: float = 0.0
    membership_pass_fraction: float = 0.0
    identity_median_rel_err: float = float("nan")

    def kv_lines(self):
        yield from (
            f"applicable={str(self.applicable).lower()}",
            f"max_abs_p3={self.max_abs_p3:.6e}",
            f"p3_tol={self.p3_tol:.6e}",
            f"coverage={self.coverage:.6f}",
            f"membership_pass_fraction={self.membership_pass_fraction:.6f}",
            f"identity_median_rel_err={self.identity_median_rel_err:.6e}",
            # the x1-slope analogue of the inclusion is out of scope: the
            # derivation hinges on the difference path vanishing before the
            # restart time, which has no counterpart for the x1 slot
            "x1_slope_inclusion=not_checked",
        )


def check_duality_inclusion(instance: Instance, control, vgrid: GridValueFunction,
                            noise: NoiseSource, n_paths: int, *,
                            basis: Optional[RegressionBasis] = None,
                            time_indices: Optional[Sequence[int]] = None,
                            n_path_sample: int = 200, membership_radius: int = 3,
                            membership_tol: float = 0.1, kink_rel_tol: float = 0.2,
                            p3_tol: Optional[float] = None,
                            candidate_shift: float = 0.0,
                            threads: int = 1) -> DualityReport:
    """Test the superdifferential inclusion and the smooth-case identity.

    Runs the full pipeline (forward paths, backward cost, adjoints) for
    the given control, gates on max|p3|, and at sampled (t, path) points
    checks (a) super-side slope membership of ptilde + candidate_shift and
    (b) |ptilde - V_x| at points where the kink detector is quiet.
    Points outside the grid interior are skipped and counted.
    """
    basis = basis or RegressionBasis(degree=2)
    grid = instance.grid
    coeffs = instance.coeffs
    bundle = simulate_smdde(coeffs, instance.history, control, grid, noise, n_paths,
                            threads=threads)
    solution = solve_bsde_lsmc(bundle, coeffs, basis)
    adjoints = solve_adjoints(bundle, solution, coeffs, basis)
    tol_p3 = 10.0 * grid.dt if p3_tol is None else p3_tol
    applicable = adjoints.max_abs_p3 <= tol_p3

    n = grid.n_steps
    if time_indices is None:
        step = max(n // 16, 1)
        time_indices = list(range(0, n, step))
    rng = derived_rng(noise.seed, 606)
    ok_idx = np.flatnonzero(~bundle.diverged)
    sample = rng.choice(ok_idx, size=min(n_path_sample, ok_idx.size), replace=False)

    records: List[DualityTimeRecord] = []
    total_points = 0
    total_skipped = 0
    total_pass = 0
    medians: List[float] = []
    for i in time_indices:
        t = grid.time(int(i))
        xs = bundle.x_at(int(i))[sample]
        x1s = bundle.X1[sample, int(i)]
        pts = adjoints.ptilde[sample, int(i)] + candidate_shift
        n_pass = 0
        n_checked = 0
        n_skipped = 0
        rels: List[float] = []
        n_smooth = 0
        for x, x1, cand in zip(xs, x1s, pts):
            inside = bool(vgrid.is_interior(x, x1, margin=membership_radius))
            if not inside:
                n_skipped += 1
                continue
            ok, _ = jet_membership(vgrid, (t, x, x1), cand, side="super",
                                   radius=membership_radius, tol=membership_tol,
                                   x_slope_only=True)
            n_checked += 1
            n_pass += int(ok)
            vx = float(vgrid.value_x(t, x, x1))
            kink = float(vgrid.kink_measure(t, x, x1))
            if kink <= kink_rel_tol * (1.0 + abs(vx)):
                n_smooth += 1
                rels.append(abs(cand - candidate_shift - vx) / (1.0 + abs(vx)))
        total_points += n_checked
        total_skipped += n_skipped
        total_pass += n_pass
        med = float(np.median(rels)) if rels else float("nan")
        if rels:
            medians.append(med)
        records.append(DualityTimeRecord(
            t=float(t), n_points=n_checked, n_skipped=n_skipped,
            membership_pass_fraction=n_pass / n_checked if n_checked else float("nan"),
            smooth_fraction=n_smooth / n_checked if n_checked else float("nan"),
            median_identity_rel_err=med))
    coverage = total_points / max(total_points + total_skipped, 1)
    return DualityReport(
        applicable=applicable, max_abs_p3=adjoints.max_abs_p3, p3_tol=tol_p3,
        records=records, coverage=coverage,
        membership_pass_fraction=total_pass / max(total_points, 1),
        identity_median_rel_err=float(np.median(medians)) if medians else float("nan"))


# ---------------------------------------------------------------------------
# verification of a candidate control
# ---------------------------------------------------------------------------

@dataclass
class VerificationReport:
    """Verdict and evidence for a candidate control.

    ``integral_stat`` estimates the expected integral of
    theta - Gtilde(..., -V, -p, -P, -q) along the candidate trajectory
    (nonpositive, up to noise and grid budget, for an optimal pair);
    ``j_candidate`` is the independently estimated cost, placed next to
    the grid value at the start state.
    """

    verdict: bool
    integral_stat: float
    integral_se: float
    budget: float
    membership_pass_fraction: float
    membership_required: float
    j_candidate: float
    j_se: float
    v_start: float
    gap: float
    coverage: float
    per_step: List[Tuple[float, float]] = field(default_factory=list)

    def kv_lines(self):
        yield from (
            f"verdict={str(self.verdict).lower()}",
            f"integral_stat={self.integral_stat:.9g}",
            f"integral_se={self.integral_se:.9g}",
            f"budget={self.budget:.9g}",
            f"membership_pass_fraction={self.membership_pass_fraction:.6f}",
            f"membership_required={self.membership_required:.6f}",
            f"j_candidate={self.j_candidate:.9g}",
            f"j_se={self.j_se:.9g}",
            f"v_start={self.v_start:.9g}",
            f"gap={self.gap:.9g}",
            f"coverage={self.coverage:.6f}",
        )


def _jets_along(vgrid: GridValueFunction, t: float, x: np.ndarray, x1: np.ndarray):
    """Vectorized numerical jets at the nodes nearest to (t, x[i], x1[i]).

    Returns (theta, p, q, P, v, interior mask); entries outside the
    one-cell interior (or with the time slice at T) are masked out.
    """
    nt = len(vgrid.times) - 1
    it = int(np.clip(round((t - vgrid.times[0]) / vgrid.dt), 0, nt - 1))
    j = np.round((x - vgrid.xs[0]) / vgrid.dx).astype(int)
    k = np.round((x1 - vgrid.x1s[0]) / vgrid.dx1).astype(int)
    inside = (j >= 1) & (j <= len(vgrid.xs) - 2) & (k >= 1) & (k <= len(vgrid.x1s) - 2)
    j = np.clip(j, 1, len(vgrid.xs) - 2)
    k = np.clip(k, 1, len(vgrid.x1s) - 2)
    V = vgrid.V
    v0 = V[it, j, k]
    theta = (V[it + 1, j, k] - v0) / vgrid.dt
    p = (V[it, j + 1, k] - V[it, j - 1, k]) / (2 * vgrid.dx)
    q = (V[it, j, k + 1] - V[it, j, k - 1]) / (2 * vgrid.dx1)
    P = (V[it, j + 1, k] - 2 * v0 + V[it, j - 1, k]) / vgrid.dx ** 2
    return theta, p, q, P, v0, inside


def verify_optimality(instance: Instance, control, vgrid: GridValueFunction,
                      noise: NoiseSource, n_paths: int, *,
                      jet_source: str = "grid",
                      user_jets: Optional[Callable] = None,
                      budget: float = 5e-2, membership_required: float = 0.95,
                      membership_tol: float = 0.1, membership_radius: int = 3,
                      n_membership_sample: int = 400,
                      threads: int = 1) -> VerificationReport:
    """Run the verification-theorem checks for a candidate control.

    Requires the instance driver in the z-free linear form (apply
    ``girsanov_reduce`` first otherwise).  The verdict is true iff the
    integral statistic is nonpositive within 3 standard errors plus the
    grid budget AND jet membership holds at the required fraction of
    sampled points.  Aborts if fewer than half the trajectory points stay
    inside the grid interior.
    """
    if instance.driver is None:
        raise ConfigurationError("verification needs the linear-driver form; none declared")
    if instance.driver.gbar is not None:
        raise ConfigurationError(
            "driver has a z term; apply the measure-change reduction first")
    if jet_source not in ("grid", "user"):
        raise ConfigurationError("jet_source must be 'grid' or 'user'")
    if jet_source == "user" and user_jets is None:
        raise ConfigurationError("jet_source='user' requires user_jets")
    coeffs = instance.coeffs
    assert_linear_driver(coeffs, instance.driver, seed=noise.seed)
    grid = instance.grid
    bundle = simulate_smdde(coeffs, instance.history, control, grid, noise, n_paths,
                            threads=threads)
    n, dt = grid.n_steps, grid.dt
    ok = ~bundle.diverged

    integrand = np.zeros(bundle.n_paths)
    weight_sum = np.zeros(bundle.n_paths)
    n_inside = 0
    n_total = 0
    per_step: List[Tuple[float, float]] = []
    for i in range(n):
        t = grid.time(i)
        x = bundle.x_at(i)
        x1 = bundle.X1[:, i]
        if jet_source == "grid":
            theta, p, q, P, v0, inside = _jets_along(vgrid, t, x, x1)
        else:
            theta, p, q, P = user_jets(t, x, x1)
            v0 = vgrid.value(t, x, x1)
            inside = np.asarray(vgrid.is_interior(x, x1, margin=1))
        inside = inside & ok
        u = bundle.u_at(i)
        g = eval_G("Gtilde", t, x, x1, bundle.X2[:, i], u, -v0, -p, -P, -q,
                   coeffs, grid.delay, instance.driver)
        step_term = np.where(inside, theta - g, 0.0)
        integrand += step_term * dt
        weight_sum += np.where(inside, dt, 0.0)
        n_inside += int(np.sum(inside))
        n_total += int(np.sum(ok))
        per_step.append((float(t), float(np.mean(step_term[inside])) if np.any(inside) else 0.0))
    coverage = n_inside / max(n_total, 1)
    if coverage < 0.5:
        raise ConfigurationError(
            f"trajectory covers only {coverage:.1%} of the grid interior; "
            "enlarge the grid or move the start state")
    vals = integrand[ok]
    stat = float(np.mean(vals))
    stat_se = float(np.std(vals) / np.sqrt(vals.size))

    rng = derived_rng(noise.seed, 707)
    ok_idx = np.flatnonzero(ok)
    sample = rng.choice(ok_idx, size=min(n_membership_sample, ok_idx.size), replace=False)
    steps = rng.choice(n, size=min(12, n), replace=False)
    n_pass = 0
    n_checked = 0
    for i in sorted(int(s) for s in steps):
        t = grid.time(i)
        for pth in sample[: max(n_membership_sample // len(steps), 1)]:
            x = float(bundle.X[pth, i + grid.m])
            x1 = float(bundle.X1[pth, i])
            if not bool(vgrid.is_interior(x, x1, margin=membership_radius)):
                continue
            theta, p, q, P, v0, inside = _jets_along(
                vgrid, t, np.array([x]), np.array([x1]))
            jet = Jet(theta=float(theta[0]), p=float(p[0]), q=float(q[0]), P=float(P[0]))
            good, _ = jet_membership(vgrid, (t, x, x1), jet, side="super",
                                     radius=membership_radius, tol=membership_tol)
            n_checked += 1
            n_pass += int(good)
    membership_frac = n_pass / max(n_checked, 1)

    j_est, j_se = linear_driver_oracle(coeffs, instance.driver, bundle)
    j_candidate = -j_est
    x0, x10 = start_state(instance)
    v_start = float(vgrid.value(grid.s, x0, x10))
    verdict = (stat <= 3.0 * stat_se + budget) and (membership_frac >= membership_required)
    return VerificationReport(
        verdict=verdict, integral_stat=stat, integral_se=stat_se, budget=budget,
        membership_pass_fraction=membership_frac, membership_required=membership_required,
        j_candidate=j_candidate, j_se=j_se, v_start=v_start, gap=j_candidate - v_start,
        coverage=coverage, per_step=per_step)


# ---------------------------------------------------------------------------
# measure-change reduction
# ---------------------------------------------------------------------------

@dataclass
class GirsanovReduction:
    """Transformed (z-free) instance plus the change-of-measure weights.

    ``weights(bundle)`` maps a bundle simulated under the ORIGINAL
    instance to per-path Radon-Nikodym factors
    exp( int g dW - 0.5 int g^2 dr ), so weighted expectations under the
    original measure equal plain expectations under the shifted one.
    """

    instance: Instance
    weights: Callable[[TrajectoryBundle], np.ndarray]


def girsanov_reduce(instance: Instance) -> GirsanovReduction:
    """Shift the drift by sigma*gbar and drop the z term from the driver.

    The driver must carry a bounded deterministic gbar; the transformed
    instance satisfies the z-free linear form required by the verification
    theorem.
    """
    driver = instance.driver
    if driver is None or driver.gbar is None:
        ident = replace(instance)
        return GirsanovReduction(instance=ident,
                                 weights=lambda b: np.ones(b.n_paths))
    assert_linear_driver(instance.coeffs, driver)
    grid = instance.grid
    gvals = driver.gbar_at(grid.times())
    if not np.all(np.isfinite(gvals)):
        raise ConfigurationError("gbar must be finite (bounded deterministic) on [s, T]")
    c = instance.coeffs
    gbar = driver.gbar

    def shift(fn, dfn_sigma):
        def wrapped(t, x, x1, x2, u):
            return fn(t, x, x1, x2, u) + dfn_sigma(t, x, x1, x2, u) * np.asarray(gbar(t))
        return wrapped

    def at_z0(fn):
        def wrapped(t, x, x1, x2, y, z, u):
            return fn(t, x, x1, x2, y, 0.0 * np.asarray(z), u)
        return wrapped

    def fz_zero(t, x, x1, x2, y, z, u):
        return 0.0 * (np.asarray(x, dtype=float) + np.asarray(z, dtype=float))

    new_coeffs = CoefficientSet(
        name=c.name + "+measure-shift", lam=c.lam,
        b=shift(c.b, c.sigma), sigma=c.sigma, f=at_z0(c.f), phi=c.phi,
        b_x=shift(c.b_x, c.sigma_x), b_x1=shift(c.b_x1, c.sigma_x1),
        b_x2=shift(c.b_x2, c.sigma_x2),
        sigma_x=c.sigma_x, sigma_x1=c.sigma_x1, sigma_x2=c.sigma_x2,
        f_x=at_z0(c.f_x), f_x1=at_z0(c.f_x1), f_x2=at_z0(c.f_x2),
        f_y=at_z0(c.f_y), f_z=fz_zero,
        phi_x=c.phi_x, phi_x1=c.phi_x1, params=dict(c.params))
    new_driver = LinearDriver(fbar=driver.fbar, gbar=None)
    new_instance = Instance(coeffs=new_coeffs, grid=grid, history=instance.history,
                            domain=instance.domain, driver=new_driver)

    def weights(bundle: TrajectoryBundle) -> np.ndarray:
        if bundle.dW is None:
            raise ConfigurationError("weight computation needs stored increments")
        n, dt = bundle.grid.n_steps, bundle.grid.dt
        g_on_grid = driver.gbar_at(bundle.grid.times())[:n]
        expo = bundle.dW @ g_on_grid - 0.5 * float(np.sum(g_on_grid ** 2)) * dt
        return np.exp(expo)

    return GirsanovReduction(instance=new_instance, weights=weights)


# ---------------------------------------------------------------------------
# helpers and output
# ---------------------------------------------------------------------------

def control_tournament(instance: Instance, noise: NoiseSource, n_paths: int,
                       n_controls: int = 20, seed: int = 0,
                       threads: int = 1) -> List[Tuple[float, float, float]]:
    """Costs of random constant controls (u, J, se) via the plain oracle."""
    if instance.driver is None:
        raise ConfigurationError("tournament needs the linear-driver form")
    rng = derived_rng(seed, 808)
    out: List[Tuple[float, float, float]] = []
    for k in range(n_controls):
        u = float(rng.uniform(instance.domain.lower, instance.domain.upper))
        b = simulate_smdde(instance.coeffs, instance.history, u, instance.grid,
                           NoiseSource(noise.seed + 1000 + k), n_paths, threads=threads)
        y, se = linear_driver_oracle(instance.coeffs, instance.driver, b)
        out.append((u, -y, se))
    return out


def write_kv_report(lines, path: str):
    with open(path, "w") as fh:
        for line in lines:
            fh.write(line + "\n")


def write_duality_detail(report: DualityReport, path: str):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["t", "n_points", "n_skipped", "membership_pass_fraction",
                      "smooth_fraction", "median_identity_rel_err"])
        for r in report.records:
            out.writerow([f"{r.t:.17g}", r.n_points, r.n_skipped,
                          f"{r.membership_pass_fraction:.6f}",
                          f"{r.smooth_fraction:.6f}",
                          f"{r.median_identity_rel_err:.6e}"])


def write_verification_detail(report: VerificationReport, path: str):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["t", "mean_integrand"])
        for t, v in report.per_step:
            out.writerow([f"{t:.17g}", f"{v:.17g}"])
