"""Coefficient bundles: drift, diffusion, cost driver, terminal cost.

A :class:`CoefficientSet` carries the evaluators

    b(t, x, x1, x2, u)          drift
    sigma(t, x, x1, x2, u)      diffusion
    f(t, x, x1, x2, y, z, u)    recursive-cost driver
    phi(x, x1)                  terminal cost (Phi; capitalized to keep it
                                apart from the initial history segment)

together with their first derivatives in the state/cost slots and the
distributed-delay decay rate ``lam``.  Evaluators must be pure,
vectorized over numpy arrays, and reentrant.

Sets are normally built from the parametric registry below (families
``constant``, ``linear``, ``bilinear``, ``linear_quadratic``), which keeps
all derivatives analytic and the linear-growth bound structural.  Callers
may also assemble a :class:`CoefficientSet` from arbitrary callables.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict

import numpy as np

from .core import ConfigurationError

__all__ = [
    "CoefficientSet",
    "FAMILIES",
    "make_coefficients",
    "check_derivative_consistency",
]


def _zero_like(*args):
    out = 0.0
    for a in args:
        out = out + np.asarray(a, dtype=float) * 0.0
    return out


@dataclass
class CoefficientSet:
    """Evaluator bundle for one problem instance.

    All evaluators broadcast; derivative evaluators must agree with
    central finite differences of the values (see
    :func:`check_derivative_consistency`).
    """

    name: str
    lam: float
    b: Callable
    sigma: Callable
    f: Callable
    phi: Callable
    b_x: Callable
    b_x1: Callable
    b_x2: Callable
    sigma_x: Callable
    sigma_x1: Callable
    sigma_x2: Callable
    f_x: Callable
    f_x1: Callable
    f_x2: Callable
    f_y: Callable
    f_z: Callable
    phi_x: Callable
    phi_x1: Callable
    params: Dict[str, float] = field(default_factory=dict)

    def a_part(self, t, x, x1, x2, u):
        """Driver with the (y, z) slots zeroed: a(t,x,x1,x2,u) = f(t,...,0,0,u)."""
        return self.f(t, x, x1, x2, 0.0, 0.0, u)


def _linear_evaluators(p: Dict[str, float]):
    b0, bx, bx1, bx2, bu = (p[k] for k in ("b0", "bx", "bx1", "bx2", "bu"))
    s0, sx, sx1, sx2, su = (p[k] for k in ("s0", "sx", "sx1", "sx2", "su"))
    f0, fx, fx1, fx2, fy, fz, fu = (p[k] for k in ("f0", "fx", "fx1", "fx2", "fy", "fz", "fu"))
    phi0, phix, phix1 = (p[k] for k in ("phi0", "phix", "phix1"))

    def b(t, x, x1, x2, u):
        return b0 + bx * x + bx1 * x1 + bx2 * x2 + bu * u + _zero_like(x, x1, x2, u)

    def sigma(t, x, x1, x2, u):
        return s0 + sx * x + sx1 * x1 + sx2 * x2 + su * u + _zero_like(x, x1, x2, u)

    def f(t, x, x1, x2, y, z, u):
        return (f0 + fx * x + fx1 * x1 + fx2 * x2 + fy * y + fz * z + fu * u
                + _zero_like(x, x1, x2, y, z, u))

    def phi(x, x1):
        return phi0 + phix * x + phix1 * x1 + _zero_like(x, x1)

    derivs = dict(
        b_x=lambda t, x, x1, x2, u: bx + _zero_like(x, x1, x2, u),
        b_x1=lambda t, x, x1, x2, u: bx1 + _zero_like(x, x1, x2, u),
        b_x2=lambda t, x, x1, x2, u: bx2 + _zero_like(x, x1, x2, u),
        sigma_x=lambda t, x, x1, x2, u: sx + _zero_like(x, x1, x2, u),
        sigma_x1=lambda t, x, x1, x2, u: sx1 + _zero_like(x, x1, x2, u),
        sigma_x2=lambda t, x, x1, x2, u: sx2 + _zero_like(x, x1, x2, u),
        f_x=lambda t, x, x1, x2, y, z, u: fx + _zero_like(x, x1, x2, y, z, u),
        f_x1=lambda t, x, x1, x2, y, z, u: fx1 + _zero_like(x, x1, x2, y, z, u),
        f_x2=lambda t, x, x1, x2, y, z, u: fx2 + _zero_like(x, x1, x2, y, z, u),
        f_y=lambda t, x, x1, x2, y, z, u: fy + _zero_like(x, x1, x2, y, z, u),
        f_z=lambda t, x, x1, x2, y, z, u: fz + _zero_like(x, x1, x2, y, z, u),
        phi_x=lambda x, x1: phix + _zero_like(x, x1),
        phi_x1=lambda x, x1: phix1 + _zero_like(x, x1),
    )
    return b, sigma, f, phi, derivs


_LINEAR_KEYS = ("b0", "bx", "bx1", "bx2", "bu",
                "s0", "sx", "sx1", "sx2", "su",
                "f0", "fx", "fx1", "fx2", "fy", "fz", "fu",
                "phi0", "phix", "phix1")
_BILINEAR_KEYS = _LINEAR_KEYS + ("bxx1", "bxx2", "sxx1", "sxx2", "clip")
_LQ_KEYS = ("a", "bu", "b0", "sigma0", "q", "r", "fy", "phi_quad", "phi_lin", "phi0")


def _constant_set(lam: float, p: Dict[str, float]) -> CoefficientSet:
    filled = {k: 0.0 for k in _LINEAR_KEYS}
    filled.update(b0=p.get("b0", 0.0), s0=p.get("s0", 0.0),
                  f0=p.get("f0", 0.0), phi0=p.get("phi0", 0.0))
    b, sigma, f, phi, derivs = _linear_evaluators(filled)
    return CoefficientSet(name="constant", lam=lam, b=b, sigma=sigma, f=f, phi=phi,
                          params=dict(p), **derivs)


def _linear_set(lam: float, p: Dict[str, float]) -> CoefficientSet:
    filled = {k: 0.0 for k in _LINEAR_KEYS}
    filled.update(p)
    b, sigma, f, phi, derivs = _linear_evaluators(filled)
    return CoefficientSet(name="linear", lam=lam, b=b, sigma=sigma, f=f, phi=phi,
                          params=dict(p), **derivs)


def _bilinear_set(lam: float, p: Dict[str, float]) -> CoefficientSet:
    filled = {k: 0.0 for k in _BILINEAR_KEYS}
    filled["clip"] = 3.0
    filled.update(p)
    L = float(filled["clip"])
    if L <= 0.0:
        raise ConfigurationError("bilinear clip bound must be positive")
    bxx1, bxx2 = filled["bxx1"], filled["bxx2"]
    sxx1, sxx2 = filled["sxx1"], filled["sxx2"]
    lb, lsigma, lf, lphi, ld = _linear_evaluators(filled)

    # smooth saturation keeps the product terms globally Lipschitz with
    # bounded first derivatives
    def clamp(v):
        return L * np.tanh(np.asarray(v, dtype=float) / L)

    def clamp_d(v):
        return 1.0 / np.cosh(np.asarray(v, dtype=float) / L) ** 2

    def b(t, x, x1, x2, u):
        return lb(t, x, x1, x2, u) + bxx1 * clamp(x) * clamp(x1) + bxx2 * clamp(x) * clamp(x2)

    def sigma(t, x, x1, x2, u):
        return lsigma(t, x, x1, x2, u) + sxx1 * clamp(x) * clamp(x1) + sxx2 * clamp(x) * clamp(x2)

    derivs = dict(ld)
    derivs["b_x"] = lambda t, x, x1, x2, u: (ld["b_x"](t, x, x1, x2, u)
                                             + bxx1 * clamp_d(x) * clamp(x1)
                                             + bxx2 * clamp_d(x) * clamp(x2))
    derivs["b_x1"] = lambda t, x, x1, x2, u: (ld["b_x1"](t, x, x1, x2, u)
                                              + bxx1 * clamp(x) * clamp_d(x1))
    derivs["b_x2"] = lambda t, x, x1, x2, u: (ld["b_x2"](t, x, x1, x2, u)
                                              + bxx2 * clamp(x) * clamp_d(x2))
    derivs["sigma_x"] = lambda t, x, x1, x2, u: (ld["sigma_x"](t, x, x1, x2, u)
                                                 + sxx1 * clamp_d(x) * clamp(x1)
                                                 + sxx2 * clamp_d(x) * clamp(x2))
    derivs["sigma_x1"] = lambda t, x, x1, x2, u: (ld["sigma_x1"](t, x, x1, x2, u)
                                                  + sxx1 * clamp(x) * clamp_d(x1))
    derivs["sigma_x2"] = lambda t, x, x1, x2, u: (ld["sigma_x2"](t, x, x1, x2, u)
                                                  + sxx2 * clamp(x) * clamp_d(x2))
    return CoefficientSet(name="bilinear", lam=lam, b=b, sigma=sigma, f=lf, phi=lphi,
                          params=dict(p), **derivs)


def _linear_quadratic_set(lam: float, p: Dict[str, float]) -> CoefficientSet:
    filled = {k: 0.0 for k in _LQ_KEYS}
    filled.update(p)
    a, bu, b0 = filled["a"], filled["bu"], filled["b0"]
    sigma0 = filled["sigma0"]
    q, r, fy = filled["q"], filled["r"], filled["fy"]
    phi_quad, phi_lin, phi0 = filled["phi_quad"], filled["phi_lin"], filled["phi0"]

    def b(t, x, x1, x2, u):
        return b0 + a * x + bu * u + _zero_like(x, x1, x2, u)

    def sigma(t, x, x1, x2, u):
        return sigma0 + _zero_like(x, x1, x2, u)

    def f(t, x, x1, x2, y, z, u):
        return -(q * x ** 2 + r * u ** 2) + fy * y + _zero_like(x, x1, x2, y, z, u)

    def phi(x, x1):
        return phi_quad * x ** 2 + phi_lin * x + phi0 + _zero_like(x, x1)

    derivs = dict(
        b_x=lambda t, x, x1, x2, u: a + _zero_like(x, x1, x2, u),
        b_x1=lambda t, x, x1, x2, u: _zero_like(x, x1, x2, u),
        b_x2=lambda t, x, x1, x2, u: _zero_like(x, x1, x2, u),
        sigma_x=lambda t, x, x1, x2, u: _zero_like(x, x1, x2, u),
        sigma_x1=lambda t, x, x1, x2, u: _zero_like(x, x1, x2, u),
        sigma_x2=lambda t, x, x1, x2, u: _zero_like(x, x1, x2, u),
        f_x=lambda t, x, x1, x2, y, z, u: -2.0 * q * x + _zero_like(x1, x2, y, z, u),
        f_x1=lambda t, x, x1, x2, y, z, u: _zero_like(x, x1, x2, y, z, u),
        f_x2=lambda t, x, x1, x2, y, z, u: _zero_like(x, x1, x2, y, z, u),
        f_y=lambda t, x, x1, x2, y, z, u: fy + _zero_like(x, x1, x2, y, z, u),
        f_z=lambda t, x, x1, x2, y, z, u: _zero_like(x, x1, x2, y, z, u),
        phi_x=lambda x, x1: 2.0 * phi_quad * x + phi_lin + _zero_like(x1),
        phi_x1=lambda x, x1: _zero_like(x, x1),
    )
    return CoefficientSet(name="linear_quadratic", lam=lam, b=b, sigma=sigma, f=f, phi=phi,
                          params=dict(p), **derivs)


FAMILIES = {
    "constant": (_constant_set, ("b0", "s0", "f0", "phi0")),
    "linear": (_linear_set, _LINEAR_KEYS),
    "bilinear": (_bilinear_set, _BILINEAR_KEYS),
    "linear_quadratic": (_linear_quadratic_set, _LQ_KEYS),
}


def make_coefficients(family: str, lam: float = 0.0, **params) -> CoefficientSet:
    """Build a coefficient set from the named parametric family.

    Unknown parameter names raise; omitted parameters default to zero
    (``clip`` defaults to 3.0 for the bilinear family).
    """
    if family not in FAMILIES:
        raise ConfigurationError(
            f"unknown coefficient family {family!r}; known: {sorted(FAMILIES)}"
        )
    builder, keys = FAMILIES[family]
    unknown = set(params) - set(keys)
    if unknown:
        raise ConfigurationError(f"unknown parameters for family {family!r}: {sorted(unknown)}")
    return builder(float(lam), {k: float(v) for k, v in params.items()})


def check_derivative_consistency(coeffs: CoefficientSet, seed: int = 0,
                                 n_points: int = 64, step: float = 1e-5) -> float:
    """Worst hybrid-relative mismatch between registered derivatives and
    central differences of the values, over random sample points.

    The step is scaled by |argument| + 1; mismatch is measured as
    |fd - d| / (1 + |d|).  Registry families stay well below 1e-6.
    """
    rng = np.random.default_rng(seed)
    pts = rng.normal(0.0, 1.5, size=(n_points, 7))
    t, x, x1, x2, y, z, u = (pts[:, i] for i in range(7))
    t = np.abs(t)

    def central(fn, args, slot):
        h = step * (np.abs(args[slot]) + 1.0)
        up = list(args)
        dn = list(args)
        up[slot] = args[slot] + h
        dn[slot] = args[slot] - h
        return (fn(*up) - fn(*dn)) / (2.0 * h)

    worst = 0.0
    state_args = (t, x, x1, x2, u)
    for fn, dfn, slot in ((coeffs.b, coeffs.b_x, 1), (coeffs.b, coeffs.b_x1, 2),
                          (coeffs.b, coeffs.b_x2, 3),
                          (coeffs.sigma, coeffs.sigma_x, 1), (coeffs.sigma, coeffs.sigma_x1, 2),
                          (coeffs.sigma, coeffs.sigma_x2, 3)):
        fd = central(fn, state_args, slot)
        d = dfn(*state_args)
        worst = max(worst, float(np.max(np.abs(fd - d) / (1.0 + np.abs(d)))))
    f_args = (t, x, x1, x2, y, z, u)
    for dfn, slot in ((coeffs.f_x, 1), (coeffs.f_x1, 2), (coeffs.f_x2, 3),
                      (coeffs.f_y, 4), (coeffs.f_z, 5)):
        fd = central(coeffs.f, f_args, slot)
        d = dfn(*f_args)
        worst = max(worst, float(np.max(np.abs(fd - d) / (1.0 + np.abs(d)))))
    for dfn, slot in ((coeffs.phi_x, 0), (coeffs.phi_x1, 1)):
        fd = central(coeffs.phi, (x, x1), slot)
        d = dfn(x, x1)
        worst = max(worst, float(np.max(np.abs(fd - d) / (1.0 + np.abs(d)))))
    return worst
