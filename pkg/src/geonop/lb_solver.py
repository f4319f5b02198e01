"""Galerkin spectral solver for the Laplace-Beltrami-Poisson problem on
radial manifolds.  Serves both as ground-truth data generator and as the
oracle forward map for the Bayesian pipeline.

Weak form: stiffness from first chart derivatives against the inverse
metric, mass from the surface measure; the constant-mode kernel of a
closed surface is handled by an exact zero-mean constraint (KKT solve).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import sphere
from .manifold import RadialManifold, forms_at
from .sphere import ShBasis, ShCoeffs

__all__ = ["LbSystem", "RhsSpec", "ContractViolation", "ConditioningError",
           "assemble", "solve", "make_rhs", "default_rule_level"]


class ContractViolation(ValueError):
    """Caller broke an operation precondition."""


class ConditioningError(RuntimeError):
    """System rank-deficient beyond the constant mode."""


def default_rule_level(lmax):
    """Quadrature level covering products of harmonics plus metric variation."""
    return 2 * lmax + 8


@dataclass
class LbSystem:
    """Assembled Galerkin system for one manifold and solution band limit."""

    manifold: RadialManifold
    basis: ShBasis
    rule: sphere.QuadratureRule
    stiffness: np.ndarray
    mass: np.ndarray
    area_weights: np.ndarray  # per-node dA weights on the rule
    _kkt = None

    @property
    def area(self):
        return float(self.area_weights.sum())

    _mean_vec = None

    def mean_functional(self):
        """Vector s with s . c = integral of the synthesized function over M."""
        if self._mean_vec is None:
            tab = sphere.eval_sh_all(self.basis, self.rule.theta,
                                     self.rule.phi, second=False)["value"]
            self._mean_vec = tab.T @ self.area_weights
        return self._mean_vec

    def _factorization(self):
        if self._kkt is None:
            nb = self.basis.n_funcs
            k = np.zeros((nb + 1, nb + 1))
            k[:nb, :nb] = self.stiffness
            constraint = self.mass[:, 0]  # <u, Y00> = 0 pins the constant mode
            k[:nb, nb] = constraint
            k[nb, :nb] = constraint
            try:
                self._kkt = linalg.lu_factor(k)
            except linalg.LinAlgError as exc:
                raise ConditioningError(str(exc)) from exc
        return self._kkt


def assemble(m, basis, rule=None):
    """Build stiffness and mass matrices by quadrature over the chart.

    S_ab = int gInv_ij dY_a dY_b sqrt(g) dtheta dphi,
    M_ab = int Y_a Y_b sqrt(g) dtheta dphi.
    """
    if rule is None:
        rule = sphere.build_quadrature(default_rule_level(basis.lmax))
    if rule.order < basis.lmax:
        raise ContractViolation(
            f"rule order {rule.order} below band limit {basis.lmax}")
    th, ph, w = rule.theta, rule.phi, rule.weights
    f = forms_at(m, th, ph)
    det = f.E * f.G - f.F * f.F
    sqrtg = np.sqrt(det)
    # rule weights carry dOmega = sin(theta) dtheta dphi; divide it back out
    w_chart = w / np.sin(th)
    tab = sphere.eval_sh_all(basis, th, ph, second=True)
    y, yt, yp = tab["value"], tab["dtheta"], tab["dphi"]
    a = w_chart * sqrtg * f.G / det
    b = w_chart * sqrtg * f.F / det
    c = w_chart * sqrtg * f.E / det
    stiff = (yt.T @ (a[:, None] * yt)
             - yt.T @ (b[:, None] * yp)
             - yp.T @ (b[:, None] * yt)
             + yp.T @ (c[:, None] * yp))
    w_area = w_chart * sqrtg
    mass = y.T @ (w_area[:, None] * y)
    stiff = 0.5 * (stiff + stiff.T)
    mass = 0.5 * (mass + mass.T)
    return LbSystem(manifold=m, basis=basis, rule=rule, stiffness=stiff,
                    mass=mass, area_weights=w_area)


def solve(sys, f, mean_tol=1e-8):
    """Solve -Laplace_LB u = f for zero-mean f; returns zero-mean u.

    Uses the saddle-point system that pins the constant mode exactly.
    """
    if f.basis != sys.basis:
        raise ContractViolation("rhs coefficients on a different basis")
    nb = sys.basis.n_funcs
    mf = sys.mass @ f.c
    scale = max(1.0, np.abs(mf).max())
    if abs(mf[0]) > mean_tol * scale:
        raise ContractViolation(
            f"rhs has nonzero manifold mean ({mf[0]:.3e})")
    rhs = np.zeros(nb + 1)
    rhs[:nb] = mf
    u = linalg.lu_solve(sys._factorization(), rhs)[:nb]
    resid = sys.stiffness @ u - mf
    if np.abs(resid).max() > 1e-6 * scale:
        cond = np.linalg.cond(sys.stiffness + np.outer(sys.mass[:, 0],
                                                       sys.mass[:, 0]))
        raise ConditioningError(
            f"solve residual {np.abs(resid).max():.3e}; cond ~ {cond:.3e}")
    return ShCoeffs(sys.basis, u)


@dataclass(frozen=True)
class RhsSpec:
    """Offset Gaussian bump defining one right-hand side sample."""

    center: tuple
    width: float = 0.15
    offset: float = 0.0


def make_rhs(sys, center=None, center_seed=None, width=0.15):
    """Gaussian bump centered on the manifold, offset to exact zero mean.

    Either an explicit embedded center or a seed that draws a uniform
    direction and projects it radially onto the surface.  Returns
    (RhsSpec, band-limited coefficients).
    """
    if width <= 0:
        raise ValueError("rhs width must be positive")
    m = sys.manifold
    if center is None:
        if center_seed is None:
            raise ValueError("need either an explicit center or a seed")
        from .manifold import sample_directions
        th, ph = sample_directions(1, center_seed)
        r = m.radius(th, ph)
        center = (r * np.array([np.sin(th) * np.cos(ph),
                                np.sin(th) * np.sin(ph),
                                np.cos(th)]).T)[0]
    center = np.asarray(center, dtype=np.float64)

    th, ph = sys.rule.theta, sys.rule.phi
    r = m.radius(th, ph)
    pos = r[:, None] * np.stack([np.sin(th) * np.cos(ph),
                                 np.sin(th) * np.sin(ph),
                                 np.cos(th)], axis=-1)
    d2 = np.sum((pos - center) ** 2, axis=1)
    gauss = np.exp(-0.5 * d2 / width**2) / np.sqrt(2.0 * np.pi * width**2)

    w_area = sys.area_weights
    c0 = float((w_area @ gauss) / w_area.sum())
    coeffs = sphere.analyze(gauss - c0, sys.rule, sys.basis)
    # interpolation moves the mean slightly; shift the constant mode back
    s = sys.mean_functional()
    extra = float(s @ coeffs.c) / sys.area
    coeffs.c[0] -= extra * np.sqrt(4.0 * np.pi)
    return RhsSpec(center=tuple(center), width=width, offset=c0 + extra), coeffs
