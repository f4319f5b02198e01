"""Real spherical harmonics on S2: values, chart derivatives, quadrature,
and analysis/synthesis of band-limited functions.

Conventions: orthonormal real basis without the Condon-Shortley sign,
flat index l*l + l + m for 0 <= l <= L, -l <= m <= l.  Angle derivatives
come from scipy's analytic recurrences (never finite differences).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = [
    "DERIV_CHANNELS",
    "PoleError",
    "ShBasis",
    "QuadratureRule",
    "ShCoeffs",
    "eval_sh",
    "build_quadrature",
    "analyze",
    "synthesize",
    "fibonacci_sphere",
]

# order-spec channels: value, d/dtheta, d/dphi and the three second derivatives
DERIV_CHANNELS = ("value", "dtheta", "dphi", "dtheta2", "dthetadphi", "dphi2")

_POLE_TOL = 1e-12


class PoleError(ValueError):
    """Chart derivative requested at theta in {0, pi}."""


@dataclass(frozen=True)
class ShBasis:
    """Real spherical-harmonic basis truncated at band limit lmax."""

    lmax: int

    def __post_init__(self):
        if self.lmax < 0:
            raise ValueError("lmax must be nonnegative")

    @property
    def n_funcs(self):
        return (self.lmax + 1) ** 2

    def flat_index(self, l, m):
        if not (0 <= l <= self.lmax and -l <= m <= l):
            raise ValueError(f"(l, m)=({l}, {m}) outside basis lmax={self.lmax}")
        return l * l + l + m

    def degrees(self):
        """Degree l of each flat index, shape (n_funcs,)."""
        ls = np.empty(self.n_funcs, dtype=np.intp)
        for l in range(self.lmax + 1):
            ls[l * l: (l + 1) ** 2] = l
        return ls


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes (theta, phi) with weights for the solid-angle measure dOmega."""

    theta: np.ndarray
    phi: np.ndarray
    weights: np.ndarray
    order: int  # exact for products of harmonics up to this degree each

    @property
    def n_nodes(self):
        return self.theta.size


@dataclass
class ShCoeffs:
    """Coefficient vector over a real spherical-harmonic basis."""

    basis: ShBasis
    c: np.ndarray

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=np.float64)
        if self.c.shape != (self.basis.n_funcs,):
            raise ValueError(
                f"coefficient length {self.c.shape} != ({self.basis.n_funcs},)"
            )

    def copy(self):
        return ShCoeffs(self.basis, self.c.copy())


def _check_pole(theta, deriv):
    if deriv != "value":
        if np.any(np.sin(theta) < _POLE_TOL):
            raise PoleError(
                f"derivative channel '{deriv}' undefined at theta in {{0, pi}}"
            )


def _complex_tables(lmax, theta, phi, diff_n):
    """scipy complex Y_l^m for all m >= 0 pairs, vectorized over points."""
    ls, ms = [], []
    for l in range(lmax + 1):
        for m in range(l + 1):
            ls.append(l)
            ms.append(m)
    ls = np.asarray(ls)[:, None]
    ms = np.asarray(ms)[:, None]
    return ls, ms, special.sph_harm_y(ls, ms, theta[None, :], phi[None, :],
                                      diff_n=diff_n)


def eval_sh_all(basis, theta, phi, second=True):
    """Evaluate every basis function and derivative channel at the points.

    Returns a dict channel -> array of shape (n_points, n_funcs).
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    phi = np.atleast_1d(np.asarray(phi, dtype=np.float64))
    if theta.shape != phi.shape or theta.ndim != 1:
        raise ValueError("theta and phi must be 1-d arrays of equal length")
    diff_n = 2 if second else 0
    ls, ms, out = _complex_tables(basis.lmax, theta, phi, diff_n)
    if second:
        val, jac, hess = out
        channels = {
            "value": val,
            "dtheta": jac[..., 0],
            "dphi": jac[..., 1],
            "dtheta2": hess[..., 0, 0],
            "dthetadphi": hess[..., 0, 1],
            "dphi2": hess[..., 1, 1],
        }
    else:
        channels = {"value": out}
    # complex (CS-phase) -> real CS-free basis, same linear map per channel
    sign = np.where(ms % 2 == 0, 1.0, -1.0)  # strips the Condon-Shortley phase
    nb = basis.n_funcs
    tables = {}
    for name, tab in channels.items():
        real = np.empty((theta.size, nb), dtype=np.float64)
        flat_pos = (ls * ls + ls + ms)[:, 0]
        flat_neg = (ls * ls + ls - ms)[:, 0]
        re = np.real(tab) * sign
        im = np.imag(tab) * sign
        mpos = ms[:, 0] > 0
        real[:, flat_pos[~mpos]] = re[~mpos].T
        real[:, flat_pos[mpos]] = np.sqrt(2.0) * re[mpos].T
        real[:, flat_neg[mpos]] = np.sqrt(2.0) * im[mpos].T
        tables[name] = real
    return tables


def eval_sh(basis, theta, phi, deriv="value"):
    """One derivative channel of every basis function at (theta, phi).

    Scalar angles give a vector of length (lmax+1)^2; arrays give a
    (n_points, n_funcs) matrix.
    """
    if deriv not in DERIV_CHANNELS:
        raise ValueError(f"unknown derivative channel {deriv!r}")
    scalar = np.isscalar(theta) or np.asarray(theta).ndim == 0
    th = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    _check_pole(th, deriv)
    tab = eval_sh_all(basis, th, np.atleast_1d(phi), second=(deriv != "value"))
    out = tab[deriv]
    return out[0] if scalar else out


def build_quadrature(level):
    """Gauss-Legendre (cos theta) x trapezoid (phi) product rule.

    level+1 polar nodes and 2*level+2 azimuthal nodes: exact for
    spherical-harmonic products up to degree `level` in each factor.
    """
    if level < 1:
        raise ValueError("quadrature level must be >= 1")
    x, w = np.polynomial.legendre.leggauss(level + 1)
    theta_1d = np.arccos(x)
    n_phi = 2 * level + 2
    phi_1d = 2.0 * np.pi * np.arange(n_phi) / n_phi
    theta = np.repeat(theta_1d, n_phi)
    phi = np.tile(phi_1d, theta_1d.size)
    weights = np.repeat(w, n_phi) * (2.0 * np.pi / n_phi)
    return QuadratureRule(theta=theta, phi=phi, weights=weights, order=level)


def analyze(values, rule, basis):
    """Hyper-interpolation: project node values onto the basis.

    c_a = sum_q w_q f(x_q) Y_a(x_q); requires rule.order >= basis.lmax.
    """
    if rule.order < basis.lmax:
        raise ValueError(
            f"rule order {rule.order} insufficient for band limit {basis.lmax}"
        )
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (rule.n_nodes,):
        raise ValueError(f"expected {rule.n_nodes} node values, got {values.shape}")
    tab = eval_sh_all(basis, rule.theta, rule.phi, second=False)["value"]
    return ShCoeffs(basis, tab.T @ (rule.weights * values))


def synthesize(coeffs, theta, phi, deriv="value"):
    """Evaluate the band-limited function (or a chart derivative) at points."""
    tab = eval_sh(coeffs.basis, theta, phi, deriv)
    return tab @ coeffs.c


def fibonacci_sphere(n):
    """Deterministic near-uniform lattice of n points on S2, poles excluded."""
    i = np.arange(n)
    z = 1.0 - (2.0 * i + 1.0) / n
    golden = (1.0 + np.sqrt(5.0)) / 2.0
    phi = np.mod(2.0 * np.pi * i / golden, 2.0 * np.pi)
    theta = np.arccos(np.clip(z, -1.0, 1.0))
    return theta, phi
