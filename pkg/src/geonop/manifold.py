"""Radial manifolds r(theta, phi) from spherical-harmonic coefficients:
embedding with chart derivatives, fundamental forms and Gaussian curvature,
barycentric shape families, point-cloud sampling, and noise injection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import sphere
from .sphere import ShBasis, ShCoeffs

__all__ = [
    "RadialManifold",
    "FundamentalForms",
    "NoiseSpec",
    "SingularChartError",
    "unit_sphere",
    "reference_shapes",
    "barycentric_lattice",
    "sample_barycentric",
    "embed",
    "forms_at",
    "sample_directions",
    "sample_point_cloud",
    "apply_noise",
]

_METRIC_TOL = 1e-14
# data-row layout shared with the geometry datasets
ROW_COLUMNS = ("x", "y", "z", "E", "F", "G", "L", "M", "N", "K")


class SingularChartError(ValueError):
    """Metric degenerate (EG - F^2 below tolerance) at the requested point."""


@dataclass
class RadialManifold:
    """Surface x = r(theta, phi) * unit_radial, r expanded in harmonics."""

    radial: ShCoeffs
    label: str | None = None

    @property
    def basis(self):
        return self.radial.basis

    def radius(self, theta, phi, deriv="value"):
        return sphere.synthesize(self.radial, theta, phi, deriv)


@dataclass
class FundamentalForms:
    """First/second fundamental form entries plus Gaussian curvature.

    All arrays share the shape of the evaluation points.
    """

    E: np.ndarray
    F: np.ndarray
    G: np.ndarray
    L: np.ndarray
    M: np.ndarray
    N: np.ndarray
    K: np.ndarray
    normal: np.ndarray = field(repr=False, default=None)

    def as_rows(self):
        """Stack the 7 learned channels in dataset order (E,F,G,L,M,N,K)."""
        return np.stack([self.E, self.F, self.G, self.L, self.M, self.N, self.K],
                        axis=-1)


@dataclass(frozen=True)
class NoiseSpec:
    """Relative Gaussian perturbation of the 10-column data rows."""

    mode: str = "none"  # none | uniform_all | outlier
    eps: float = 0.0
    n_outliers: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("none", "uniform_all", "outlier"):
            raise ValueError(f"unknown noise mode {self.mode!r}")
        if self.eps < 0:
            raise ValueError("noise level must be nonnegative")


def unit_sphere(lmax=12):
    """r = 1: coefficient sqrt(4 pi) on the constant mode."""
    c = np.zeros((lmax + 1) ** 2)
    c[0] = np.sqrt(4.0 * np.pi)
    return RadialManifold(ShCoeffs(ShBasis(lmax), c), label="A")


def reference_shapes(lmax=12):
    """The three reference manifolds anchoring the barycentric family.

    A is the unit sphere; B and C add low-order radial perturbations of
    increasing asymmetry.
    """
    basis = ShBasis(lmax)

    def shape(label, terms):
        c = np.zeros(basis.n_funcs)
        c[0] = np.sqrt(4.0 * np.pi)
        for (l, m), a in terms.items():
            c[basis.flat_index(l, m)] = a
        return RadialManifold(ShCoeffs(basis, c), label=label)

    a = shape("A", {})
    b = shape("B", {(2, 0): 0.25, (3, 2): 0.15})
    c = shape("C", {(4, 0): 0.35, (5, 3): 0.20, (6, 6): 0.10})
    return a, b, c


def sample_barycentric(a, b, c, u1, u2):
    """Uniform-simplex convex combination of three coefficient vectors."""
    if not (a.basis == b.basis == c.basis):
        raise ValueError("barycentric sampling requires a shared basis")
    w = np.sqrt(u1)
    d = (1.0 - w) * a.c + (1.0 - u2) * w * b.c + w * u2 * c.c
    return ShCoeffs(a.basis, d)


def barycentric_lattice(levels=6, lmax=12):
    """Triangular grid of shapes over (A, B, C), row-major from the A corner.

    levels=6 gives the 21-shape family: weights (i, j, k)/(levels-1) with
    i+j+k = levels-1, i descending, j ascending within a row.
    """
    a, b, c = reference_shapes(lmax)
    n = levels - 1
    shapes = []
    for i in range(n, -1, -1):
        for j in range(0, n - i + 1):
            k = n - i - j
            d = (i * a.radial.c + j * b.radial.c + k * c.radial.c) / n
            shapes.append(RadialManifold(ShCoeffs(a.basis, d),
                                         label=f"({i},{j},{k})/{n}"))
    return shapes


def embed(m, theta, phi):
    """Embedding sigma = r * u_hat and its chart derivatives.

    Returns (position, d_theta, d_phi, d_theta2, d_thetadphi, d_phi2),
    each of shape points x 3.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    phi = np.atleast_1d(np.asarray(phi, dtype=np.float64))
    tab = sphere.eval_sh_all(m.basis, theta, phi, second=True)
    r = {ch: t @ m.radial.c for ch, t in tab.items()}

    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    u = np.stack([st * cp, st * sp, ct], axis=-1)
    u_t = np.stack([ct * cp, ct * sp, -st], axis=-1)
    u_p = np.stack([-st * sp, st * cp, np.zeros_like(st)], axis=-1)
    u_tt = -u
    u_tp = np.stack([-ct * sp, ct * cp, np.zeros_like(st)], axis=-1)
    u_pp = np.stack([-st * cp, -st * sp, np.zeros_like(st)], axis=-1)

    def c(x):
        return x[..., None]

    pos = c(r["value"]) * u
    s_t = c(r["dtheta"]) * u + c(r["value"]) * u_t
    s_p = c(r["dphi"]) * u + c(r["value"]) * u_p
    s_tt = c(r["dtheta2"]) * u + 2.0 * c(r["dtheta"]) * u_t + c(r["value"]) * u_tt
    s_tp = (c(r["dthetadphi"]) * u + c(r["dtheta"]) * u_p
            + c(r["dphi"]) * u_t + c(r["value"]) * u_tp)
    s_pp = c(r["dphi2"]) * u + 2.0 * c(r["dphi"]) * u_p + c(r["value"]) * u_pp
    return pos, s_t, s_p, s_tt, s_tp, s_pp


def forms_at(m, theta, phi):
    """Fundamental forms and Gaussian curvature at chart points.

    E, F, G from the embedding tangents; L, M, N against the outward
    normal n = s_t x s_p / |s_t x s_p|; K = det(I^-1 II).
    """
    pos, s_t, s_p, s_tt, s_tp, s_pp = embed(m, theta, phi)

    def dot(a, b):
        return np.sum(a * b, axis=-1)

    E = dot(s_t, s_t)
    F = dot(s_t, s_p)
    G = dot(s_p, s_p)
    det1 = E * G - F * F
    if np.any(det1 <= _METRIC_TOL):
        raise SingularChartError("degenerate metric: EG - F^2 below tolerance")
    cross = np.cross(s_t, s_p)
    n = cross / np.linalg.norm(cross, axis=-1, keepdims=True)
    L = dot(s_tt, n)
    M = dot(s_tp, n)
    N = dot(s_pp, n)
    K = (L * N - M * M) / det1
    return FundamentalForms(E=E, F=F, G=G, L=L, M=M, N=N, K=K, normal=n)


def _rng(seed):
    # counter-based bit generator: per-(seed, index) streams are independent
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


def sample_directions(n, seed, pole_margin=1e-6):
    """n directions uniform on S2 via normalized Gaussians, poles excluded.

    Deterministic under seed; zero vectors and near-pole draws are redrawn.
    """
    rng = _rng(seed)
    theta = np.empty(n)
    phi = np.empty(n)
    filled = 0
    while filled < n:
        v = rng.standard_normal((2 * (n - filled) + 8, 3))
        norm = np.linalg.norm(v, axis=1)
        v = v[norm > 1e-12]
        z = v[:, 2] / np.linalg.norm(v, axis=1)
        keep = np.abs(z) < 1.0 - pole_margin
        v = v[keep][: n - filled]
        vn = v / np.linalg.norm(v, axis=1, keepdims=True)
        take = vn.shape[0]
        theta[filled: filled + take] = np.arccos(vn[:, 2])
        phi[filled: filled + take] = np.mod(np.arctan2(vn[:, 1], vn[:, 0]),
                                            2.0 * np.pi)
        filled += take
    return theta, phi


def sample_point_cloud(m, n, seed):
    """n surface points: uniform directions radially projected to r(theta,phi).

    Returns (positions [n,3], theta [n], phi [n]).
    """
    if n < 1:
        raise ValueError("cloud size must be >= 1")
    theta, phi = sample_directions(n, seed)
    r = m.radius(theta, phi)
    u = np.stack([np.sin(theta) * np.cos(phi),
                  np.sin(theta) * np.sin(phi),
                  np.cos(theta)], axis=-1)
    return r[:, None] * u, theta, phi


def apply_noise(rows, spec):
    """Perturb (x,y,z,E,F,G,L,M,N,K) rows with relative Gaussian noise.

    Per-row scales: positions, (E,F,G), (L,M,N) by their group norms and K
    by |K|; `uniform_all` hits every row, `outlier` only n_outliers rows.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != len(ROW_COLUMNS):
        raise ValueError(f"expected rows of width {len(ROW_COLUMNS)}")
    if spec.mode == "none" or spec.eps == 0.0:
        return rows.copy()
    n = rows.shape[0]
    scale = np.empty_like(rows)
    scale[:, 0:3] = np.linalg.norm(rows[:, 0:3], axis=1, keepdims=True)
    scale[:, 3:6] = np.linalg.norm(rows[:, 3:6], axis=1, keepdims=True)
    scale[:, 6:9] = np.linalg.norm(rows[:, 6:9], axis=1, keepdims=True)
    scale[:, 9] = np.abs(rows[:, 9])
    rng = _rng(spec.seed)
    noise = spec.eps * scale * rng.standard_normal(rows.shape)
    if spec.mode == "uniform_all":
        return rows + noise
    if spec.n_outliers > n:
        raise ValueError("n_outliers exceeds the cloud size")
    chosen = rng.choice(n, size=spec.n_outliers, replace=False)
    out = rows.copy()
    out[chosen] += noise[chosen]
    return out


def default_outlier_count(n_points):
    """50 outliers regardless of cloud size, scaled down only below N=256."""
    if n_points < 256:
        return max(1, int(round(50.0 * n_points / 1024.0)))
    return 50
