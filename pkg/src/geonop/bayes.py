"""Bayesian manifold-shape identification over a discrete family:
radial-variance prior, surrogate likelihood from Laplace-Beltrami
response observations, posterior table with MAP and top-k, and exports
(JSON, CSV, SVG heat map of the barycentric lattice).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import gnp as gnp_mod
from . import lb_solver, manifold, sphere
from .manifold import RadialManifold
from .sphere import ShBasis, ShCoeffs

__all__ = ["ShapePrior", "Observation", "PosteriorTable", "free_energy",
           "xi_squared", "log_likelihood", "likelihood", "posterior",
           "GnpSurrogate", "SpectralSurrogate", "make_observation"]

DEFAULT_SIGMA2 = 1e-3


def free_energy(m, rule=None):
    """Variance of the radial function under the normalized sphere measure.

    Zero exactly for spheres; grows with shape complexity; rotation
    invariant by construction.
    """
    if rule is None:
        rule = sphere.build_quadrature(2 * m.basis.lmax + 2)
    r = m.radius(rule.theta, rule.phi)
    w = rule.weights / (4.0 * np.pi)
    mu = float(w @ r)
    return float(w @ (r - mu) ** 2)


@dataclass
class ShapePrior:
    """Discrete prior p_k proportional to exp(-beta * F_k)."""

    beta: float
    energies: np.ndarray
    probabilities: np.ndarray

    @classmethod
    def over_family(cls, family, beta=1.0):
        f = np.array([free_energy(m) for m in family])
        logp = -beta * f
        logp -= logp.max()
        p = np.exp(logp)
        p /= p.sum()
        return cls(beta=beta, energies=f, probabilities=p)


@dataclass
class Observation:
    """Cloud on the true manifold plus M response pairs sampled there.

    The generating coefficient vectors ride along so candidate-shape
    evaluation can re-synthesize f and u on other clouds.
    """

    points: np.ndarray        # N x 3
    theta: np.ndarray
    phi: np.ndarray
    f_values: np.ndarray      # M x N
    u_values: np.ndarray      # M x N
    f_coeffs: list            # M ShCoeffs
    u_coeffs: list            # M ShCoeffs
    truth_index: int | None = None

    @property
    def n_pairs(self):
        return self.f_values.shape[0]


def make_observation(m, n_pairs, n_points, seed, solution_lmax=12,
                     truth_index=None, system=None):
    """Fresh observation data on a manifold via the spectral solver."""
    if system is None:
        system = lb_solver.assemble(m, ShBasis(solution_lmax))
    pts, th, ph = manifold.sample_point_cloud(m, n_points, seed)
    f_values, u_values, f_coeffs, u_coeffs = [], [], [], []
    for i in range(n_pairs):
        _, f = lb_solver.make_rhs(system, center_seed=seed * 1000 + 7 * i + 1)
        u = lb_solver.solve(system, f)
        f_values.append(sphere.synthesize(f, th, ph))
        u_values.append(sphere.synthesize(u, th, ph))
        f_coeffs.append(f)
        u_coeffs.append(u)
    return Observation(points=pts, theta=th, phi=ph,
                       f_values=np.array(f_values),
                       u_values=np.array(u_values),
                       f_coeffs=f_coeffs, u_coeffs=u_coeffs,
                       truth_index=truth_index)


class GnpSurrogate:
    """Trained operator as the forward map (cloud, f) -> u."""

    def __init__(self, model, normalizer=None):
        self.model = model
        self.normalizer = normalizer

    def predict(self, m, points, theta, phi, f_values, f_coeffs):
        graph = gnp_mod.build_graph(points, self.model.cfg.radius)
        feats = np.concatenate([points, f_values[:, None]], axis=1)
        if self.normalizer is not None:
            feats = self.normalizer.encode_features(feats)
        with ad.no_grad():
            out = self.model(graph, feats)
        pred = out.data[:, 0]
        if self.normalizer is not None:
            pred = self.normalizer.decode_target(out.data)[:, 0]
        return pred


class SpectralSurrogate:
    """Oracle forward map: the Galerkin solver on the candidate shape."""

    def __init__(self, solution_lmax=12):
        self.solution_lmax = solution_lmax
        self._systems = {}

    def _system(self, m):
        key = id(m)
        if key not in self._systems:
            self._systems[key] = lb_solver.assemble(
                m, ShBasis(self.solution_lmax))
        return self._systems[key]

    def predict(self, m, points, theta, phi, f_values, f_coeffs):
        system = self._system(m)
        # a chart function with zero mean on the truth shape is generally
        # not zero-mean on another candidate; shift the constant mode so
        # the Poisson problem stays compatible (no-op on the matching shape)
        f = f_coeffs.copy()
        s = system.mean_functional()
        f.c[0] -= (float(s @ f.c) / system.area) * np.sqrt(4.0 * np.pi)
        u = lb_solver.solve(system, f)
        return sphere.synthesize(u, theta, phi)


def xi_squared(surrogate, m, obs, theta=None, phi=None, points=None):
    """Mean relative squared L2 mismatch over the observation pairs.

    With no override points, evaluates on the observation's own cloud.
    """
    if points is None:
        points, theta, phi = obs.points, obs.theta, obs.phi
        u_obs = obs.u_values
        f_obs = obs.f_values
    else:
        u_obs = np.array([sphere.synthesize(c, theta, phi)
                          for c in obs.u_coeffs])
        f_obs = np.array([sphere.synthesize(c, theta, phi)
                          for c in obs.f_coeffs])
    total = 0.0
    for i in range(obs.n_pairs):
        denom = float(np.sum(u_obs[i] ** 2))
        if denom == 0.0:
            raise ValueError(f"degenerate observation: ||u^({i})|| = 0")
        pred = surrogate.predict(m, points, theta, phi, f_obs[i],
                                 obs.f_coeffs[i])
        total += float(np.sum((u_obs[i] - pred) ** 2)) / denom
    return total / obs.n_pairs


def log_likelihood(xi2, sigma2=DEFAULT_SIGMA2):
    """Gaussian response likelihood in log space."""
    if xi2 < 0:
        raise ValueError("xi^2 must be nonnegative")
    return -0.5 * math.log(2.0 * math.pi * sigma2) - xi2 / (2.0 * sigma2)


def likelihood(xi2, sigma2=DEFAULT_SIGMA2):
    return math.exp(log_likelihood(xi2, sigma2))


@dataclass
class PosteriorTable:
    """Discrete posterior over the shape family, sorted reporting."""

    truth_index: int | None
    prior: np.ndarray
    xi2: np.ndarray
    log_lik: np.ndarray
    posterior: np.ndarray
    n_pairs: int

    @property
    def ranking(self):
        # ties broken toward the lower shape index (stable sort)
        return np.argsort(-self.posterior, kind="stable")

    @property
    def map_index(self):
        return int(self.ranking[0])

    def top(self, k=2):
        return [(int(i), float(self.posterior[i])) for i in self.ranking[:k]]

    def to_dict(self):
        return {
            "true_shape": self.truth_index,
            "n_pairs": self.n_pairs,
            "entries": [
                {"shape_index": k, "prior": float(self.prior[k]),
                 "xi2": float(self.xi2[k]),
                 "log_likelihood": float(self.log_lik[k]),
                 "posterior": float(self.posterior[k])}
                for k in range(self.posterior.size)],
            "map": self.map_index,
            "top2": [{"index": i, "posterior": p} for i, p in self.top(2)],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1)

    def csv_row(self):
        """Row in the M, P1, P2, L1, L2 report layout."""
        (i1, p1), (i2, p2) = self.top(2)
        truth = self.truth_index if self.truth_index is not None else -1
        return f"{truth},{i1},{i2},{p1:.6e},{p2:.6e}"

    def to_csv(self):
        return "M,P1,P2,L1,L2\n" + self.csv_row() + "\n"

    def to_svg(self, levels=6, size=420):
        """Posterior heat map over the barycentric lattice (A top corner)."""
        n = levels - 1
        pad = 40.0
        h = (size - 2 * pad) * math.sqrt(3.0) / 2.0
        va = (size / 2.0, pad)
        vb = (pad, pad + h)
        vc = (size - pad, pad + h)
        pmax = float(self.posterior.max()) or 1.0
        parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" '
                 f'height="{int(pad + h + pad)}">',
                 '<rect width="100%" height="100%" fill="white"/>']
        idx = 0
        for i in range(n, -1, -1):
            for j in range(0, n - i + 1):
                k = n - i - j
                wa, wb, wc = i / n, j / n, k / n
                x = wa * va[0] + wb * vb[0] + wc * vc[0]
                y = wa * va[1] + wb * vb[1] + wc * vc[1]
                t = self.posterior[idx] / pmax
                r = int(255 * t)
                b = int(255 * (1.0 - t))
                ring = ('stroke="black" stroke-width="2.5"'
                        if idx == self.truth_index else
                        'stroke="gray" stroke-width="0.5"')
                parts.append(
                    f'<circle cx="{x:.1f}" cy="{y:.1f}" r="14" '
                    f'fill="rgb({r},40,{b})" {ring}/>')
                parts.append(
                    f'<text x="{x:.1f}" y="{y + 28:.1f}" font-size="9" '
                    f'text-anchor="middle">{idx}</text>')
                idx += 1
        for name, (x, y, dy) in {"A": (*va, -10), "B": (*vb, 18),
                                 "C": (*vc, 18)}.items():
            parts.append(f'<text x="{x:.1f}" y="{y + dy:.1f}" font-size="14" '
                         f'text-anchor="middle">{name}</text>')
        parts.append("</svg>")
        return "\n".join(parts)


def posterior(surrogate, obs, family, prior=None, sigma2=DEFAULT_SIGMA2,
              candidate_seed=12345, n_points=None):
    """Posterior over the candidate family for one observation.

    For each candidate a cloud is sampled with a seed shared across
    candidates, the observation's responses are re-synthesized there from
    their coefficient vectors, and xi^2 scored; probability arithmetic is
    done in log space.
    """
    if prior is None:
        prior = ShapePrior.over_family(family)
    n_points = n_points or obs.points.shape[0]
    xi2 = np.empty(len(family))
    for k, m in enumerate(family):
        pts, th, ph = manifold.sample_point_cloud(m, n_points, candidate_seed)
        xi2[k] = xi_squared(surrogate, m, obs, theta=th, phi=ph, points=pts)
    log_lik = np.array([log_likelihood(x, sigma2) for x in xi2])
    log_post = log_lik + np.log(prior.probabilities)
    log_post -= log_post.max()
    post = np.exp(log_post)
    post /= post.sum()
    return PosteriorTable(truth_index=obs.truth_index,
                          prior=prior.probabilities.copy(), xi2=xi2,
                          log_lik=log_lik, posterior=post,
                          n_pairs=obs.n_pairs)
