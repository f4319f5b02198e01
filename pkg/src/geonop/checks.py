"""Fast self-check suite: independent oracles for the numerical core.

Each check reports its maximum observed error against a fixed tolerance;
the suite is cheap enough to run on every fresh build.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import gnp as gnp_mod
from . import lb_solver, manifold, sphere

__all__ = ["CheckResult", "run_checks"]


@dataclass
class CheckResult:
    name: str
    max_error: float
    tolerance: float

    @property
    def passed(self):
        return self.max_error < self.tolerance

    def line(self):
        state = "PASS" if self.passed else "FAIL"
        return (f"{state}  {self.name:<34} max err {self.max_error:.3e}  "
                f"(tol {self.tolerance:.1e})")


def _check_orthonormality(corrupt_sh=False):
    basis = sphere.ShBasis(10)
    rule = sphere.build_quadrature(20)
    tab = sphere.eval_sh_all(basis, rule.theta, rule.phi, second=False)["value"]
    if corrupt_sh:
        tab = tab * 1.001  # harness hook: simulate a broken normalization
    gram = tab.T @ (rule.weights[:, None] * tab)
    return CheckResult("harmonic orthonormality",
                       float(np.abs(gram - np.eye(basis.n_funcs)).max()), 1e-10)


def _check_quadrature():
    rule = sphere.build_quadrature(16)
    return CheckResult("quadrature weight sum",
                       abs(float(rule.weights.sum()) - 4.0 * np.pi), 1e-12)


def _check_sphere_forms():
    errs = []
    rng = np.random.Generator(np.random.Philox(key=np.uint64(11)))
    for radius in (0.5, 1.0, 2.0):
        m = manifold.unit_sphere(6)
        m.radial.c[0] *= radius
        th = rng.uniform(0.05, np.pi - 0.05, 200)
        ph = rng.uniform(0.0, 2.0 * np.pi, 200)
        f = manifold.forms_at(m, th, ph)
        errs += [np.abs(f.E - radius**2).max(), np.abs(f.F).max(),
                 np.abs(f.G - radius**2 * np.sin(th) ** 2).max(),
                 np.abs(f.K - 1.0 / radius**2).max()]
    return CheckResult("sphere fundamental forms", float(max(errs)), 1e-10)


def _check_sphere_eigenfunctions():
    basis = sphere.ShBasis(6)
    system = lb_solver.assemble(manifold.unit_sphere(6), basis)
    errs = []
    for l, m in ((1, 0), (3, 2), (6, -4)):
        f = np.zeros(basis.n_funcs)
        f[basis.flat_index(l, m)] = l * (l + 1)
        u = lb_solver.solve(system, sphere.ShCoeffs(basis, f))
        expect = np.zeros(basis.n_funcs)
        expect[basis.flat_index(l, m)] = 1.0
        errs.append(np.linalg.norm(u.c - expect))
    return CheckResult("sphere Poisson eigenfunctions", float(max(errs)), 1e-8)


def _check_aggregation():
    rng = np.random.Generator(np.random.Philox(key=np.uint64(5)))
    pts = rng.standard_normal((12, 3))
    graph = gnp_mod.build_graph(pts, 1.5)
    cfg = gnp_mod.GnpConfig(in_channels=3, out_channels=1, latent_dim=6,
                            depth=1, kernel_width=8, radius=1.5)
    layer = gnp_mod.GnpLayer(cfg, rng)
    v = rng.standard_normal((12, 6))
    with ad.no_grad():
        fast = gnp_mod.kernel_apply_full(layer, graph, ad.Tensor(v)).data
        kmat = layer.kernel_net(ad.Tensor(graph.edge_features)).data
    # dense double loop over the neighbor lists
    slow = np.zeros_like(v)
    lists = graph.neighbor_lists()
    edge_of = {(d, s): e for e, (s, d) in enumerate(zip(graph.src, graph.dst))}
    for i, nbrs in enumerate(lists):
        acc = np.zeros(6)
        for j in nbrs:
            k = kmat[edge_of[(i, j)]].reshape(6, 6)
            acc += k @ v[j]
        slow[i] = acc / len(nbrs)
    return CheckResult("mean aggregation vs dense loop",
                       float(np.abs(fast - slow).max()), 1e-12)


def _check_gradients():
    rng = np.random.Generator(np.random.Philox(key=np.uint64(17)))
    cfg = gnp_mod.GnpConfig(in_channels=3, out_channels=2, latent_dim=6,
                            depth=2, kernel_width=8, radius=2.0)
    model = gnp_mod.GnpModel(cfg, seed=2)
    for _, p in model.named_parameters():
        p.data += 0.05 * rng.standard_normal(p.data.shape)
    pts = rng.standard_normal((8, 3))
    graph = gnp_mod.build_graph(pts, 2.0)
    target = rng.standard_normal((8, 2))

    def loss_value():
        with ad.no_grad():
            out = model(graph, pts)
        d = out.data - target
        return float((d * d).sum())

    out = model(graph, pts)
    diff = ad.add(out, ad.Tensor(-target))
    ad.sum_all(ad.mul(diff, diff)).backward()
    h = 1e-5
    worst = 0.0
    for _, p in model.named_parameters():
        flat = p.data.ravel()
        gflat = p.grad.ravel()
        for i in rng.integers(0, flat.size, 2):
            old = flat[i]
            flat[i] = old + h
            lp = loss_value()
            flat[i] = old - h
            lm = loss_value()
            flat[i] = old
            fd = (lp - lm) / (2 * h)
            worst = max(worst, abs(gflat[i] - fd)
                        / max(1e-7, abs(fd), abs(gflat[i])))
    return CheckResult("operator gradient vs finite diff", worst, 1e-5)


def run_checks(corrupt_sh=False):
    """Run the oracle suite; returns a list of CheckResult."""
    return [
        _check_quadrature(),
        _check_orthonormality(corrupt_sh=corrupt_sh),
        _check_sphere_forms(),
        _check_sphere_eigenfunctions(),
        _check_aggregation(),
        _check_gradients(),
    ]
