"""Builders for the three learning tasks and their on-disk containers.

Task A: point cloud -> fundamental forms and curvature, over a random
barycentric shape family.  Task B: (cloud, f) -> u for the surface
Poisson problem on one manifold.  Task C: the same response map over the
21-shape lattice, feeding the Bayesian pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import lb_solver, manifold, sphere
from .manifold import NoiseSpec, RadialManifold
from .sphere import ShBasis, ShCoeffs
from .storage import Container
from .training import Sample

__all__ = ["GeometryDataset", "LbDataset", "ShapeResponseDataset",
           "build_task_a", "build_task_b", "build_task_c",
           "TASK_C_CENTERS", "TASK_C_HOLDOUT_STRIDE"]

TASK_C_CENTERS = 194
TASK_C_HOLDOUT_STRIDE = 10  # center indices i with i % 10 == 5 are held out
_GEOM_CHANNELS = 7  # (E, F, G, L, M, N, K)


def _mix(seed, *indices):
    """Derive an independent stream id from a base seed and indices."""
    h = np.uint64(seed) ^ np.uint64(0x9E3779B97F4A7C15)
    for ix in indices:
        h = np.uint64((int(h) * 6364136223846793005 + int(ix) + 1)
                      % (1 << 64))
    return int(h)


@dataclass
class GeometryDataset:
    """Shapes, clouds, and (possibly noisy) geometric targets (Task A)."""

    basis: ShBasis
    shapes: np.ndarray   # S x (L+1)^2
    clouds: np.ndarray   # S x N x 3 (noisy positions when noise is on)
    targets: np.ndarray  # S x N x 7
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    meta: dict = field(default_factory=dict)

    def samples(self):
        return [Sample(points=self.clouds[i], features=self.clouds[i],
                       target=self.targets[i], cloud_id=i)
                for i in range(self.shapes.shape[0])]

    def to_container(self):
        c = Container(meta={**self.meta, "kind": "geometry",
                            "lmax": self.basis.lmax,
                            "noise": {"mode": self.noise.mode,
                                      "eps": self.noise.eps,
                                      "n_outliers": self.noise.n_outliers,
                                      "seed": self.noise.seed}})
        c["shapes"] = self.shapes
        c["clouds"] = self.clouds
        c["targets"] = self.targets
        return c

    @classmethod
    def from_container(cls, c):
        n = c.meta["noise"]
        return cls(basis=ShBasis(int(c.meta["lmax"])),
                   shapes=np.array(c["shapes"]), clouds=np.array(c["clouds"]),
                   targets=np.array(c["targets"]),
                   noise=NoiseSpec(mode=n["mode"], eps=n["eps"],
                                   n_outliers=int(n["n_outliers"]),
                                   seed=int(n["seed"])),
                   meta=dict(c.meta))


def _sample_family_shape(refs, seed):
    a, b, c = refs
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    u1, u2 = rng.uniform(0.0, 1.0, 2)
    return manifold.sample_barycentric(a.radial, b.radial, c.radial, u1, u2)


def _geometry_block(num, n_points, noise, seed, lmax, offset=0):
    refs = manifold.reference_shapes(lmax)
    basis = refs[0].basis
    shapes = np.empty((num, basis.n_funcs))
    clouds = np.empty((num, n_points, 3))
    targets = np.empty((num, n_points, _GEOM_CHANNELS))
    resampled = 0
    for i in range(num):
        attempt = 0
        while True:
            coeffs = _sample_family_shape(refs, _mix(seed, offset + i, attempt))
            m = RadialManifold(coeffs)
            rule = sphere.build_quadrature(2 * lmax)
            if np.all(m.radius(rule.theta, rule.phi) > 0):
                break
            resampled += 1
            attempt += 1
        pts, th, ph = manifold.sample_point_cloud(
            m, n_points, _mix(seed, offset + i, 9999))
        forms = manifold.forms_at(m, th, ph)
        rows = np.concatenate([pts, forms.as_rows()], axis=1)
        spec = NoiseSpec(mode=noise.mode, eps=noise.eps,
                         n_outliers=noise.n_outliers,
                         seed=_mix(noise.seed, offset + i))
        noisy = manifold.apply_noise(rows, spec)
        shapes[i] = coeffs.c
        clouds[i] = noisy[:, :3]
        targets[i] = noisy[:, 3:]
    return basis, shapes, clouds, targets, resampled


def build_task_a(num_train=500, num_test=200, n_points=1024,
                 noise=NoiseSpec(), seed=0, lmax=12):
    """Random barycentric shapes with analytic geometric targets."""
    basis, tr_s, tr_c, tr_t, res1 = _geometry_block(
        num_train, n_points, noise, seed, lmax, offset=0)
    _, te_s, te_c, te_t, res2 = _geometry_block(
        num_test, n_points, noise, seed, lmax, offset=1_000_000)
    meta = {"seed": seed, "n_points": n_points, "resampled": res1 + res2}
    train = GeometryDataset(basis, tr_s, tr_c, tr_t, noise,
                            {**meta, "split": "train"})
    test = GeometryDataset(basis, te_s, te_c, te_t, noise,
                           {**meta, "split": "test"})
    return train, test


@dataclass
class LbDataset:
    """(f, u) response pairs at cloud points on one manifold (Task B)."""

    shape_basis: ShBasis
    solution_basis: ShBasis
    shape: np.ndarray           # (L+1)^2 radial coefficients
    clouds: np.ndarray          # C x N x 3
    cloud_index: np.ndarray     # per-sample cloud id, S
    f_values: np.ndarray        # S x N
    u_values: np.ndarray        # S x N
    f_coeffs: np.ndarray        # S x nb_sol
    u_coeffs: np.ndarray        # S x nb_sol
    meta: dict = field(default_factory=dict)

    @property
    def n_samples(self):
        return self.f_values.shape[0]

    def samples(self):
        out = []
        for i in range(self.n_samples):
            ci = int(self.cloud_index[i])
            pts = self.clouds[ci]
            feats = np.concatenate([pts, self.f_values[i][:, None]], axis=1)
            out.append(Sample(points=pts, features=feats,
                              target=self.u_values[i][:, None], cloud_id=ci))
        return out

    def to_container(self):
        c = Container(meta={**self.meta, "kind": "lb_response",
                            "shape_lmax": self.shape_basis.lmax,
                            "solution_lmax": self.solution_basis.lmax})
        c["shape"] = self.shape
        c["clouds"] = self.clouds
        c["cloud_index"] = self.cloud_index.astype(np.float64)
        c["f_values"] = self.f_values
        c["u_values"] = self.u_values
        c["f_coeffs"] = self.f_coeffs
        c["u_coeffs"] = self.u_coeffs
        return c

    @classmethod
    def from_container(cls, c):
        return cls(shape_basis=ShBasis(int(c.meta["shape_lmax"])),
                   solution_basis=ShBasis(int(c.meta["solution_lmax"])),
                   shape=np.array(c["shape"]),
                   clouds=np.array(c["clouds"]),
                   cloud_index=np.array(c["cloud_index"]).astype(np.intp),
                   f_values=np.array(c["f_values"]),
                   u_values=np.array(c["u_values"]),
                   f_coeffs=np.array(c["f_coeffs"]),
                   u_coeffs=np.array(c["u_coeffs"]),
                   meta=dict(c.meta))


def _response_block(system, num, n_points, seed, offset, fresh_clouds,
                    centers=None, residual_tol=1e-8):
    """Solve (f, u) pairs on one manifold and sample them at cloud points."""
    m = system.manifold
    basis = system.basis
    n_clouds = num if fresh_clouds else 1
    clouds = np.empty((n_clouds, n_points, 3))
    angles = []
    for ci in range(n_clouds):
        pts, th, ph = manifold.sample_point_cloud(
            m, n_points, _mix(seed, offset, ci, 777))
        clouds[ci] = pts
        angles.append((th, ph))
    cloud_index = np.zeros(num, dtype=np.intp)
    f_values = np.empty((num, n_points))
    u_values = np.empty((num, n_points))
    f_coeffs = np.empty((num, basis.n_funcs))
    u_coeffs = np.empty((num, basis.n_funcs))
    for i in range(num):
        try:
            if centers is not None:
                spec, f = lb_solver.make_rhs(system, center=centers[i])
            else:
                spec, f = lb_solver.make_rhs(
                    system, center_seed=_mix(seed, offset, i, 31))
            u = lb_solver.solve(system, f)
        except (lb_solver.ContractViolation,
                lb_solver.ConditioningError) as exc:
            raise RuntimeError(f"solver failed on sample {i}: {exc}") from exc
        resid = system.stiffness @ u.c - system.mass @ f.c
        if np.abs(resid).max() > residual_tol:
            raise RuntimeError(
                f"sample {i}: residual {np.abs(resid).max():.3e} "
                f"exceeds {residual_tol:.1e}")
        ci = i if fresh_clouds else 0
        cloud_index[i] = ci
        th, ph = angles[ci]
        f_values[i] = sphere.synthesize(f, th, ph)
        u_values[i] = sphere.synthesize(u, th, ph)
        f_coeffs[i] = f.c
        u_coeffs[i] = u.c
    return clouds, cloud_index, f_values, u_values, f_coeffs, u_coeffs


def build_task_b(m, num_train=1000, num_test=200, n_points=1024, seed=0,
                 solution_lmax=20, fresh_clouds=False, rule_level=None):
    """Random Gaussian right-hand sides and spectral solutions on one shape."""
    basis = ShBasis(solution_lmax)
    rule = (sphere.build_quadrature(rule_level) if rule_level else None)
    system = lb_solver.assemble(m, basis, rule)
    meta = {"seed": seed, "n_points": n_points, "label": m.label,
            "fresh_clouds": fresh_clouds}

    def block(num, offset, split):
        parts = _response_block(system, num, n_points, seed, offset,
                                fresh_clouds)
        return LbDataset(m.basis, basis, m.radial.c, *parts,
                         meta={**meta, "split": split})

    return block(num_train, 0, "train"), block(num_test, 1_000_000, "test")


@dataclass
class ShapeResponseDataset:
    """Per-shape LB response pairs over the 21-shape lattice (Task C)."""

    per_shape: list  # list of LbDataset
    meta: dict = field(default_factory=dict)

    @property
    def n_samples(self):
        return sum(d.n_samples for d in self.per_shape)

    def samples(self):
        out = []
        base = 0
        for d in self.per_shape:
            for s in d.samples():
                s.cloud_id += base
                out.append(s)
            base += d.clouds.shape[0]
        return out

    def to_container(self):
        c = Container(meta={**self.meta, "kind": "shape_response",
                            "n_shapes": len(self.per_shape)})
        for k, d in enumerate(self.per_shape):
            sub = d.to_container()
            for name in sub.names():
                c[f"shape{k:02d}.{name}"] = sub[name]
            c.meta[f"shape{k:02d}"] = sub.meta
        return c

    @classmethod
    def from_container(cls, c):
        n = int(c.meta["n_shapes"])
        per_shape = []
        for k in range(n):
            prefix = f"shape{k:02d}."
            sub = Container(meta=c.meta[f"shape{k:02d}"])
            for name in c.names():
                if name.startswith(prefix):
                    sub.arrays[name[len(prefix):]] = c[name]
            per_shape.append(LbDataset.from_container(sub))
        return cls(per_shape=per_shape, meta=dict(c.meta))


def task_c_centers(m, n_centers=TASK_C_CENTERS):
    """Shared deterministic rhs centers: a spherical Fibonacci lattice
    radially projected onto the shape."""
    th, ph = sphere.fibonacci_sphere(n_centers)
    r = m.radius(th, ph)
    return r[:, None] * np.stack([np.sin(th) * np.cos(ph),
                                  np.sin(th) * np.sin(ph),
                                  np.cos(th)], axis=-1)


def build_task_c(seed=0, n_points=1024, n_centers=TASK_C_CENTERS,
                 solution_lmax=12, lmax=12, rule_level=None):
    """The full 21-shape response family, split by held-out centers."""
    shapes = manifold.barycentric_lattice(6, lmax)
    basis = ShBasis(solution_lmax)
    held = np.arange(n_centers) % TASK_C_HOLDOUT_STRIDE == 5
    train_parts, test_parts = [], []
    for k, m in enumerate(shapes):
        rule = (sphere.build_quadrature(rule_level) if rule_level else None)
        system = lb_solver.assemble(m, basis, rule)
        centers = task_c_centers(m, n_centers)
        parts = _response_block(system, n_centers, n_points, seed, k, False,
                                centers=centers)
        clouds, cloud_index, fv, uv, fc, uc = parts
        meta = {"seed": seed, "shape_index": k, "label": m.label,
                "n_points": n_points}
        for sel, bucket, split in ((~held, train_parts, "train"),
                                   (held, test_parts, "test")):
            bucket.append(LbDataset(
                m.basis, basis, m.radial.c, clouds,
                cloud_index[sel], fv[sel], uv[sel], fc[sel], uc[sel],
                meta={**meta, "split": split}))
    meta = {"seed": seed, "n_points": n_points, "n_centers": n_centers}
    return (ShapeResponseDataset(train_parts, {**meta, "split": "train"}),
            ShapeResponseDataset(test_parts, {**meta, "split": "test"}))
