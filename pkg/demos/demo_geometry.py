"""Radial manifolds: fundamental forms, curvature, and the shape family.

Run:  python3 demos/demo_geometry.py
"""

import numpy as np

from geonop import (barycentric_lattice, forms_at, reference_shapes,
                    sample_point_cloud, unit_sphere)

# On a sphere every quantity has a closed form: E = R^2, F = 0,
# G = R^2 sin^2(theta), K = 1/R^2.
m = unit_sphere()
pts, theta, phi = sample_point_cloud(m, 500, seed=0)
f = forms_at(m, theta, phi)
print("unit sphere:")
print(f"  E - 1 max {np.abs(f.E - 1).max():.2e}, F max {np.abs(f.F).max():.2e}")
print(f"  K - 1 max {np.abs(f.K - 1).max():.2e}")

# The three reference shapes span a barycentric family of 21 lattice
# shapes used by the Bayesian pipeline.
for shape in reference_shapes():
    pts, theta, phi = sample_point_cloud(shape, 2000, seed=1)
    f = forms_at(shape, theta, phi)
    r = np.linalg.norm(pts, axis=1)
    print(f"shape {shape.label}: radius [{r.min():.3f}, {r.max():.3f}], "
          f"K in [{f.K.min():+.2f}, {f.K.max():+.2f}]")

family = barycentric_lattice()
print(f"barycentric lattice: {len(family)} shapes, "
      f"corners {family[0].label}, {family[15].label}, {family[20].label}")
