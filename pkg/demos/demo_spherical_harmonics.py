"""Spherical-harmonic basics: orthonormality, derivatives, round-trips.

Run:  python3 demos/demo_spherical_harmonics.py
"""

import numpy as np

from geonop import ShBasis, ShCoeffs, analyze, build_quadrature, eval_sh, synthesize

basis = ShBasis(8)
print(f"basis up to degree {basis.lmax}: {basis.n_funcs} functions")

# A product Gauss-Legendre x trapezoid rule integrates polynomials well
# past twice the band limit, so the basis is orthonormal under it.
rule = build_quadrature(2 * basis.lmax + 2)
print(f"quadrature: {rule.n_nodes} nodes, weight sum = "
      f"{rule.weights.sum():.12f} (4 pi = {4 * np.pi:.12f})")

y = eval_sh(basis, rule.theta, rule.phi)
gram = y.T @ (rule.weights[:, None] * y)
print(f"orthonormality defect: {np.abs(gram - np.eye(basis.n_funcs)).max():.2e}")

# Hyper-interpolation: synthesize a random band-limited function on the
# rule, analyze it back, recover the coefficients exactly.
rng = np.random.default_rng(0)
coeffs = ShCoeffs(basis, rng.standard_normal(basis.n_funcs))
values = synthesize(coeffs, rule.theta, rule.phi)
recovered = analyze(values, rule, basis)
print(f"analysis round-trip error: {np.abs(recovered.c - coeffs.c).max():.2e}")

# Analytic derivatives agree with central finite differences.
theta = rng.uniform(0.3, np.pi - 0.3, 10)
phi = rng.uniform(0.0, 2 * np.pi, 10)
h = 1e-6
fd = (eval_sh(basis, theta + h, phi) - eval_sh(basis, theta - h, phi)) / (2 * h)
an = eval_sh(basis, theta, phi, "dtheta")
print(f"d/dtheta vs finite differences: {np.abs(an - fd).max():.2e}")
