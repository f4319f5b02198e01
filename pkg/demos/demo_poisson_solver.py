"""Surface Poisson problems: Galerkin assembly, spectra, residuals.

Run:  python3 demos/demo_poisson_solver.py
"""

import numpy as np

from geonop import ShBasis, ShCoeffs, assemble, make_rhs, reference_shapes, solve, unit_sphere

# On the unit sphere the Laplace-Beltrami stiffness matrix is exactly
# diag(l(l+1)) in the harmonic basis.
basis = ShBasis(8)
sys_sphere = assemble(unit_sphere(8), basis)
degrees = basis.degrees()
defect = np.abs(sys_sphere.stiffness - np.diag(degrees * (degrees + 1.0))).max()
print(f"sphere stiffness vs diag(l(l+1)): {defect:.2e}")

# Solving with f = l(l+1) Y_lm returns Y_lm.
l, m_ord = 5, 3
i = basis.flat_index(l, m_ord)
f = np.zeros(basis.n_funcs)
f[i] = l * (l + 1.0)
u = solve(sys_sphere, ShCoeffs(basis, f))
print(f"eigenfunction solve (l={l}, m={m_ord}): coefficient error "
      f"{abs(u.c[i] - 1.0):.2e}")

# On a general shape the solution satisfies the discrete system to
# round-off and has exactly zero manifold mean.
shape = reference_shapes()[1]
system = assemble(shape, ShBasis(12))
spec, f = make_rhs(system, center_seed=0)
u = solve(system, f)
resid = np.abs(system.stiffness @ u.c - system.mass @ f.c).max()
mean = float(system.mean_functional() @ u.c)
print(f"shape {shape.label}: residual {resid:.2e}, solution mean {mean:.2e}")
print(f"rhs: gaussian of width {spec.width} at {np.round(spec.center, 3)}")
