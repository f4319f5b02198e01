"""Bayesian shape identification with the spectral solver as oracle.

Observed (f, u) response pairs on an unknown shape are scored against
every member of the 21-shape barycentric lattice; the posterior
concentrates on the true shape.

Run:  python3 demos/demo_shape_inference.py
"""

from pathlib import Path

from geonop import (SpectralSurrogate, barycentric_lattice, make_observation,
                    posterior)

LMAX = 8  # keep the demo quick; the pipeline default is 12

family = barycentric_lattice(6, LMAX)
surrogate = SpectralSurrogate(solution_lmax=LMAX)
truth_index = 9
truth = family[truth_index]
print(f"truth: shape {truth_index} {truth.label}")

obs = make_observation(truth, n_pairs=3, n_points=128, seed=0,
                       solution_lmax=LMAX, truth_index=truth_index)
table = posterior(surrogate, obs, family)

print(f"posterior sums to {table.posterior.sum():.12f}")
print("top 3 candidates:")
for i, p in table.top(3):
    marker = " <-- truth" if i == truth_index else ""
    print(f"  shape {i:2d} {family[i].label}: {p:.4f}{marker}")

out = Path("posterior_demo.svg")
out.write_text(table.to_svg())
print(f"wrote barycentric heat map to {out}")
