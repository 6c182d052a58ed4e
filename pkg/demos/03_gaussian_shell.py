"""High-dimensional Gaussians live on a thin shell.

Prints the norm concentration for growing d, the chi-square NLL profile that
the D-Flow style regularizer uses, and how little a shifted Gaussian overlaps
the sqrt(d) shell.
"""

import numpy as np

from fmplug import chi2_nll, concentration_diag, shell_overlap_diag, sphere_project

for d in (16, 256, 4096):
    c = concentration_diag(d, 5000, seed=0)
    print(f"d={d:5d}  mean |z| {c['mean_norm']:8.3f}  sqrt(d) {np.sqrt(d):7.3f}  P(| |z|-sqrt(d) | >= 2) {c['tail'][2.0]:.4f}")

d = 100
for u in (50, 90, 98, 100, 150):
    z = np.zeros(d)
    z[0] = np.sqrt(u)
    print(f"|z|^2={u:4d}  chi2 nll {chi2_nll(z):.4f}")

d = 1024
print("overlap of N(0, I) with the shell      :", shell_overlap_diag(np.zeros(d), 1.0, 5000))
print("overlap of N(2*1, I) with the shell    :", shell_overlap_diag(np.full(d, 2.0), 1.0, 5000))
z = np.random.default_rng(0).standard_normal(d) * 3
print("norm after sphere_project              :", np.linalg.norm(sphere_project(z)))
