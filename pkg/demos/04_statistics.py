"""Comparing survey scores and plotting their distribution.

Two groups of 1-10 satisfaction scores, a one-sided Z-test for
"group A scores higher", and histogram counts ready to plot.
"""
import numpy as np

from champrec import histogram, normal_sf, z_test_one_sided

rng = np.random.default_rng(5)
a = np.clip(np.round(rng.normal(7.2, 1.5, 40)), 1, 10)
b = np.clip(np.round(rng.normal(6.3, 1.8, 40)), 1, 10)

z, p = z_test_one_sided(a, b)
print(f"mean A {a.mean():.2f}  mean B {b.mean():.2f}  z = {z:.3f}  p = {p:.4g}")
print("1 - Phi(2.239) =", round(normal_sf(2.239), 5))

edges = np.arange(0.5, 11.0, 1.0)
for lo, hi, n in zip(edges[:-1], edges[1:], histogram(a, edges)):
    print(f"{lo:5.1f}-{hi:<5.1f} {'#' * int(n)}")
