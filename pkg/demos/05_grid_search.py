"""Tuning epochs, lambda and gamma by cross-validation.

Large learning rates blow up on a 1..100 rating scale; those grid points
are kept in the table with an infinite RMSE rather than aborting the search.
"""
from champrec import (HyperGrid, build_training_set, generate_synthetic, grid_search,
                      preset, two_archetype_config)
from champrec.evaluation import grid_table_csv

d = build_training_set(generate_synthetic(two_archetype_config(n_users=80, n_items=20, seed=2)))
grid = HyperGrid(epochs_values=(10, 20), lambda_values=(0.005, 0.4), gamma_values=(0.0005, 0.02))
best, table = grid_search(d, grid, folds=3, seed=0, base=preset("paper-tuned", f=10))
print(grid_table_csv(table))
print("best:", best.epochs, best.lam, best.gamma)
