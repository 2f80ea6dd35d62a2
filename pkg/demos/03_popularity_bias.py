"""How much do the two recommenders lean on already-popular champions?

On a population where a few champions are played by everyone and the
rest by small taste groups, Slope One keeps proposing the crowd favourites.
The factor model picks up the taste groups instead.
"""
from champrec import build_training_set, generate_synthetic, preset, skewed_config
from champrec.cli import bias_study

records = generate_synthetic(skewed_config(seed=0))
d = build_training_set(records)
report = bias_study(records, preset("paper-tuned", seed=0), cohort=100, decile=0.10, seed=0, k=5)
print(f"{d.n_items} champions, top decile = {max(1, round(0.1 * d.n_items))} of them")
for key, val in sorted(report.items()):
    print(f"{key:<20}{val}")
