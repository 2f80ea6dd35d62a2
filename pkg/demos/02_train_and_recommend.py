"""Train a factor model on synthetic players and recommend for a new one.

The synthetic population has two archetypes that play disjoint halves of
the champion pool. A newcomer who plays only the first half should get
recommendations from that half.
"""
import numpy as np

from champrec import (MasteryRecord, build_training_set, generate_synthetic, preset,
                      recommend, train, two_archetype_config)

records = generate_synthetic(two_archetype_config(n_users=300, n_items=40, seed=7))
d = build_training_set(records)
print(f"{d.n_users} players, {d.n_items} champions, {len(d)} ratings")

h = preset("paper-tuned", seed=0)
model, trace = train(d, h)
print("objective by epoch:", np.round(trace[:3], 1), "...", round(trace[-1], 1))

# Someone we never trained on: five champions from the first half, with
# mastery falling off about as gently as the training players' does.
newcomer = [MasteryRecord("newbie", c, pts) for c, pts in
            [(0, 50_000), (1, 45_000), (2, 40_000), (3, 36_000), (4, 33_000)]]
recs = recommend(model, newcomer, k=5)
print("recommended:", recs.champions)
print("all from the first half:", all(c < 20 for c in recs.champions))

# The model only ever sees ratings that exist, so nothing pins down how an
# A player would rate B champions. A profile far steeper than anything in
# training can fold in to a point that scores the other half highly too.
steep = [MasteryRecord("steep", c, pts) for c, pts in
         [(0, 90_000), (1, 60_000), (2, 40_000), (3, 30_000), (4, 20_000)]]
print("steep profile gets:", recommend(model, steep, k=5).champions)
