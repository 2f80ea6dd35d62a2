"""Mastery points to ratings.

Raw champion mastery points are unbounded and wildly skewed between
players, so each player's points are rescaled against their own best
champion: rating = ceil(100 * cmp / max_cmp), giving integers in 1..100.
"""
from champrec import MasteryRecord, normalize_user

# One support main's top five (champion id, mastery points)
player = [(267, 367191), (143, 136709), (69, 106064), (40, 89306), (117, 59486)]
names = {267: "Nami", 143: "Zyra", 69: "Cassiopeia", 40: "Janna", 117: "Lulu"}

records = [MasteryRecord("demo", cid, cmp) for cid, cmp in player]
for t in normalize_user(records):
    print(f"{names[t.champion_id]:<12}{t.rating:>4}")

# A champion barely touched still maps to 1, never 0.
tiny = normalize_user([MasteryRecord("demo", 1, 1_000_000), MasteryRecord("demo", 2, 3)])
print("\nbarely played ->", tiny[1].rating)
