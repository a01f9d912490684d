"""From surface strings to morphology codes.

The gazetteer is built from the training mentions. Held-out mentions are then
coded in three cumulative stages: exact string, lowercased string, and the
nearest entry by edit distance. Each stage can only resolve more mentions, and
the last one resolves all of them, although not always correctly.
"""

from onconer.normalizer import build_gazetteer, cascade_report, normalize
from onconer.synthetic import load_bundled

gaz = build_gazetteer(m for d in load_bundled("train") for m in d.mentions)
gold = [m for d in load_bundled("dev") for m in d.mentions]
print(f"{len(gaz)} gazetteer entries, {len(gold)} held-out mentions\n")

print(f"{'stage':<12}{'correct':>8}{'false':>8}{'unmatched':>11}")
for row in cascade_report(gaz, gold):
    print(f"{row.method:<12}{row.correct:>8}{row.false:>8}{row.unmatched:>11}")

print("\nsome fuzzy matches:")
shown = 0
for m in gold:
    res = normalize(gaz, m.surface)
    if res.method == "levenshtein" and shown < 5:
        print(f"  {m.surface!r:35} -> {res.code} (distance {res.distance}, gold {m.code})")
        shown += 1
