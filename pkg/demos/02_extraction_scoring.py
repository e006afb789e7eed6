"""Extraction is scored with partial credit.

Gold and predicted strings are paired one-to-one so that the summed similarity
is maximal. That sum is the true-positive mass. Below, the duplicated Weber
line can only pair with the leftover backref, so it earns almost nothing.
"""

from refbench.matching import optimal_assignment, similarity_matrix, score_extraction

gold = [
    "Weber, Max: Wirtschaft und Gesellschaft. Tübingen: Mohr 1922.",
    "Ebd., S. 17.",
    "Cozzi, G.: Repubblica di Venezia e Stati italiani. Torino: Einaudi 1982.",
]
pred = [
    "Cozzi, G.: Repubblica di Venezia e Stati italiani. Torino 1982.",
    "Weber, Max: Wirtschaft und Gesellschaft. Tübingen: Mohr 1922.",
    "Weber, Max: Wirtschaft und Gesellschaft. Tübingen: Mohr 1922.",
]

m = similarity_matrix(gold, pred)
print("similarity matrix (gold rows, prediction columns)")
for row in m:
    print("  " + "  ".join(f"{v:.3f}" for v in row))

pairing = optimal_assignment(m)
print("\npairs", [(g, p, round(s, 3)) for g, p, s in pairing.pairs])
print("unmatched gold", pairing.unmatched_gold, "unmatched predictions", pairing.unmatched_pred)

score = score_extraction(gold, pred)
print(f"\nP={score.precision:.4f} R={score.recall:.4f} F1={score.f1:.4f} avg_sim={score.avg_sim:.4f}")

strict = score_extraction(gold, pred, binary_threshold=0.95)
print(f"with a 0.95 binary threshold: P={strict.precision:.4f} R={strict.recall:.4f}")
