"""Unsupervised clustering of the AIS athletes by sex.

The full protocol fits G=2, q=1..6, r=1..3 and keeps the best BIC (about
20 minutes on one core); pass ``--grid`` for that.  By default a single cell
is fitted.
"""

import sys
from pathlib import Path

from mhthfa import FitConfig, adjusted_rand_index, confusion_matrix, fit, grid_search, load_csv

data = load_csv(Path(__file__).resolve().parent.parent / "data" / "ais.csv", label_column="sex")
print(f"{data.n} athletes, {data.p} variables: {', '.join(data.column_names)}")

if "--grid" in sys.argv:
    entries = grid_search(data.matrix, [2], range(1, 7), range(1, 4), FitConfig(seed=0))
    for e in entries[:5]:
        print(f"q={e.q} r={e.r} BIC={e.bic:.1f} ARI={adjusted_rand_index(data.labels, e.result.map_labels):.3f}")
    result = entries[0].result
else:
    result = fit(data.matrix, (2, 5, 1), FitConfig(seed=0))

print("ARI:", round(adjusted_rand_index(data.labels, result.map_labels), 4))
print("rows f/m, columns clusters:")
print(confusion_matrix(data.labels, result.map_labels))
