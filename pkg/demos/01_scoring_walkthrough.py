"""Narrative walkthrough of the three scoring rules.

Run with: python demos/01_scoring_walkthrough.py
"""

from eywa.bench import Series
from eywa.metrics import (
    aggregate,
    score_natural_language,
    score_tabular,
    score_time_series,
)


def series(values, start=0):
    return Series(points=tuple((str(start + i), float(v)) for i, v in enumerate(values)))


def show(label, score):
    print(f"{label:<46} u={score.value:.6f}  stage={score.stage}  {score.terms}")


print("Natural language: exact match, numeric tolerance, lexical blend")
show('  "Earth" vs Earth', score_natural_language(' "Earth" ', "Earth"))
show("  1.1 vs 1.0 (relative-error stage)", score_natural_language("1.1", "1.0"))
show("  alpha beta vs alpha gamma", score_natural_language("alpha beta", "alpha gamma"))

print("\nTime series: blended sMAPE / MAAPE utility")
show("  perfect forecast", score_time_series(series([5, 5]), series([5, 5])))
show("  [2,2] predicted for [1,1]", score_time_series(series([2, 2]), series([1, 1])))

print("\nTabular: accuracy (classification), series rule (regression)")
show("  2/3 labels correct", score_tabular(["A", "B", "A"], ["A", "B", "B"]))
show("  regression off by 1", score_tabular([2, 2], [1, 1], "regression"))

print("\nAggregation: unweighted mean with sample standard deviation")
summary = aggregate([0.5, 1.0, 0.75])
print(f"  mean={summary.mean_utility:.4f}  std={summary.sample_std:.4f}  n={summary.n}")
