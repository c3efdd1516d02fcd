"""Loss, Usefulness and the optimal threshold on a handful of hand-made signals.

Run: python demos/usefulness_walkthrough.py
"""
import numpy as np

from ewrace.evaluation import (
    ContingencyCounts,
    Preference,
    candidate_thresholds,
    contingency,
    loss,
    optimize_threshold,
    roc_auc,
    usefulness,
)

pref = Preference(0.8)

# A model that misses one of three crises and raises three false alarms is
# exactly as costly as the best trivial policy at mu = 0.8.
c = ContingencyCounts(tp=2, fp=3, fn=1, tn=4)
print(f"counts {c}: loss {loss(c, pref)}, (Ua, Ur) = {usefulness(c, pref)}")

# One false alarm and no misses saves six sevenths of the attainable loss.
c = ContingencyCounts(tp=3, fp=1, fn=0, tn=6)
print(f"counts {c}: loss {loss(c, pref)}, Ur = {usefulness(c, pref)[1]:.4f}")

# The threshold scan: every midpoint between distinct probabilities plus 0 and 1.
rng = np.random.default_rng(0)
y = (rng.random(40) < 0.25).astype(int)
p = np.clip(0.3 + 0.35 * y + rng.normal(0, 0.15, 40), 0, 1).round(2)
print(f"\n{y.sum()} pre-crisis quarters out of {y.size}; AUC {roc_auc(p, y):.3f}")
for mu in (0.5, 0.8, 0.9):
    tau, ur = optimize_threshold(p, y, Preference(mu))
    print(f"mu={mu}: tau*={tau:.3f}  signals={int((p > tau).sum()):2d}  Ur={ur:.3f}")

# The optimum agrees with brute force over the candidate set.
best = max(usefulness(contingency(p > t, y), pref)[1] for t in candidate_thresholds(p))
print(f"exhaustive best Ur at mu=0.8: {best:.3f}")
