"""Standard errors, significance matrices and output bands from repeated cross-validation.

Run: python demos/model_uncertainty.py  (about a minute)
"""
import warnings

from ewrace.classifiers import MethodSpec
from ewrace.evaluation import Preference
from ewrace.panel_data import build_dataset
from ewrace.reporting import format_table
from ewrace.synth import synth_panel
from ewrace.uncertainty import repeated_cv_performance

warnings.simplefilter("ignore")

raw, events = synth_panel(0, signal_strength=1.125)
data = build_dataset(raw, events)
est = data.subset(data.estimable)
methods = [MethodSpec(f) for f in ("logit", "lda", "naive_bayes", "knn", "tree")]
pref = Preference(0.8)

res = repeated_cv_performance(methods, est.X, est.y, pref, K=10, S=40, seed=0,
                              aggregates=("mean", "weighted_mean"), keep_outputs=True,
                              countries=est.countries, quarters=est.quarters)
print("mean Ur over 40 fold assignments, with resampled-t critical values")
print(format_table(res.ranking("ur"), ("method", "ur_mean", "ur_se", "ur_ci_lo", "ur_ci_hi",
                                       "ur_t_star", "first_lower_significant")))

print("\nrow versus column at alpha = 0.1 ('>' significantly better, '·' no difference)")
for row in res.matrices["ur"].rows():
    print("  ".join(f"{c:>13}" for c in row))

# Observations whose probability is not distinguishable from the threshold
# carry no reliable signal; dropping them sharpens the evaluation.
print("\nfull sample versus significant observations only")
print(format_table(res.significant_only(pref)))

band = res.bands["logit"].for_country("C01")
print(f"\nlogit band for C01: {len(band)} quarters, "
      f"{int((band.flag != 0).sum())} significantly above or below the threshold")
