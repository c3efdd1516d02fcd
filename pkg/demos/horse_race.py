"""A K-fold and a recursive horse race on a generated panel.

Run: python demos/horse_race.py  (about half a minute)
"""
import warnings

from ewrace.classifiers import MethodSpec, benchmark_specs
from ewrace.evaluation import Preference
from ewrace.experiments import RecursiveConfig, kfold_race, recursive_race
from ewrace.panel_data import build_dataset, parse_quarter
from ewrace.reporting import format_table
from ewrace.synth import synth_panel

warnings.simplefilter("ignore")
COLUMNS = ("method", "kind", "ur", "auc", "tau", "tp", "fp", "fn", "tn")

raw, events = synth_panel(0, signal_strength=1.125)
data = build_dataset(raw, events)
X, y = data.estimation_arrays()
print(f"{len(raw)} country-quarters, {len(events)} crises, {len(y)} estimable rows, "
      f"{int(y.sum())} pre-crisis\n")

pref = Preference(0.8)
race = kfold_race(benchmark_specs(), X, y, pref, K=10, seed=0,
                  feature_names=data.feature_names)
print("10-fold cross-validation")
print(format_table(race.ranking(), COLUMNS))

# Real-time backtest: refit every quarter on publication-lagged past data only.
cfg = RecursiveConfig(start=parse_quarter("2000Q1"),
                      method_start={"qda": parse_quarter("2001Q1")})
fast = [MethodSpec(f) for f in ("logit", "lda", "qda", "naive_bayes", "knn")]
rec = recursive_race(fast, raw, events, pref, cfg, aggregates=("mean", "weighted_mean"))
print("\nrecursive real-time estimation from 2000Q1")
print(format_table(rec.ranking(), COLUMNS))
