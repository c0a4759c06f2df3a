"""
Predicting utilities and accumulating QALYs
===========================================

A catalogued model can be applied to a dataset that never had the
instrument administered, as long as the predictor columns exist. The
predicted utilities then give quality-adjusted life years between two
measurement rounds by the trapezoid rule.
"""

import numpy as np

from chemkit import toydata
from chemkit.data import DatasetMetadata, ingest_table, load_dictionary, validate_dataset
from chemkit.mapping import build_catalogue, cross_validate, load_catalogue, specify_candidates
from chemkit.predict import PredictionRequest, predict_utility, qalys, qalys_from_predictions
from chemkit.scoring import attach_instrument, load_instrument, score_dataset

# %%
# The trapezoid rule on two hand cases: a full year in full health, and
# half a year falling from 0.8 to 0.6.

print(qalys(1.0, 1.0, 365.25), qalys(0.8, 0.6, 182.625))

# %%
# Fit a small catalogue, then reload it from JSON as a separate study would.

ds = validate_dataset(
    ingest_table(toydata.path("toy_records.csv").read_text()),
    load_dictionary(toydata.path("toy_dictionary.csv").read_text()),
    DatasetMetadata("uid", "round", "group"),
)
inst = load_instrument(toydata.path("toy_additive.json").read_text())
scored = score_dataset(attach_instrument(ds, inst)).as_dataset()
spec = specify_candidates(scored, "total_utility", ["k6"], ["age"], ["ols", "ols_logit_transform"], folds=5, seed=7)
catalogue = load_catalogue(build_catalogue(cross_validate(scored, spec), ds.validation_stamp, inst.name).to_json())
model = catalogue.models[0]
print("using", model.family.kind, dict(model.coefficients))

# %%
# Predict on the unscored records. The variable map says which column
# feeds each coefficient; here the names already match.

pred = predict_utility(PredictionRequest(model, ds, {"k6": "k6", "age": "age"}))
print(f"predicted mean {np.nanmean(pred.predicted):.3f}; clamped to bounds: {pred.clamp_count}")

# %%
# QALYs between baseline and follow-up, using the assessment dates.

result = qalys_from_predictions(pred, ds, "date", "baseline", "follow_up")
q = np.array([r.qalys for r in result.records])
print(f"{len(q)} participants, mean {q.mean():.4f} QALYs over a mean of {np.mean([r.days for r in result.records]):.0f} days")
print("skipped:", result.skipped or "none")
