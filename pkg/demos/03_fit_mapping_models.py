"""
Mapping clinical scales onto utility
====================================

A mapping model predicts utility from measures that are not utilities,
here distress (K6), depression (PHQ-9) and functioning (SOFAS). Six model
families are fitted to each candidate predictor and compared by seeded
k-fold cross-validation.
"""

from chemkit import toydata
from chemkit.data import DatasetMetadata, ingest_table, load_dictionary, validate_dataset
from chemkit.mapping import (
    FAMILY_KINDS,
    build_catalogue,
    correlation_matrix,
    cross_validate,
    select_models,
    specify_candidates,
)
from chemkit.scoring import attach_instrument, load_instrument, score_dataset

ds = validate_dataset(
    ingest_table(toydata.path("toy_records.csv").read_text()),
    load_dictionary(toydata.path("toy_dictionary.csv").read_text()),
    DatasetMetadata("uid", "round", "group"),
)
inst = load_instrument(toydata.path("toy_additive.json").read_text())
scored = score_dataset(attach_instrument(ds, inst)).as_dataset()

# %%
# A quick look at how strongly each scale tracks utility.

names = ["total_utility", "k6", "phq9", "sofas"]
R = correlation_matrix(scored, names)
for name, r in zip(names[1:], R[0, 1:]):
    print(f"r(utility, {name}) = {r:+.3f}")

# %%
# Every family crossed with every predictor, with age and sex in every
# model. The mixed model gets a random intercept per participant and is
# cross-validated over whole participants.

spec = specify_candidates(scored, "total_utility", ["k6", "phq9", "sofas"], ["age", "sex"], FAMILY_KINDS, folds=5, seed=2024)
records = cross_validate(scored, spec)
print(f"{'family':24s} {'predictor':9s} {'RMSE cv':>8s} {'R2 cv':>7s}")
for r in records[:8]:
    print(f"{r.family:24s} {r.predictors[0]:9s} {r.cv.rmse:8.4f} {r.cv.r2:7.3f}")

# %%
# The best model's coefficients. Categorical covariates are treatment
# coded, so ``sex[M]`` is the shift relative to the reference level.

best = select_models(records, 1)[0]
for name, beta in best.model.coefficients.items():
    print(f"  {name:10s} {beta:+.4f}")

# %%
# A catalogue bundles the fitted models with their performance. It holds
# coefficients and summary statistics only, never individual records.

catalogue = build_catalogue(records, ds.validation_stamp, f"{inst.name} {inst.version}", identifier="toy-utility-mapping")
print(len(catalogue.to_json()), "bytes of JSON for", len(catalogue.records), "models")
