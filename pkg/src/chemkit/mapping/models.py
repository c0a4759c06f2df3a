"""Model families and record-free fitted models."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping

import numpy as np

from .._jsonio import as_float
from ..errors import CatalogueError, DefinitionError

FAMILY_KINDS = (
    "ols",
    "glm_gaussian_log",
    "glm_gamma_log",
    "ols_logit_transform",
    "ols_cloglog_transform",
    "lmm_random_intercept",
)

TRANSFORM_OF = {
    "ols": "identity",
    "glm_gaussian_log": "log",
    "glm_gamma_log": "log",
    "ols_logit_transform": "logit",
    "ols_cloglog_transform": "cloglog",
    "lmm_random_intercept": "identity",
}

INTERCEPT = "intercept"


@dataclass(frozen=True)
class ModelFamily:
    kind: str
    max_iter: int = 1000
    tol: float = 1e-10

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise DefinitionError(f"unknown model family '{self.kind}'; expected one of {', '.join(FAMILY_KINDS)}")
        if not self.tol > 0:
            raise DefinitionError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise DefinitionError(f"max_iter must be at least 1, got {self.max_iter}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "max_iter": self.max_iter, "tol": self.tol}

    @classmethod
    def from_dict(cls, d: Mapping | str) -> ModelFamily:
        if isinstance(d, str):
            return cls(d)
        return cls(d["kind"], int(d.get("max_iter", 1000)), float(d.get("tol", 1e-10)))


@dataclass(frozen=True)
class Term:
    """One design column: a numeric variable, a dummy for a categorical level, or the intercept."""

    name: str
    variable: str | None = None
    level: str | None = None

    def to_dict(self) -> dict:
        return {"name": self.name, "variable": self.variable, "level": self.level}


def inverse_transform(eta: np.ndarray, transform: str) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    if transform == "identity":
        return eta
    if transform == "log":
        return np.exp(eta)
    if transform == "logit":
        return 1.0 / (1.0 + np.exp(-eta))
    if transform == "cloglog":
        return -np.expm1(-np.exp(eta))
    raise DefinitionError(f"unknown transform '{transform}'")


def forward_transform(y: np.ndarray, transform: str) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if transform == "identity":
        return y
    if transform == "log":
        return np.log(y)
    if transform == "logit":
        return np.log(y / (1.0 - y))
    if transform == "cloglog":
        return np.log(-np.log1p(-y))
    raise DefinitionError(f"unknown transform '{transform}'")


@dataclass(frozen=True)
class FittedModel:
    """Coefficients and scalar fit metadata.

    ``fitted_values`` holds in-sample fits straight out of a fitting routine
    and is row-level data; :meth:`strip` drops it, and catalogues refuse
    models that still carry it.
    """

    family: ModelFamily
    coefficients: dict[str, float]
    coefficient_se: dict[str, float]
    transform: str
    sigma: float = math.nan
    random_intercept_var: float = math.nan
    n_train: int = 0
    converged: bool = True
    iterations: int = 0
    terms: tuple[Term, ...] = ()
    target: str | None = None
    utility_bounds: tuple[float, float] | None = None
    epsilon: float | None = None
    notes: tuple[str, ...] = ()
    fitted_values: np.ndarray | None = field(default=None, compare=False, repr=False)

    @property
    def names(self) -> list[str]:
        return list(self.coefficients)

    @property
    def beta(self) -> np.ndarray:
        return np.array(list(self.coefficients.values()), dtype=float)

    def linear_predictor(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        return X @ self.beta

    def predict(self, X: np.ndarray, clamp: bool = False) -> np.ndarray:
        """Predictions on the response scale for design matrix ``X``."""
        mu = inverse_transform(self.linear_predictor(X), self.transform)
        if clamp and self.utility_bounds is not None:
            mu = np.clip(mu, *self.utility_bounds)
        return mu

    def strip(self) -> FittedModel:
        return replace(self, fitted_values=None)

    def with_metadata(self, **kw) -> FittedModel:
        return replace(self, **kw)

    def to_dict(self) -> dict:
        if self.fitted_values is not None:
            raise CatalogueError("record-free invariant violated: model carries row-level fitted values")
        return {
            "family": self.family.to_dict(),
            "transform": self.transform,
            "target": self.target,
            "coefficients": dict(self.coefficients),
            "coefficient_se": dict(self.coefficient_se),
            "terms": [t.to_dict() for t in self.terms],
            "sigma": self.sigma,
            "random_intercept_var": self.random_intercept_var,
            "epsilon": self.epsilon,
            "utility_bounds": list(self.utility_bounds) if self.utility_bounds is not None else None,
            "n_train": self.n_train,
            "converged": self.converged,
            "iterations": self.iterations,
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> FittedModel:
        b = d.get("utility_bounds")
        eps = d.get("epsilon")
        return cls(
            family=ModelFamily.from_dict(d["family"]),
            coefficients={k: as_float(v) for k, v in d["coefficients"].items()},
            coefficient_se={k: as_float(v) for k, v in d.get("coefficient_se", {}).items()},
            transform=d["transform"],
            sigma=as_float(d.get("sigma")),
            random_intercept_var=as_float(d.get("random_intercept_var")),
            n_train=int(d.get("n_train", 0)),
            converged=bool(d.get("converged", True)),
            iterations=int(d.get("iterations", 0)),
            terms=tuple(Term(t["name"], t.get("variable"), t.get("level")) for t in d.get("terms", [])),
            target=d.get("target"),
            utility_bounds=(float(b[0]), float(b[1])) if b is not None else None,
            epsilon=float(eps) if eps is not None else None,
            notes=tuple(d.get("notes", ())),
        )


def default_terms(names: list[str]) -> tuple[Term, ...]:
    return tuple(Term(n) if n == INTERCEPT else Term(n, n) for n in names)
