"""Regression building blocks: design matrices, links, scores, predictions.

A design is an ordered list of terms over dataset columns: ``1`` for the
intercept, a column name, or ``a*b`` for an elementwise interaction. The
score of a linear or logistic regression is the estimating-function block
used by every estimator in this package; rows excluded by a restriction
column contribute exact zeros and their outcome is never read.
"""

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .exceptions import MissingOutcomeRead, UnknownColumn

LINKS = ("identity", "logit")


def expit(x):
    """Numerically stable inverse logit."""
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass(frozen=True)
class DesignSpec:
    """Ordered design terms: ``1``, column names, or ``a*b`` interactions."""

    terms: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.terms:
            raise ValueError("design needs at least one term")
        if sum(t == "1" for t in self.terms) > 1:
            raise ValueError("design has more than one intercept term")
        for t in self.terms:
            if t.count("*") > 1 or t.startswith("*") or t.endswith("*"):
                raise ValueError(f"malformed design term {t!r}")

    @classmethod
    def parse(cls, text):
        """Parse the comma-separated mini-grammar, e.g. ``"1,A,Z,A*Z"``."""
        terms = tuple(t.strip() for t in text.split(",") if t.strip())
        return cls(terms)

    @property
    def width(self):
        return len(self.terms)

    def __str__(self):
        return ",".join(self.terms)


def _term_column(data, term, overrides):
    if overrides and term in overrides:
        return np.full(data.n_obs, float(overrides[term]))
    return data.column(term)


def expand_design(data, spec, overrides=None):
    """Expand a design into an (n, p) float64 matrix in term order.

    Parameters
    ----------
    data : Dataset
    spec : DesignSpec
    overrides : dict, optional
        Column name to constant; overridden columns are replaced by the
        constant everywhere they appear, including inside interactions.
    """
    n = data.n_obs
    cols = []
    for term in spec.terms:
        if term == "1":
            cols.append(np.ones(n))
        elif "*" in term:
            a, b = term.split("*")
            cols.append(_term_column(data, a, overrides) * _term_column(data, b, overrides))
        else:
            cols.append(_term_column(data, term, overrides))
    return np.ascontiguousarray(np.column_stack(cols))


@dataclass(frozen=True, eq=False)
class OutcomeModel:
    """A regression model: link, design, and (optionally) coefficients."""

    link: str
    design: DesignSpec
    coef: np.ndarray = None

    def __post_init__(self):
        if self.link not in LINKS:
            raise ValueError(f"unknown link {self.link!r}")
        if self.coef is not None:
            coef = np.asarray(self.coef, dtype=np.float64)
            if coef.shape != (self.design.width,):
                raise ValueError(
                    f"coef has shape {coef.shape}, design width is {self.design.width}"
                )
            object.__setattr__(self, "coef", coef)

    def mean(self, eta):
        return expit(eta) if self.link == "logit" else eta


def predict(model, data, overrides=None):
    """Model predictions for all rows, with optional column overrides.

    Overriding the treatment column (e.g. ``{"A": 1}``) yields the
    pseudo-outcomes used by g-computation; predictions cover every row,
    including those with a missing outcome.
    """
    if model.coef is None:
        raise ValueError("model has no coefficients")
    design = expand_design(data, model.design, overrides)
    return model.mean(design @ model.coef)


class ScoreFunction:
    """Score block of a regression model, usable inside a stacked set.

    Per observation the contribution is ``r_i * (y_i - m(x_i; coef)) * x_i``
    where ``r_i`` is the 0/1 restriction column (all ones when absent).
    Restricted-out rows contribute exact zero vectors and their outcome value
    is never read, so garbage or NaN outcomes on those rows cannot leak.
    """

    def __init__(self, model, outcome, restrict_to=None):
        self.model = model
        self.outcome = outcome
        self.restrict_to = restrict_to
        self.width = model.design.width

    def bind(self, data):
        """Pre-expand the design for one dataset; returns coef -> (n, p)."""
        n = data.n_obs
        design = expand_design(data, self.model.design)
        if self.restrict_to is not None:
            mask = data.column(self.restrict_to) != 0.0
        else:
            mask = np.ones(n, dtype=bool)
        y = data.column(self.outcome)[mask]
        if np.isnan(y).any():
            raise MissingOutcomeRead(
                f"missing {self.outcome!r} on a row contributing to the score"
            )
        x = design[mask]
        link = self.model.link

        def contributions(coef):
            out = np.zeros((n, self.width))
            eta = x @ coef
            mu = expit(eta) if link == "logit" else eta
            out[mask] = (y - mu)[:, None] * x
            return out

        return contributions

    def __call__(self, data, coef):
        return self.bind(data)(coef)


def score_function(model, outcome, restrict_to=None):
    """Score block for ``model``; see :class:`ScoreFunction`."""
    return ScoreFunction(model, outcome, restrict_to=restrict_to)
