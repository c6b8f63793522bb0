"""Model zoo. ``build_model(name, **kwargs)`` constructs a model by name."""
from vidiag.models.analytic import AnalyticGaussian, analytic_gaussian
from vidiag.models.base import Model, data_from_csv, data_to_csv
from vidiag.models.horseshoe import RegularizedHorseshoeLogistic, default_tau0, regularized_horseshoe_logistic
from vidiag.models.regression import (
    ConjugateGaussian,
    LinearRegression,
    LogisticRegression,
    conjugate_gaussian,
    linear_regression,
    logistic_regression,
)
from vidiag.models.schools import EightSchoolsCentered, EightSchoolsNonCentered, eight_schools

MODELS = {
    "linear_regression": linear_regression,
    "logistic_regression": logistic_regression,
    "eight_schools_centered": lambda: eight_schools("centered"),
    "eight_schools_noncentered": lambda: eight_schools("noncentered"),
    "horseshoe": regularized_horseshoe_logistic,
    "conjugate_gaussian": conjugate_gaussian,
    "analytic_gaussian": analytic_gaussian,
}


def build_model(name: str, **kwargs) -> Model:
    try:
        factory = MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
    return factory(**kwargs)


__all__ = [
    "MODELS", "build_model", "Model", "data_to_csv", "data_from_csv",
    "AnalyticGaussian", "analytic_gaussian",
    "ConjugateGaussian", "conjugate_gaussian",
    "LinearRegression", "linear_regression",
    "LogisticRegression", "logistic_regression",
    "EightSchoolsCentered", "EightSchoolsNonCentered", "eight_schools",
    "RegularizedHorseshoeLogistic", "regularized_horseshoe_logistic", "default_tau0",
]
