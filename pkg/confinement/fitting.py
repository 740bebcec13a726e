# confinement/fitting.py

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.linear_model import LinearRegression
from sklearn.metrics import r2_score

from .exceptions import NumericalError


@dataclass(frozen=True)
class LogLinearFit:
    """ log y ~ intercept + slope * x over the selected window. """
    slope: float
    intercept: float
    r2: float
    n: int

    @property
    def rate(self):
        return -self.slope


def loglinear_fit(x, y, mask=None, min_points=4):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = np.isfinite(y) & (y > 0)
    if mask is not None:
        keep &= np.asarray(mask, dtype=bool)
    if keep.sum() < min_points:
        raise NumericalError(f"fit window too short: {int(keep.sum())} usable points, need {min_points}")

    X = x[keep].reshape(-1, 1)
    logy = np.log(y[keep])
    model = LinearRegression().fit(X, logy)
    r2 = r2_score(logy, model.predict(X))
    return LogLinearFit(slope=float(model.coef_[0]), intercept=float(model.intercept_),
                        r2=float(r2), n=int(keep.sum()))
