"""Feasible CLT statistics and confidence ellipsoids."""
from dataclasses import dataclass

import numpy as np
from scipy import stats as _stats

from mcarlab.errors import InsufficientExcitationError, InvalidArgumentError
from mcarlab.numerics import sym_psd_sqrt


def z_statistic(A_hat, A_star, QV):
    """``QV^{1/2} (A_hat - A_star)``, asymptotically standard normal."""
    diff = np.asarray(A_hat, dtype=float).reshape(-1) - np.asarray(A_star, dtype=float).reshape(-1)
    return sym_psd_sqrt(QV) @ diff


@dataclass(frozen=True, eq=False)
class Ellipsoid:
    center: np.ndarray
    shape: np.ndarray
    radius2: float
    level: float

    def statistic(self, a):
        diff = np.asarray(a, dtype=float).reshape(-1) - self.center
        return float(diff @ self.shape @ diff)

    def contains(self, a):
        return self.statistic(a) <= self.radius2


def chi2_quantile(level, dof):
    if not 0 < level < 1:
        raise InvalidArgumentError("confidence level must lie in (0, 1)")
    return float(_stats.chi2.ppf(level, dof))


def confidence_ellipsoid(A_hat, QV, level=0.95):
    """``{a : (a - A_hat)^T QV (a - A_hat) <= chi2_K(level)}``."""
    center = np.asarray(A_hat, dtype=float).reshape(-1)
    QV = np.asarray(QV, dtype=float)
    if QV.shape != (center.size, center.size):
        raise InvalidArgumentError("QV and estimate dimensions disagree")
    r2 = chi2_quantile(level, center.size)
    try:
        np.linalg.cholesky(QV)
    except np.linalg.LinAlgError:
        raise InsufficientExcitationError("QV is not positive definite") from None
    return Ellipsoid(center, QV, r2, float(level))
