"""
Least-squares machinery: standardized polynomial feature maps, ordinary
least squares for continuation-value fits and Ridge regression for local
control fits.

Monomials are enumerated by scikit-learn's ``PolynomialFeatures`` in
graded lexicographic order, e.g. ``(1, a, b, a^2, ab, b^2)`` for two
inputs at degree two.
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb

import numpy as np
from scipy import linalg
from sklearn.preprocessing import PolynomialFeatures

from lsmcport.errors import UsageError


logger = logging.getLogger(__name__)

FEATURE_KINDS = ('state_poly', 'control_poly')
MAX_DEGREE = 4
COND_LIMIT = 1e12


@lru_cache(maxsize=None)
def _expander(dim_in, degree):
    return PolynomialFeatures(degree=degree, include_bias=True).fit(
        np.zeros((1, dim_in))
    )


def _check_degree(degree):
    if degree not in range(1, MAX_DEGREE + 1):
        raise UsageError('Polynomial degree must lie in 1..{}, got {}'
                         .format(MAX_DEGREE, degree))


def poly_features(x, degree):
    """
    All monomials of total degree ``<= degree`` including the constant,
    in graded lexicographic order.

    :param x: input vector (n,) or matrix (M, n)
    :param int degree: 1 to 4
    :returns: (K,) or (M, K) with ``K = C(n + degree, degree)``
    """
    _check_degree(degree)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    rows = np.atleast_2d(x)
    out = _expander(rows.shape[1], degree).transform(rows)
    return out[0] if single else out


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """
    Polynomial basis over inputs standardized by the training sample's
    mean and standard deviation (constant inputs keep scale 1).
    """
    kind: str
    degree: int
    shift: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise UsageError('Unknown feature kind {}'.format(self.kind))
        _check_degree(self.degree)
        object.__setattr__(self, 'shift',
                           np.asarray(self.shift, dtype=float).reshape(-1))
        object.__setattr__(self, 'scale',
                           np.asarray(self.scale, dtype=float).reshape(-1))

    @classmethod
    def fit(cls, samples, kind, degree):
        """Record the standardization of ``samples`` (M, dim_in)."""
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        shift = samples.mean(axis=0)
        scale = samples.std(axis=0)
        scale[~(scale > 0.0)] = 1.0
        return cls(kind, degree, shift, scale)

    @property
    def dim_in(self):
        return self.shift.size

    @property
    def dim_out(self):
        return comb(self.dim_in + self.degree, self.degree)

    def transform(self, x):
        x = np.asarray(x, dtype=float)
        return poly_features((x - self.shift) / self.scale, self.degree)

    def to_dict(self):
        return {
            'kind': self.kind,
            'degree': self.degree,
            'shift': self.shift.tolist(),
            'scale': self.scale.tolist(),
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(doc['kind'], int(doc['degree']), doc['shift'],
                   doc['scale'])


@dataclass(frozen=True, eq=False)
class LinearFit:
    """
    Coefficients of a least-squares fit, (K,) or (K, J) for J targets
    sharing one design. Without a feature map, ``predict`` takes feature
    rows directly.
    """
    coeffs: np.ndarray
    feature_map: FeatureMap = None
    ridge_lambda: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def features(self, x):
        if self.feature_map is None:
            return np.asarray(x, dtype=float)
        return self.feature_map.transform(x)

    def predict(self, x):
        return self.features(x) @ self.coeffs

    def column(self, j):
        """The single-target fit of target ``j``."""
        return LinearFit(self.coeffs[:, j], self.feature_map,
                         self.ridge_lambda, self.diagnostics)

    def to_dict(self):
        doc = {
            'coeffs': np.asarray(self.coeffs).tolist(),
            'ridge_lambda': self.ridge_lambda,
        }
        if self.feature_map is not None:
            doc['feature_map'] = self.feature_map.to_dict()
        return doc

    @classmethod
    def from_dict(cls, doc):
        fmap = doc.get('feature_map')
        return cls(
            coeffs=np.asarray(doc['coeffs'], dtype=float),
            feature_map=FeatureMap.from_dict(fmap) if fmap else None,
            ridge_lambda=float(doc.get('ridge_lambda', 0.0)),
        )


def predict(fit, x):
    """Dot product of the fitted coefficients with the mapped features."""
    return fit.predict(x)


def last_input_coefficients(fit, head):
    """
    Collapse a fit over inputs ``(head, v)`` into a polynomial in the
    standardized last input ``(v - shift) / scale``, one per row of
    ``head``.

    :param LinearFit fit: fit with a feature map, coefficients (K, J)
    :param head: all inputs but the last, (M, dim_in - 1)
    :returns: power coefficients (M, degree + 1, J), lowest power first
    """
    fmap = fit.feature_map
    powers = _expander(fmap.dim_in, fmap.degree).powers_
    head = (np.asarray(head, dtype=float) - fmap.shift[:-1]) / fmap.scale[:-1]
    head_terms = np.prod(head[:, None, :] ** powers[None, :, :-1], axis=2)
    coeffs = np.asarray(fit.coeffs).reshape(powers.shape[0], -1)
    return np.stack([
        head_terms[:, powers[:, -1] == p] @ coeffs[powers[:, -1] == p]
        for p in range(fmap.degree + 1)
    ], axis=1)


def _least_squares(features, targets):
    """
    Solve the normal equations by Cholesky, falling back to an SVD based
    minimum-norm solution when they are ill-conditioned.
    """
    n_rows, n_cols = features.shape
    gram = features.T @ features
    rhs = features.T @ targets
    cond = np.linalg.cond(gram) if n_rows >= n_cols else np.inf
    if np.isfinite(cond) and cond < COND_LIMIT:
        try:
            beta = linalg.cho_solve(linalg.cho_factor(gram), rhs)
            return beta, {'condition': float(cond), 'rank_deficient': False}
        except linalg.LinAlgError:
            pass

    beta, _, rank, _ = linalg.lstsq(features, targets, lapack_driver='gelsd')
    return beta, {
        'condition': float(cond),
        'rank': int(rank),
        'rank_deficient': bool(rank < n_cols),
    }


def fit_ols(features, targets, feature_map=None):
    """
    Ordinary least squares of ``targets`` (M,) or (M, J) on ``features``
    (M, K). Rank-deficient systems get the minimum-norm solution and a
    ``rank_deficient`` diagnostic flag.

    :rtype: LinearFit
    """
    features = np.asarray(features, dtype=float)
    targets = np.asarray(targets, dtype=float)
    beta, diag = _least_squares(features, targets)
    resid = targets - features @ beta
    diag['rss'] = np.sum(resid * resid, axis=0).tolist()
    diag['underdetermined'] = features.shape[0] < features.shape[1]
    if diag['rank_deficient']:
        logger.debug('OLS fit is rank deficient (condition %.3g)',
                     diag['condition'])
    return LinearFit(beta, feature_map, 0.0, diag)


def fit_ridge(features, targets, ridge_lambda, feature_map=None):
    """
    Ridge regression minimizing
    ``||y - X b||^2 + ridge_lambda * ||b_nonconstant||^2`` with the
    non-constant columns standardized and the targets centered before
    penalization; constant columns carry the unpenalized intercept.
    ``ridge_lambda == 0`` reproduces :func:`fit_ols` on full-rank input.

    :rtype: LinearFit
    """
    if ridge_lambda < 0.0:
        raise UsageError('ridge_lambda must be nonnegative')
    features = np.asarray(features, dtype=float)
    targets = np.asarray(targets, dtype=float)
    n_rows, n_cols = features.shape

    constant = np.ptp(features, axis=0) == 0.0
    varying = ~constant
    has_intercept = bool(np.any(constant & (features[0] != 0.0)))
    mean_x = features.mean(axis=0) if has_intercept else np.zeros(n_cols)
    mean_y = targets.mean(axis=0) if has_intercept else np.zeros(
        targets.shape[1:]
    )
    sd = features.std(axis=0)
    sd[~(sd > 0.0)] = 1.0

    scaled = (features[:, varying] - mean_x[varying]) / sd[varying]
    centered = targets - mean_y
    n_varying = scaled.shape[1]

    if ridge_lambda > 0.0:
        gram = scaled.T @ scaled + ridge_lambda * np.eye(n_varying)
        weights = linalg.solve(gram, scaled.T @ centered, assume_a='pos')
        diag = {'rank_deficient': False}
    else:
        weights, diag = _least_squares(scaled, centered)

    beta = np.zeros((n_cols,) + targets.shape[1:])
    beta[varying] = weights / sd[varying].reshape(
        (-1,) + (1,) * (targets.ndim - 1)
    )
    if has_intercept:
        first = int(np.flatnonzero(constant & (features[0] != 0.0))[0])
        beta[first] = (mean_y - mean_x[varying] @ beta[varying]) \
            / features[0, first]

    resid = targets - features @ beta
    diag['rss'] = np.sum(resid * resid, axis=0).tolist()
    diag['penalized_norm'] = float(np.linalg.norm(weights))
    diag['underdetermined'] = n_rows < n_cols
    return LinearFit(beta, feature_map, float(ridge_lambda), diag)
