"""scikit-learn style wrappers around the cloud solver.

``fit`` builds a kNN graph over the rows of ``X`` and solves on it; ``predict``
returns the solved value of the nearest fitted node, so it is exact on the
training points and dimension-free elsewhere.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .density import DensityModel
from .geometry import BoundarySpec, Domain, build_knn_cloud
from .schemes import Scheme, SchemeSpec
from .solver import DEFAULT_TOL, solve


def _boundary_spec(X, boundary, domain, eps, quantile=None):
    if boundary is not None:
        mask = np.asarray(boundary, dtype=bool)
        if mask.shape != (len(X),):
            raise ValueError(f"boundary mask has shape {mask.shape}, expected ({len(X)},)")
        return BoundarySpec(mask=mask)
    if domain is None or domain == "unit_box":
        dom = Domain.unit_box(X.shape[1])
    elif domain == "bbox":
        dom = Domain.box(X.min(axis=0), X.max(axis=0))
    elif isinstance(domain, Domain):
        dom = domain
    else:
        raise ValueError(f"domain must be 'unit_box', 'bbox' or a Domain, got {domain!r}")
    if quantile is not None:
        if not 0 < quantile < 1:
            raise ValueError("boundary_quantile must lie in (0, 1)")
        # the band test is strict, so step just past the quantile
        eps = float(np.nextafter(np.quantile(dom.boundary_distance(X), quantile), np.inf))
    return BoundarySpec(domain=dom, eps=eps)


class _CloudSolverBase(BaseEstimator):
    def _spec(self, X):
        raise NotImplementedError

    def fit(self, X, y=None, boundary=None):
        """Solve on the kNN graph of ``X``.

        Parameters
        ----------
        X : array of shape (n_samples, n_features)
        y : ignored
        boundary : bool array of shape (n_samples,), optional
            Dirichlet nodes; defaults to the ``eps`` band of ``domain``.
        """
        X = check_array(X, dtype=np.float64, ensure_min_samples=self.n_neighbors + 1)
        self.n_features_in_ = X.shape[1]
        bspec = _boundary_spec(X, boundary, self.domain, self.eps, self.boundary_quantile)
        self.cloud_ = build_knn_cloud(X, self.n_neighbors, bspec)
        if self.cloud_.boundary_mask.all():
            raise ValueError("every node lies in the boundary band; lower eps or set boundary_quantile")
        self.spec_ = self._spec(X)
        scheme = Scheme(self.spec_, self.cloud_)
        self.report_ = solve(self.spec_, self.cloud_, dirichlet=self.dirichlet, init=self.init,
                             tol=self._abs_tol(scheme), max_sweeps=self.max_sweeps,
                             threads=self.threads, scheme=scheme)
        self.values_ = self.report_.final_field
        self.n_iter_ = self.report_.iterations
        self._tree = cKDTree(X)
        return self

    def _abs_tol(self, scheme):
        return self.tol

    def predict(self, X):
        """Value at the nearest fitted node."""
        check_is_fitted(self, "values_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        _, idx = self._tree.query(X)
        return self.values_[idx]

    def fit_predict(self, X, y=None, boundary=None):
        return self.fit(X, boundary=boundary).values_.copy()


class QuasiconcaveSolver(_CloudSolverBase):
    """First-order solver on a point cloud (``|grad u| = f`` with the monotone subdifferential scheme).

    Parameters
    ----------
    f : float or DensityModel
        Right-hand side; an indicator model is evaluated at the nodes.
    n_neighbors : int
        k of the kNN graph.
    domain : {'unit_box', 'bbox'} or Domain
        Domain whose ``eps`` band carries the Dirichlet data.
    eps : float, optional
        Band width; ``None`` means twice the spatial resolution.
    boundary_quantile : float, optional
        If set, overrides ``eps`` with this quantile of the distances to the
        domain boundary, which keeps a usable interior in high dimension.
    """

    def __init__(self, f=1.0, n_neighbors=20, domain="unit_box", eps=None, boundary_quantile=None,
                 dirichlet=0.0, init=0.0, tol=DEFAULT_TOL, max_sweeps=1000, threads=None):
        self.f = f
        self.n_neighbors = n_neighbors
        self.domain = domain
        self.eps = eps
        self.boundary_quantile = boundary_quantile
        self.dirichlet = dirichlet
        self.init = init
        self.tol = tol
        self.max_sweeps = max_sweeps
        self.threads = threads

    def _spec(self, X):
        return SchemeSpec.eikonal(self.f)


class TukeyDepth(_CloudSolverBase):
    """Tukey depth of a sample by the depth eikonal equation on its kNN graph.

    With ``density=None`` the density is a Gaussian KDE of ``X`` and the
    hyperplane integrals are Monte-Carlo estimates; pass an indicator
    :class:`DensityModel` to use exact integrals.

    ``tol`` is relative to the largest hyperplane integral, since scaling
    the density scales the depth by the same factor.

    Attributes
    ----------
    values_ : ndarray of shape (n_samples,)
        Depth at the fitted points.
    deepest_ : ndarray of shape (n_features,)
        Fitted point of largest depth.
    """

    def __init__(self, density=None, n_neighbors=30, domain="bbox", eps=None, boundary_quantile=None,
                 bandwidth=None, sigma=None, n_mc=2000, estimator="auto", random_state=0, dirichlet=0.0,
                 init=0.0, tol=DEFAULT_TOL, max_sweeps=1000, threads=None):
        self.density = density
        self.n_neighbors = n_neighbors
        self.domain = domain
        self.eps = eps
        self.boundary_quantile = boundary_quantile
        self.bandwidth = bandwidth
        self.sigma = sigma
        self.n_mc = n_mc
        self.estimator = estimator
        self.random_state = random_state
        self.dirichlet = dirichlet
        self.init = init
        self.tol = tol
        self.max_sweeps = max_sweeps
        self.threads = threads

    def _spec(self, X):
        model = self.density
        if model is None:
            model = DensityModel.kde(X, bandwidth=self.bandwidth, sigma=self.sigma, n_mc=self.n_mc)
        self.density_ = model
        seed = 0 if self.random_state is None else int(self.random_state)
        return SchemeSpec.tukey(model, estimator=self.estimator, mc_seed=seed)

    def _abs_tol(self, scheme):
        # depth is linear in the density, so the tolerance is taken relative
        # to the largest hyperplane integral
        return self.tol * scheme.fmax if scheme.fmax > 0 else self.tol

    def fit(self, X, y=None, boundary=None):
        super().fit(X, y, boundary)
        self.deepest_ = self.cloud_.points[int(np.argmax(self.values_))].copy()
        return self

    def score_samples(self, X):
        """Depth at ``X`` (nearest fitted node)."""
        return self.predict(X)
