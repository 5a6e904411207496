import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from lshj.density import DensityModel, density_at
from lshj.estimators import QuasiconcaveSolver, TukeyDepth
from lshj.geometry import BoundarySpec, Domain, build_knn_cloud
from lshj.schemes import SchemeSpec
from lshj.solver import solve


def _uniform(n=600, seed=0):
    return np.random.default_rng(seed).uniform(size=(n, 2))


def test_params_roundtrip():
    est = QuasiconcaveSolver(f=2.0, n_neighbors=12)
    assert est.get_params()["f"] == 2.0
    est.set_params(n_neighbors=8)
    other = clone(est)
    assert other.get_params() == est.get_params() and not hasattr(other, "values_")
    assert clone(TukeyDepth(n_mc=50)).get_params()["n_mc"] == 50


def test_fit_matches_direct_solve():
    X = _uniform()
    est = QuasiconcaveSolver(n_neighbors=12).fit(X)
    cloud = build_knn_cloud(X, 12, BoundarySpec(domain=Domain.unit_box(2)))
    rep = solve(SchemeSpec.eikonal(1.0), cloud)
    np.testing.assert_array_equal(est.values_, rep.final_field)
    np.testing.assert_array_equal(est.predict(X), est.values_)
    assert est.n_iter_ == rep.iterations and est.n_features_in_ == 2
    # predict elsewhere returns the nearest fitted value
    q = np.array([[0.5, 0.5]])
    near = np.argmin(np.linalg.norm(X - q, axis=1))
    assert est.predict(q)[0] == est.values_[near]


def test_fit_predict_and_explicit_boundary():
    X = _uniform(300, seed=1)
    bnd = np.linalg.norm(X - 0.5, axis=1) > 0.4
    vals = QuasiconcaveSolver(n_neighbors=10).fit_predict(X, boundary=bnd)
    assert np.all(vals[bnd] == 0) and np.all(vals[~bnd] > 0)
    with pytest.raises(ValueError):
        QuasiconcaveSolver().fit(X, boundary=bnd[:5])


def test_validation_errors():
    with pytest.raises(NotFittedError):
        QuasiconcaveSolver().predict([[0.5, 0.5]])
    X = _uniform(100)
    X[3, 0] = np.nan
    with pytest.raises(ValueError):
        QuasiconcaveSolver(n_neighbors=5).fit(X)
    with pytest.raises(ValueError):
        QuasiconcaveSolver(n_neighbors=5, eps=10.0).fit(_uniform(100))
    with pytest.raises(ValueError):
        QuasiconcaveSolver(n_neighbors=5, domain="sphere").fit(_uniform(100))
    with pytest.raises(ValueError):
        QuasiconcaveSolver(n_neighbors=5, boundary_quantile=1.5).fit(_uniform(100))
    est = QuasiconcaveSolver(n_neighbors=5).fit(_uniform(100))
    with pytest.raises(ValueError):
        est.predict(np.zeros((2, 3)))


def test_tukey_depth_indicator_density():
    disk = DensityModel.circle()
    X = _uniform(800, seed=2)
    est = TukeyDepth(density=disk, n_neighbors=16, domain="unit_box").fit(X)
    assert est.density_ is disk
    assert np.linalg.norm(est.deepest_ - 0.5) < 0.1
    assert np.max(est.values_) <= np.pi / 32 + 1e-12
    np.testing.assert_array_equal(est.score_samples(X), est.values_)


def test_tukey_depth_default_kde():
    rng = np.random.default_rng(3)
    X = 0.5 + 0.1 * rng.standard_normal((400, 2))
    est = TukeyDepth(n_neighbors=15, n_mc=200, boundary_quantile=0.1).fit(X)
    assert est.density_.kind == "empirical_kde"
    assert np.linalg.norm(est.deepest_ - 0.5) < 0.1


@pytest.mark.parametrize("seed", [0, 1])
def test_high_dimensional_deepest_point_is_dense(seed):
    """50-d sample concentrated near a plane: the deepest point sits in the top decile of KDE density."""
    rng = np.random.default_rng(seed)
    n, dim = 300, 50
    basis = np.linalg.qr(rng.standard_normal((dim, 2)))[0]
    X = rng.standard_normal((n, 2)) @ basis.T + 0.01 * rng.standard_normal((n, dim))
    model = DensityModel.kde(X, n_mc=300)
    # hyperplane integrals in 50-d need a Gaussian width scaled down by sqrt(d - 1)
    model = model.with_mc(sigma=model.bandwidth / np.sqrt(dim - 1))
    center = X.mean(axis=0)
    dom = Domain.ball(center, float(np.linalg.norm(X - center, axis=1).max()))
    est = TukeyDepth(density=model, n_neighbors=20, domain=dom, boundary_quantile=0.5).fit(X)
    dens = density_at(model, X)
    rank = np.mean(dens > dens[int(np.argmax(est.values_))])
    assert rank <= 0.1
