import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nldeim import tangent
from nldeim.errors import ArgumentError, DisconnectedGraphError, NoPatchesError, SpectrumError

from test_datasets import principal_angle


# -- graph -------------------------------------------------------------------


def test_identical_points_weight_one():
    g = tangent.build_graph(np.zeros((2, 3)), k=1)
    assert g.weights[0, 1] == 1.0 and g.weights[1, 0] == 1.0


def test_three_collinear_points():
    s = 0.3
    x = np.array([[0.0], [s], [2 * s]])
    g = tangent.build_graph(x, k=1)
    # each end point picks the middle; the middle picks node 0 (tie -> lower index),
    # so after symmetrization the middle node has two neighbours at distance s
    sig = g.scales.toarray()
    assert sig[0, 1] == pytest.approx(s)
    assert g.weights[0, 1] == pytest.approx(np.exp(-0.5))
    assert g.weights[1, 2] == pytest.approx(np.exp(-0.5))
    assert g.weights[0, 2] == 0.0


@given(st.integers(12, 60), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_graph_symmetric(m, k, seed):
    x = np.random.default_rng(seed).standard_normal((m, 3))
    g = tangent.build_graph(x, k=k, alpha=1.3)
    w = g.weights.toarray()
    np.testing.assert_array_equal(w, w.T)
    assert np.all((w >= 0) & (w <= 1))
    assert np.all((w > 0).sum(axis=1) >= k)
    np.testing.assert_allclose(g.degrees, w.sum(axis=1))


def test_graph_argument_checks():
    with pytest.raises(ArgumentError):
        tangent.build_graph(np.zeros((3, 2)), k=3)
    with pytest.raises(ArgumentError):
        tangent.build_graph(np.random.default_rng(0).random((5, 2)), k=2, alpha=0)


# -- spectrum ----------------------------------------------------------------


def graph_from_dense(w):
    import scipy.sparse as sp

    w = sp.csr_matrix(np.asarray(w, dtype=float))
    return tangent.KnnGraph(w, w.copy(), np.asarray(w.sum(axis=1)).ravel(), 1, 1.0)


def test_two_node_spectrum():
    model = tangent.laplacian_eigs(graph_from_dense([[0, 1], [1, 0]]), 1)
    assert model.eigenvalues[0] == pytest.approx(2.0)
    phi = model.eigenfunctions[:, 0]
    assert phi[0] == pytest.approx(-phi[1])


def test_complete_graph_spectrum():
    w = np.ones((3, 3)) - np.eye(3)
    model = tangent.laplacian_eigs(graph_from_dense(w), 2)
    np.testing.assert_allclose(model.eigenvalues, [3.0, 3.0])


def test_constant_null_mode():
    x = np.random.default_rng(1).standard_normal((40, 2))
    g = tangent.build_graph(x, k=5)
    assert np.abs(g.laplacian() @ np.ones(40)).max() <= 1e-12


def test_disconnected_graph():
    x = np.vstack([np.zeros((5, 2)) + np.arange(5)[:, None] * 0.01,
                   100 + np.arange(5)[:, None] * 0.01 + np.zeros((5, 2))])
    g = tangent.build_graph(x, k=2)
    with pytest.raises(DisconnectedGraphError) as err:
        tangent.laplacian_eigs(g, 1)
    assert err.value.n_components == 2


def test_spectrum_too_short():
    with pytest.raises(SpectrumError):
        tangent.laplacian_eigs(graph_from_dense([[0, 1], [1, 0]]), 2)


def test_sparse_and_dense_paths_agree(monkeypatch):
    x = np.random.default_rng(4).standard_normal((300, 2))
    g = tangent.build_graph(x, k=8)
    dense = tangent.laplacian_eigs(g, 4)
    monkeypatch.setattr(tangent, "DENSE_LIMIT", 10)
    sparse = tangent.laplacian_eigs(g, 4)
    np.testing.assert_allclose(sparse.eigenvalues, dense.eigenvalues, rtol=1e-8)
    for j in range(4):
        assert abs(sparse.eigenfunctions[:, j] @ dense.eigenfunctions[:, j]) == pytest.approx(1.0, abs=1e-6)


# -- gradients ---------------------------------------------------------------


@pytest.fixture(scope="module")
def smooth_model():
    rng = np.random.default_rng(2)
    t = rng.uniform(0, 1, (200, 2))
    x = np.column_stack([t, np.sin(2 * t[:, 0]) * t[:, 1]])
    g = tangent.build_graph(x, k=10)
    return tangent.laplacian_eigs(g, 4), x


def test_gradient_matches_finite_differences(smooth_model):
    model, x = smooth_model
    h = 1e-6
    for i in (0, 17, 99, 150):
        grad = tangent.eigenfunction_gradient(model, x, i)
        fd = np.empty_like(grad)
        for d in range(x.shape[1]):
            e = np.zeros(x.shape[1])
            e[d] = h
            fd[:, d] = (tangent.interpolated_eigenfunction(model, x, i, x[i] + e)
                        - tangent.interpolated_eigenfunction(model, x, i, x[i] - e)) / (2 * h)
        err = np.linalg.norm(fd - grad, axis=1) / np.linalg.norm(grad, axis=1)
        assert err.max() <= 1e-5


def test_interpolant_reproduces_node_value(smooth_model):
    model, x = smooth_model
    # the interpolant evaluated at x_i returns phi_i by the eigen-equation
    i = 5
    np.testing.assert_allclose(tangent.interpolated_eigenfunction(model, x, i, x[i]),
                               model.eigenfunctions[i], rtol=1e-8, atol=1e-12)


def test_constant_eigenfunction_zero_gradient_row(smooth_model):
    model, x = smooth_model
    phi = model.eigenfunctions.copy()
    phi[:, 0] = 1.0
    m2 = tangent.EigenmapsModel(model.graph, model.eigenvalues, phi, model.zero_tol)
    g = tangent.eigenfunction_gradient(m2, x, 3)
    np.testing.assert_allclose(g[0], 0.0, atol=1e-15)


def test_kernel_gradient_direction():
    x = np.array([[0.0, 0.0], [1.0, 0.5], [-0.2, 1.0], [0.3, -0.7]])
    g = tangent.build_graph(x, k=3)
    nb, w, sig = g.edge_data(0)
    for k, wk, sk in zip(nb, w, sig):
        grad = -(wk / sk**2) * (x[0] - x[k])
        cross = grad[0] * (x[0] - x[k])[1] - grad[1] * (x[0] - x[k])[0]
        assert abs(cross) < 1e-15


# -- tangent estimators -------------------------------------------------------


def test_eigenmaps_on_planar_data():
    rng = np.random.default_rng(5)
    basis, _ = np.linalg.qr(rng.standard_normal((5, 2)))
    x = rng.uniform(-1, 1, (400, 2)) @ basis.T + rng.standard_normal(5)
    model = tangent.laplacian_eigs(tangent.build_graph(x, k=10), 5)
    patches, _ = tangent.tangent_from_eigenmaps(model, x, 2)
    pca = np.linalg.svd(x - x.mean(0), full_matrices=False)[2][:2].T
    assert max(principal_angle(p.basis, pca) for p in patches) <= 1e-3


def test_eigenmaps_spiral_matches_analytic(spiral):
    x = spiral.points
    model = tangent.laplacian_eigs(tangent.build_graph(x, k=10), 5)
    patches, dropped = tangent.tangent_from_eigenmaps(model, x, 2)
    angles = [principal_angle(p.basis, spiral.tangents[p.index]) for p in patches]
    assert np.degrees(np.median(angles)) <= 5.0
    assert len(patches) + len(dropped) == 1000


def test_eigenmaps_cylinder_has_x3_component(cylinder):
    x = cylinder.points
    model = tangent.laplacian_eigs(tangent.build_graph(x, k=10), 5)
    patches, _ = tangent.tangent_from_eigenmaps(model, x, 2)
    assert min(np.linalg.norm(p.basis[2]) for p in patches) > 0


def test_eigenmaps_drops_everything():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((30, 3))
    model = tangent.laplacian_eigs(tangent.build_graph(x, k=5), 3)
    with pytest.raises(NoPatchesError):
        tangent.tangent_from_eigenmaps(model, x, 2, quality_min=1.01)
    with pytest.raises(ArgumentError):
        tangent.tangent_from_eigenmaps(model, x, 4)


def test_grid_linear_surface():
    rng = np.random.default_rng(6)
    a, b = rng.standard_normal(7), rng.standard_normal(7)
    t = np.linspace(0, 1, 4)
    chi = np.linspace(0, 2, 3)
    u = t[:, None, None] * a + chi[None, :, None] * b
    patches, dropped = tangent.tangent_from_grid(u)
    assert not dropped and len(patches) == 3 * 2
    ab = np.column_stack([a, b])
    for p in patches:
        assert principal_angle(p.basis, ab) < 1e-10
    assert [p.index for p in patches] == [0, 1, 3, 4, 6, 7]


def test_grid_drops_rank_one_cells():
    a = np.arange(5.0)
    u = np.linspace(0, 1, 3)[:, None, None] * a + np.zeros((1, 4, 1))
    with pytest.raises(NoPatchesError):
        tangent.tangent_from_grid(u)


def test_local_pca_plane_and_circle():
    rng = np.random.default_rng(7)
    basis, _ = np.linalg.qr(rng.standard_normal((4, 2)))
    x = rng.uniform(-1, 1, (200, 2)) @ basis.T
    p = tangent.tangent_from_local_pca(x, 0, 2, k=20)
    assert principal_angle(p.basis, basis) < 1e-10
    noisy = x + 1e-3 * rng.standard_normal(x.shape)
    p = tangent.tangent_from_local_pca(noisy, 0, 2, k=40)
    assert np.degrees(principal_angle(p.basis, basis)) <= 1.0
    th = np.linspace(0, 2 * np.pi, 720, endpoint=False)
    circle = np.column_stack([np.cos(th), np.sin(th)])
    for i in (0, 100, 333):
        p = tangent.tangent_from_local_pca(circle, i, 1, radius=0.05)
        exact = np.array([[-np.sin(th[i])], [np.cos(th[i])]])
        assert np.degrees(principal_angle(p.basis, exact)) <= 5.0
    with pytest.raises(ArgumentError):
        tangent.tangent_from_local_pca(circle, 0, 1)


def test_to_patchset(spiral):
    pats = [tangent.TangentPatch(spiral.points[i], spiral.tangents[i], 1.0, i) for i in range(5)]
    ps = tangent.to_patchset(pats)
    assert ps.K == 5 and ps.n == 3 and ps.r == 2
