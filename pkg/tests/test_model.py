import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from diffeostat import (BaseMismatchError, DiffeologicalModel, DomainError, GridSpec, Plot,
                        ProbabilityMeasure, TangentVector, ValidationError, affine_mixture_plot,
                        chessboard, check_plot, constant_plot, fisher_gram, fisher_metric,
                        integrability_report, parameter_line, plot_point, plot_velocity,
                        simplex_model, simplex_plot, tangent_cone_probe)
from diffeostat.errors import CurveBaseError, ModelError
from diffeostat.families import CHESSBOARD_COMPONENTS, table_plot
from diffeostat.measure import FiniteSampleSpace, SignedMeasure
from diffeostat.model import fd_jacobian, plot_jacobian

from conftest import INDICATORS, UNIFORM3, X3


@pytest.fixture
def mixture():
    return affine_mixture_plot(UNIFORM3, INDICATORS)


def simplex_gram_oracle(w):
    # sum_i J_ia J_ib / w_i with J = [I; -1]
    n = len(w)
    J = np.vstack([np.eye(n - 1), -np.ones((1, n - 1))])
    return np.einsum("ia,ib,i->ab", J, J, 1.0 / np.asarray(w))


def test_mixture_points(mixture):
    np.testing.assert_allclose(plot_point(mixture, [1 / 3, 1 / 3]).weights, [1 / 3] * 3, atol=1e-15)
    np.testing.assert_allclose(plot_point(mixture, [0.5, 0.3]).weights, [0.5, 0.3, 0.2], atol=1e-15)


def test_constant_plot_returns_base():
    xi = ProbabilityMeasure(X3, [0.5, 0.3, 0.2])
    p = constant_plot(xi, dim=2)
    for theta in ([0.0, 0.0], [5.0, -3.0]):
        np.testing.assert_array_equal(plot_point(p, theta).weights, xi.weights)
    assert fisher_gram(constant_plot(xi), np.zeros(0)).shape == (0, 0)


def test_mixture_velocities(mixture):
    a = plot_velocity(mixture, [1 / 3, 1 / 3], [1, 0])
    np.testing.assert_allclose(a.direction.weights, [1, 0, -1], atol=1e-15)
    np.testing.assert_allclose(a.log_rep.values, [3, 0, -3], atol=1e-13)
    b = plot_velocity(mixture, [1 / 3, 1 / 3], [0, 1])
    np.testing.assert_allclose(b.log_rep.values, [0, 3, -3], atol=1e-13)
    z = plot_velocity(mixture, [1 / 3, 1 / 3], [0, 0])
    assert not np.any(z.direction.weights) and not np.any(z.log_rep.values)
    assert fisher_metric(a, a) == pytest.approx(6.0, abs=1e-12)
    assert fisher_metric(a, b) == pytest.approx(3.0, abs=1e-12)
    assert fisher_metric(a, z) == 0.0


def test_fisher_gram_examples(mixture):
    np.testing.assert_allclose(fisher_gram(mixture, [1 / 3, 1 / 3]), [[6, 3], [3, 6]], atol=1e-12)
    G = fisher_gram(simplex_plot(X3), [0.5, 0.3])
    np.testing.assert_allclose(G, [[7, 5], [5, 25 / 3]], atol=1e-12)


def test_domain_and_model_errors(mixture):
    with pytest.raises(DomainError):
        plot_point(mixture, [1.0, 0.5])
    with pytest.raises(DomainError):
        plot_point(simplex_plot(X3), [0.6, 0.6])
    bad = Plot(X3, [0.0], [1.0], lambda t: np.array([t[0], t[0], 0.0]), name="bad")
    with pytest.raises(ModelError):
        plot_point(bad, [0.3])


def test_fisher_metric_base_mismatch():
    a = TangentVector.at(UNIFORM3, [1.0, 0.0, -1.0])
    b = TangentVector.at(ProbabilityMeasure(X3, [0.5, 0.3, 0.2]), [1.0, 0.0, -1.0])
    with pytest.raises(BaseMismatchError):
        fisher_metric(a, b)


def test_tangent_vector_invariants():
    with pytest.raises(ValidationError):
        TangentVector.at(UNIFORM3, [1.0, 0.0, 0.0])
    a = TangentVector.at(UNIFORM3, [1.0, 0.0, -1.0])
    s = (a + a * 2.0) + (-a)
    np.testing.assert_allclose(s.direction.weights, [2, 0, -2])
    np.testing.assert_allclose(s.log_rep.values * UNIFORM3.weights, s.direction.weights, atol=1e-12)


def test_check_plot_catches_wrong_jacobian():
    good = simplex_plot(X3)
    assert check_plot(good) == []
    wrong = Plot(X3, good.lower, good.upper, good.func, jacobian=lambda t: np.eye(3)[:, :2],
                 region=good.region, name="wrong")
    issues = check_plot(wrong)
    assert any("sum" in s for s in issues) and any("finite differences" in s for s in issues)


def test_integrability_strictly_positive_mixture():
    mix = affine_mixture_plot(UNIFORM3, CHESSBOARD_COMPONENTS)
    rep = integrability_report(DiffeologicalModel(X3, (mix,)), GridSpec(levels=3))
    assert rep.almost2
    assert all(s.almost2 for s in rep.plots[0].points)


def test_integrability_simplex_is_2_integrable():
    rep = integrability_report(simplex_model(X3))
    assert rep.verdict == "2-integrable (numerically)"


def test_integrability_flags_zero_weight():
    # weights reach 0 on the diagonal eta1 + eta2 = 1 while the velocity does not vanish there
    mix = affine_mixture_plot(UNIFORM3, INDICATORS, sample_bounds=([0.25, 0.25], [0.75, 0.75]))
    rep = integrability_report(DiffeologicalModel(X3, (mix,)), GridSpec(base_points=3, levels=2))
    assert not rep.almost2
    bad = [s.theta for s in rep.plots[0].points if not s.almost2]
    assert (0.5, 0.5) in bad
    assert rep.verdict == "not almost 2-integrable"


def test_grid_spec_needs_two_levels():
    with pytest.raises(ValidationError):
        GridSpec(levels=1)


@pytest.fixture(scope="module")
def board():
    return chessboard()


def _probe(board, eta, dirs):
    xi = board.point(eta)
    curves = [board.curve(eta, d) for d in dirs]
    return tangent_cone_probe(board.model, xi, curves)


def test_cone_interior(board):
    rep = _probe(board, [0.125, 0.125], [[1, 0], [0, 1], [1, 1], [1, -1]])
    assert (rep.span_dim, rep.is_linear, rep.rejected) == (2, True, [])


def test_cone_edge(board):
    rep = _probe(board, [0.25, 0.125], [[0, 1], [1, 0]])
    assert rep.span_dim == 1 and rep.is_linear
    assert len(rep.rejected) == 1


def test_cone_corner(board):
    rep = _probe(board, [0.25, 0.25], [[1, 0], [0, 1]])
    assert len(rep.directions) == 2
    assert rep.span_dim == 2 and not rep.is_linear


def test_cone_span_dim_is_rank(board):
    rep = _probe(board, [0.125, 0.125], [[1, 0], [0, 1], [1, 1]])
    M = np.array([d.weights for d in rep.directions])
    assert rep.span_dim == int(np.sum(np.linalg.svd(M, compute_uv=False) > 1e-9))


def test_cone_curve_must_pass_through_base(board):
    xi = board.point([0.125, 0.125])
    with pytest.raises(CurveBaseError):
        tangent_cone_probe(board.model, xi, [board.curve([0.375, 0.375], [1, 0])])


def test_chessboard_membership(board):
    assert board.model.contains(board.point([0.1, 0.1]))
    assert not board.model.contains(board.point([0.1, 0.3]))
    assert board.model.contains(board.point([0.25, 0.25]))


def test_parameter_line_of_simplex_is_plot():
    p = simplex_plot(X3)
    line = parameter_line(p, [0.2, 0.3], [1.0, -0.5], 0.1)
    assert check_plot(line) == []


def test_table_plot_grid_only():
    p = table_plot(X3, [[0.0], [1.0]], [[0.5, 0.3, 0.2], [0.2, 0.3, 0.5]])
    np.testing.assert_allclose(plot_point(p, [1.0]).weights, [0.2, 0.3, 0.5])
    with pytest.raises(DomainError):
        plot_point(p, [0.5])


@given(st.integers(3, 6), st.integers(0, 2**31))
def test_simplex_gram_closed_form(n, seed):
    space = FiniteSampleSpace.of_size(n)
    w = np.random.default_rng(seed).dirichlet(np.ones(n))
    w = np.clip(w, 1e-3, None)
    w /= w.sum()
    G = fisher_gram(simplex_plot(space), w[:-1])
    np.testing.assert_allclose(G, simplex_gram_oracle(w), rtol=1e-10, atol=1e-10)


@given(st.floats(0.05, 0.45), st.floats(0.05, 0.45))
def test_analytic_jacobian_matches_finite_differences(a, b):
    p = affine_mixture_plot(UNIFORM3, CHESSBOARD_COMPONENTS)
    np.testing.assert_allclose(plot_jacobian(p, [a, b]), fd_jacobian(p, [a, b]), atol=1e-8)


@given(st.floats(0.1, 0.8), st.floats(0.1, 0.8), st.floats(-3, 3), st.floats(-3, 3))
def test_gram_is_symmetric_psd(a, b, u, v):
    p = affine_mixture_plot(UNIFORM3, CHESSBOARD_COMPONENTS)
    G = fisher_gram(p, [a, b])
    np.testing.assert_allclose(G, G.T, atol=1e-12)
    x = np.array([u, v])
    t = plot_velocity(p, [a, b], x)
    assert fisher_metric(t, t) == pytest.approx(float(x @ G @ x), rel=1e-9, abs=1e-12)
    assert np.linalg.eigvalsh(G).min() >= -1e-9
    assert math.isfinite(G.sum())


@given(st.integers(0, 2**31))
def test_tangent_bilinear(seed):
    r = np.random.default_rng(seed)
    xi = ProbabilityMeasure(X3, r.dirichlet(np.ones(3)))

    def rand():
        v = r.normal(size=3)
        return TangentVector.at(xi, v - v.sum() * xi.weights)

    a, b, c = rand(), rand(), rand()
    s = float(r.normal())
    lhs = fisher_metric(a * s + b, c)
    assert lhs == pytest.approx(s * fisher_metric(a, c) + fisher_metric(b, c), rel=1e-9, abs=1e-9)
    assert SignedMeasure(X3, a.direction.weights).total_mass() == pytest.approx(0.0, abs=1e-10)
