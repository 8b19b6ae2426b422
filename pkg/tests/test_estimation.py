import numpy as np
import pytest
from hypothesis import given, strategies as st

from diffeostat import (CoordinatePhi, Estimator, KernelEmbeddingPhi, ParameterPhi,
                        ProbabilityMeasure, QuadraticForm, TablePhi, ValidationError,
                        affine_mixture_plot, bernoulli_pair_plot, bias, check_phi_regular,
                        constant, cramer_rao_gap, fisher_gradient, fisher_metric,
                        inverse_fisher_form, mse_form, phi_apply, phi_mean, plot_point,
                        plot_velocity, plug_in, simplex_model, simplex_plot, smoothed,
                        variance_form)
from diffeostat.errors import DegenerateBasisError, TableMissError
from diffeostat.families import CHESSBOARD_COMPONENTS, bernoulli_pair_space
from diffeostat.model import basis_velocities

from conftest import UNIFORM3, X3, XI

COORD = CoordinatePhi(X3, ["x0", "x1"])
FULL = basis_velocities(simplex_plot(X3), XI.weights[:2])


def multinomial_cov(w, idx):
    # covariance of single-draw indicators, by enumeration over atoms
    w = np.asarray(w)
    F = np.eye(len(w))[:, idx]
    m = w @ F
    return sum(w[x] * np.outer(F[x] - m, F[x] - m) for x in range(len(w)))


def test_phi_apply_examples():
    np.testing.assert_array_equal(phi_apply(COORD, XI), [0.5, 0.3])
    np.testing.assert_allclose(phi_apply(KernelEmbeddingPhi(X3, np.eye(3)), XI), XI.weights)
    np.testing.assert_allclose(phi_apply(KernelEmbeddingPhi(X3, np.ones((3, 3))), XI), [1, 1, 1])


def test_phi_validation():
    with pytest.raises(ValidationError):
        KernelEmbeddingPhi(X3, [[1, 2, 0], [0, 1, 0], [0, 0, 1]])
    with pytest.raises(ValidationError):
        KernelEmbeddingPhi(X3, -np.eye(3))
    phi = TablePhi(X3, [XI.weights], [[1.0]])
    assert phi_apply(phi, XI)[0] == 1.0
    with pytest.raises(TableMissError):
        phi_apply(phi, UNIFORM3)


def test_parameter_phi_inverts_plot():
    p = affine_mixture_plot(UNIFORM3, CHESSBOARD_COMPONENTS)
    phi = ParameterPhi(p)
    np.testing.assert_allclose(phi_apply(phi, plot_point(p, [0.3, 0.6])), [0.3, 0.6], atol=1e-12)
    with pytest.raises(TableMissError):
        phi_apply(phi, ProbabilityMeasure(X3, [0.9, 0.05, 0.05]))


def test_phi_mean_examples():
    np.testing.assert_allclose(phi_mean(plug_in(X3), COORD, XI), [0.5, 0.3], atol=1e-15)
    c = constant(UNIFORM3)
    np.testing.assert_allclose(phi_mean(c, COORD, XI), [1 / 3, 1 / 3])
    np.testing.assert_allclose(phi_mean(smoothed(X3, 0.1), COORD, XI),
                               [0.9 * 0.5 + 1 / 30, 0.9 * 0.3 + 1 / 30], atol=1e-15)


def test_bias_examples():
    np.testing.assert_allclose(bias(plug_in(X3), COORD, XI), [0, 0], atol=1e-15)
    np.testing.assert_allclose(bias(constant(XI), COORD, XI), [0, 0], atol=1e-15)
    np.testing.assert_allclose(bias(smoothed(X3, 0.1), COORD, XI), [-1 / 60, 1 / 300], atol=1e-15)


def test_mse_and_variance_examples():
    np.testing.assert_allclose(mse_form(constant(XI), COORD, XI).matrix, 0.0, atol=1e-15)
    expected = [[0.25, -0.15], [-0.15, 0.21]]
    np.testing.assert_allclose(multinomial_cov(XI.weights, [0, 1]), expected, atol=1e-15)
    np.testing.assert_allclose(mse_form(plug_in(X3), COORD, XI).matrix, expected, atol=1e-15)
    np.testing.assert_allclose(variance_form(plug_in(X3), COORD, XI).matrix, expected, atol=1e-15)
    np.testing.assert_allclose(variance_form(constant(UNIFORM3), COORD, XI).matrix, 0.0, atol=1e-15)


def test_mse_trace_identity():
    sigma = smoothed(X3, 0.1)
    F = np.array([phi_apply(COORD, mu) for mu in sigma.assignment])
    direct = sum(XI.weights[x] * np.sum((F[x] - phi_apply(COORD, XI)) ** 2) for x in range(3))
    assert mse_form(sigma, COORD, XI).trace() == pytest.approx(direct, abs=1e-12)


def test_fisher_gradient_examples():
    g = fisher_gradient(plug_in(X3), COORD, 0, XI, FULL)
    np.testing.assert_allclose(g.as_tangent.direction.weights, [0.25, -0.15, -0.10], atol=1e-12)
    z = fisher_gradient(constant(UNIFORM3), COORD, 0, XI, FULL)
    np.testing.assert_allclose(z.as_tangent.direction.weights, 0.0, atol=1e-15)


def test_gradient_on_line_is_projection():
    line = basis_velocities(simplex_plot(X3), XI.weights[:2])[:1]
    full = fisher_gradient(plug_in(X3), COORD, 1, XI, FULL).as_tangent
    g = fisher_gradient(plug_in(X3), COORD, 1, XI, line).as_tangent
    X = line[0]
    expected = X.direction.weights * fisher_metric(full, X) / fisher_metric(X, X)
    np.testing.assert_allclose(g.direction.weights, expected, atol=1e-12)


def test_inverse_fisher_examples():
    expected = [[0.25, -0.15], [-0.15, 0.21]]
    np.testing.assert_allclose(inverse_fisher_form(plug_in(X3), COORD, XI, FULL).matrix, expected, atol=1e-12)
    np.testing.assert_allclose(inverse_fisher_form(constant(UNIFORM3), COORD, XI, FULL).matrix, 0.0, atol=1e-15)


@pytest.mark.parametrize("t", [0.2, 0.5, 0.7])
def test_scalar_cramer_rao_denominator(t):
    # E_t[1{11}] = t^2 and the Fisher information of two draws is 2 / (t (1 - t))
    X = bernoulli_pair_space()
    p = bernoulli_pair_plot()
    xi = plot_point(p, [t])
    phi = CoordinatePhi(X, ["11"])
    form = inverse_fisher_form(plug_in(X), phi, xi, basis_velocities(p, [t]))
    assert form.matrix[0, 0] == pytest.approx((2 * t) ** 2 * t * (1 - t) / 2, abs=1e-10)


def test_cramer_rao_examples():
    gap = cramer_rao_gap(plug_in(X3), COORD, XI, FULL)
    assert np.max(np.abs(gap.matrix)) <= 1e-10
    sm = cramer_rao_gap(smoothed(X3, 0.1), COORD, XI, FULL)
    assert sm.psd
    # variance and inverse Fisher both scale by 0.81, so the bound is attained here as well
    np.testing.assert_allclose(sm.matrix, 0.0, atol=1e-12)


def test_degenerate_basis():
    X = FULL[0]
    with pytest.raises(DegenerateBasisError):
        fisher_gradient(plug_in(X3), COORD, 0, XI, [X, X * 2.0])


def test_quadratic_form_checks():
    with pytest.raises(ValidationError):
        QuadraticForm([[1.0, 2.0], [0.0, 1.0]])
    q = QuadraticForm([[1.0, 0.0], [0.0, -1e-10]])
    assert q.psd and not QuadraticForm([[1.0, 0.0], [0.0, -1e-8]]).psd
    assert q([1.0, 2.0]) == pytest.approx(1.0 - 4e-10)


def test_phi_regularity():
    model = simplex_model(X3)
    rep = check_phi_regular(plug_in(X3), COORD, model)
    assert rep.verdict == "regular" and np.all(rep.sup <= 1.0)
    rep = check_phi_regular(constant(XI), COORD, model)
    np.testing.assert_allclose(rep.sup, [0.5, 0.3], atol=1e-15)


@given(st.integers(0, 2**31), st.floats(0.0, 1.0))
def test_mse_decomposition(seed, eps):
    r = np.random.default_rng(seed)
    sigma = Estimator.from_rows(X3, r.dirichlet(np.ones(3), size=3))
    phi = KernelEmbeddingPhi(X3, (lambda A: A @ A.T)(r.normal(size=(3, 3))))
    xi = ProbabilityMeasure(X3, r.dirichlet(np.ones(3)))
    b = bias(sigma, phi, xi)
    lhs = mse_form(sigma, phi, xi).matrix
    rhs = variance_form(sigma, phi, xi).matrix + np.outer(b, b)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)
    sm = smoothed(X3, eps)
    b = bias(sm, COORD, xi)
    np.testing.assert_allclose(mse_form(sm, COORD, xi).matrix,
                               variance_form(sm, COORD, xi).matrix + np.outer(b, b), atol=1e-12)


@given(st.integers(0, 2**31))
def test_cramer_rao_gap_psd(seed):
    r = np.random.default_rng(seed)
    sigma = Estimator.from_rows(X3, r.dirichlet(np.ones(3), size=3))
    w = np.clip(r.dirichlet(np.ones(3)), 0.02, None)
    xi = ProbabilityMeasure(X3, w / w.sum())
    basis = basis_velocities(simplex_plot(X3), xi.weights[:2])
    assert cramer_rao_gap(sigma, COORD, xi, basis).min_eigenvalue >= -1e-9


@given(st.integers(0, 2**31))
def test_gradient_matches_directional_derivative(seed):
    r = np.random.default_rng(seed)
    p = affine_mixture_plot(UNIFORM3, CHESSBOARD_COMPONENTS)
    theta = r.uniform(0.2, 0.8, size=2)
    v = r.normal(size=2)
    sigma = Estimator.from_rows(X3, r.dirichlet(np.ones(3), size=3))
    xi = plot_point(p, theta)
    basis = basis_velocities(p, theta)
    h = 1e-6

    def mean(t):
        return phi_mean(sigma, COORD, plot_point(p, theta + t * v))

    fd = (mean(h) - mean(-h)) / (2 * h)
    X = plot_velocity(p, theta, v)
    for l in range(2):
        g = fisher_gradient(sigma, COORD, l, xi, basis).as_tangent
        assert fisher_metric(g, X) == pytest.approx(fd[l], abs=1e-5)
