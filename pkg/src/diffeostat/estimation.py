"""Estimators, feature maps, and the Cramér-Rao machinery on finite spaces.

An estimator assigns a probability measure to every atom.  Composed with a
feature map ``phi`` into R^d it becomes an n x d table ``F`` with
``F[x] = phi(estimator(x))``; every quadratic form below is a weighted
second moment of that table under the base point ``xi``.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (DegenerateBasisError, SpaceMismatchError, TableMissError,
                     ValidationError)
from .measure import (FiniteSampleSpace, PointFunction, ProbabilityMeasure,
                      check_same_space, l2_inner)
from .model import (DiffeologicalModel, GridSpec, Plot, TangentVector, gram_matrix,
                    invert_plot, plot_point, same_base)

PSD_TOL = 1e-9
SYM_TOL = 1e-12
GRAM_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Estimator:
    """A map from atoms to probability measures on the same space."""

    space: FiniteSampleSpace
    assignment: tuple
    name: str = ""

    def __post_init__(self):
        assignment = tuple(self.assignment)
        if len(assignment) != len(self.space):
            raise ValidationError(f"estimator {self.name!r} needs one measure per atom")
        for mu in assignment:
            if not isinstance(mu, ProbabilityMeasure) or mu.space != self.space:
                raise ValidationError(f"estimator {self.name!r} must map into P(X) of its own space")
        object.__setattr__(self, "assignment", assignment)

    def matrix(self) -> np.ndarray:
        return np.array([mu.weights for mu in self.assignment])

    @classmethod
    def from_rows(cls, space: FiniteSampleSpace, rows, name: str = "table") -> "Estimator":
        rows = np.asarray(rows, dtype=float)
        return cls(space, tuple(ProbabilityMeasure(space, r) for r in rows), name=name)


def plug_in(space: FiniteSampleSpace) -> Estimator:
    """``x -> Dirac(x)``, the empirical measure of a single observation."""
    return Estimator(space, tuple(ProbabilityMeasure.dirac(space, i) for i in range(len(space))),
                     name="plug_in")


def smoothed(space: FiniteSampleSpace, epsilon: float) -> Estimator:
    """``x -> (1 - eps) Dirac(x) + eps * uniform``."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValidationError("smoothing weight must lie in [0, 1]")
    n = len(space)
    rows = (1.0 - epsilon) * np.eye(n) + epsilon / n
    return Estimator.from_rows(space, rows, name=f"smoothed({epsilon:g})")


def constant(point: ProbabilityMeasure) -> Estimator:
    return Estimator(point.space, (point,) * len(point.space), name="constant")


# ---------------------------------------------------------------- feature maps

class PhiMap(abc.ABC):
    """A map from probability measures into R^d."""

    space: FiniteSampleSpace
    dim: int

    @abc.abstractmethod
    def __call__(self, xi: ProbabilityMeasure) -> np.ndarray:
        ...

    def _check(self, xi: ProbabilityMeasure):
        if xi.space != self.space:
            raise SpaceMismatchError("feature map evaluated on a measure of another space")


class CoordinatePhi(PhiMap):
    """Selects the weights of the given atoms."""

    kind = "coordinate"

    def __init__(self, space: FiniteSampleSpace, atoms: Sequence[int | str]):
        self.space = space
        self.indices = [space.index(a) if isinstance(a, str) else int(a) for a in atoms]
        if not self.indices:
            raise ValidationError("a coordinate map needs at least one atom")
        self.dim = len(self.indices)

    def __call__(self, xi):
        self._check(xi)
        return xi.weights[self.indices].copy()


class KernelEmbeddingPhi(PhiMap):
    """Kernel mean embedding ``xi -> K xi`` for a symmetric PSD matrix ``K``."""

    kind = "kernel_embedding"

    def __init__(self, space: FiniteSampleSpace, matrix):
        K = np.array(matrix, dtype=float)
        n = len(space)
        if K.shape != (n, n):
            raise ValidationError(f"kernel matrix must be {n} x {n}")
        if np.max(np.abs(K - K.T)) > SYM_TOL:
            raise ValidationError("kernel matrix must be symmetric")
        if np.linalg.eigvalsh(K).min() < -PSD_TOL:
            raise ValidationError("kernel matrix must be positive semi-definite")
        self.space, self.matrix, self.dim = space, K, n

    def __call__(self, xi):
        self._check(xi)
        return self.matrix @ xi.weights


class ParameterPhi(PhiMap):
    """Reads the parameters of ``plot`` at a point of its (closed) image."""

    kind = "parameter"

    def __init__(self, plot: Plot, tol: float = 1e-9):
        self.space, self.plot, self.dim, self.tol = plot.space, plot, plot.domain_dim, tol
        if self.dim < 1:
            raise ValidationError("parameter maps need a plot of positive dimension")

    def __call__(self, xi):
        self._check(xi)
        theta = invert_plot(self.plot, xi.weights, tol=self.tol, closed=True)
        if theta is None:
            raise TableMissError(f"measure {xi.weights.tolist()} is not in the image of {self.plot.name!r}")
        return theta


class TablePhi(PhiMap):
    """Explicit values at registered points; other points raise TableMissError."""

    kind = "table"

    def __init__(self, space: FiniteSampleSpace, points, values, tol: float = 1e-12):
        pts = np.array(points, dtype=float).reshape(-1, len(space))
        vals = np.array(values, dtype=float)
        vals = vals.reshape(pts.shape[0], -1)
        if vals.shape[1] < 1:
            raise ValidationError("table feature map needs d >= 1")
        self.space, self.points, self.values, self.tol = space, pts, vals, tol
        self.dim = vals.shape[1]

    def __call__(self, xi):
        self._check(xi)
        hits = np.flatnonzero(np.all(np.abs(self.points - xi.weights) <= self.tol, axis=1))
        if not hits.size:
            raise TableMissError(f"no table entry for {xi.weights.tolist()}")
        return self.values[hits[0]].copy()


def phi_apply(phi: PhiMap, xi: ProbabilityMeasure) -> np.ndarray:
    return np.asarray(phi(xi), dtype=float).reshape(phi.dim)


def phi_values(sigma: Estimator, phi: PhiMap) -> np.ndarray:
    """The n x d table of ``phi(sigma(x))``."""
    if sigma.space != phi.space:
        raise SpaceMismatchError("estimator and feature map live on different spaces")
    return np.array([phi_apply(phi, mu) for mu in sigma.assignment]).reshape(len(sigma.space), phi.dim)


# ---------------------------------------------------------------- quadratic forms

@dataclass(frozen=True, eq=False)
class QuadraticForm:
    matrix: np.ndarray

    def __post_init__(self):
        M = np.array(self.matrix, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValidationError(f"quadratic form needs a square matrix, got {M.shape}")
        if M.size and np.max(np.abs(M - M.T)) > SYM_TOL * max(1.0, float(np.max(np.abs(M)))):
            raise ValidationError("quadratic form matrix is not symmetric")
        M = 0.5 * (M + M.T)
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix).min()) if self.dim else 0.0

    @property
    def psd(self) -> bool:
        return self.min_eigenvalue >= -PSD_TOL

    def __call__(self, l, h=None) -> float:
        h = l if h is None else h
        return float(np.asarray(l) @ self.matrix @ np.asarray(h))

    def trace(self) -> float:
        return float(np.trace(self.matrix))


def _check_xi(sigma: Estimator, xi: ProbabilityMeasure):
    if xi.space != sigma.space:
        raise SpaceMismatchError("base point and estimator live on different spaces")


def phi_mean(sigma: Estimator, phi: PhiMap, xi: ProbabilityMeasure) -> np.ndarray:
    """``E_xi[phi(sigma(x))]`` componentwise."""
    _check_xi(sigma, xi)
    return xi.weights @ phi_values(sigma, phi)


def bias(sigma: Estimator, phi: PhiMap, xi: ProbabilityMeasure) -> np.ndarray:
    return phi_mean(sigma, phi, xi) - phi_apply(phi, xi)


def _second_moment(F: np.ndarray, center: np.ndarray, xi: ProbabilityMeasure) -> QuadraticForm:
    R = F - center
    return QuadraticForm((R * xi.weights[:, None]).T @ R)


def mse_form(sigma: Estimator, phi: PhiMap, xi: ProbabilityMeasure) -> QuadraticForm:
    """Mean square error form, centered at ``phi(xi)``."""
    _check_xi(sigma, xi)
    return _second_moment(phi_values(sigma, phi), phi_apply(phi, xi), xi)


def variance_form(sigma: Estimator, phi: PhiMap, xi: ProbabilityMeasure) -> QuadraticForm:
    """Variance form, centered at the phi-mean."""
    _check_xi(sigma, xi)
    F = phi_values(sigma, phi)
    return _second_moment(F, xi.weights @ F, xi)


# ---------------------------------------------------------------- gradients

@dataclass(frozen=True, eq=False)
class FisherGradient:
    base: ProbabilityMeasure
    coefficients: np.ndarray
    as_tangent: TangentVector


def _basis_gram(xi: ProbabilityMeasure, tangent_basis: Sequence[TangentVector]) -> np.ndarray:
    basis = list(tangent_basis)
    for X in basis:
        if not same_base(X.base, xi):
            raise ValidationError("tangent basis vectors must be attached to xi")
    if not basis:
        return np.zeros((0, 0))
    G = gram_matrix(basis)
    if np.linalg.eigvalsh(G).min() <= GRAM_TOL:
        raise DegenerateBasisError("tangent basis is linearly dependent in L2(xi)")
    return G


def centered_feature(sigma: Estimator, phi: PhiMap, l: int, xi: ProbabilityMeasure) -> PointFunction:
    """``phi^l o sigma - E_xi(phi^l o sigma)`` as a function on atoms."""
    _check_xi(sigma, xi)
    f = phi_values(sigma, phi)[:, l]
    return PointFunction(sigma.space, f - xi.weights @ f)


def _gradient(f: PointFunction, xi, basis, G) -> FisherGradient:
    r = np.array([l2_inner(f, X.log_rep, xi) for X in basis])
    c = np.linalg.solve(G, r) if len(basis) else np.zeros(0)
    direction = np.zeros(len(xi.space))
    for ca, X in zip(c, basis):
        direction = direction + ca * X.direction.weights
    return FisherGradient(xi, c, TangentVector.at(xi, direction))


def fisher_gradient(sigma: Estimator, phi: PhiMap, l: int, xi: ProbabilityMeasure,
                    tangent_basis: Sequence[TangentVector]) -> FisherGradient:
    """Metric gradient of ``xi -> E_xi(phi^l o sigma)`` within the span of ``tangent_basis``.

    The centered feature is projected orthogonally in L2(xi) onto the span of
    the basis log representations, via a Gram solve.
    """
    basis = list(tangent_basis)
    G = _basis_gram(xi, basis)
    return _gradient(centered_feature(sigma, phi, l, xi), xi, basis, G)


def inverse_fisher_form(sigma: Estimator, phi: PhiMap, xi: ProbabilityMeasure,
                        tangent_basis: Sequence[TangentVector]) -> QuadraticForm:
    """Pairwise Fisher products of the metric gradients of the phi-mean."""
    basis = list(tangent_basis)
    G = _basis_gram(xi, basis)
    C = np.array([_gradient(centered_feature(sigma, phi, l, xi), xi, basis, G).coefficients
                  for l in range(phi.dim)]).reshape(phi.dim, len(basis))
    M = C @ G @ C.T
    return QuadraticForm(0.5 * (M + M.T))


def cramer_rao_gap(sigma: Estimator, phi: PhiMap, xi: ProbabilityMeasure,
                   tangent_basis: Sequence[TangentVector]) -> QuadraticForm:
    """Variance form minus inverse Fisher form; positive semi-definite."""
    V = variance_form(sigma, phi, xi).matrix
    I = inverse_fisher_form(sigma, phi, xi, tangent_basis).matrix
    return QuadraticForm(V - I)


@dataclass
class RegularityReport:
    plot_sups: dict
    verdict: str = "regular"

    @property
    def sup(self) -> np.ndarray:
        return np.max(np.array(list(self.plot_sups.values())), axis=0)


def check_phi_regular(sigma: Estimator, phi: PhiMap, model: DiffeologicalModel,
                      grid_spec: GridSpec | None = None) -> RegularityReport:
    """Sup over a parameter grid of ``||phi^l o sigma||_{L2(xi)}`` per component.

    Bounded functions on a finite space always give finite sups, so the
    verdict is informational.
    """
    check_same_space(sigma, model)
    spec = grid_spec or GridSpec(levels=2)
    F = phi_values(sigma, phi)
    sups = {}
    for p in model.plots:
        best = np.zeros(phi.dim)
        if p.domain_dim == 0:
            thetas = [np.zeros(0)]
        else:
            axes = spec.axes(p, spec.levels - 1)
            thetas = [np.array(t) for t in np.array(np.meshgrid(*axes, indexing="ij")).reshape(p.domain_dim, -1).T]
        for theta in thetas:
            if not p.in_domain(theta):
                continue
            xi = plot_point(p, theta)
            best = np.maximum(best, np.sqrt(xi.weights @ F ** 2))
        sups[p.name] = best
    verdict = "regular" if all(np.all(np.isfinite(s)) for s in sups.values()) else "not regular"
    return RegularityReport(sups, verdict)
