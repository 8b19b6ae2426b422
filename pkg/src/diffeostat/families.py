"""Ready-made plots and models: affine mixtures, the open simplex, the
chessboard mixture, i.i.d. Bernoulli pairs, and straight parameter lines."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError
from .measure import FiniteSampleSpace, ProbabilityMeasure
from .model import DiffeologicalModel, Plot

_MASS_TOL = 1e-12


def affine_mixture_plot(base: ProbabilityMeasure, components, lower=None, upper=None,
                        name: str = "mixture", sample_bounds=None) -> Plot:
    """Mixture ``eta -> p_eta * base`` of r density functions g^1..g^r.

    The density is ``g^r + sum_a (g^a - g^r) eta_a`` for ``a < r``, so the
    parameter has r - 1 coordinates and the last component carries weight
    ``1 - sum(eta)``.  Each g^i must be nonnegative with base-expectation 1.
    The domain is the box intersected with the set where all weights are
    nonnegative.
    """
    g = np.array(components, dtype=float)
    if g.ndim != 2 or g.shape[1] != len(base.space) or g.shape[0] < 2:
        raise ValidationError(f"components must be an (r >= 2) x {len(base.space)} array")
    if np.any(g < 0):
        raise ValidationError("mixture components must be nonnegative")
    means = g @ base.weights
    if np.any(np.abs(means - 1.0) > _MASS_TOL):
        raise ValidationError(f"mixture components must have base-expectation 1, got {means.tolist()}")
    m = g.shape[0] - 1
    mu0 = base.weights.copy()
    last = mu0 * g[-1]
    cols = (mu0 * (g[:-1] - g[-1])).T           # n x m
    lower = np.zeros(m) if lower is None else lower
    upper = np.ones(m) if upper is None else upper

    def weights(theta):
        return last + cols @ theta

    def region(theta):
        return bool(np.all(weights(theta) >= 0.0))

    def inverse(w):
        theta, *_ = np.linalg.lstsq(cols, np.asarray(w) - last, rcond=None)
        return theta

    return Plot(base.space, lower, upper, weights, jacobian=lambda theta: cols,
                region=region, inverse=inverse, sample_bounds=sample_bounds, name=name)


def simplex_plot(space: FiniteSampleSpace, name: str = "simplex", sample_bounds=None) -> Plot:
    """The open simplex, ``eta -> (eta_1, ..., eta_{n-1}, 1 - sum eta)``."""
    n = len(space)
    if n < 2:
        raise ValidationError("the simplex plot needs at least 2 atoms")
    m = n - 1
    jac = np.vstack([np.eye(m), -np.ones((1, m))])
    if sample_bounds is None:
        sample_bounds = (np.full(m, 0.05), np.full(m, 0.9 / m))

    def weights(theta):
        return np.append(theta, 1.0 - theta.sum())

    return Plot(space, np.zeros(m), np.ones(m), weights, jacobian=lambda theta: jac,
                region=lambda theta: bool(theta.sum() < 1.0),
                inverse=lambda w: np.asarray(w)[:-1], sample_bounds=sample_bounds, name=name)


def simplex_model(space: FiniteSampleSpace) -> DiffeologicalModel:
    return DiffeologicalModel(space, (simplex_plot(space),))


def bernoulli_pair_space() -> FiniteSampleSpace:
    return FiniteSampleSpace(("00", "01", "10", "11"))


def bernoulli_pair_plot(name: str = "bernoulli_pair") -> Plot:
    """Two i.i.d. Bernoulli(theta) draws on the atoms 00, 01, 10, 11."""

    def weights(theta):
        t = theta[0]
        return np.array([(1 - t) ** 2, (1 - t) * t, t * (1 - t), t ** 2])

    def jacobian(theta):
        t = theta[0]
        return np.array([[-2 * (1 - t)], [1 - 2 * t], [1 - 2 * t], [2 * t]])

    return Plot(bernoulli_pair_space(), [0.0], [1.0], weights, jacobian=jacobian,
                sample_bounds=([0.05], [0.95]), name=name)


def sum_statistic() -> dict:
    """The number of successes in a Bernoulli pair."""
    return {"00": "0", "01": "1", "10": "1", "11": "2"}


def parameter_line(plot: Plot, theta0, direction, radius: float, name: str = "") -> Plot:
    """The curve ``t -> plot(theta0 + t * direction)`` on ``(-radius, radius)``.

    This is a precomposition of ``plot`` with an affine map, hence a plot of
    any model containing ``plot``.  ``theta0`` may sit on the boundary of the
    plot's domain; only the curve's own points need to be admissible.
    """
    theta0 = np.asarray(theta0, dtype=float).reshape(-1)
    d = np.asarray(direction, dtype=float).reshape(-1)

    def weights(t):
        return plot.weights(theta0 + t[0] * d)

    jacobian = None
    if plot.jacobian is not None:
        def jacobian(t):
            return np.asarray(plot.jacobian(theta0 + t[0] * d)) @ d[:, None]

    def region(t):
        theta = theta0 + t[0] * d
        if np.any(theta < plot.lower) or np.any(theta > plot.upper):
            return False
        return plot.region is None or bool(plot.region(theta))

    return Plot(plot.space, [-radius], [radius], weights, jacobian=jacobian,
                smoothness=plot.smoothness, region=region,
                sample_bounds=([-0.5 * radius], [0.5 * radius]),
                name=name or f"{plot.name}@{theta0.tolist()}+t{d.tolist()}")


def restrict_plot(plot: Plot, lower, upper, name: str) -> Plot:
    """``plot`` restricted to a smaller open box."""
    return Plot(plot.space, lower, upper, plot.func, jacobian=plot.jacobian,
                smoothness=plot.smoothness, region=plot.region, inverse=plot.inverse,
                name=name)


# ----------------------------------------------------------------- chessboard

CHESSBOARD_BASE = (1 / 3, 1 / 3, 1 / 3)
# strictly positive on the whole unit square, so every cell is a valid plot
CHESSBOARD_COMPONENTS = ((1.4, 1.0, 0.6), (1.0, 1.4, 0.6), (1.0, 1.0, 1.0))


def in_black_cells(eta, cells: int, tol: float = 1e-9) -> bool:
    """Whether ``eta`` lies in the closed union of black cells (``i + j`` even)."""
    eta = np.asarray(eta, dtype=float)
    if np.any(eta < -tol) or np.any(eta > 1 + tol):
        return False
    cand = [{int(np.floor((x - tol) * cells)), int(np.floor((x + tol) * cells))} for x in eta]
    return any(0 <= i < cells and 0 <= j < cells and (i + j) % 2 == 0
               for i in cand[0] for j in cand[1])


@dataclass(frozen=True, eq=False)
class Chessboard:
    """A two-parameter mixture restricted to the black cells of a chessboard.

    The unit square is cut into ``cells x cells`` squares; cell ``(i, j)`` is
    black when ``i + j`` is even.  The model is the image of the closed union
    of black cells.  ``ambient`` is the mixture on the whole open square and
    is used to build probe curves.
    """

    ambient: Plot
    cells: int
    model: DiffeologicalModel
    tol: float = 1e-9

    def is_black(self, eta) -> bool:
        return in_black_cells(eta, self.cells, self.tol)

    def point(self, eta) -> ProbabilityMeasure:
        return ProbabilityMeasure.from_weights(self.ambient.space, self.ambient.weights(eta))

    def curve(self, eta0, direction, radius: float = 0.05, name: str = "") -> Plot:
        return parameter_line(self.ambient, eta0, direction, radius, name=name)


def chessboard(cells: int = 4, base: Optional[Sequence[float]] = None,
               components=None, space: Optional[FiniteSampleSpace] = None) -> Chessboard:
    if cells < 2:
        raise ValidationError("a chessboard needs at least 2 cells per side")
    components = CHESSBOARD_COMPONENTS if components is None else components
    base = CHESSBOARD_BASE if base is None else base
    space = space or FiniteSampleSpace.of_size(len(base))
    mu0 = ProbabilityMeasure(space, base)
    ambient = affine_mixture_plot(mu0, components, name="chessboard")
    if ambient.domain_dim != 2:
        raise ValidationError("the chessboard mixture needs exactly 3 components")
    plots = []
    for i in range(cells):
        for j in range(cells):
            if (i + j) % 2 == 0:
                plots.append(restrict_plot(ambient, [i / cells, j / cells],
                                           [(i + 1) / cells, (j + 1) / cells], f"black[{i},{j}]"))

    def membership(mu: ProbabilityMeasure) -> bool:
        eta = ambient.inverse(mu.weights)
        if np.max(np.abs(ambient.weights(eta) - mu.weights)) > 1e-9:
            return False
        return in_black_cells(eta, cells)

    model = DiffeologicalModel(space, tuple(plots), membership=membership)
    return Chessboard(ambient, cells, model)


def random_probability(space: FiniteSampleSpace, rng: np.random.Generator,
                       alpha: float = 1.0) -> ProbabilityMeasure:
    w = rng.dirichlet(np.full(len(space), alpha))
    return ProbabilityMeasure(space, w / w.sum())


def table_plot(space: FiniteSampleSpace, grid, points, jacobians=None, lower=None,
               upper=None, name: str = "table") -> Plot:
    """A plot known only on a finite parameter grid (no interpolation).

    Evaluation off the grid raises :class:`DomainError`; velocities need the
    optional per-point Jacobians because finite differences leave the grid.
    """
    grid = np.array(grid, dtype=float)
    if grid.ndim == 1:
        grid = grid[:, None]
    pts = np.array(points, dtype=float)
    if pts.shape != (grid.shape[0], len(space)):
        raise ValidationError(f"table plot {name!r}: need one weight vector per grid point")
    jacs = None if jacobians is None else np.array(jacobians, dtype=float).reshape(
        grid.shape[0], len(space), grid.shape[1])
    m = grid.shape[1]
    lower = grid.min(axis=0) - 1.0 if lower is None else lower
    upper = grid.max(axis=0) + 1.0 if upper is None else upper

    def locate(theta) -> int:
        hits = np.flatnonzero(np.all(np.abs(grid - theta) <= 1e-12, axis=1))
        return int(hits[0]) if hits.size else -1

    def weights(theta):
        k = locate(theta)
        if k < 0:
            raise ValidationError(f"table plot {name!r} has no entry at {np.asarray(theta).tolist()}")
        return pts[k]

    jacobian = None
    if jacs is not None:
        def jacobian(theta):
            return jacs[locate(theta)]

    def inverse(w):
        hits = np.flatnonzero(np.all(np.abs(pts - w) <= 1e-12, axis=1))
        return grid[hits[0]] if hits.size else np.full(m, np.nan)

    return Plot(space, lower, upper, weights, jacobian=jacobian,
                region=lambda theta: locate(theta) >= 0, inverse=inverse,
                sample_bounds=(grid.min(axis=0), grid.max(axis=0)), name=name)

