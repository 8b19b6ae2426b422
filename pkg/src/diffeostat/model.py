"""Diffeological statistical models over finite sample spaces.

A model is presented by a finite family of plots, parametrized maps from an
open box of R^m into the probability simplex.  Constant maps are always
admitted and precompositions are built explicitly (see
:func:`diffeostat.families.parameter_line`), so locality is never checked.

Tangent vectors carry their logarithmic representation (the density of the
velocity against the base point) and the Fisher metric is the L2(base)
pairing of those densities.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy import optimize

from .errors import (BaseMismatchError, CurveBaseError, DomainError,
                     DominationError, ModelError, ValidationError)
from .measure import (FiniteSampleSpace, PointFunction, ProbabilityMeasure,
                      SignedMeasure, check_same_space, l2_inner, radon_nikodym)

#: relative step of the central finite differences
FD_STEP = 1e-5
#: tolerance on the simplex invariants of plot output
PLOT_TOL = 1e-9
#: tolerance on the total mass of a tangent direction
TANGENT_MASS_TOL = 1e-10
BASE_TOL = 1e-12
RANK_TOL = 1e-9

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class Plot:
    """A C^k map from an open box ``(lower, upper)`` of R^m into P(X).

    ``func`` returns atom weights.  ``region`` optionally cuts the box down to
    an open subset (e.g. the open triangle for the full simplex).  ``inverse``
    maps weights back to parameters when a closed form exists.
    ``sample_bounds`` is the compact sub-box used for grids and random
    sampling.
    """

    space: FiniteSampleSpace
    lower: np.ndarray
    upper: np.ndarray
    func: ArrayFn
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    smoothness: float = math.inf
    region: Optional[Callable[[np.ndarray], bool]] = None
    inverse: Optional[ArrayFn] = None
    sample_bounds: Optional[tuple] = None
    name: str = ""

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float).reshape(-1)
        hi = np.array(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape or np.any(lo >= hi):
            raise ValidationError(f"plot {self.name!r}: invalid box {lo}, {hi}")
        if not (self.smoothness >= 1):
            raise ValidationError(f"plot {self.name!r}: smoothness order must be >= 1")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if self.sample_bounds is None:
            slo, shi = _finite_box(lo, hi)
            width = shi - slo
            bounds = (slo + 0.1 * width, shi - 0.1 * width)
        else:
            bounds = tuple(np.array(b, dtype=float).reshape(-1) for b in self.sample_bounds)
            if bounds[0].shape != lo.shape or bounds[1].shape != lo.shape:
                raise ValidationError(f"plot {self.name!r}: sample bounds have wrong shape")
        object.__setattr__(self, "sample_bounds", bounds)

    @property
    def domain_dim(self) -> int:
        return self.lower.size

    def in_domain(self, theta) -> bool:
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.shape != self.lower.shape:
            return False
        if np.any(theta <= self.lower) or np.any(theta >= self.upper):
            return False
        return self.region is None or bool(self.region(theta))

    def weights(self, theta) -> np.ndarray:
        return np.asarray(self.func(np.asarray(theta, dtype=float)), dtype=float).reshape(-1)


def _finite_box(lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Replace infinite box sides by finite ones, keeping a width of at least 2."""
    flo, fhi = np.isfinite(lo), np.isfinite(hi)
    slo = np.where(flo, lo, np.where(fhi, hi - 2.0, -1.0))
    shi = np.where(fhi, hi, np.where(flo, lo + 2.0, 1.0))
    return slo, shi


def _as_theta(p: Plot, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.shape != (p.domain_dim,):
        raise DomainError(f"plot {p.name!r} expects {p.domain_dim} parameters, got {theta.size}")
    return theta


def plot_point(p: Plot, theta) -> ProbabilityMeasure:
    """Evaluate a plot at an interior parameter."""
    theta = _as_theta(p, theta)
    if not p.in_domain(theta):
        raise DomainError(f"parameter {theta.tolist()} outside the domain of plot {p.name!r}")
    try:
        return ProbabilityMeasure.from_weights(p.space, p.weights(theta), tol=PLOT_TOL)
    except ValidationError as exc:
        raise ModelError(f"plot {p.name!r} at {theta.tolist()}: {exc}") from None


def fd_step(theta: np.ndarray) -> np.ndarray:
    return FD_STEP * np.maximum(1.0, np.abs(theta))


def fd_jacobian(p: Plot, theta) -> np.ndarray:
    """Central-difference Jacobian of the atom weights (n x m)."""
    theta = _as_theta(p, theta)
    h = fd_step(theta)
    cols = []
    for a in range(p.domain_dim):
        step = np.zeros_like(theta)
        step[a] = h[a]
        up, down = theta + step, theta - step
        if not (p.in_domain(up) and p.in_domain(down)):
            raise DomainError(
                f"parameter {theta.tolist()} within one finite-difference step of the "
                f"boundary of plot {p.name!r}")
        cols.append((plot_point(p, up).weights - plot_point(p, down).weights) / (2 * h[a]))
    if not cols:
        return np.zeros((len(p.space), 0))
    return np.column_stack(cols)


def plot_jacobian(p: Plot, theta) -> np.ndarray:
    theta = _as_theta(p, theta)
    if p.jacobian is None:
        return fd_jacobian(p, theta)
    if not p.in_domain(theta):
        raise DomainError(f"parameter {theta.tolist()} outside the domain of plot {p.name!r}")
    jac = np.asarray(p.jacobian(theta), dtype=float).reshape(len(p.space), p.domain_dim)
    return jac


@dataclass(frozen=True, eq=False)
class TangentVector:
    """A velocity ``direction`` at ``base`` with its density ``log_rep``."""

    base: ProbabilityMeasure
    direction: SignedMeasure
    log_rep: PointFunction

    def __post_init__(self):
        check_same_space(self.base, self.direction, self.log_rep)
        mass = self.direction.total_mass()
        if abs(mass) > TANGENT_MASS_TOL:
            raise ValidationError(f"tangent direction must have zero mass, got {mass!r}")
        recon = self.log_rep.values * self.base.weights
        if np.max(np.abs(recon - self.direction.weights), initial=0.0) > TANGENT_MASS_TOL:
            raise ValidationError("log representation does not reconstruct the direction")

    @classmethod
    def at(cls, base: ProbabilityMeasure, direction) -> "TangentVector":
        """Attach ``direction`` to ``base``, computing its log representation."""
        if not isinstance(direction, SignedMeasure):
            direction = SignedMeasure(base.space, direction)
        return cls(base, direction, radon_nikodym(direction, base))

    @classmethod
    def zero(cls, base: ProbabilityMeasure) -> "TangentVector":
        return cls.at(base, np.zeros(len(base.space)))

    def _check_base(self, other: "TangentVector"):
        if not same_base(self.base, other.base):
            raise BaseMismatchError("tangent vectors live at different base points")

    def __add__(self, other: "TangentVector") -> "TangentVector":
        self._check_base(other)
        return TangentVector.at(self.base, self.direction + other.direction)

    def __mul__(self, scalar: float) -> "TangentVector":
        return TangentVector.at(self.base, self.direction * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "TangentVector":
        return self * -1.0


def same_base(a: SignedMeasure, b: SignedMeasure, tol: float = BASE_TOL) -> bool:
    return a.space == b.space and bool(np.max(np.abs(a.weights - b.weights)) <= tol)


def _tangent_from_velocity(base: ProbabilityMeasure, velocity: np.ndarray) -> TangentVector:
    mass = float(velocity.sum())
    # analytic jacobians are only held to 1e-9 column sums; remove the drift along the base
    if abs(mass) > PLOT_TOL * max(1.0, float(np.abs(velocity).sum())):
        raise ModelError(f"plot velocity has nonzero total mass {mass!r}")
    if mass != 0.0:
        velocity = velocity - mass * base.weights
    return TangentVector.at(base, velocity)


def plot_velocity(p: Plot, theta, v) -> TangentVector:
    """The pushed-forward velocity ``dp_theta(v)`` as a tangent vector."""
    theta = _as_theta(p, theta)
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape != (p.domain_dim,):
        raise ValidationError(f"velocity must have {p.domain_dim} components")
    base = plot_point(p, theta)
    return _tangent_from_velocity(base, plot_jacobian(p, theta) @ v)


def fisher_metric(a: TangentVector, b: TangentVector) -> float:
    """Fisher metric: L2(base) pairing of the log representations."""
    if not same_base(a.base, b.base):
        raise BaseMismatchError("Fisher metric needs tangent vectors at the same base point")
    return l2_inner(a.log_rep, b.log_rep, a.base)


def basis_velocities(p: Plot, theta) -> list[TangentVector]:
    theta = _as_theta(p, theta)
    base = plot_point(p, theta)
    jac = plot_jacobian(p, theta)
    return [_tangent_from_velocity(base, jac[:, a]) for a in range(p.domain_dim)]


def gram_matrix(vectors: Sequence[TangentVector]) -> np.ndarray:
    r = len(vectors)
    G = np.zeros((r, r))
    for a in range(r):
        for b in range(a, r):
            G[a, b] = G[b, a] = fisher_metric(vectors[a], vectors[b])
    return G


def fisher_gram(p: Plot, theta) -> np.ndarray:
    """Fisher Gram matrix of the coordinate velocities of ``p`` at ``theta``."""
    return gram_matrix(basis_velocities(p, theta))


def _check_plot_point(p: Plot, theta: np.ndarray) -> list[str]:
    issues = []
    try:
        plot_point(p, theta)
    except (ModelError, DomainError) as exc:
        return [str(exc)]
    if p.jacobian is not None and p.domain_dim:
        jac = plot_jacobian(p, theta)
        sums = np.abs(jac.sum(axis=0))
        if np.any(sums > PLOT_TOL):
            issues.append(f"jacobian columns at {theta.tolist()} do not sum to 0: {sums.tolist()}")
        try:
            fd = fd_jacobian(p, theta)
        except DomainError:
            return issues
        scale = max(1.0, float(np.max(np.abs(jac))))
        err = float(np.max(np.abs(jac - fd)))
        if err > 1e-6 * scale:
            issues.append(f"jacobian at {theta.tolist()} differs from finite differences by {err:.3g}")
    return issues


def sample_parameters(p: Plot, rng: np.random.Generator, count: int,
                      max_tries: int = 10000) -> np.ndarray:
    """Draw ``count`` uniform parameters from ``sample_bounds`` inside the domain."""
    lo, hi = p.sample_bounds
    out = []
    tries = 0
    while len(out) < count:
        tries += 1
        if tries > max_tries:
            raise DomainError(f"could not sample parameters inside plot {p.name!r}")
        theta = rng.uniform(lo, hi) if p.domain_dim else np.zeros(0)
        if p.in_domain(theta):
            out.append(theta)
    return np.array(out).reshape(count, p.domain_dim)


def check_plot(p: Plot, thetas=None, rng=None, count: int = 8) -> list[str]:
    """Check the plot invariants at sampled parameters; returns the issues found.

    Output must be a probability measure, analytic Jacobian columns must sum
    to zero and agree with central finite differences.
    """
    if thetas is None:
        rng = np.random.default_rng(0) if rng is None else rng
        thetas = sample_parameters(p, rng, count)
    issues = []
    for theta in np.asarray(thetas, dtype=float).reshape(-1, p.domain_dim):
        issues.extend(_check_plot_point(p, theta))
    return issues


def invert_plot(p: Plot, weights, tol: float = 1e-9, closed: bool = False) -> Optional[np.ndarray]:
    """Find ``theta`` with ``p(theta) == weights`` or return None.

    With ``closed=True`` the closed box is accepted (estimator images often
    sit on the boundary of the model).
    """
    w = np.asarray(weights, dtype=float).reshape(-1)
    if p.domain_dim == 0:
        theta = np.zeros(0)
    elif p.inverse is not None:
        theta = np.asarray(p.inverse(w), dtype=float).reshape(-1)
    else:
        lo, hi = p.sample_bounds
        x0 = 0.5 * (lo + hi)
        jac = (lambda t: p.jacobian(t)) if p.jacobian is not None else "2-point"
        res = optimize.least_squares(lambda t: p.weights(t) - w, x0, jac=jac,
                                     bounds=(p.lower, p.upper), xtol=1e-15, ftol=1e-15, gtol=1e-15)
        theta = res.x
    if closed:
        inside = bool(np.all(theta >= p.lower - tol) and np.all(theta <= p.upper + tol))
    else:
        inside = p.in_domain(theta)
    if not inside:
        return None
    try:
        resid = np.max(np.abs(p.weights(theta) - w))
    except (ValueError, ArithmeticError):
        return None
    return theta if resid <= tol else None


@dataclass(frozen=True, eq=False)
class DiffeologicalModel:
    """A statistical model presented by a finite family of plots.

    ``membership`` optionally decides whether a probability measure lies in
    the model (needed when the model is not the union of the plot images,
    e.g. a closed parameter region).  Without it, membership is decided by
    inverting the plots.
    """

    space: FiniteSampleSpace
    plots: tuple
    order: float = math.inf
    membership: Optional[Callable[[ProbabilityMeasure], bool]] = None

    def __post_init__(self):
        plots = tuple(self.plots)
        if not plots:
            raise ValidationError("a model needs at least one plot")
        for p in plots:
            if p.space != self.space:
                raise ValidationError(f"plot {p.name!r} maps into a different space")
            if p.smoothness < self.order:
                raise ValidationError(
                    f"plot {p.name!r} is only C^{p.smoothness}, model order is {self.order}")
        object.__setattr__(self, "plots", plots)

    def plot(self, name: str) -> Plot:
        for p in self.plots:
            if p.name == name:
                return p
        raise KeyError(f"no plot named {name!r}")

    def contains(self, mu: ProbabilityMeasure, tol: float = 1e-9) -> bool:
        if mu.space != self.space:
            return False
        if self.membership is not None:
            return bool(self.membership(mu))
        return any(invert_plot(p, mu.weights, tol=tol) is not None for p in self.plots)

    def admits(self, curve: Plot, samples: int = 4) -> bool:
        """Whether sampled points of ``curve`` stay in the model.

        Constant curves at model points are always admitted.
        """
        lo, hi = _finite_box(curve.lower, curve.upper)
        fractions = np.linspace(0.0, 1.0, samples + 2)[1:-1]
        for frac in itertools.product(fractions, repeat=curve.domain_dim):
            theta = lo + np.asarray(frac) * (hi - lo)
            if not curve.in_domain(theta):
                continue
            if not self.contains(plot_point(curve, theta)):
                return False
        return True


def constant_plot(xi: ProbabilityMeasure, dim: int = 0, name: str = "constant") -> Plot:
    w = xi.weights.copy()
    return Plot(xi.space, np.full(dim, -np.inf), np.full(dim, np.inf),
                lambda theta: w, jacobian=lambda theta: np.zeros((w.size, dim)), name=name)


# ---------------------------------------------------------------- integrability

@dataclass(frozen=True)
class GridSpec:
    """Lattice over each plot's ``sample_bounds``.

    Level ``L`` has ``(base_points - 1) * 2**L + 1`` points per axis.
    ``bounds`` overrides the compact box per plot name.
    """

    base_points: int = 3
    levels: int = 3
    bounds: Mapping[str, tuple] = field(default_factory=dict)

    def __post_init__(self):
        if self.levels < 2:
            raise ValidationError("integrability checks need at least 2 refinement levels")
        if self.base_points < 2:
            raise ValidationError("grids need at least 2 points per axis")

    def axes(self, p: Plot, level: int) -> list[np.ndarray]:
        lo, hi = self.bounds.get(p.name, p.sample_bounds)
        lo = np.asarray(lo, dtype=float).reshape(-1)
        hi = np.asarray(hi, dtype=float).reshape(-1)
        n = (self.base_points - 1) * 2 ** level + 1
        return [np.linspace(a, b, n) for a, b in zip(lo, hi)]


@dataclass
class GridPointStatus:
    theta: tuple
    level: int
    almost2: bool
    detail: str = ""


@dataclass
class PlotIntegrability:
    plot: str
    points: list
    scores: list
    ratios: list
    almost2: bool
    stable: bool

    @property
    def verdict(self) -> str:
        if not self.almost2:
            return "not almost 2-integrable"
        return "2-integrable (numerically)" if self.stable else "almost 2-integrable"


@dataclass
class IntegrabilityReport:
    plots: list

    @property
    def almost2(self) -> bool:
        return all(p.almost2 for p in self.plots)

    @property
    def verdict(self) -> str:
        verdicts = {p.verdict for p in self.plots}
        for v in ("not almost 2-integrable", "almost 2-integrable"):
            if v in verdicts:
                return v
        return "2-integrable (numerically)"


SCORE_FLOOR = 1e-8
RATIO_BAND = (0.5, 2.0)


def _norm_directions(m: int) -> list[np.ndarray]:
    dirs = [np.eye(m)[a] for a in range(m)]
    for a, b in itertools.combinations(range(m), 2):
        dirs.append((np.eye(m)[a] + np.eye(m)[b]) / math.sqrt(2.0))
    return dirs


def _level_scan(p: Plot, spec: GridSpec, level: int):
    axes = spec.axes(p, level)
    shape = tuple(len(a) for a in axes)
    m = p.domain_dim
    dirs = _norm_directions(m)
    norms = np.full(shape + (len(dirs),), np.nan)
    statuses = []
    for idx in itertools.product(*(range(s) for s in shape)):
        theta = np.array([axes[a][i] for a, i in enumerate(idx)])
        if not p.in_domain(theta):
            continue
        try:
            G = fisher_gram(p, theta)
        except DominationError as exc:
            statuses.append(GridPointStatus(tuple(theta.tolist()), level, False, str(exc)))
            continue
        except DomainError as exc:
            statuses.append(GridPointStatus(tuple(theta.tolist()), level, True, f"skipped: {exc}"))
            continue
        if not np.all(np.isfinite(G)):
            statuses.append(GridPointStatus(tuple(theta.tolist()), level, False, "non-finite metric"))
            continue
        statuses.append(GridPointStatus(tuple(theta.tolist()), level, True))
        for k, v in enumerate(dirs):
            norms[idx + (k,)] = math.sqrt(max(float(v @ G @ v), 0.0))
    score = 0.0
    for a in range(m):
        step = axes[a][1] - axes[a][0]
        diff = np.abs(np.diff(norms, axis=a)) / step
        if np.any(np.isfinite(diff)):
            score = max(score, float(np.nanmax(diff)))
    return statuses, score


def plot_integrability(p: Plot, spec: GridSpec) -> PlotIntegrability:
    if p.domain_dim == 0:
        ok = True
        try:
            plot_point(p, np.zeros(0))
        except (ModelError, DomainError):
            ok = False
        pts = [GridPointStatus((), 0, ok)]
        return PlotIntegrability(p.name, pts, [0.0] * spec.levels, [1.0] * (spec.levels - 1), ok, True)
    points, scores = [], []
    for level in range(spec.levels):
        statuses, score = _level_scan(p, spec, level)
        points.extend(statuses)
        scores.append(score)
    ratios = []
    for prev, cur in zip(scores, scores[1:]):
        if prev <= SCORE_FLOOR and cur <= SCORE_FLOOR:
            ratios.append(1.0)
        elif prev <= SCORE_FLOOR:
            ratios.append(math.inf)
        else:
            ratios.append(cur / prev)
    almost2 = all(s.almost2 for s in points)
    stable = all(RATIO_BAND[0] <= r <= RATIO_BAND[1] for r in ratios)
    return PlotIntegrability(p.name, points, scores, ratios, almost2, stable)


def integrability_report(model: DiffeologicalModel, grid_spec: GridSpec | None = None) -> IntegrabilityReport:
    """Probe almost 2-integrability and continuity of the metric norm.

    At each grid point every coordinate velocity must be dominated by the base
    point with a finite density.  Continuity of ``v -> |dp(v)|_g`` is scored
    per level as the largest difference quotient of the norm between adjacent
    grid points; a score that stays within a factor of two under refinement is
    read as continuous.
    """
    spec = grid_spec or GridSpec()
    return IntegrabilityReport([plot_integrability(p, spec) for p in model.plots])


# ---------------------------------------------------------------- tangent cone

@dataclass
class ConeProbeReport:
    base: ProbabilityMeasure
    directions: list
    span_dim: int
    is_linear: bool
    rejected: list = field(default_factory=list)


COSINE_TOL = 1e-6


def _parallel(u: np.ndarray, w: np.ndarray) -> bool:
    return abs(float(u @ w)) > 1.0 - COSINE_TOL


def _ray_in_model(model: DiffeologicalModel, xi: ProbabilityMeasure, u: np.ndarray,
                  step: float) -> bool:
    for t in (step, 0.5 * step, -0.5 * step, -step):
        w = xi.weights + t * u
        if np.any(w < -BASE_TOL):
            return False
        try:
            mu = ProbabilityMeasure.from_weights(xi.space, w, tol=1e-9)
        except ValidationError:
            return False
        if not model.contains(mu):
            return False
    return True


def tangent_cone_probe(model: DiffeologicalModel, xi: ProbabilityMeasure,
                       curves: Sequence[Plot], ray_step: float = 1e-3) -> ConeProbeReport:
    """Collect the velocities at ``t = 0`` of curves through ``xi``.

    Curves that leave the model are listed in ``rejected``.  Velocities are
    deduplicated up to sign and scale.  The cone is declared linear when, for
    every pair of found directions, their normalized sum and difference are
    also velocities of curves in the model (tested with short straight rays).
    """
    check_same_space(model, xi)
    found: list[np.ndarray] = []
    rejected = []
    for c in curves:
        if c.domain_dim != 1:
            raise ValidationError(f"probe curve {c.name!r} must be one-dimensional")
        if not c.in_domain(np.zeros(1)):
            raise CurveBaseError(f"curve {c.name!r} is not defined at t = 0")
        at0 = plot_point(c, np.zeros(1))
        if np.max(np.abs(at0.weights - xi.weights)) > PLOT_TOL or at0.space != xi.space:
            raise CurveBaseError(f"curve {c.name!r} misses the base point at t = 0")
        if not model.admits(c):
            rejected.append(c.name)
            continue
        vel = plot_velocity(c, np.zeros(1), np.ones(1)).direction.weights
        norm = float(np.linalg.norm(vel))
        if norm <= BASE_TOL:
            continue
        u = vel / norm
        if not any(_parallel(u, w) for w in found):
            found.append(u)
    if found:
        sv = np.linalg.svd(np.array(found), compute_uv=False)
        span_dim = int(np.sum(sv > RANK_TOL))
    else:
        span_dim = 0
    is_linear = True
    if span_dim >= 2:
        for u, w in itertools.combinations(found, 2):
            if _parallel(u, w):
                continue
            for cand in (u + w, u - w):
                cand = cand / np.linalg.norm(cand)
                if any(_parallel(cand, f) for f in found):
                    continue
                if not _ray_in_model(model, xi, cand, ray_step):
                    is_linear = False
                    break
            if not is_linear:
                break
    directions = [SignedMeasure(xi.space, u) for u in found]
    return ConeProbeReport(xi, directions, span_dim, is_linear, rejected)
