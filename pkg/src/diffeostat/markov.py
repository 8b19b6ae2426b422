"""Probabilistic mappings between finite spaces as row-stochastic matrices.

Row ``i`` of a kernel is the probability measure the kernel assigns to atom
``x_i``.  A kernel acts on measures by ``mu -> mu @ rows`` (the Markov
morphism) and on functions by ``f -> rows @ f`` (the pullback).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import (ConsistencyError, DominationError, EmptySampleError,
                     SpaceMismatchError, ValidationError)
from .measure import (SUPPORT_TOL, FiniteSampleSpace, PointFunction,
                      ProbabilityMeasure, SignedMeasure)
from .model import (DiffeologicalModel, Plot, TangentVector, fisher_metric)

ROW_TOL = 1e-12
MONOTONICITY_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class MarkovKernel:
    source: FiniteSampleSpace
    target: FiniteSampleSpace
    rows: np.ndarray
    name: str = ""

    def __post_init__(self):
        rows = np.array(self.rows, dtype=float)
        shape = (len(self.source), len(self.target))
        if rows.shape != shape:
            raise ValidationError(f"kernel {self.name!r}: expected shape {shape}, got {rows.shape}")
        if not np.all(np.isfinite(rows)):
            raise ValidationError(f"kernel {self.name!r}: entries must be finite")
        if np.any(rows < 0):
            i, j = np.argwhere(rows < 0)[0]
            raise ValidationError(f"kernel {self.name!r}: negative entry in row {i}, column {j}")
        sums = rows.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_TOL)
        if bad.size:
            raise ValidationError(
                f"kernel {self.name!r}: row {int(bad[0])} sums to {sums[bad[0]]!r}, not 1")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    def is_deterministic(self) -> bool:
        return bool(np.all((self.rows == 0.0) | (self.rows == 1.0)))

    @classmethod
    def identity(cls, space: FiniteSampleSpace) -> "MarkovKernel":
        return cls(space, space, np.eye(len(space)), name="identity")

    @classmethod
    def random(cls, source: FiniteSampleSpace, target: FiniteSampleSpace,
               rng: np.random.Generator, alpha: float = 1.0, sparsity: float = 0.0) -> "MarkovKernel":
        """Rows drawn from a symmetric Dirichlet; ``sparsity`` zeroes entries at random."""
        rows = rng.dirichlet(np.full(len(target), alpha), size=len(source))
        if sparsity > 0:
            mask = rng.random(rows.shape) < sparsity
            keep = rng.integers(len(target), size=len(source))
            mask[np.arange(len(source)), keep] = False
            rows = np.where(mask, 0.0, rows)
        rows = rows / rows.sum(axis=1, keepdims=True)
        return cls(source, target, rows, name="random")


def deterministic_kernel(kappa: Mapping[str, str] | Sequence[int], source: FiniteSampleSpace,
                         target: FiniteSampleSpace, name: str = "") -> MarkovKernel:
    """The kernel ``x -> Dirac(kappa(x))`` of an atom map.

    ``kappa`` is either a label mapping or a sequence of target indices.
    """
    if isinstance(kappa, Mapping):
        missing = [a for a in source.atoms if a not in kappa]
        if missing:
            raise ValidationError(f"atom map {name!r} is not defined on {missing}")
        idx = [target.index(kappa[a]) for a in source.atoms]
    else:
        idx = [int(j) for j in kappa]
        if len(idx) != len(source) or any(not 0 <= j < len(target) for j in idx):
            raise ValidationError(f"atom map {name!r} must send each source atom into the target")
    rows = np.zeros((len(source), len(target)))
    rows[np.arange(len(source)), idx] = 1.0
    return MarkovKernel(source, target, rows, name=name)


def permutation_kernel(space: FiniteSampleSpace, perm: Sequence[int], name: str = "") -> MarkovKernel:
    if sorted(perm) != list(range(len(space))):
        raise ValidationError(f"{list(perm)} is not a permutation of {len(space)} atoms")
    return deterministic_kernel(perm, space, space, name=name or "permutation")


def _check_source(T: MarkovKernel, space: FiniteSampleSpace):
    if space != T.source:
        raise SpaceMismatchError(f"kernel {T.name!r} acts on {T.source.atoms}, got {space.atoms}")


def pushforward_measure(T: MarkovKernel, mu: SignedMeasure) -> SignedMeasure:
    """Markov morphism: ``(T_* mu)_j = sum_i mu_i T_ij``.

    Probability measures map to probability measures.
    """
    _check_source(T, mu.space)
    w = mu.weights @ T.rows
    if isinstance(mu, ProbabilityMeasure):
        w = np.clip(w, 0.0, None)
        return ProbabilityMeasure(T.target, w / w.sum())
    return SignedMeasure(T.target, w)


def compose_kernels(T2: MarkovKernel, T1: MarkovKernel) -> MarkovKernel:
    """``T2 o T1``: first apply ``T1``, then ``T2``."""
    if T1.target != T2.source:
        raise SpaceMismatchError(f"cannot compose {T2.name!r} after {T1.name!r}: spaces differ")
    return MarkovKernel(T1.source, T2.target, T1.rows @ T2.rows, name=f"{T2.name}.{T1.name}")


def pullback_function(T: MarkovKernel, f: PointFunction) -> PointFunction:
    """``(T^* f)(x) = integral of f against T(x)``."""
    if f.space != T.target:
        raise SpaceMismatchError(f"kernel {T.name!r} pulls back functions on {T.target.atoms}")
    return PointFunction(T.source, T.rows @ f.values)


def pushforward_tangent(T: MarkovKernel, a: TangentVector) -> TangentVector:
    _check_source(T, a.base.space)
    base = pushforward_measure(T, a.base)
    direction = pushforward_measure(T, a.direction)
    try:
        return TangentVector.at(base, direction)
    except DominationError as exc:
        # pushforward preserves absolute continuity, so this is a bug upstream
        raise DominationError(f"pushed tangent is not dominated by the pushed base: {exc}") from None


def pushforward_plot(T: MarkovKernel, p: Plot) -> Plot:
    _check_source(T, p.space)
    rows = np.array(T.rows)

    def weights(theta):
        return p.weights(theta) @ rows

    jacobian = None
    if p.jacobian is not None:
        def jacobian(theta):
            return rows.T @ np.asarray(p.jacobian(theta))

    return Plot(T.target, p.lower, p.upper, weights, jacobian=jacobian,
                smoothness=p.smoothness, region=p.region, sample_bounds=p.sample_bounds,
                name=f"{T.name}*{p.name}" if T.name else p.name)


def pushforward_model(T: MarkovKernel, model: DiffeologicalModel) -> DiffeologicalModel:
    """Image of a model: every plot ``p`` becomes ``T_* o p``."""
    _check_source(T, model.space)
    return DiffeologicalModel(T.target, tuple(pushforward_plot(T, p) for p in model.plots),
                              order=model.order)


def bayes_inverse(T: MarkovKernel, mu: ProbabilityMeasure,
                  tol: float = SUPPORT_TOL) -> dict[str, ProbabilityMeasure]:
    """Conditional measures ``p_y(x_i) = mu_i T_iy / (T_* mu)_y``.

    Target atoms with pushed mass ``<= tol`` are omitted.
    """
    _check_source(T, mu.space)
    joint = mu.weights[:, None] * T.rows
    marg = joint.sum(axis=0)
    out = {}
    for j, y in enumerate(T.target.atoms):
        if marg[j] > tol:
            w = joint[:, j] / marg[j]
            out[y] = ProbabilityMeasure(T.source, w / w.sum())
    return out


def conditional_for_statistic(kappa, mu: ProbabilityMeasure, target: FiniteSampleSpace | None = None,
                              tol: float = SUPPORT_TOL) -> dict[str, ProbabilityMeasure]:
    """Conditional of ``mu`` given a statistic: ``mu`` restricted to each fiber,
    renormalized.  ``kappa`` is a deterministic kernel or a label mapping."""
    if not isinstance(kappa, MarkovKernel):
        if target is None:
            target = FiniteSampleSpace(tuple(dict.fromkeys(kappa[a] for a in mu.space.atoms)))
        kappa = deterministic_kernel(kappa, mu.space, target)
    return bayes_inverse(kappa, mu, tol)


@dataclass
class SufficiencyReport:
    is_sufficient: bool
    conditional: dict
    max_discrepancy: float
    tol: float
    factorization_residual: float = 0.0
    fibers: list = field(default_factory=list)


def check_sufficiency(T: MarkovKernel, sample: Sequence[ProbabilityMeasure],
                      tol: float = 1e-10) -> SufficiencyReport:
    """Test whether one conditional mapping serves every measure in ``sample``.

    For each measure the candidate conditional is the Bayes inverse of the
    joint ``mu_i T_ij`` (for a statistic: the fiber-wise renormalization).
    Only target atoms charged by every sample measure are compared;
    ``max_discrepancy`` is the largest spread of a conditional probability
    across the sample.  ``factorization_residual`` measures how far
    ``T_*(h mu) = p^*(h) T_*(mu)`` fails for indicator ``h`` when ``p`` is the
    first measure's conditional.
    """
    sample = list(sample)
    if not sample:
        raise EmptySampleError("sufficiency needs at least one sample measure")
    conds = [bayes_inverse(T, mu) for mu in sample]
    fibers = [y for y in T.target.atoms if all(y in c for c in conds)]
    disc = 0.0
    for y in fibers:
        stack = np.array([c[y].weights for c in conds])
        disc = max(disc, float(np.max(stack.max(axis=0) - stack.min(axis=0))))
    ref = conds[0]
    resid = 0.0
    cond_rows = np.zeros((len(T.target), len(T.source)))
    for j, y in enumerate(T.target.atoms):
        if y in ref:
            cond_rows[j] = ref[y].weights
    for mu in sample:
        marg = mu.weights @ T.rows
        # T_*(1_{x_i} mu)_j = mu_i T_ij  against  p_y(x_i) (T_* mu)_j, on the common fibers
        lhs = mu.weights[:, None] * T.rows
        rhs = cond_rows.T * marg[None, :]
        cols = [T.target.index(y) for y in fibers]
        if cols:
            resid = max(resid, float(np.max(np.abs(lhs[:, cols] - rhs[:, cols]))))
    conditional = {y: ref[y] for y in fibers}
    return SufficiencyReport(disc <= tol, conditional, disc, tol, resid, fibers)


def monotonicity_gap(T: MarkovKernel, a: TangentVector, check: bool = True) -> float:
    """``g(a, a) - g(T_* a, T_* a)``; never negative up to round-off.

    With ``check`` a gap below ``-1e-9`` raises :class:`ConsistencyError`.
    """
    pushed = pushforward_tangent(T, a)
    gap = fisher_metric(a, a) - fisher_metric(pushed, pushed)
    if check and gap < -MONOTONICITY_TOL:
        raise ConsistencyError(f"Fisher metric increased under kernel {T.name!r}: gap {gap!r}")
    return gap
