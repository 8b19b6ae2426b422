"""Finite sample spaces, signed and probability measures, densities.

Everything here is a finite sum: a measure is a weight vector indexed by the
atoms of a :class:`FiniteSampleSpace`, an integral is a dot product.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DominationError, SpaceMismatchError, ValidationError

#: absolute weight below which an atom is treated as outside the support
SUPPORT_TOL = 1e-12
#: tolerance on the total mass of a probability measure
MASS_TOL = 1e-12


def _frozen_array(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} must be finite, got {arr!r}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FiniteSampleSpace:
    """An ordered set of distinct atom labels."""

    atoms: tuple[str, ...]

    def __post_init__(self):
        atoms = tuple(str(a) for a in self.atoms)
        if not atoms:
            raise ValidationError("a sample space needs at least one atom")
        if len(set(atoms)) != len(atoms):
            raise ValidationError(f"atom labels must be unique: {atoms}")
        object.__setattr__(self, "atoms", atoms)

    @classmethod
    def of_size(cls, n: int, prefix: str = "x") -> "FiniteSampleSpace":
        return cls(tuple(f"{prefix}{i}" for i in range(n)))

    def __len__(self) -> int:
        return len(self.atoms)

    def index(self, atom: str) -> int:
        try:
            return self.atoms.index(atom)
        except ValueError:
            raise KeyError(f"unknown atom {atom!r}") from None


def check_same_space(*objs) -> FiniteSampleSpace:
    """Return the common space of ``objs`` or raise :class:`SpaceMismatchError`."""
    spaces = [o.space for o in objs]
    first = spaces[0]
    for s in spaces[1:]:
        if s != first:
            raise SpaceMismatchError(f"space mismatch: {first.atoms} vs {s.atoms}")
    return first


@dataclass(frozen=True, eq=False)
class SignedMeasure:
    """A finite signed measure, one real weight per atom."""

    space: FiniteSampleSpace
    weights: np.ndarray

    def __post_init__(self):
        w = _frozen_array(self.weights, "weights")
        if w.shape != (len(self.space),):
            raise ValidationError(
                f"expected {len(self.space)} weights, got shape {w.shape}")
        object.__setattr__(self, "weights", w)

    def total_mass(self) -> float:
        return float(self.weights.sum())

    def support(self, tol: float = SUPPORT_TOL) -> np.ndarray:
        return np.abs(self.weights) > tol

    def __add__(self, other: "SignedMeasure") -> "SignedMeasure":
        check_same_space(self, other)
        return SignedMeasure(self.space, self.weights + other.weights)

    def __sub__(self, other: "SignedMeasure") -> "SignedMeasure":
        check_same_space(self, other)
        return SignedMeasure(self.space, self.weights - other.weights)

    def __mul__(self, scalar: float) -> "SignedMeasure":
        return SignedMeasure(self.space, float(scalar) * self.weights)

    __rmul__ = __mul__

    def __neg__(self) -> "SignedMeasure":
        return SignedMeasure(self.space, -self.weights)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({dict(zip(self.space.atoms, self.weights.tolist()))})"


class ProbabilityMeasure(SignedMeasure):
    """A nonnegative measure of total mass one."""

    def __post_init__(self):
        super().__post_init__()
        w = self.weights
        if np.any(w < 0):
            raise ValidationError(f"probability weights must be >= 0, got {w.tolist()}")
        if abs(w.sum() - 1.0) > MASS_TOL:
            raise ValidationError(f"probability weights must sum to 1, got {w.sum()!r}")

    @classmethod
    def from_weights(cls, space: FiniteSampleSpace, weights, tol: float = 1e-9):
        """Build a probability measure, repairing round-off up to ``tol``.

        Negative weights no smaller than ``-tol`` are clipped to zero and the
        vector is renormalized when its mass is within ``tol`` of one.
        """
        w = np.array(weights, dtype=float).reshape(-1)
        if not np.all(np.isfinite(w)):
            raise ValidationError(f"weights must be finite, got {w.tolist()}")
        if np.any(w < -tol) or abs(w.sum() - 1.0) > tol:
            raise ValidationError(
                f"not a probability vector within {tol:g}: {w.tolist()}")
        w = np.clip(w, 0.0, None)
        return cls(space, w / w.sum())

    @classmethod
    def uniform(cls, space: FiniteSampleSpace) -> "ProbabilityMeasure":
        n = len(space)
        return cls(space, np.full(n, 1.0 / n))

    @classmethod
    def dirac(cls, space: FiniteSampleSpace, atom: int | str) -> "ProbabilityMeasure":
        i = space.index(atom) if isinstance(atom, str) else int(atom)
        w = np.zeros(len(space))
        w[i] = 1.0
        return cls(space, w)


@dataclass(frozen=True, eq=False)
class PointFunction:
    """A real function on the atoms (an element of L(X) or L^p(X, xi))."""

    space: FiniteSampleSpace
    values: np.ndarray

    def __post_init__(self):
        v = _frozen_array(self.values, "values")
        if v.shape != (len(self.space),):
            raise ValidationError(
                f"expected {len(self.space)} values, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, space: FiniteSampleSpace, c: float) -> "PointFunction":
        return cls(space, np.full(len(space), float(c)))

    @classmethod
    def indicator(cls, space: FiniteSampleSpace, atoms: Iterable[int | str]) -> "PointFunction":
        v = np.zeros(len(space))
        for a in atoms:
            v[space.index(a) if isinstance(a, str) else int(a)] = 1.0
        return cls(space, v)

    def __add__(self, other: "PointFunction") -> "PointFunction":
        check_same_space(self, other)
        return PointFunction(self.space, self.values + other.values)

    def __mul__(self, scalar: float) -> "PointFunction":
        return PointFunction(self.space, float(scalar) * self.values)

    __rmul__ = __mul__

    def times(self, m: SignedMeasure) -> SignedMeasure:
        """The measure ``f * m`` with density ``f`` against ``m``."""
        check_same_space(self, m)
        return SignedMeasure(self.space, self.values * m.weights)


def signed_measure(space: FiniteSampleSpace, weights: Sequence[float]) -> SignedMeasure:
    return SignedMeasure(space, np.asarray(weights, dtype=float))


def tv_norm(m: SignedMeasure) -> float:
    """Total variation norm: the sum of absolute atom weights."""
    return float(np.abs(m.weights).sum())


def radon_nikodym(v: SignedMeasure, xi: SignedMeasure, tol: float = SUPPORT_TOL) -> PointFunction:
    """Density ``dv/dxi``, zero off the support of ``xi``.

    Raises :class:`DominationError` when ``v`` charges an atom that ``xi``
    does not.
    """
    check_same_space(v, xi)
    off = np.abs(xi.weights) <= tol
    bad = off & (np.abs(v.weights) > tol)
    if np.any(bad):
        atoms = [a for a, b in zip(v.space.atoms, bad) if b]
        raise DominationError(f"measure charges atoms outside the base support: {atoms}")
    dens = np.zeros(len(v.space))
    dens[~off] = v.weights[~off] / xi.weights[~off]
    return PointFunction(v.space, dens)


def l2_inner(f: PointFunction, g: PointFunction, xi: SignedMeasure) -> float:
    """The L2(xi) pairing ``sum_i f_i g_i xi_i``."""
    check_same_space(f, g, xi)
    return float(np.sum(f.values * g.values * xi.weights))


def expectation(f: PointFunction, xi: SignedMeasure) -> float:
    check_same_space(f, xi)
    return float(np.dot(f.values, xi.weights))
