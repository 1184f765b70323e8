"""Problem instances, utility families, and the marginal-spend change of variables.

Everything downstream consumes the same primitives: a voter/item matrix wrapped
in :class:`Instance`, a utility family layered on top of it, and (for the
convex-program solver) the per-item change of variables from money ``x`` to
marginal spend ``z_j = x_j * f_j'(x_j)``, packaged as :class:`ZTransform`.

Utilities are additive across items, ``U_i(x) = sum_j u_ij * f_j(x_j)``, except
for the Cobb-Douglas family which is the product form ``prod_j x_j^{a_ij}``
(degree-1 homogeneous, handled by the proportional-fairness fast path).
"""

from __future__ import annotations

import abc
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Union

import numpy as np

__all__ = [
    "ModelError",
    "AllocationKind",
    "Allocation",
    "Instance",
    "ZTransform",
    "UtilityModel",
    "Linear",
    "PowerSum",
    "CobbDouglas",
    "Saturating",
    "SmoothedSaturating",
    "make_model",
    "evaluate_utility",
    "utility_gradient",
    "z_transform",
    "allocation_vector",
]

# Relative half-width of the band around x_j = s_j treated as the kink of the
# saturating family (exact float equality is too brittle for callers that
# compute x_j = s_j arithmetically).
_KINK_RTOL = 1e-9

# Stand-in for log(0) that still vanishes under an exactly-zero exponent.
# exp(a * _LOG_ZERO) underflows to 0 for any a >= 1e-6, and 0 * _LOG_ZERO == 0.
_LOG_ZERO = -1e9


class ModelError(ValueError):
    """A utility family was used outside its domain (missing sizes, bad params...)."""


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


class AllocationKind(str, Enum):
    FRACTIONAL = "fractional"
    INTEGRAL = "integral"


@dataclass(frozen=True)
class Allocation:
    """A nonnegative spend vector, tagged fractional or integral (all-or-nothing)."""

    x: np.ndarray
    kind: AllocationKind = AllocationKind.FRACTIONAL

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float).reshape(-1)
        if x.size == 0:
            raise ValueError("allocation must have at least one item")
        if not np.all(np.isfinite(x)):
            raise ValueError("allocation entries must be finite")
        if np.any(x < 0):
            raise ValueError("allocation entries must be nonnegative")
        object.__setattr__(self, "x", _readonly(x))
        object.__setattr__(self, "kind", AllocationKind(self.kind))

    @property
    def k(self) -> int:
        return self.x.size

    def total(self) -> float:
        return float(self.x.sum())

    def funded(self, tol: float = 0.0) -> np.ndarray:
        """Indices of items with positive spend (strictly above ``tol``)."""
        return np.flatnonzero(self.x > tol)

    def funded_set(self, tol: float = 0.0) -> frozenset:
        return frozenset(int(j) for j in self.funded(tol))

    def validate_budget(self, budget: float, tol: float = 1e-9) -> None:
        if self.total() > budget * (1.0 + tol):
            raise ValueError(
                f"allocation spends {self.total():.12g} > budget {budget:.12g} "
                f"(tolerance {tol:g})"
            )

    def validate_integral(self, sizes: np.ndarray, tol: float = 1e-9) -> None:
        s = np.asarray(sizes, dtype=float)
        near_zero = self.x <= tol * np.maximum(s, 1.0)
        near_full = np.abs(self.x - s) <= tol * np.maximum(s, 1.0)
        bad = ~(near_zero | near_full)
        if np.any(bad):
            j = int(np.flatnonzero(bad)[0])
            raise ValueError(
                f"integral allocation must fund items fully or not at all; "
                f"item {j} spends {self.x[j]:.12g} of size {s[j]:.12g}"
            )


def allocation_vector(x: Union[Allocation, np.ndarray, list]) -> np.ndarray:
    """Accept an :class:`Allocation` or a raw vector; return a float array."""
    if isinstance(x, Allocation):
        return x.x
    return np.asarray(x, dtype=float).reshape(-1)


@dataclass(frozen=True)
class Instance:
    """n voters, k items, a budget, and (optionally) item sizes.

    Invariants enforced here: utilities nonnegative and finite with at least one
    positive entry per voter, budget positive, sizes (when present) positive and
    of length k, item names unique.
    """

    utilities: np.ndarray
    budget: float
    sizes: Optional[np.ndarray] = None
    item_names: tuple = ()

    def __post_init__(self) -> None:
        u = np.atleast_2d(np.asarray(self.utilities, dtype=float))
        if u.ndim != 2 or u.size == 0:
            raise ValueError("utilities must be a nonempty (n, k) matrix")
        if not np.all(np.isfinite(u)):
            raise ValueError("utilities must be finite")
        if np.any(u < 0):
            raise ValueError("utilities must be nonnegative")
        row_max = u.max(axis=1)
        if np.any(row_max <= 0):
            i = int(np.flatnonzero(row_max <= 0)[0])
            raise ValueError(f"voter {i} has no positive utility entry")
        if not (np.isfinite(self.budget) and self.budget > 0):
            raise ValueError("budget must be a positive real")
        object.__setattr__(self, "utilities", _readonly(u))
        object.__setattr__(self, "budget", float(self.budget))

        if self.sizes is not None:
            s = np.asarray(self.sizes, dtype=float).reshape(-1)
            if s.size != u.shape[1]:
                raise ValueError(f"sizes has length {s.size}, expected {u.shape[1]}")
            if not np.all(np.isfinite(s)) or np.any(s <= 0):
                raise ValueError("sizes must be positive and finite")
            object.__setattr__(self, "sizes", _readonly(s))

        names = tuple(self.item_names) or tuple(f"item_{j}" for j in range(u.shape[1]))
        if len(names) != u.shape[1]:
            raise ValueError(f"{len(names)} item names for {u.shape[1]} items")
        if len(set(names)) != len(names):
            raise ValueError("item names must be unique")
        object.__setattr__(self, "item_names", names)

    @property
    def n(self) -> int:
        return self.utilities.shape[0]

    @property
    def k(self) -> int:
        return self.utilities.shape[1]

    def require_sizes(self) -> np.ndarray:
        if self.sizes is None:
            raise ModelError("this model requires item sizes, but the instance has none")
        return self.sizes


@dataclass(frozen=True)
class ZTransform:
    """Per-item change of variables z = x f'(x) and its companions.

    ``z_of_x``/``x_of_z`` are inverses; ``ratio(z) = x_of_z(z)/z = 1/f'(x)`` is
    nondecreasing (this is exactly non-satiation), and ``integral`` is its
    antiderivative R with R(0) = 0, which makes the solver's potential concave.
    ``ratio_prime`` is the derivative of ``ratio`` (the potential's per-item
    curvature), used by the solver's second-order polish.  All are vectorized
    over item vectors.
    """

    z_of_x: Callable[[np.ndarray], np.ndarray]
    x_of_z: Callable[[np.ndarray], np.ndarray]
    ratio: Callable[[np.ndarray], np.ndarray]
    integral: Callable[[np.ndarray], np.ndarray]
    ratio_prime: Callable[[np.ndarray], np.ndarray]


class UtilityModel(abc.ABC):
    """Base for utility families; concrete families fill in the array kernels."""

    def __init__(self, utilities: np.ndarray):
        u = np.atleast_2d(np.asarray(utilities, dtype=float))
        if np.any(u < 0) or not np.all(np.isfinite(u)):
            raise ModelError("utility matrix must be nonnegative and finite")
        self.u = _readonly(u)
        #: True when U_i is homogeneous of degree one, enabling the
        #: proportional-fairness fast path.
        self.homogeneous = False

    @property
    def n(self) -> int:
        return self.u.shape[0]

    @property
    def k(self) -> int:
        return self.u.shape[1]

    @abc.abstractmethod
    def utilities_all(self, x: np.ndarray) -> np.ndarray:
        """U_i(x) for every voter, shape (n,)."""

    @abc.abstractmethod
    def gradients_all(self, x: np.ndarray) -> np.ndarray:
        """dU_i/dx_j for every voter, shape (n, k)."""

    @abc.abstractmethod
    def utilities_batch(self, X: np.ndarray) -> np.ndarray:
        """U_i(row) for a batch of allocations, shape (m, k) -> (m, n)."""

    def utility(self, agent: int, x: np.ndarray) -> float:
        self._check(agent, x)
        return float(self.utilities_all(allocation_vector(x))[agent])

    def gradient(self, agent: int, x: np.ndarray) -> np.ndarray:
        self._check(agent, x)
        return self.gradients_all(allocation_vector(x))[agent].copy()

    def marginal_spend_all(self, x: np.ndarray) -> np.ndarray:
        """sum_j x_j dU_i/dx_j per voter; overridden where a stabler form exists."""
        xv = allocation_vector(x)
        return (self.gradients_all(xv) * xv).sum(axis=1)

    def z_transform(self) -> ZTransform:
        raise ModelError(
            f"{type(self).__name__} has no marginal-spend transform "
            "(the family is not non-satiating)"
        )

    def kink_mask(self, x: np.ndarray) -> np.ndarray:
        """Items where the gradient is a one-sided derivative (saturating kink)."""
        return np.zeros(self.k, dtype=bool)

    def _check(self, agent: int, x) -> None:
        if not 0 <= agent < self.n:
            raise ValueError(f"agent index {agent} out of range [0, {self.n})")
        xv = allocation_vector(x)
        if xv.size != self.k:
            raise ValueError(f"allocation has {xv.size} items, expected {self.k}")


class _ScalarSeparable(UtilityModel):
    """U_i(x) = sum_j u_ij f_j(x_j); families supply f, f', and x f'(x)."""

    @abc.abstractmethod
    def f(self, x: np.ndarray) -> np.ndarray:
        """Item value curve, broadcast over trailing item axis."""

    @abc.abstractmethod
    def fprime(self, x: np.ndarray) -> np.ndarray:
        ...

    def zvec(self, x: np.ndarray) -> np.ndarray:
        """x * f'(x), written so x = 0 never produces 0 * inf."""
        return x * self.fprime(x)

    def utilities_all(self, x: np.ndarray) -> np.ndarray:
        return self.u @ self.f(allocation_vector(x))

    def utilities_batch(self, X: np.ndarray) -> np.ndarray:
        return self.f(np.asarray(X, dtype=float)) @ self.u.T

    def gradients_all(self, x: np.ndarray) -> np.ndarray:
        return self.u * self.fprime(allocation_vector(x))[None, :]

    def gradient(self, agent: int, x) -> np.ndarray:
        self._check(agent, x)
        return self.u[agent] * self.fprime(allocation_vector(x))

    def marginal_spend_all(self, x: np.ndarray) -> np.ndarray:
        return self.u @ self.zvec(allocation_vector(x))


class Linear(_ScalarSeparable):
    """f_j(x) = x: utilities are just vote-weighted spend."""

    def __init__(self, utilities: np.ndarray):
        super().__init__(utilities)
        self.homogeneous = True

    def f(self, x):
        return np.asarray(x, dtype=float)

    def fprime(self, x):
        return np.ones_like(np.asarray(x, dtype=float))

    def zvec(self, x):
        return np.asarray(x, dtype=float)

    def z_transform(self) -> ZTransform:
        ident = lambda z: np.asarray(z, dtype=float)
        return ZTransform(
            z_of_x=ident,
            x_of_z=ident,
            ratio=lambda z: np.ones_like(np.asarray(z, dtype=float)),
            integral=ident,
            ratio_prime=lambda z: np.zeros_like(np.asarray(z, dtype=float)),
        )


class PowerSum(_ScalarSeparable):
    """f_j(x) = x^{a_j} with a_j in (0, 1]; concave diminishing returns per item."""

    def __init__(self, utilities: np.ndarray, alpha: np.ndarray):
        super().__init__(utilities)
        a = np.asarray(alpha, dtype=float).reshape(-1)
        if a.size == 1:
            a = np.full(self.k, a[0])
        if a.size != self.k:
            raise ModelError(f"alpha has length {a.size}, expected {self.k}")
        if np.any(a <= 0) or np.any(a > 1):
            raise ModelError("power exponents must lie in (0, 1]")
        self.alpha = _readonly(a)
        self.homogeneous = bool(np.all(a == 1.0))

    def f(self, x):
        return np.asarray(x, dtype=float) ** self.alpha

    def fprime(self, x):
        xv = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return self.alpha * xv ** (self.alpha - 1.0)

    def zvec(self, x):
        return self.alpha * np.asarray(x, dtype=float) ** self.alpha

    def z_transform(self) -> ZTransform:
        a = self.alpha

        def x_of_z(z):
            return (np.asarray(z, dtype=float) / a) ** (1.0 / a)

        def ratio(z):
            # x_of_z(z)/z in the algebraically stable form a^{-1/a} z^{1/a - 1};
            # at z = 0 this is 0 for a < 1 and 1 for a = 1, the f'(x) limits.
            return a ** (-1.0 / a) * np.asarray(z, dtype=float) ** (1.0 / a - 1.0)

        def ratio_prime(z):
            coef = a ** (-1.0 / a) * (1.0 / a - 1.0)
            with np.errstate(divide="ignore"):
                pow_term = np.asarray(z, dtype=float) ** (1.0 / a - 2.0)
            return np.where(coef == 0.0, 0.0, coef * pow_term)

        return ZTransform(
            z_of_x=self.zvec,
            x_of_z=x_of_z,
            ratio=ratio,
            integral=lambda z: a * x_of_z(z),
            ratio_prime=ratio_prime,
        )


class CobbDouglas(UtilityModel):
    """U_i(x) = prod_j x_j^{a_ij} with rows of a summing to one.

    The exponent matrix doubles as the instance's utility matrix. The core is
    invariant under monotone transforms, so solvers work on log U.
    """

    _ROW_SUM_TOL = 1e-9

    def __init__(self, exponents: np.ndarray):
        super().__init__(exponents)
        rows = self.u.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > self._ROW_SUM_TOL):
            i = int(np.argmax(np.abs(rows - 1.0)))
            raise ModelError(
                f"Cobb-Douglas exponent rows must sum to 1; row {i} sums to {rows[i]:.12g}"
            )
        self.homogeneous = True

    def _log_x(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(X > 0, np.log(np.maximum(X, 1e-300)), _LOG_ZERO)

    def utilities_all(self, x) -> np.ndarray:
        L = self._log_x(allocation_vector(x))
        return np.exp(self.u @ L)

    def utilities_batch(self, X: np.ndarray) -> np.ndarray:
        return np.exp(self._log_x(X) @ self.u.T)

    def gradients_all(self, x) -> np.ndarray:
        xv = allocation_vector(x)
        if np.any(xv <= 0):
            raise ModelError("Cobb-Douglas gradient needs strictly positive x")
        U = self.utilities_all(xv)
        return self.u * (U[:, None] / xv[None, :])

    def gradient(self, agent: int, x) -> np.ndarray:
        self._check(agent, x)
        return self.gradients_all(x)[agent].copy()

    def marginal_spend_all(self, x) -> np.ndarray:
        # Euler: sum_j x_j dU/dx_j = U for degree-1 homogeneous utilities.
        return self.utilities_all(x)


class Saturating(_ScalarSeparable):
    """f_j(x) = min(x/s_j, 1): value accrues linearly until the item is fully funded.

    The kink at x_j = s_j is reported with the left derivative 1/s_j and flagged
    through :meth:`kink_mask`.
    """

    def __init__(self, utilities: np.ndarray, sizes: np.ndarray):
        super().__init__(utilities)
        s = np.asarray(sizes, dtype=float).reshape(-1)
        if s.size != self.k:
            raise ModelError(f"sizes has length {s.size}, expected {self.k}")
        if np.any(s <= 0) or not np.all(np.isfinite(s)):
            raise ModelError("sizes must be positive and finite")
        self.sizes = _readonly(s)

    def f(self, x):
        return np.minimum(np.asarray(x, dtype=float) / self.sizes, 1.0)

    def fprime(self, x):
        rel = np.asarray(x, dtype=float) / self.sizes
        return np.where(rel <= 1.0 + _KINK_RTOL, 1.0 / self.sizes, 0.0)

    def zvec(self, x):
        return np.minimum(np.asarray(x, dtype=float) / self.sizes, 1.0)

    def kink_mask(self, x) -> np.ndarray:
        rel = allocation_vector(x) / self.sizes
        return np.abs(rel - 1.0) <= _KINK_RTOL


class SmoothedSaturating(_ScalarSeparable):
    """Saturating value curve continued past the cliff with a concave power tail.

    g_j(x) = x/s_j for x <= s_j and (1/eps)(x/s_j)^eps + 1 - 1/eps beyond, which
    is C^1, strictly increasing (hence admits the marginal-spend transform), and
    collapses to the hard saturating curve as eps -> 0.
    """

    def __init__(self, utilities: np.ndarray, sizes: np.ndarray, eps_smooth: float):
        super().__init__(utilities)
        s = np.asarray(sizes, dtype=float).reshape(-1)
        if s.size != self.k:
            raise ModelError(f"sizes has length {s.size}, expected {self.k}")
        if np.any(s <= 0) or not np.all(np.isfinite(s)):
            raise ModelError("sizes must be positive and finite")
        if not (0 < eps_smooth <= 1):
            raise ModelError("smoothing exponent must lie in (0, 1]")
        self.sizes = _readonly(s)
        self.eps_smooth = float(eps_smooth)

    def f(self, x):
        rel = np.asarray(x, dtype=float) / self.sizes
        e = self.eps_smooth
        return np.where(rel <= 1.0, rel, rel ** e / e + 1.0 - 1.0 / e)

    def fprime(self, x):
        rel = np.asarray(x, dtype=float) / self.sizes
        e = self.eps_smooth
        return np.where(rel <= 1.0, 1.0, rel ** (e - 1.0)) / self.sizes

    def zvec(self, x):
        rel = np.asarray(x, dtype=float) / self.sizes
        return np.where(rel <= 1.0, rel, rel ** self.eps_smooth)

    def z_transform(self) -> ZTransform:
        s, e = self.sizes, self.eps_smooth

        def x_of_z(z):
            z = np.asarray(z, dtype=float)
            return s * np.where(z <= 1.0, z, z ** (1.0 / e))

        def ratio(z):
            z = np.asarray(z, dtype=float)
            return s * np.where(z <= 1.0, 1.0, z ** (1.0 / e - 1.0))

        def integral(z):
            z = np.asarray(z, dtype=float)
            return s * np.where(z <= 1.0, z, 1.0 + e * (z ** (1.0 / e) - 1.0))

        def ratio_prime(z):
            z = np.asarray(z, dtype=float)
            return s * np.where(z <= 1.0, 0.0, (1.0 / e - 1.0) * z ** (1.0 / e - 2.0))

        return ZTransform(z_of_x=self.zvec, x_of_z=x_of_z, ratio=ratio,
                          integral=integral, ratio_prime=ratio_prime)


def make_model(inst: Instance, family: str, **params) -> UtilityModel:
    """Build a utility family from an instance. Size-based families pull
    ``inst.sizes`` and raise :class:`ModelError` when the instance has none."""
    family = family.lower().replace("-", "").replace("_", "")
    if family == "linear":
        return Linear(inst.utilities)
    if family == "powersum":
        alpha = params.get("alpha")
        if alpha is None:
            raise ModelError("powersum needs per-item exponents alpha")
        return PowerSum(inst.utilities, alpha)
    if family == "cobbdouglas":
        return CobbDouglas(inst.utilities)
    if family == "saturating":
        return Saturating(inst.utilities, inst.require_sizes())
    if family in ("smoothed", "smoothedsaturating"):
        eps = params.get("eps_smooth")
        if eps is None:
            raise ModelError("smoothed saturating needs eps_smooth")
        return SmoothedSaturating(inst.utilities, inst.require_sizes(), eps)
    raise ModelError(f"unknown utility family {family!r}")


def evaluate_utility(model: UtilityModel, agent: int, x) -> float:
    """U_agent(x) under the given family."""
    return model.utility(agent, x)


def utility_gradient(model: UtilityModel, agent: int, x) -> np.ndarray:
    """dU_agent/dx. At a saturating kink the left derivative is returned and a
    warning is emitted; the flagged items are available via ``model.kink_mask``."""
    g = model.gradient(agent, x)
    kinks = model.kink_mask(allocation_vector(x))
    if np.any(kinks):
        warnings.warn(
            f"gradient evaluated at saturation kink for items {np.flatnonzero(kinks).tolist()}; "
            "returning left derivative",
            RuntimeWarning,
            stacklevel=2,
        )
    return g


def z_transform(model: UtilityModel) -> ZTransform:
    """The money <-> marginal-spend change of variables for non-satiating families."""
    return model.z_transform()
