"""Radial kernels, differential operators applied to kernels, and the
monomial augmentation basis.

All radial kernels are functions ``phi(r)`` of the distance ``r >= 0``.
The hybrid Gaussian-cubic kernel is

    phi(r) = alpha * exp(-(eps r)^2) + beta * r^3

and is stored in normalized form ``exp(-(eps r)^2) + gamma r^3`` with
``gamma = beta / alpha`` plus an overall ``scale`` (= alpha), which never
changes finite-difference weights.

Operators act on the *first* argument of ``phi(||x - z||)``.  For a radial
function in 2D

    grad f   = f'(r) (x - z) / r
    lap  f   = f''(r) + f'(r) / r

and every ``r -> 0`` limit is taken analytically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

VARIANTS = (
    "gaussian",
    "cubic",
    "phs",
    "multiquadric",
    "inverse-multiquadric",
    "wendland",
    "hybrid",
)

#: Variants for which operator application is implemented.
OPERATOR_VARIANTS = ("gaussian", "cubic", "phs", "hybrid")

_EPS_VARIANTS = ("gaussian", "multiquadric", "inverse-multiquadric", "wendland", "hybrid")

MAX_POLY_DEGREE = 10


class KernelCapabilityError(ValueError):
    """Raised when an operator is requested for a kernel that does not support it."""


@dataclass(frozen=True)
class KernelSpec:
    """A radial kernel and its parameters.

    Attributes
    ----------
    variant : str
        One of :data:`VARIANTS`.
    epsilon : float
        Shape parameter (inverse length) of the Gaussian-type variants.
    gamma : float
        Cubic weight of the hybrid kernel, relative to the Gaussian part.
    m : int
        Polyharmonic spline order (``phs`` only).
    scale : float
        Overall multiplicative constant (``alpha`` for hybrid kernels built
        from raw weights).  Has no effect on weights.
    """

    variant: str
    epsilon: float = 1.0
    gamma: float = 0.0
    m: int = 3
    scale: float = 1.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown kernel variant {self.variant!r}; expected one of {VARIANTS}")
        if self.variant in _EPS_VARIANTS and not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma}")
        if self.variant == "phs" and (int(self.m) != self.m or self.m < 1):
            raise ValueError(f"phs order must be a positive integer, got {self.m}")
        if self.scale == 0:
            raise ValueError("kernel scale must be nonzero")

    @classmethod
    def gaussian(cls, epsilon: float) -> "KernelSpec":
        return cls("gaussian", epsilon=epsilon)

    @classmethod
    def cubic(cls) -> "KernelSpec":
        return cls("cubic")

    @classmethod
    def phs(cls, m: int = 3) -> "KernelSpec":
        return cls("phs", m=m)

    @classmethod
    def hybrid(cls, epsilon: float, gamma: float) -> "KernelSpec":
        return cls("hybrid", epsilon=epsilon, gamma=gamma)

    @classmethod
    def hybrid_raw(cls, epsilon: float, alpha: float, beta: float) -> "KernelSpec":
        """Hybrid kernel ``alpha exp(-(eps r)^2) + beta r^3``."""
        if alpha == 0:
            raise ValueError("alpha must be nonzero to normalize the hybrid kernel")
        return cls("hybrid", epsilon=epsilon, gamma=beta / alpha, scale=alpha)

    @property
    def alpha(self) -> float:
        return self.scale

    @property
    def beta(self) -> float:
        return self.scale * self.gamma

    def rescaled(self, rho: float) -> "KernelSpec":
        """Kernel ``psi`` with ``psi(s) = phi(rho * s)`` up to a constant factor.

        Used to evaluate on coordinates divided by ``rho``.  For ``phs`` and
        ``cubic`` the factor ``rho**m`` is dropped since it cancels.
        """
        if self.variant in ("cubic", "phs"):
            return self
        if self.variant == "hybrid":
            return replace(self, epsilon=self.epsilon * rho, gamma=self.gamma * rho**3)
        return replace(self, epsilon=self.epsilon * rho)

    def to_dict(self) -> dict:
        return {"variant": self.variant, "epsilon": self.epsilon, "gamma": self.gamma, "m": self.m}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        unknown = set(d) - {"variant", "epsilon", "gamma", "m"}
        if unknown:
            raise ValueError(f"unknown kernel keys: {sorted(unknown)}")
        return cls(
            variant=d["variant"],
            epsilon=float(d.get("epsilon", 1.0)),
            gamma=float(d.get("gamma", 0.0)),
            m=int(d.get("m", 3)),
        )


# ---------------------------------------------------------------------------
# radial profiles
# ---------------------------------------------------------------------------

def _check_r(r):
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("radial distance must be nonnegative")
    return r


def _phs_even(r, m, order):
    # r^m ln r and its first two radial derivatives; value 0 at r = 0.
    out = np.zeros_like(r)
    pos = r > 0
    rp = r[pos]
    lr = np.log(rp)
    if order == 0:
        out[pos] = rp**m * lr
    elif order == 1:
        out[pos] = rp ** (m - 1) * (m * lr + 1.0)
    else:
        out[pos] = rp ** (m - 2) * (m * (m - 1) * lr + 2 * m - 1)
    return out


def radial(spec: KernelSpec, r, order: int = 0):
    """Return ``phi``, ``phi'`` or ``phi''`` (``order`` 0, 1, 2) at ``r``."""
    r = _check_r(r)
    e = spec.epsilon
    v = spec.variant
    if v == "gaussian" or v == "hybrid":
        g = np.exp(-(e * r) ** 2)
        if order == 0:
            out = g
        elif order == 1:
            out = -2 * e**2 * r * g
        else:
            out = (4 * e**4 * r**2 - 2 * e**2) * g
        if v == "hybrid":
            out = out + spec.gamma * (r**3, 3 * r**2, 6 * r)[order]
    elif v == "cubic" or (v == "phs" and spec.m == 3):
        out = (r**3, 3 * r**2, 6 * r)[order]
    elif v == "phs":
        m = spec.m
        if m % 2 == 0:
            out = _phs_even(r, m, order)
        else:
            out = (r**m, m * r ** (m - 1), m * (m - 1) * r ** (m - 2))[order]
    elif v == "multiquadric":
        q = np.sqrt(1 + (e * r) ** 2)
        out = (q, e**2 * r / q, e**2 / q**3)[order]
    elif v == "inverse-multiquadric":
        q = 1 / np.sqrt(1 + (e * r) ** 2)
        out = (q, -(e**2) * r * q**3, e**2 * q**5 * (2 * (e * r) ** 2 - 1))[order]
    elif v == "wendland":
        t = np.clip(1 - e * r, 0, None)
        if order == 0:
            out = t**4 * (4 * e * r + 1)
        elif order == 1:
            out = -20 * e**2 * r * t**3
        else:
            out = -20 * e**2 * t**2 * (1 - 4 * e * r)
    else:  # pragma: no cover
        raise AssertionError(v)
    return spec.scale * out


def eval_kernel(spec: KernelSpec, r):
    """Evaluate ``phi(r)``; scalar in, scalar out."""
    out = radial(spec, r, 0)
    return float(out) if np.ndim(out) == 0 else out


def _require_operator_support(spec: KernelSpec):
    if spec.variant not in OPERATOR_VARIANTS:
        raise KernelCapabilityError(f"operators are not implemented for {spec.variant!r} kernels")
    if spec.variant == "phs" and spec.m != 3:
        raise KernelCapabilityError("operators on phs kernels are implemented for m = 3 only")


def grad_over_r(spec: KernelSpec, r):
    """``phi'(r) / r`` with its limit at ``r = 0`` (0 for cubic, -2 eps^2 for Gaussian)."""
    _require_operator_support(spec)
    r = _check_r(r)
    out = np.zeros_like(r)
    if spec.variant in ("gaussian", "hybrid"):
        out = out - 2 * spec.epsilon**2 * np.exp(-(spec.epsilon * r) ** 2)
    if spec.variant in ("cubic", "phs"):
        out = out + 3 * r
    elif spec.variant == "hybrid":
        out = out + 3 * spec.gamma * r
    return spec.scale * out


def laplacian_radial(spec: KernelSpec, r):
    """2D Laplacian of ``phi(||x - z||)`` as a function of ``r``."""
    _require_operator_support(spec)
    r = _check_r(r)
    out = np.zeros_like(r)
    if spec.variant in ("gaussian", "hybrid"):
        e2 = spec.epsilon**2
        out = out + (4 * e2 * e2 * r**2 - 4 * e2) * np.exp(-e2 * r**2)
    if spec.variant in ("cubic", "phs"):
        out = out + 9 * r
    elif spec.variant == "hybrid":
        out = out + 9 * spec.gamma * r
    return spec.scale * out


# ---------------------------------------------------------------------------
# differential operators
# ---------------------------------------------------------------------------

OPERATOR_KINDS = ("identity", "dx", "dz", "directional", "laplacian", "helmholtz", "robin")


@dataclass(frozen=True)
class DiffOperatorSpec:
    """A linear differential operator in 2D.

    ``helmholtz`` means ``lap + sign * k**2``; ``robin`` means
    ``d/dn + coefficient``.  ``directional`` and ``robin`` carry a unit
    normal; ``normal=None`` is allowed as a placeholder that assembly fills
    with each boundary node's own outward normal.
    """

    kind: str
    normal: Optional[tuple] = None
    k: float = 0.0
    sign: int = 1
    coefficient: complex = 0.0
    _terms: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if self.kind not in OPERATOR_KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if self.normal is not None:
            nrm = tuple(float(c) for c in self.normal)
            if abs(math.hypot(*nrm) - 1.0) > 1e-12:
                raise ValueError(f"normal {nrm} is not a unit vector")
            object.__setattr__(self, "normal", nrm)
        if self.sign not in (1, -1):
            raise ValueError("helmholtz sign must be +1 or -1")
        if self.k < 0:
            raise ValueError("wavenumber must be nonnegative")
        object.__setattr__(self, "_terms", self._build_terms())

    def _build_terms(self):
        kind = self.kind
        if kind == "identity":
            return {"id": 1.0}
        if kind == "dx":
            return {"dx": 1.0}
        if kind == "dz":
            return {"dz": 1.0}
        if kind == "laplacian":
            return {"lap": 1.0}
        if kind == "helmholtz":
            return {"lap": 1.0, "id": self.sign * self.k**2}
        if self.normal is None:
            return None
        nx, nz = self.normal
        terms = {"dx": nx, "dz": nz}
        if kind == "robin":
            terms["id"] = complex(self.coefficient)
        return terms

    @classmethod
    def identity(cls):
        return cls("identity")

    @classmethod
    def laplacian(cls):
        return cls("laplacian")

    @classmethod
    def helmholtz(cls, k: float, sign: int = 1):
        return cls("helmholtz", k=k, sign=sign)

    @classmethod
    def normal_derivative(cls, normal=None):
        return cls("directional", normal=normal)

    @classmethod
    def robin(cls, coefficient: complex, normal=None):
        return cls("robin", normal=normal, coefficient=coefficient)

    def with_normal(self, normal) -> "DiffOperatorSpec":
        return replace(self, normal=tuple(normal))

    @property
    def needs_normal(self) -> bool:
        return self.kind in ("directional", "robin") and self.normal is None

    def terms(self) -> dict:
        """Decompose into elementary pieces ``{'id','dx','dz','lap'} -> coefficient``."""
        if self._terms is None:
            raise ValueError(f"{self.kind} operator has no normal attached")
        return dict(self._terms)

    @property
    def is_real(self) -> bool:
        return all(np.isreal(c) for c in self.terms().values())


#: Homogeneity order of each elementary piece under coordinate scaling.
TERM_ORDER = {"id": 0, "dx": 1, "dz": 1, "lap": 2}


def elementary_kernel_values(spec: KernelSpec, term: str, dx, dz):
    """Elementary operator applied to ``phi(||x - z||)`` at offsets ``x - z = (dx, dz)``."""
    dx = np.asarray(dx, dtype=float)
    dz = np.asarray(dz, dtype=float)
    r = np.hypot(dx, dz)
    if term == "id":
        return radial(spec, r, 0)
    if term == "lap":
        return laplacian_radial(spec, r)
    g = grad_over_r(spec, r)
    return g * (dx if term == "dx" else dz)


def eval_operator_kernel(spec: KernelSpec, op: DiffOperatorSpec, center, source) -> complex:
    """``(L phi(||. - source||))(center)``."""
    _require_operator_support(spec)
    dx = float(center[0]) - float(source[0])
    dz = float(center[1]) - float(source[1])
    total = 0.0 + 0.0j
    for term, c in op.terms().items():
        total += c * float(elementary_kernel_values(spec, term, dx, dz))
    return complex(total)


# ---------------------------------------------------------------------------
# monomial basis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PolyBasisSpec:
    """Bivariate monomials ``x^a z^b`` with ``a + b <= degree``.

    Ordering is graded lexicographic: ``1, x, z, x^2, xz, z^2, x^3, ...``;
    within degree ``d`` the power of ``x`` decreases from ``d`` to 0.
    """

    degree: int
    dimension: int = 2

    def __post_init__(self):
        if self.dimension != 2:
            raise ValueError("only 2D monomial bases are supported")
        if int(self.degree) != self.degree or self.degree < 0:
            raise ValueError("polynomial degree must be a nonnegative integer")
        if self.degree > MAX_POLY_DEGREE:
            raise ValueError(f"polynomial degree above {MAX_POLY_DEGREE} is not supported")

    @property
    def size(self) -> int:
        p = self.degree
        return (p + 1) * (p + 2) // 2

    def exponents(self):
        return [(d - b, b) for d in range(self.degree + 1) for b in range(d + 1)]


def _mono(x, a):
    # x**a with a possibly negative -> 0 (derivative of a lower power)
    if a < 0:
        return np.zeros_like(x)
    return x**a


def monomial_terms(poly: PolyBasisSpec, term: str, x, z):
    """Elementary operator applied to every monomial at points ``(x, z)``.

    Returns an array of shape ``(len(x), poly.size)``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    cols = []
    for a, b in poly.exponents():
        if term == "id":
            col = _mono(x, a) * _mono(z, b)
        elif term == "dx":
            col = a * _mono(x, a - 1) * _mono(z, b)
        elif term == "dz":
            col = b * _mono(x, a) * _mono(z, b - 1)
        else:
            col = a * (a - 1) * _mono(x, a - 2) * _mono(z, b) + b * (b - 1) * _mono(x, a) * _mono(z, b - 2)
        cols.append(col)
    return np.stack(cols, axis=-1)


def eval_poly_basis(poly: PolyBasisSpec, op: DiffOperatorSpec, point) -> np.ndarray:
    """``(L p_j)(point)`` for every monomial in the fixed ordering."""
    out = np.zeros(poly.size, dtype=complex)
    for term, c in op.terms().items():
        out += c * monomial_terms(poly, term, point[0], point[1])[0]
    return out
