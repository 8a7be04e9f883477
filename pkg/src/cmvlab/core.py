"""
Scalars, Laurent polynomials and linear differential operators acting on them.

Everything numeric in this package is generic over a [`Backend`][cmvlab.core.Backend].
The exact backend computes in the Gaussian rationals with
[`ExactComplex`][cmvlab.core.ExactComplex] values, which makes zero tests and ranks
decidable. The float backend uses builtin `complex` values and a zero tolerance τ.

Laurent polynomials live in the formal ring C[z, z⁻¹]: derivatives of negative powers
follow d/dz z^d = d·z^(d−1), and the substar involution is
f_*(z) = conj(f(1/conj(z))), which maps c·z^d to conj(c)·z^(−d).
"""

from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Any, ClassVar, Iterable, Mapping, TypeAlias

from cmvlab.misc import BackendName, Encoded, NotPythagorean, ZeroArgument

logger = logging.getLogger(__name__)

_ZERO = Fraction(0)
_ONE = Fraction(1)


@dataclass(frozen=True, slots=True)
class ExactComplex:
    """A Gaussian rational `re + im·i` with arbitrary precision parts.

    Ints and Fractions take part in arithmetic as real values, so `2 * s`, `s - 1` and
    `s == 0` all work as expected.
    """

    re: Fraction = _ZERO
    im: Fraction = _ZERO

    def __post_init__(self):
        if type(self.re) is not Fraction:
            object.__setattr__(self, "re", Fraction(self.re))
        if type(self.im) is not Fraction:
            object.__setattr__(self, "im", Fraction(self.im))

    def __add__(self, other: Any) -> ExactComplex:
        other = _lift(other)
        if other is NotImplemented:
            return NotImplemented
        return ExactComplex(self.re + other.re, self.im + other.im)

    __radd__ = __add__

    def __sub__(self, other: Any) -> ExactComplex:
        other = _lift(other)
        if other is NotImplemented:
            return NotImplemented
        return ExactComplex(self.re - other.re, self.im - other.im)

    def __rsub__(self, other: Any) -> ExactComplex:
        other = _lift(other)
        if other is NotImplemented:
            return NotImplemented
        return ExactComplex(other.re - self.re, other.im - self.im)

    def __neg__(self) -> ExactComplex:
        return ExactComplex(-self.re, -self.im)

    def __mul__(self, other: Any) -> ExactComplex:
        other = _lift(other)
        if other is NotImplemented:
            return NotImplemented
        if not self.im and not other.im:
            return ExactComplex(self.re * other.re, _ZERO)
        return ExactComplex(
            self.re * other.re - self.im * other.im,
            self.re * other.im + self.im * other.re,
        )

    __rmul__ = __mul__

    def __truediv__(self, other: Any) -> ExactComplex:
        other = _lift(other)
        if other is NotImplemented:
            return NotImplemented
        if not other.im:
            return ExactComplex(self.re / other.re, self.im / other.re)
        norm = other.abs2()
        num = self * other.conjugate()
        return ExactComplex(num.re / norm, num.im / norm)

    def __rtruediv__(self, other: Any) -> ExactComplex:
        other = _lift(other)
        if other is NotImplemented:
            return NotImplemented
        return other / self

    def __pow__(self, exponent: int) -> ExactComplex:
        if not isinstance(exponent, int):
            return NotImplemented
        if exponent < 0:
            return ExactComplex(_ONE) / self**-exponent
        result = ExactComplex(_ONE)
        base = self
        while exponent:
            if exponent & 1:
                result = result * base
            base = base * base
            exponent >>= 1
        return result

    def __bool__(self) -> bool:
        return bool(self.re) or bool(self.im)

    def __eq__(self, other: Any) -> bool:
        other = _lift(other)
        if other is NotImplemented:
            return NotImplemented
        return self.re == other.re and self.im == other.im

    def __hash__(self) -> int:
        return hash(self.re) if not self.im else hash((self.re, self.im))

    def __abs__(self) -> float:
        return math.hypot(self.re, self.im)

    def __complex__(self) -> complex:
        return complex(float(self.re), float(self.im))

    def __str__(self) -> str:
        if not self.im:
            return str(self.re)
        imag = "" if abs(self.im) == 1 else str(abs(self.im))
        if not self.re:
            return f"{'-' if self.im < 0 else ''}{imag}i"
        return f"{self.re}{'-' if self.im < 0 else '+'}{imag}i"

    def __repr__(self) -> str:
        return f"ExactComplex('{self}')"

    def conjugate(self) -> ExactComplex:
        return ExactComplex(self.re, -self.im)

    def abs2(self) -> Fraction:
        """|s|² as an exact rational."""
        return self.re * self.re + self.im * self.im


def _lift(value: Any) -> ExactComplex:
    if isinstance(value, ExactComplex):
        return value
    if isinstance(value, (int, Fraction)):
        return ExactComplex(Fraction(value), _ZERO)
    return NotImplemented


Scalar: TypeAlias = ExactComplex | complex
"""A value of either backend."""
Real: TypeAlias = Fraction | float
"""A real value of either backend, used for real parametrizations."""


class Backend(ABC):
    """Arithmetic context shared by all values of one computation.

    Backends are small immutable values, they compare equal when they describe the same
    arithmetic and can be sent to worker processes.
    """

    name: ClassVar[BackendName]
    tau: float

    @property
    @abstractmethod
    def zero(self) -> Scalar: ...

    @property
    @abstractmethod
    def one(self) -> Scalar: ...

    @abstractmethod
    def scalar(self, value: Any) -> Scalar:
        """Convert ints, rationals, strings like `"3/5"`, or `[re, im]` pairs."""

    @abstractmethod
    def real(self, value: Any) -> Real:
        """Convert a real input into the backend's real type."""

    @abstractmethod
    def sqrt_real(self, value: Real) -> Real:
        """Square root of a nonnegative real."""

    @abstractmethod
    def parts(self, value: Scalar) -> tuple[Real, Real]: ...

    @abstractmethod
    def from_parts(self, re: Real, im: Real) -> Scalar: ...

    def is_zero(self, value: Scalar, scale: float = 1.0) -> bool:
        """Exact backend: `value == 0`. Float backend: `|value| ≤ τ·scale`."""
        return not value

    def encode(self, value: Scalar) -> Encoded:
        """Turn a scalar into plain JSON data."""
        re, im = self.parts(value)
        if im:
            return [self._encode_real(re), self._encode_real(im)]
        return self._encode_real(re)

    def decode(self, raw: Encoded) -> Scalar:
        """Read a scalar written by `encode` or given in a scenario document."""
        return self.scalar(raw)

    @abstractmethod
    def _encode_real(self, value: Real) -> str | float: ...


@dataclass(frozen=True)
class ExactBackend(Backend):
    """Exact arithmetic over the Gaussian rationals."""

    name: ClassVar[BackendName] = "exact"
    tau: float = 0.0

    @property
    def zero(self) -> ExactComplex:
        return ExactComplex()

    @property
    def one(self) -> ExactComplex:
        return ExactComplex(_ONE)

    def scalar(self, value: Any) -> ExactComplex:
        match value:
            case ExactComplex():
                return value
            case bool():
                raise TypeError(f"Can't interpret {value=} as a number.")
            case int() | Fraction() | str():
                return ExactComplex(self.real(value))
            case [re, im]:
                return ExactComplex(self.real(re), self.real(im))
            case _:
                raise TypeError(
                    f"The exact backend needs rational input, got {value=}. Pass "
                    f"rationals as strings like '3/5'."
                )

    def real(self, value: Any) -> Fraction:
        if isinstance(value, (int, Fraction)) and not isinstance(value, bool):
            return Fraction(value)
        if isinstance(value, str):
            try:
                return Fraction(value.strip())
            except ValueError:
                raise ValueError(f"Can't parse {value=} as a rational number.") from None
        if isinstance(value, ExactComplex) and not value.im:
            return value.re
        raise TypeError(f"The exact backend needs a rational, got {value=}.")

    def sqrt_real(self, value: Real) -> Fraction:
        value = Fraction(value)
        if value < 0:
            raise ValueError(f"Can't take the square root of {value=}.")
        num, den = math.isqrt(value.numerator), math.isqrt(value.denominator)
        if num * num != value.numerator or den * den != value.denominator:
            raise NotPythagorean(
                f"{value} is not the square of a rational, use the float backend or "
                f"Verblunsky coefficients with rational ρ = √(1−|α|²)."
            )
        return Fraction(num, den)

    def parts(self, value: Scalar) -> tuple[Fraction, Fraction]:
        value = self.scalar(value)
        return value.re, value.im

    def from_parts(self, re: Real, im: Real) -> ExactComplex:
        return ExactComplex(Fraction(re), Fraction(im))

    def _encode_real(self, value: Real) -> str:
        return str(value)


@dataclass(frozen=True)
class FloatBackend(Backend):
    """Binary floating point with zero tolerance `tau`."""

    name: ClassVar[BackendName] = "float"
    tau: float = 1e-10

    @property
    def zero(self) -> complex:
        return 0j

    @property
    def one(self) -> complex:
        return 1 + 0j

    def scalar(self, value: Any) -> complex:
        match value:
            case bool():
                raise TypeError(f"Can't interpret {value=} as a number.")
            case complex() | float() | int():
                return complex(value)
            case ExactComplex():
                return complex(value)
            case Fraction() | str():
                return complex(self.real(value))
            case [re, im]:
                return complex(self.real(re), self.real(im))
            case _:
                raise TypeError(f"Can't interpret {value=} as a number.")

    def real(self, value: Any) -> float:
        if isinstance(value, str):
            try:
                return float(Fraction(value.strip()))
            except ValueError:
                raise ValueError(f"Can't parse {value=} as a real number.") from None
        if isinstance(value, complex):
            return value.real
        return float(value)

    def sqrt_real(self, value: Real) -> float:
        return math.sqrt(value)

    def is_zero(self, value: Scalar, scale: float = 1.0) -> bool:
        return abs(value) <= self.tau * scale

    def parts(self, value: Scalar) -> tuple[float, float]:
        value = self.scalar(value)
        return value.real, value.imag

    def from_parts(self, re: Real, im: Real) -> complex:
        return complex(float(re), float(im))

    def _encode_real(self, value: Real) -> float:
        return float(value)


def backend_for(name: BackendName, tau: float = 1e-10) -> Backend:
    """Backend instance for a backend name as it appears in configs."""
    if name == "exact":
        return ExactBackend()
    if name == "float":
        return FloatBackend(tau)
    raise ValueError(f"Unknown backend {name=}.")


def _one_like(value: Scalar) -> Scalar:
    return value**0


class LaurentPoly:
    """A finite sum Σ c_d z^d with integer degrees d.

    Zero coefficients are never stored. Polynomials with float coefficients may carry a
    relative tolerance `tau`, in which case coefficients with |c| ≤ τ·max|c| are dropped
    on construction; results of arithmetic inherit the larger tolerance of the operands.

    Instances are treated as immutable.
    """

    __slots__ = ("coeffs", "tau")

    def __init__(self, coeffs: Mapping[int, Scalar] | None = None, *, tau: float = 0.0):
        items = {d: c for d, c in (coeffs or {}).items() if c}
        if tau and items:
            cutoff = tau * max(abs(c) for c in items.values())
            items = {d: c for d, c in items.items() if abs(c) > cutoff}
        self.coeffs: dict[int, Scalar] = dict(sorted(items.items()))
        self.tau: float = tau

    @classmethod
    def monomial(cls, degree: int, coeff: Scalar, *, tau: float = 0.0) -> LaurentPoly:
        return cls({degree: coeff}, tau=tau)

    @property
    def support(self) -> tuple[int, int] | None:
        """Lowest and highest degree, `None` for the zero polynomial."""
        if not self.coeffs:
            return None
        degrees = list(self.coeffs)
        return degrees[0], degrees[-1]

    def is_zero(self) -> bool:
        return not self.coeffs

    def __getitem__(self, degree: int) -> Scalar | int:
        return self.coeffs.get(degree, 0)

    def __iter__(self):
        return iter(self.coeffs.items())

    def __add__(self, other: Any) -> LaurentPoly:
        if not isinstance(other, LaurentPoly):
            if isinstance(other, (ExactComplex, complex, int, Fraction, float)):
                other = LaurentPoly({0: other})
            else:
                return NotImplemented
        coeffs = dict(self.coeffs)
        for d, c in other.coeffs.items():
            coeffs[d] = coeffs[d] + c if d in coeffs else c
        return LaurentPoly(coeffs, tau=max(self.tau, other.tau))

    __radd__ = __add__

    def __neg__(self) -> LaurentPoly:
        return LaurentPoly({d: -c for d, c in self.coeffs.items()}, tau=self.tau)

    def __sub__(self, other: Any) -> LaurentPoly:
        return self + -other

    def __rsub__(self, other: Any) -> LaurentPoly:
        return -self + other

    def __mul__(self, other: Any) -> LaurentPoly:
        if isinstance(other, LaurentPoly):
            return lp_mul(self, other)
        if isinstance(other, (ExactComplex, complex, int, Fraction, float)):
            return LaurentPoly({d: c * other for d, c in self.coeffs.items()}, tau=self.tau)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other: Any) -> LaurentPoly:
        """Division by a nonzero scalar."""
        return LaurentPoly({d: c / other for d, c in self.coeffs.items()}, tau=self.tau)

    def __eq__(self, other: Any) -> bool:
        if not isinstance(other, LaurentPoly):
            return NotImplemented
        return self.coeffs == other.coeffs

    __hash__ = None  # type: ignore[assignment]

    def __call__(self, z: Scalar) -> Scalar:
        return lp_eval(self, z)

    def __repr__(self) -> str:
        if not self.coeffs:
            return "LaurentPoly(0)"
        terms = " + ".join(f"({c})z^{d}" if d else f"({c})" for d, c in self.coeffs.items())
        return f"LaurentPoly({terms})"

    def shift(self, k: int) -> LaurentPoly:
        """Multiplication by z^k."""
        return LaurentPoly({d + k: c for d, c in self.coeffs.items()}, tau=self.tau)

    def substar(self) -> LaurentPoly:
        return lp_substar(self)

    def derivative(self, k: int = 1) -> LaurentPoly:
        """The k-th formal derivative, d^k/dz^k z^d = d(d−1)…(d−k+1)·z^(d−k)."""
        if k < 0:
            raise ValueError(f"Derivative order must be nonnegative, got {k=}.")
        coeffs = {}
        for d, c in self.coeffs.items():
            factor = math.prod(range(d - k + 1, d + 1))
            if factor:
                coeffs[d - k] = c * factor
        return LaurentPoly(coeffs, tau=self.tau)

    def isclose(self, other: LaurentPoly, tol: float) -> bool:
        """Coefficientwise |a_d − b_d| ≤ tol."""
        degrees = set(self.coeffs) | set(other.coeffs)
        return all(abs(self[d] - other[d]) <= tol for d in degrees)


def lp_mul(f: LaurentPoly, g: LaurentPoly) -> LaurentPoly:
    """Product in C[z, z⁻¹]; the support bounds of the factors add."""
    coeffs: dict[int, Scalar] = {}
    for d, a in f.coeffs.items():
        for e, b in g.coeffs.items():
            term = a * b
            coeffs[d + e] = coeffs[d + e] + term if d + e in coeffs else term
    return LaurentPoly(coeffs, tau=max(f.tau, g.tau))


def lp_substar(f: LaurentPoly) -> LaurentPoly:
    """f_*(z) = conj(f(1/conj(z))): the degree d coefficient c moves to degree −d as
    conj(c)."""
    return LaurentPoly({-d: c.conjugate() for d, c in f.coeffs.items()}, tau=f.tau)


def lp_eval(f: LaurentPoly, z: Scalar) -> Scalar:
    """Evaluate Σ c_d z^d.

    Raises:
        ZeroArgument: If `z` is zero and `f` has negative-degree terms.
    """
    if not z:
        if f.coeffs and next(iter(f.coeffs)) < 0:
            raise ZeroArgument(f"Can't evaluate {f!r} at z=0.")
        return z * 0 + f[0]
    total = z * 0
    for d, c in f.coeffs.items():
        total = total + c * z**d
    return total


class DiffOperator:
    """D = Σ_k D_k(z) d^k/dz^k with Laurent polynomial coefficients D_0..D_r.

    Trailing zero coefficients are dropped, so `order` is the index of the last nonzero
    coefficient; order 0 operators are multiplications.
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Iterable[LaurentPoly]):
        coeffs = list(coeffs)
        while coeffs and coeffs[-1].is_zero():
            coeffs.pop()
        self.coeffs: tuple[LaurentPoly, ...] = tuple(coeffs)

    @classmethod
    def euler(cls, backend: Backend) -> DiffOperator:
        """z d/dz, the operator with eigenfunctions z^d and eigenvalues d."""
        return cls([LaurentPoly(), LaurentPoly.monomial(1, backend.one, tau=backend.tau)])

    @classmethod
    def multiplication(cls, f: LaurentPoly) -> DiffOperator:
        return cls([f])

    @property
    def order(self) -> int:
        return max(len(self.coeffs) - 1, 0)

    def __getitem__(self, k: int) -> LaurentPoly:
        return self.coeffs[k] if k < len(self.coeffs) else LaurentPoly()

    def __call__(self, f: LaurentPoly) -> LaurentPoly:
        return op_apply(self, f)

    def __eq__(self, other: Any) -> bool:
        if not isinstance(other, DiffOperator):
            return NotImplemented
        return self.coeffs == other.coeffs

    __hash__ = None  # type: ignore[assignment]

    def __add__(self, other: DiffOperator) -> DiffOperator:
        size = max(len(self.coeffs), len(other.coeffs))
        return DiffOperator(self[k] + other[k] for k in range(size))

    def __matmul__(self, other: DiffOperator) -> DiffOperator:
        return op_compose(self, other)

    def __repr__(self) -> str:
        return f"DiffOperator({list(self.coeffs)!r})"

    def compose(self, other: DiffOperator) -> DiffOperator:
        return op_compose(self, other)

    def substar(self) -> DiffOperator:
        return op_substar(self)


def op_apply(D: DiffOperator, f: LaurentPoly) -> LaurentPoly:
    """Σ_k D_k · f^(k)."""
    result = LaurentPoly(tau=f.tau)
    for k, coeff in enumerate(D.coeffs):
        if not coeff.is_zero():
            result = result + coeff * f.derivative(k)
    return result


def op_compose(A: DiffOperator, B: DiffOperator) -> DiffOperator:
    """The operator f ↦ A(B(f)).

    Uses the Leibniz rule (a·d^i)(b·d^j) = a·Σ_l C(i,l)·b^(l)·d^(i−l+j).
    """
    if not A.coeffs or not B.coeffs:
        return DiffOperator([])
    out: dict[int, LaurentPoly] = {}
    for i, a in enumerate(A.coeffs):
        if a.is_zero():
            continue
        for j, b in enumerate(B.coeffs):
            if b.is_zero():
                continue
            for l in range(i + 1):
                term = a * b.derivative(l) * comb(i, l)
                k = i - l + j
                out[k] = out[k] + term if k in out else term
    order = max(out, default=-1)
    return DiffOperator(out.get(k, LaurentPoly()) for k in range(order + 1))


def op_substar(D: DiffOperator) -> DiffOperator:
    """The operator D_* with D_* f = (D f_*)_* for all f.

    Built from (d/dz)_* = −z² d/dz and (D_k d^k)_* = (D_k)_* ((d/dz)_*)^k.
    """
    nonzero = [c for poly in D.coeffs for _, c in poly]
    if not nonzero:
        return DiffOperator([])
    one = _one_like(nonzero[0])
    tau = max(poly.tau for poly in D.coeffs)
    starred_d = DiffOperator([LaurentPoly(tau=tau), LaurentPoly({2: -one}, tau=tau)])
    result = DiffOperator([])
    power = DiffOperator([LaurentPoly({0: one}, tau=tau)])
    for k, coeff in enumerate(D.coeffs):
        if k:
            power = op_compose(power, starred_d)
        if not coeff.is_zero():
            result = result + op_compose(DiffOperator([lp_substar(coeff)]), power)
    return result
