"""
CMV matrices and orthonormal Laurent polynomials built from Verblunsky coefficients.

The CMV matrix factorizes as C = LM (and Cᵗ = ML) with

    L = Θ_0 ⊕ Θ_2 ⊕ Θ_4 ⊕ …,    M = 1 ⊕ Θ_1 ⊕ Θ_3 ⊕ …,    Θ_n = [[ᾱ_n, ρ_n], [ρ_n, −α_n]]

where ρ_n = √(1 − |α_n|²). The orthonormal Laurent polynomials x_n and their substar
partners χ_n = (x_n)_* satisfy z·x = L·χ and χ = M·x. Read two rows at a time, these
relations give a recurrence that never needs Gram–Schmidt; the Gram–Schmidt oracle in
this module recomputes the same polynomials from moments as an independent check.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Literal, Sequence, TypeAlias

from cmvlab.bandop import BandMatrix, bm_diag, bm_mul, bm_power
from cmvlab.core import (
    Backend,
    DiffOperator,
    ExactBackend,
    LaurentPoly,
    Scalar,
    lp_eval,
    lp_substar,
)
from cmvlab.misc import GramNotPositive

logger = logging.getLogger(__name__)

ThetaBlock: TypeAlias = tuple[tuple[Scalar, Scalar], tuple[Scalar, Scalar]]
"""The symmetric unitary 2×2 block ((ᾱ, ρ), (ρ, −α))."""

_PYTHAGOREAN = [(3, 4, 5), (5, 12, 13), (8, 15, 17), (7, 24, 25), (20, 21, 29), (9, 40, 41)]


@dataclass(frozen=True)
class VerblunskySeq:
    """A sequence α_0, α_1, … in the open unit disk.

    Args:
        kind: `zero` (α ≡ 0), `constant` (α ≡ params[0]), `list` (params are α_0, α_1, …
            followed by zeros) or `geometric` (α_n = c·r^n with params (c, r), float
            backend only).
        params: Raw inputs, anything the backend's `scalar` accepts. Kept unconverted so
            the same sequence can be rebuilt for another backend.
        backend: Arithmetic of the α_n and ρ_n.

    Raises:
        ValueError: If some α_n is not inside the unit disk.
        NotPythagorean: If the exact backend can't represent some ρ_n.
    """

    kind: Literal["zero", "constant", "list", "geometric"]
    params: tuple[Any, ...] = ()
    backend: Backend = field(default_factory=ExactBackend)
    _values: tuple[Scalar, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        convert = self.backend.scalar
        match self.kind:
            case "zero":
                values: tuple[Scalar, ...] = ()
            case "constant":
                values = (convert(self.params[0]),)
            case "list":
                values = tuple(convert(v) for v in self.params)
            case "geometric":
                if self.backend.name != "float":
                    raise ValueError("Geometric Verblunsky sequences need the float backend.")
                c, r = convert(self.params[0]), self.backend.real(self.params[1])
                if not abs(r) <= 1:
                    raise ValueError(f"Geometric ratio must satisfy |r| ≤ 1, got {r=}.")
                values = (c,)
            case _:
                raise ValueError(f"Unknown Verblunsky sequence {self.kind=}.")
        object.__setattr__(self, "_values", values)
        for value in values:
            self._rho_of(value)

    @classmethod
    def zero(cls, backend: Backend | None = None) -> VerblunskySeq:
        return cls("zero", (), backend or ExactBackend())

    @classmethod
    def constant(cls, value: Any, backend: Backend | None = None) -> VerblunskySeq:
        return cls("constant", (_freeze(value),), backend or ExactBackend())

    @classmethod
    def from_list(cls, values: Sequence[Any], backend: Backend | None = None) -> VerblunskySeq:
        return cls("list", tuple(_freeze(v) for v in values), backend or ExactBackend())

    @classmethod
    def geometric(cls, c: Any, r: float, backend: Backend) -> VerblunskySeq:
        return cls("geometric", (_freeze(c), r), backend)

    def with_backend(self, backend: Backend) -> VerblunskySeq:
        """The same sequence rebuilt from its raw parameters in another backend."""
        return VerblunskySeq(self.kind, self.params, backend)

    def alpha(self, n: int) -> Scalar:
        if n < 0:
            raise ValueError(f"Verblunsky coefficients are indexed from 0, got {n=}.")
        match self.kind:
            case "zero":
                return self.backend.zero
            case "constant":
                return self._values[0]
            case "list":
                return self._values[n] if n < len(self._values) else self.backend.zero
            case _:
                return self._values[0] * self.backend.real(self.params[1]) ** n

    def rho(self, n: int) -> Scalar:
        """ρ_n = √(1 − |α_n|²), always positive."""
        return self._rho_of(self.alpha(n))

    def alphas(self, count: int) -> list[Scalar]:
        return [self.alpha(n) for n in range(count)]

    def rhos(self, count: int) -> list[Scalar]:
        return [self.rho(n) for n in range(count)]

    def is_null(self) -> bool:
        """True when every coefficient vanishes."""
        return not any(self._values)

    def _rho_of(self, value: Scalar) -> Scalar:
        backend = self.backend
        re, im = backend.parts(value)
        square = 1 - (re * re + im * im)
        if square <= 0:
            raise ValueError(f"Verblunsky coefficients must satisfy |α| < 1, got {value}.")
        return backend.from_parts(backend.sqrt_real(square), 0)


def _freeze(value: Any) -> Any:
    return tuple(value) if isinstance(value, list) else value


def random_pythagorean(length: int, seed: int, backend: Backend | None = None) -> VerblunskySeq:
    """A seeded list of nonzero Verblunsky coefficients with rational α and ρ.

    Each α is ±(a/c)·w with (a, b, c) a Pythagorean triple and w a rational point on the
    unit circle, so that ρ = b/c.
    """
    rng = random.Random(seed)
    values = []
    for _ in range(length):
        a, b, c = rng.choice(_PYTHAGOREAN)
        if rng.random() < 0.5:
            a, b = b, a
        p, q, r = rng.choice(_PYTHAGOREAN)
        w_re, w_im = rng.choice(
            [(Fraction(1), Fraction(0)), (Fraction(0), Fraction(1)), (Fraction(p, r), Fraction(q, r))]
        )
        sign = rng.choice([1, -1])
        modulus = Fraction(a, c) * sign
        values.append((str(modulus * w_re), str(modulus * w_im)))
    return VerblunskySeq.from_list(values, backend)


def theta(alpha: VerblunskySeq, k: int) -> ThetaBlock:
    """Θ_k = ((ᾱ_k, ρ_k), (ρ_k, −α_k))."""
    if k < 0:
        raise ValueError(f"Block index must be nonnegative, got {k=}.")
    a, r = alpha.alpha(k), alpha.rho(k)
    return (a.conjugate(), r), (r, -a)


@dataclass(frozen=True)
class CmvFactors:
    """L and M with their shift decompositions L = A_e + B_e S + S†B_e and
    M = A_o + B_o S + S†B_o."""

    L: BandMatrix
    M: BandMatrix
    A_e: BandMatrix
    B_e: BandMatrix
    A_o: BandMatrix
    B_o: BandMatrix


def build_factors(alpha: VerblunskySeq, size: int) -> CmvFactors:
    """Windows of L, M and of the diagonal parts of their shift decompositions.

    A_e = diag(ᾱ_0, −α_0, ᾱ_2, −α_2, …), B_e = diag(ρ_0, 0, ρ_2, 0, …),
    A_o = diag(1, ᾱ_1, −α_1, ᾱ_3, −α_3, …), B_o = diag(0, ρ_1, 0, ρ_3, …).
    """
    if size < 2:
        raise ValueError(f"CMV factors need a window of at least 2, got {size=}.")
    backend = alpha.backend
    zero, one = backend.zero, backend.one
    alphas, rhos = alpha.alphas(size), alpha.rhos(size)
    a_e = [alphas[i].conjugate() if i % 2 == 0 else -alphas[i - 1] for i in range(size)]
    b_e = [rhos[i] if i % 2 == 0 else zero for i in range(size)]
    a_o = [one] + [
        alphas[i].conjugate() if i % 2 else -alphas[i - 1] for i in range(1, size)
    ]
    b_o = [rhos[i] if i % 2 else zero for i in range(size)]
    L = BandMatrix(size, {-1: b_e[:-1], 0: a_e, 1: b_e[:-1]}, backend=backend)
    M = BandMatrix(size, {-1: b_o[:-1], 0: a_o, 1: b_o[:-1]}, backend=backend)
    return CmvFactors(
        L=L,
        M=M,
        A_e=bm_diag(a_e, backend),
        B_e=bm_diag(b_e, backend),
        A_o=bm_diag(a_o, backend),
        B_o=bm_diag(b_o, backend),
    )


def build_cmv(alpha: VerblunskySeq, size: int) -> tuple[BandMatrix, BandMatrix]:
    """C = LM and Cᵗ = ML, both five-diagonal."""
    if size < 4:
        raise ValueError(f"CMV matrices need a window of at least 4, got {size=}.")
    factors = build_factors(alpha, size)
    return bm_mul(factors.L, factors.M), bm_mul(factors.M, factors.L)


def olp_degree(n: int) -> int:
    """Degree of the monomial that x_n adds to the span: 0, −1, 1, −2, 2, …"""
    return (n + 1) // 2 * (-1 if n % 2 else 1)


def olp_position(degree: int) -> int:
    """Inverse of [`olp_degree`][cmvlab.cmv.olp_degree]."""
    return 2 * degree if degree >= 0 else -2 * degree - 1


@dataclass(frozen=True)
class OlpPair:
    """x_0..x_N and χ_0..χ_N as Laurent polynomials."""

    x: tuple[LaurentPoly, ...]
    chi: tuple[LaurentPoly, ...]

    def __len__(self) -> int:
        return len(self.x)

    def evaluate(self, z: Scalar, k: int = 0) -> list[Scalar]:
        """The vector of k-th derivatives (x_0^(k)(z), …, x_N^(k)(z))."""
        return [lp_eval(x.derivative(k), z) for x in self.x]


def compute_olp(alpha: VerblunskySeq, count: int) -> OlpPair:
    """Orthonormal Laurent polynomials x_0..x_count and χ_0..χ_count.

    Starting from x_0 = χ_0 = 1, even steps n use the L-block Θ_n,

        χ_{n+1} = (z·x_n − ᾱ_n·χ_n)/ρ_n,    x_{n+1} = z⁻¹·(ρ_n·χ_n − α_n·χ_{n+1}),

    and odd steps use the M-block Θ_n,

        x_{n+1} = (χ_n − ᾱ_n·x_n)/ρ_n,    χ_{n+1} = ρ_n·x_n − α_n·x_{n+1}.
    """
    if count < 1:
        raise ValueError(f"Need at least one polynomial beyond x_0, got {count=}.")
    backend = alpha.backend
    one = LaurentPoly({0: backend.one}, tau=backend.tau)
    x, chi = [one], [one]
    for n in range(count):
        a, r = alpha.alpha(n), alpha.rho(n)
        if n % 2 == 0:
            chi_next = (x[n].shift(1) - chi[n] * a.conjugate()) / r
            x_next = (chi[n] * r - chi_next * a).shift(-1)
        else:
            x_next = (chi[n] - x[n] * a.conjugate()) / r
            chi_next = x[n] * r - x_next * a
        x.append(x_next)
        chi.append(chi_next)
    return OlpPair(tuple(x), tuple(chi))


def olp_expand(f: LaurentPoly, olp: OlpPair) -> list[Scalar]:
    """Coefficients c_n with f = Σ c_n x_n.

    The x_n are triangular with respect to the order 1, z⁻¹, z, z⁻², z², …, so the
    expansion peels off the latest monomial first.

    Raises:
        ValueError: If f reaches beyond the span of the given polynomials.
    """
    if f.is_zero():
        return []
    top = max(olp_position(d) for d, _ in f)
    if top >= len(olp):
        raise ValueError(f"Expansion needs x_{top}, only {len(olp)} polynomials given.")
    coefficients: list[Scalar] = [0] * (top + 1)  # type: ignore[list-item]
    for n in range(top, -1, -1):
        d = olp_degree(n)
        if not (value := f[d]):
            continue
        c = value / olp.x[n][d]
        coefficients[n] = c
        rest = f - olp.x[n] * c
        f = LaurentPoly({e: v for e, v in rest if e != d}, tau=rest.tau)
    return coefficients


def operator_matrix(D: DiffOperator, alpha: VerblunskySeq, size: int) -> BandMatrix:
    """The matrix Ω with (D x)_n = Σ_j Ω_{n,j} x_j, n < size."""
    backend = alpha.backend
    spread = max(
        (abs(d) + k for k, coeff in enumerate(D.coeffs) for d, _ in coeff), default=0
    )
    olp = compute_olp(alpha, size + 2 * spread + 4)
    entries = {}
    for n in range(size):
        for j, c in enumerate(olp_expand(D(olp.x[n]), olp)):
            if c and j < size:
                entries[n, j] = backend.scalar(c)
    return BandMatrix.from_entries(size, entries, backend=backend)


def moment_sequence(alpha: VerblunskySeq, order: int, size: int) -> dict[int, Scalar]:
    """m_k = (C^k)_{0,0} for |k| ≤ order, with m_{−k} = conj(m_k)."""
    C, _ = build_cmv(alpha, size)
    power = bm_power(C, 0)
    moments = {0: power[0, 0]}
    for k in range(1, order + 1):
        power = bm_mul(power, C)
        moments[k] = power[0, 0]
        moments[-k] = moments[k].conjugate()
    return moments


def moments(alpha: VerblunskySeq, k: int, size: int) -> Scalar:
    """The moment m_k = (C^k)_{0,0}, conjugated for negative k.

    Raises:
        HorizonExhausted: If C^|k| has no trusted entries in a window of `size`.
    """
    value = bm_power(build_cmv(alpha, size)[0], abs(k))[0, 0]
    return value if k >= 0 else value.conjugate()


def inner(f: LaurentPoly, g: LaurentPoly, moments: dict[int, Scalar]) -> Scalar:
    """⟨f, g⟩ = Σ f_a·conj(g_b)·m_{a−b}."""
    total: Any = 0
    for a, fa in f:
        for b, gb in g:
            total = total + fa * gb.conjugate() * moments[a - b]
    return total


def gram_schmidt_oracle(alpha: VerblunskySeq, count: int) -> OlpPair:
    """Orthonormalize 1, z⁻¹, z, z⁻², z², … against the moments of the measure.

    Every new monomial keeps a positive real coefficient, which is the normalization the
    recurrence in [`compute_olp`][cmvlab.cmv.compute_olp] produces.

    Raises:
        GramNotPositive: If some residual has nonpositive norm.
    """
    backend = alpha.backend
    span = count + 1
    m = moment_sequence(alpha, span, 2 * span + 6)
    xs: list[LaurentPoly] = []
    for n in range(count + 1):
        monomial = LaurentPoly.monomial(olp_degree(n), backend.one, tau=backend.tau)
        v = monomial
        for x in xs:
            v = v - x * inner(monomial, x, m)
        norm2 = backend.parts(inner(v, v, m))[0]
        if norm2 <= backend.tau:
            raise GramNotPositive(
                f"Residual of z^{olp_degree(n)} has norm² {norm2}, the moment matrix is "
                f"not positive definite at size {n + 1}."
            )
        xs.append(v / backend.from_parts(backend.sqrt_real(norm2), 0))
    logger.debug("gram-schmidt oracle produced %d polynomials", len(xs))
    return OlpPair(tuple(xs), tuple(lp_substar(x) for x in xs))
