"""
The ad-operator calculus of a CMV matrix.

For an operator Ω, (ad C)Ω = [C, Ω] and

    (ad C)^n Ω = Σ_k (−1)^k C(n,k) C^(n−k) Ω C^k.

The Hermitian ad-operator multiplies this from both sides with inverse factors so that
Hermitian inputs stay Hermitian,

    (ad_2m C)Ω = (C†)^m ((ad C)^2m Ω) (C†)^m,
    (ad_2m+1 C)Ω = L†(C†)^m ((ad C)^(2m+1) Ω) (C†)^m M†,

and it obeys the recursion (ad_0 C)Ω = Ω,

    (ad_n+1 C)Ω = M X M† − L† X L    (n even),
    (ad_n+1 C)Ω = L X L† − M† X M    (n odd),    X = (ad_n C)Ω.

Expanding the unitary factors gives a third form, a signed sum of sandwiches W Ω W†
with the words returned by [`hermitian_words`][cmvlab.adops.hermitian_words].

Every public operation computes its result along at least two of these routes and
raises [`InternalMismatch`][cmvlab.misc.InternalMismatch] if they disagree inside the
common horizon. Results for the transposed matrix Cᵗ = ML are obtained by exchanging L
and M, see [`CmvPair.transposed`][cmvlab.adops.CmvPair.transposed].
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from math import comb
from typing import Sequence

from cmvlab.bandop import (
    BandMatrix,
    bm_add,
    bm_commutator,
    bm_dagger,
    bm_equal,
    bm_identity,
    bm_is_zero,
    bm_magnitude,
    bm_mul,
    bm_power,
    bm_scale,
    bm_sub,
    bm_transpose,
)
from cmvlab.cmv import VerblunskySeq, build_factors, compute_olp
from cmvlab.core import Backend, LaurentPoly, Scalar
from cmvlab.misc import (
    InternalMismatch,
    NotConstantMultiple,
    NotInCentralizer,
    ReconstructionMismatch,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CmvPair:
    """C = LM and Cᵗ = ML on one coherent window."""

    C: BandMatrix
    Ct: BandMatrix
    L: BandMatrix
    M: BandMatrix
    alpha: VerblunskySeq

    @classmethod
    def build(cls, alpha: VerblunskySeq, size: int) -> CmvPair:
        if size < 4:
            raise ValueError(f"CMV matrices need a window of at least 4, got {size=}.")
        factors = build_factors(alpha, size)
        L, M = factors.L, factors.M
        return cls(C=bm_mul(L, M), Ct=bm_mul(M, L), L=L, M=M, alpha=alpha)

    @property
    def backend(self) -> Backend:
        return self.C.backend

    @property
    def size(self) -> int:
        return self.C.size

    @cached_property
    def C_dagger(self) -> BandMatrix:
        return bm_dagger(self.C)

    @cached_property
    def L_dagger(self) -> BandMatrix:
        return bm_dagger(self.L)

    @cached_property
    def M_dagger(self) -> BandMatrix:
        return bm_dagger(self.M)

    @cached_property
    def transposed(self) -> CmvPair:
        """The pair for Cᵗ = ML, i.e. with the roles of L and M exchanged."""
        return CmvPair(C=self.Ct, Ct=self.C, L=self.M, M=self.L, alpha=self.alpha)

    def at_parity(self, k: int) -> CmvPair:
        """C(k): the pair itself for even k, the transposed pair for odd k."""
        return self if k % 2 == 0 else self.transposed

    def power(self, k: int) -> BandMatrix:
        """C^k, with negative k meaning powers of C†."""
        return bm_power(self.C, k)


def ad_scale(omega: BandMatrix, n: int) -> float:
    """Magnitude bound used for float zero tests of order n ad images."""
    return max(bm_magnitude(omega), 1.0) * 4.0**n


def _sandwich(left: BandMatrix, omega: BandMatrix, right: BandMatrix) -> BandMatrix:
    return bm_mul(bm_mul(left, omega), right)


def _agree(first: BandMatrix, second: BandMatrix, scale: float, what: str):
    if not bm_equal(first, second, scale):
        raise InternalMismatch(f"Two computations of {what} disagree inside the horizon.")


def ad_power_iterated(P: CmvPair, omega: BandMatrix, n: int) -> BandMatrix:
    result = omega
    for _ in range(n):
        result = bm_commutator(P.C, result)
    return result


def ad_power_binomial(P: CmvPair, omega: BandMatrix, n: int) -> BandMatrix:
    powers = [bm_identity(P.size, P.backend)]
    for _ in range(n):
        powers.append(bm_mul(powers[-1], P.C))
    result = None
    for k in range(n + 1):
        term = bm_scale(_sandwich(powers[n - k], omega, powers[k]), (-1) ** k * comb(n, k))
        result = term if result is None else bm_add(result, term)
    assert result is not None
    return result


def ad_power(P: CmvPair, omega: BandMatrix, n: int) -> BandMatrix:
    """(ad C)^n Ω, by iterated commutators and by the binomial sum.

    Raises:
        HorizonExhausted: If the window can't hold n commutators.
        InternalMismatch: If the two computations disagree.
    """
    if n < 1:
        raise ValueError(f"ad powers start at 1, got {n=}.")
    iterated = ad_power_iterated(P, omega, n)
    binomial = ad_power_binomial(P, omega, n)
    _agree(iterated, binomial, ad_scale(omega, n), f"(ad C)^{n}")
    return iterated.restrict(binomial.horizon)


def hermitian_recursion(P: CmvPair, omega: BandMatrix, n: int) -> BandMatrix:
    result = omega
    for step in range(n):
        if step % 2 == 0:
            result = bm_sub(
                _sandwich(P.M, result, P.M_dagger), _sandwich(P.L_dagger, result, P.L)
            )
        else:
            result = bm_sub(
                _sandwich(P.L, result, P.L_dagger), _sandwich(P.M_dagger, result, P.M)
            )
    return result


def hermitian_direct(P: CmvPair, omega: BandMatrix, n: int) -> BandMatrix:
    """The defining form, built on top of the plain ad power."""
    m = n // 2
    inner = ad_power(P, omega, n)
    left = right = bm_power(P.C_dagger, m)
    if n % 2:
        left, right = bm_mul(P.L_dagger, left), bm_mul(right, P.M_dagger)
    return _sandwich(left, inner, right)


def hermitian_words(P: CmvPair, n: int) -> list[tuple[int, BandMatrix]]:
    """Signed words (c_k, W_k) with (ad_n C)Ω = Σ_k c_k W_k Ω W_k†.

    For n = 2m the words are C^(m−k), where negative powers are powers of C†. For
    n = 2m + 1 they are M·C^(m−k) for k ≤ m and L†(C†)^(k−m−1) beyond. The sign is
    c_k = (−1)^k C(n, k).
    """
    m = n // 2
    forward = [bm_identity(P.size, P.backend)]
    backward = [forward[0]]
    for _ in range(m):
        forward.append(bm_mul(forward[-1], P.C))
        backward.append(bm_mul(backward[-1], P.C_dagger))
    words = []
    for k in range(n + 1):
        if n % 2 == 0:
            word = forward[m - k] if k <= m else backward[k - m]
        else:
            word = bm_mul(P.M, forward[m - k]) if k <= m else bm_mul(P.L_dagger, backward[k - m - 1])
        words.append(((-1) ** k * comb(n, k), word))
    return words


def hermitian_expansion(P: CmvPair, omega: BandMatrix, n: int) -> BandMatrix:
    """(ad_n C)Ω summed term by term over [`hermitian_words`][cmvlab.adops.hermitian_words]."""
    result = None
    for coeff, word in hermitian_words(P, n):
        term = bm_scale(_sandwich(word, omega, bm_dagger(word)), coeff)
        result = term if result is None else bm_add(result, term)
    assert result is not None
    return result


def hermitian_ad(P: CmvPair, omega: BandMatrix, n: int, *, check: bool = True) -> BandMatrix:
    """The Hermitian ad-operator (ad_n C)Ω.

    Args:
        P: The CMV matrices.
        omega: Input operator.
        n: Order, 0 returns Ω itself.
        check: Also evaluate the defining form and compare. The returned horizon is then
            the one of the defining form, which is the smaller of the two.

    Returns:
        The recursion result. For Hermitian Ω it is Hermitian, for diagonal Ω it is
        (4n−1)-diagonal.

    Raises:
        HorizonExhausted: If the window is too small for order n.
        InternalMismatch: If the two routes disagree.
    """
    if n < 0:
        raise ValueError(f"Order must be nonnegative, got {n=}.")
    result = hermitian_recursion(P, omega, n)
    if check and n:
        direct = hermitian_direct(P, omega, n)
        _agree(result, direct, ad_scale(omega, n), f"(ad_{n} C)")
        result = result.restrict(direct.horizon)
    return result


def ad1_closed_form(P: CmvPair, lambdas: Sequence[Scalar]) -> BandMatrix:
    """(ad_1 C)Λ for a real diagonal Λ = diag(λ_0, λ_1, …) in closed form.

    The result is tridiagonal with a_k = (λ_k − λ_{k+1})ρ_kα_k off the diagonal, in the
    pattern (0,1) = −a_0, (1,2) = ā_1, (2,3) = −a_2, … and Hermitian below, and with
    diagonal b_0, −b_1, b_2, −b_3, … where b_0 = (λ_0 − λ_1)ρ_0² and
    b_k = (λ_{k−1} − λ_k)ρ_{k−1}² + (λ_k − λ_{k+1})ρ_k².
    """
    backend = P.backend
    lam = [backend.scalar(v) for v in lambdas]
    count = min(len(lam) - 1, P.size)
    alphas, rhos = P.alpha.alphas(count + 1), P.alpha.rhos(count + 1)
    diag, upper, lower = [], [], []
    for k in range(count):
        b = (lam[k] - lam[k + 1]) * rhos[k] * rhos[k]
        if k:
            b = b + (lam[k - 1] - lam[k]) * rhos[k - 1] * rhos[k - 1]
        diag.append(b if k % 2 == 0 else -b)
        a = (lam[k] - lam[k + 1]) * rhos[k] * alphas[k]
        upper.append(-a if k % 2 == 0 else a.conjugate())
        lower.append(-a.conjugate() if k % 2 == 0 else a)
    return BandMatrix(
        P.size, {-1: lower, 0: diag, 1: upper}, backend=backend, horizon=count, lower=1, upper=1
    )


def hermitian_relations_check(P: CmvPair, omega: BandMatrix, n: int) -> dict[str, bool]:
    """Verify the algebraic identities of the ad calculus entrywise inside the horizon.

    Checked identities, keyed by name:

    - `binomial_vs_iterated`: both forms of (ad C)^n Ω agree
    - `definition_vs_recursion`: both forms of (ad_n C)Ω agree
    - `word_expansion`: the signed word sum equals (ad_n C)Ω
    - `adjoint_symmetry`: (ad C)^n Ω† = C^n ((ad C)^n Ω)† C^n
    - `adjoint_commutes`: (ad_n C)Ω† = ((ad_n C)Ω)†
    - `transpose`: ((ad_n C)Ω)ᵗ = (−1)^n (ad_n Cᵗ)Ωᵗ
    - `conjugation`: (ad_n C)(LΩM) = L((ad_n Cᵗ)Ω)M for even n, M((ad_n Cᵗ)Ω)L for odd n
    - `factorization`: (ad_n C)Ω = (ad_(n−k) C(k))((ad_k C)Ω) for every 0 ≤ k ≤ n
    - `first_order_factorization`: (ad_(n+1) C)Ω = (ad_n Cᵗ)((ad_1 C)Ω)

    Returns:
        Identity name mapped to whether it holds.
    """
    if n < 1:
        raise ValueError(f"Relations are checked for n ≥ 1, got {n=}.")
    scale = ad_scale(omega, n + 1)
    report: dict[str, bool] = {}
    herm = hermitian_recursion(P, omega, n)

    def record(name: str, first: BandMatrix, second: BandMatrix):
        report[name] = bm_equal(first, second, scale)
        if not report[name]:
            logger.info("identity %s fails for n=%d", name, n)

    record("binomial_vs_iterated", ad_power_iterated(P, omega, n), ad_power_binomial(P, omega, n))
    record("definition_vs_recursion", herm, hermitian_direct(P, omega, n))
    record("word_expansion", herm, hermitian_expansion(P, omega, n))

    omega_dagger = bm_dagger(omega)
    power_n = P.power(n)
    record(
        "adjoint_symmetry",
        ad_power_iterated(P, omega_dagger, n),
        _sandwich(power_n, bm_dagger(ad_power_iterated(P, omega, n)), power_n),
    )
    record("adjoint_commutes", hermitian_recursion(P, omega_dagger, n), bm_dagger(herm))

    Pt = P.transposed
    record(
        "transpose",
        bm_transpose(herm),
        bm_scale(hermitian_recursion(Pt, bm_transpose(omega), n), (-1) ** n),
    )
    outer = hermitian_recursion(P, _sandwich(P.L, omega, P.M), n)
    inner = hermitian_recursion(Pt, omega, n)
    if n % 2 == 0:
        record("conjugation", outer, _sandwich(P.L, inner, P.M))
    else:
        record("conjugation", outer, _sandwich(P.M, inner, P.L))

    factorized = True
    for k in range(n + 1):
        staged = hermitian_recursion(P.at_parity(k), hermitian_recursion(P, omega, k), n - k)
        factorized &= bm_equal(herm, staged, scale)
    report["factorization"] = factorized
    record(
        "first_order_factorization",
        hermitian_recursion(P, omega, n + 1),
        hermitian_recursion(Pt, hermitian_recursion(P, omega, 1), n),
    )
    return report


def symbol_matrix(P: CmvPair, f: LaurentPoly) -> BandMatrix:
    """f(C) = Σ_d f_d C^d, negative degrees through powers of C†."""
    backend = P.backend
    result = bm_scale(bm_identity(P.size, backend), 0)
    for degree, coeff in f:
        result = bm_add(result, bm_scale(P.power(degree), coeff))
    return result


def centralizer_symbol(P: CmvPair, omega: BandMatrix) -> LaurentPoly:
    """Recover f with Ω = f(C) for Ω in the centralizer of C.

    The symbol is read off the first row, f(z) = Σ_k Ω_{0,k} x_k(z). A (2n+1)-diagonal Ω
    has a symbol supported in z^(−m)..z^m with m = ⌊n/2⌋.

    Raises:
        NotInCentralizer: If [C, Ω] ≠ 0 inside the horizon.
        ReconstructionMismatch: If f(C) ≠ Ω inside the horizon or the support is too
            wide for the bandwidth of Ω.
    """
    scale = ad_scale(omega, 1)
    if not bm_is_zero(bm_commutator(P.C, omega), scale):
        raise NotInCentralizer("Ω does not commute with C inside the horizon.")
    band = max(omega.lower, omega.upper)
    if omega.horizon <= band:
        raise ReconstructionMismatch(
            f"First row of Ω is not trusted up to column {band}, widen the window."
        )
    olp = compute_olp(P.alpha, band + 1)
    symbol = LaurentPoly(tau=P.backend.tau)
    for k in range(band + 1):
        if coeff := omega[0, k]:
            symbol = symbol + olp.x[k] * coeff
    if not bm_equal(symbol_matrix(P, symbol), omega, scale):
        raise ReconstructionMismatch(f"{symbol!r} evaluated at C does not reproduce Ω.")
    if (support := symbol.support) is not None:
        m = band // 2
        if support[0] < -m or support[1] > m:
            raise ReconstructionMismatch(
                f"Symbol support {support} exceeds ±{m} for a {2 * band + 1}-diagonal Ω."
            )
    return symbol


def ad_integrate(P: CmvPair, omega: BandMatrix, n: int) -> Scalar:
    """The constant a with (ad_n C)Ω = a·I for tridiagonal Ω with (ad C)^(n+1) Ω = 0.

    Raises:
        NotConstantMultiple: If (ad_n C)Ω is not a multiple of the identity.
    """
    if max(omega.lower, omega.upper) > 1:
        raise ValueError(f"Expected a tridiagonal operator, got {omega!r}.")
    image = hermitian_ad(P, omega, n)
    a = image[0, 0]
    target = bm_scale(bm_identity(P.size, P.backend), a)
    if not bm_equal(image, target, ad_scale(omega, n)):
        raise NotConstantMultiple(f"(ad_{n} C)Ω is not a multiple of the identity.")
    return a


def cascade(P: CmvPair, omega: BandMatrix, n: int) -> list[BandMatrix]:
    """The iterates Ω(0) = Ω, Ω(k+1) = (ad_1 C(k))Ω(k), k < n."""
    iterates = [omega]
    for k in range(n):
        iterates.append(hermitian_recursion(P.at_parity(k), iterates[-1], 1))
    return iterates


def offdiagonal_extent(a: BandMatrix, scale: float = 1.0) -> int:
    """1 + the largest index touched by a nonzero trusted off-diagonal entry, 0 for a
    diagonal window. An almost diagonal operator has an extent that does not grow with
    the window."""
    extent = 0
    for i, j, value in a.trusted():
        if i != j and not a.backend.is_zero(value, scale):
            extent = max(extent, i + 1, j + 1)
    return extent


def is_almost_diagonal(a: BandMatrix, head: int, scale: float = 1.0) -> bool:
    """True if every nonzero trusted off-diagonal entry lies in the leading head×head
    block."""
    return offdiagonal_extent(a, scale) <= head
