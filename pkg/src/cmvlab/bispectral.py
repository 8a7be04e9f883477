"""
Linear ad-condition systems and their solutions.

The unknown of an ad-condition (ad_n C)Ω = 0 is a Hermitian band matrix with a sparsity
pattern, parametrized over the reals: a diagonal entry is one real parameter, an
off-diagonal pair (i, j), (j, i) contributes its real and its imaginary part. Every
parameter is pushed through the word expansion of the Hermitian ad-operator, and the
real and imaginary parts of the trusted image entries become the rows of a real linear
system. Its kernel is computed exactly over the rationals with sympy's `DomainMatrix`,
or by singular values with numpy for the float backend.

Finite sections have a boundary. Rows are only harvested where every contributing
unknown lies inside the pattern, parameters that no harvested row sees are pinned to
zero, and the reported dimension counts kernel vectors on the core of the pattern,
where every equation that touches a parameter is present.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from typing import Callable, Iterator, Literal, Sequence

import numpy as np
from sympy import QQ
from sympy.polys.matrices import DomainMatrix

from cmvlab.adops import CmvPair, ad_power, ad_scale, hermitian_ad, hermitian_words
from cmvlab.bandop import (
    BandMatrix,
    bm_apply,
    bm_diag,
    bm_diagonal,
    bm_effective_band,
    bm_equal,
    bm_identity,
    bm_is_zero,
    bm_mul,
    bm_power,
    bm_scale,
    bm_sub,
)
from cmvlab.cmv import VerblunskySeq, compute_olp, olp_degree
from cmvlab.core import (
    Backend,
    DiffOperator,
    ExactBackend,
    LaurentPoly,
    Real,
    Scalar,
    op_apply,
)
from cmvlab.misc import (
    Classification,
    CmvLabError,
    InternalMismatch,
    NoSolution,
    PatternKind,
    RankAmbiguous,
    WindowTooSmall,
    ZeroArgument,
)

logger = logging.getLogger(__name__)

Parameter = tuple[int, int, Literal["re", "im"]]
"""A real parameter of a Hermitian unknown: position (i, j) with i ≤ j and part."""
RowLabel = tuple[int, int, Literal["re", "im"]]
"""An equation: real or imaginary part of image entry (a, b), a ≤ b."""


@dataclass(frozen=True)
class SolvePattern:
    """Sparsity pattern of a Hermitian unknown.

    Args:
        kind: `diagonal` and `tridiagonal` unknowns, or their `almost-` variants, which
            add a full Hermitian head block of size `head`.
        size: Truncation length M, entries with an index ≥ M are zero.
        head: N0, only read by the almost-patterns.
    """

    kind: PatternKind
    size: int
    head: int = 0

    def __post_init__(self):
        if self.size < 1:
            raise ValueError(f"Pattern size must be positive, got {self.size=}.")
        if self.kind not in ("diagonal", "almost-diagonal", "tridiagonal", "almost-tridiagonal"):
            raise ValueError(f"Unknown pattern {self.kind=}.")
        if not 0 <= self.head < self.size:
            raise ValueError(f"Head block must satisfy 0 ≤ N0 < M, got {self.head=}, {self.size=}.")

    @property
    def tridiagonal(self) -> bool:
        return self.kind.endswith("tridiagonal")

    @property
    def almost(self) -> bool:
        return self.kind.startswith("almost")

    def positions(self) -> list[tuple[int, int]]:
        """Upper triangle (i ≤ j) of the pattern."""
        cells = {(i, i) for i in range(self.size)}
        if self.tridiagonal:
            cells.update((i, i + 1) for i in range(self.size - 1))
        if self.almost:
            cells.update((i, j) for i in range(self.head) for j in range(i + 1, self.head))
        return sorted(cells)

    def parameters(self) -> list[Parameter]:
        params: list[Parameter] = []
        for i, j in self.positions():
            params.append((i, j, "re"))
            if i != j:
                params.append((i, j, "im"))
        return params

    @property
    def reach(self) -> int:
        """Largest offset j − i of the pattern."""
        return max(j - i for i, j in self.positions())


@dataclass
class LinearSystem:
    """Real linear system of an ad-condition on a patterned unknown.

    Attributes:
        P: The CMV matrices the system was assembled with.
        order: Order n of the ad-condition.
        pattern: The unknown's pattern.
        params: The active parameters, one per column.
        pinned: Parameters that no harvested row sees, fixed to zero.
        labels: One label per row.
        rows: Sparse rows, row index -> column index -> value.
        reach: R, image entries (a, b) with a ≤ b < R are harvested.
        word_band: Bandwidth w of the words of the expansion.
        core: Columns of parameters with max(i, j) < R − w.
    """

    P: CmvPair
    order: int
    pattern: SolvePattern
    params: list[Parameter]
    pinned: list[Parameter]
    labels: list[RowLabel]
    rows: dict[int, dict[int, Real]]
    reach: int
    word_band: int
    core: list[int] = field(default_factory=list)

    @property
    def backend(self) -> Backend:
        return self.P.backend

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.labels), len(self.params)

    def image(self, values: Sequence[Real]) -> dict[int, Real]:
        """The system applied to a parameter vector, as row index -> value."""
        out: dict[int, Real] = {}
        for r, row in self.rows.items():
            total = sum(v * values[c] for c, v in row.items())
            if total:
                out[r] = total
        return out

    def dense(self) -> np.ndarray:
        matrix = np.zeros(self.shape)
        for r, row in self.rows.items():
            for c, value in row.items():
                matrix[r, c] = float(value)
        return matrix

    def to_matrix(self, values: Sequence[Real]) -> BandMatrix:
        """The Hermitian band matrix with the given parameters, trusted up to M."""
        backend = self.backend
        i_unit = backend.from_parts(0, 1)
        entries: dict[tuple[int, int], Scalar] = {}

        def put(i: int, j: int, value: Scalar):
            entries[i, j] = entries.get((i, j), backend.zero) + value

        for (i, j, part), value in zip(self.params, values):
            if not value:
                continue
            v = backend.from_parts(value, 0)
            if i == j:
                put(i, i, v)
            elif part == "re":
                put(i, j, v)
                put(j, i, v)
            else:
                put(i, j, v * i_unit)
                put(j, i, -v * i_unit)
        return BandMatrix.from_entries(
            self.P.size, entries, backend=backend, horizon=self.pattern.size
        )


@dataclass(frozen=True)
class SolutionBasis:
    """Solutions of an ad-condition.

    Attributes:
        basis: Hermitian solutions; the canonical I, Λ_Leb, Λ_Leb², … when the space is
            classified as trivial or Lebesgue.
        dimension: Dimension of the solution space on the core of the pattern.
        classification: `trivial` for span{I}, `lebesgue` for the span of the powers of
            the Lebesgue diagonal, `other` for anything else.
        kernel_dimension: Dimension of the raw finite-section kernel.
        horizon: Smallest horizon any basis element was verified on.
    """

    basis: tuple[BandMatrix, ...]
    dimension: int
    classification: Classification
    order: int
    pattern: SolvePattern
    kernel_dimension: int
    horizon: int


@dataclass(frozen=True)
class KernelCheckReport:
    """Outcome of [`verify_kernel_basis`][cmvlab.bispectral.verify_kernel_basis].

    Attributes:
        derivative_identities: k -> whether (C − zI)x^(k)(z) = k x^(k−1)(z) on trusted
            rows, k < n.
        binomial_expansion: Whether (C − zI)^n = Σ_k (−1)^k C(n,k) z^k C^(n−k).
        kernel_band: Bandwidths of K(n).
        product_band: Bandwidths of Γ(n) = K(n)(C − zI)^n, at most (n, n).
        gamma: Top diagonal of Γ(n), as computed.
        gamma_expected: Its closed form.
        horizon: Trust horizon of Γ(n).
        delta: Top diagonal of (ad_n C) applied to the tridiagonal tail, if one was given.
        delta_expected: Its closed form.
    """

    order: int
    z: Scalar
    derivative_identities: dict[int, bool]
    binomial_expansion: bool
    kernel_band: tuple[int, int]
    product_band: tuple[int, int]
    gamma: list[Scalar]
    gamma_expected: list[Scalar]
    gamma_matches: bool
    gamma_nonzero: bool
    horizon: int
    delta: list[Scalar] | None = None
    delta_expected: list[Scalar] | None = None
    delta_matches: bool | None = None

    @property
    def passed(self) -> bool:
        return (
            all(self.derivative_identities.values())
            and self.binomial_expansion
            and max(self.product_band) <= self.order
            and self.gamma_matches
            and self.gamma_nonzero
            and self.delta_matches is not False
        )


def lebesgue_solution(size: int, backend: Backend | None = None, window: int | None = None) -> BandMatrix:
    """diag(0, −1, 1, −2, 2, …), the eigenvalues of z d/dz on the Lebesgue polynomials.

    Equivalently λ_k = ((−1)^k (1 + 2k) − 1)/4.
    """
    if size < 1:
        raise ValueError(f"Need at least one eigenvalue, got {size=}.")
    backend = backend or ExactBackend()
    return bm_diag([olp_degree(k) for k in range(size)], backend, window)


def _word_columns(
    word: BandMatrix, count: int, limit: int
) -> list[list[tuple[int, Scalar, Scalar]]]:
    """Per column p < count: the (row, value, conj value) of nonzero entries in rows
    below `limit`."""
    out = []
    for p in range(count):
        column = word.column(p)
        out.append([(a, v, v.conjugate()) for a, v in sorted(column.items()) if a < limit])
    return out


def assemble_system(
    alpha: VerblunskySeq, n: int, pattern: SolvePattern, window: int
) -> LinearSystem:
    """Real linear system whose kernel is the set of patterned Hermitian solutions of
    (ad_n C)Ω = 0.

    Raises:
        WindowTooSmall: If the trusted rows are fewer than twice the unknowns, or the
            pattern doesn't fit into the window.
    """
    if n < 1:
        raise ValueError(f"Ad-conditions start at order 1, got {n=}.")
    if pattern.size > window:
        raise WindowTooSmall(f"Pattern of size {pattern.size} exceeds the window {window}.")
    P = CmvPair.build(alpha, window)
    backend = P.backend
    words = hermitian_words(P, n)
    band = n
    horizon = min(word.horizon for _, word in words)
    reach = min(pattern.size, horizon) - band
    spread = pattern.reach + 2 * band
    if reach - band <= 0:
        raise WindowTooSmall(
            f"No trusted equations for order {n} with M={pattern.size} in a window of {window}."
        )

    columns = [(c, _word_columns(word, pattern.size, reach)) for c, word in words]
    i_unit = backend.from_parts(0, 1)
    images: list[dict[tuple[int, int], Scalar]] = []
    for i, j, part in pattern.parameters():
        if i == j:
            pairs = [(i, i, backend.one)]
        elif part == "re":
            pairs = [(i, j, backend.one), (j, i, backend.one)]
        else:
            pairs = [(i, j, i_unit), (j, i, -i_unit)]
        image: dict[tuple[int, int], Scalar] = {}
        for coeff, cols in columns:
            for p, q, e in pairs:
                weight = e * coeff
                for a, w_ap, _ in cols[p]:
                    scaled = weight * w_ap
                    for b, _, w_bq in cols[q]:
                        if a <= b <= a + spread:
                            image[a, b] = image[a, b] + scaled * w_bq if (a, b) in image else scaled * w_bq
        images.append(image)

    labels: list[RowLabel] = []
    index: dict[RowLabel, int] = {}
    for a in range(reach):
        for b in range(a, min(reach, a + spread + 1)):
            for part in ("re", "im") if a < b else ("re",):
                index[a, b, part] = len(labels)  # type: ignore[index]
                labels.append((a, b, part))  # type: ignore[arg-type]

    params: list[Parameter] = []
    pinned: list[Parameter] = []
    rows: dict[int, dict[int, Real]] = {}
    for param, image in zip(pattern.parameters(), images):
        column: dict[int, Real] = {}
        for (a, b), value in image.items():
            re, im = backend.parts(value)
            if re:
                column[index[a, b, "re"]] = re
            if im and a < b:
                column[index[a, b, "im"]] = im
        if not column:
            pinned.append(param)
            continue
        c = len(params)
        params.append(param)
        for r, value in column.items():
            rows.setdefault(r, {})[c] = value

    if len(labels) < 2 * len(params):
        raise WindowTooSmall(
            f"{len(labels)} trusted equations for {len(params)} unknowns, need at least "
            f"twice as many. Widen the window or shrink the pattern."
        )
    core = [c for c, (i, j, _) in enumerate(params) if max(i, j) < reach - band]
    logger.debug(
        "assembled %d x %d system for n=%d, %s pattern of size %d (%d pinned, %d core)",
        len(labels),
        len(params),
        n,
        pattern.kind,
        pattern.size,
        len(pinned),
        len(core),
    )
    return LinearSystem(
        P=P,
        order=n,
        pattern=pattern,
        params=params,
        pinned=pinned,
        labels=labels,
        rows=rows,
        reach=reach,
        word_band=band,
        core=core,
    )


def _to_qq(value: Real):
    value = Fraction(value)
    return QQ(value.numerator, value.denominator)


def _from_qq(value) -> Fraction:
    return Fraction(int(value.numerator), int(value.denominator))


def _domain_matrix(rows: dict[int, dict[int, Real]], shape: tuple[int, int]) -> DomainMatrix:
    data = {r: {c: _to_qq(v) for c, v in row.items() if v} for r, row in rows.items()}
    return DomainMatrix({r: row for r, row in data.items() if row}, shape, QQ)


def _exact_kernel(system: LinearSystem) -> list[list[Fraction]]:
    nullspace = _domain_matrix(system.rows, system.shape).nullspace()
    return [[_from_qq(v) for v in row] for row in nullspace.to_list()]


def _exact_rank(vectors: Sequence[Sequence[Real]]) -> int:
    if not vectors or not vectors[0]:
        return 0
    rows = {r: dict(enumerate(v)) for r, v in enumerate(vectors)}
    return _domain_matrix(rows, (len(vectors), len(vectors[0]))).rank()


def _singular_rank(matrix: np.ndarray, tau_rank: float) -> tuple[int, np.ndarray]:
    """Numerical rank with threshold τ_rank·σ_max, plus the right singular vectors.

    Raises:
        RankAmbiguous: If some singular value lies within a factor of 10 of the threshold.
    """
    if matrix.size == 0:
        return 0, np.eye(matrix.shape[1])
    _, sigma, vh = np.linalg.svd(matrix)
    if not sigma.size or sigma[0] == 0:
        return 0, vh
    threshold = tau_rank * sigma[0]
    if np.any((sigma > threshold / 10) & (sigma < threshold * 10)):
        raise RankAmbiguous(
            f"Singular values {sigma[(sigma > threshold / 10) & (sigma < threshold * 10)]} "
            f"straddle the rank threshold {threshold:.3g}, enlarge the window or use the "
            f"exact backend."
        )
    rank = int(np.sum(sigma > threshold))
    logger.debug("numerical rank %d of %s, threshold %.3g", rank, matrix.shape, threshold)
    return rank, vh


def _rank(backend: Backend, vectors: list[list[Real]], tau_rank: float) -> int:
    if not vectors:
        return 0
    if backend.name == "exact":
        return _exact_rank(vectors)
    return _singular_rank(np.array(vectors, dtype=float), tau_rank)[0]


def _canonical(system: LinearSystem, dimension: int) -> list[list[Real]]:
    """Parameter vectors of I, Λ_Leb, …, Λ_Leb^(dimension−1)."""
    backend = system.backend
    one = backend.real(1)
    vectors = []
    for power in range(max(dimension, 1)):
        vector = []
        for i, j, _ in system.params:
            vector.append(one * olp_degree(i) ** power if i == j else one * 0)
        vectors.append(vector)
    return vectors


def nullspace(system: LinearSystem, tau_rank: float = 1e-8) -> SolutionBasis:
    """Kernel of an assembled system as verified Hermitian solutions.

    Raises:
        RankAmbiguous: Float backend, if the rank decision is unclear.
        InternalMismatch: If a basis element fails the direct check with the Hermitian
            ad-operator.
    """
    backend = system.backend
    if backend.name == "exact":
        kernel: list[list[Real]] = _exact_kernel(system)  # type: ignore[assignment]
    else:
        rank, vh = _singular_rank(system.dense(), tau_rank)
        kernel = [list(row) for row in vh[rank:]]
    core = system.core

    def on_core(vectors: list[list[Real]]) -> list[list[Real]]:
        return [[v[c] for c in core] for v in vectors]

    dimension = _rank(backend, on_core(kernel), tau_rank)
    canonical = _canonical(system, dimension)
    combined = _rank(backend, on_core(kernel + canonical), tau_rank)
    classification: Classification = "other"
    if combined == dimension and _rank(backend, on_core(canonical), tau_rank) == dimension:
        classification = "trivial" if dimension == 1 else "lebesgue"
    logger.debug(
        "kernel of dimension %d, %d on the core, classified %s",
        len(kernel),
        dimension,
        classification,
    )

    if classification == "other":
        chosen: list[list[Real]] = []
        for vector in kernel:
            if _rank(backend, on_core(chosen + [vector]), tau_rank) > len(chosen):
                chosen.append(vector)
    else:
        chosen = canonical[:dimension]

    P, n = system.P, system.order
    basis = []
    horizon = P.size
    for vector in chosen:
        matrix = system.to_matrix(vector)
        image = hermitian_ad(P, matrix, n)
        if not bm_is_zero(image, ad_scale(matrix, n)):
            raise InternalMismatch(f"A kernel vector of the order {n} system is no solution.")
        horizon = min(horizon, image.horizon)
        basis.append(matrix)
    return SolutionBasis(
        basis=tuple(basis),
        dimension=dimension,
        classification=classification,
        order=n,
        pattern=system.pattern,
        kernel_dimension=len(kernel),
        horizon=horizon,
    )


def solve(
    alpha: VerblunskySeq,
    n: int,
    pattern: SolvePattern,
    window: int,
    tau_rank: float = 1e-8,
) -> SolutionBasis:
    """Assemble and solve, with an exact cross-check of float rank decisions.

    If the sequence can be represented exactly, a float solve is repeated with the exact
    backend.

    Raises:
        RankAmbiguous: If the float and the exact dimension differ.
    """
    result = nullspace(assemble_system(alpha, n, pattern, window), tau_rank)
    if alpha.backend.name == "float":
        try:
            exact = alpha.with_backend(ExactBackend())
        except (TypeError, ValueError, CmvLabError):
            logger.debug("no exact counterpart for %r, skipping cross-check", alpha)
        else:
            reference = nullspace(assemble_system(exact, n, pattern, window))
            if reference.dimension != result.dimension:
                raise RankAmbiguous(
                    f"Float dimension {result.dimension} differs from the exact dimension "
                    f"{reference.dimension}."
                )
    return result


def stable_dimension(
    alpha: VerblunskySeq,
    n: int,
    pattern: SolvePattern,
    window: int,
    tau_rank: float = 1e-8,
) -> int:
    """Solution dimension, confirmed by a solve with the pattern and window doubled.

    Raises:
        RankAmbiguous: If doubling changes the dimension.
    """
    first = solve(alpha, n, pattern, window, tau_rank).dimension
    doubled = SolvePattern(pattern.kind, 2 * pattern.size, pattern.head)
    second = solve(alpha, n, doubled, 2 * window, tau_rank).dimension
    if first != second:
        raise RankAmbiguous(
            f"Dimension {first} at M={pattern.size} but {second} at M={doubled.size}."
        )
    return first


def _row_images(omega: BandMatrix, olp_x: Sequence[LaurentPoly], rows: int) -> list[LaurentPoly]:
    images = []
    for n in range(rows):
        image = LaurentPoly(tau=omega.backend.tau)
        for j in range(max(n - omega.lower, 0), n + omega.upper + 1):
            if value := omega[n, j]:
                image = image + olp_x[j] * value
        images.append(image)
    return images


def _degree_bounds(
    xs: Sequence[LaurentPoly], images: Sequence[LaurentPoly], order: int, rows: int
) -> dict[int, tuple[int, int]]:
    """Initial degree window of every D_k, from lo/hi of (Ωx)_n minus lo/hi of x_n^(k)."""
    bounds = {}
    for k in range(order + 1):
        lo = hi = None
        for n in range(rows):
            target, source = images[n].support, xs[n].derivative(k).support
            if target is None or source is None:
                continue
            low = min(target[0] - source[0], target[1] - source[1])
            high = max(target[0] - source[0], target[1] - source[1])
            lo = low if lo is None else min(lo, low)
            hi = high if hi is None else max(hi, high)
        if lo is not None and hi is not None:
            bounds[k] = (lo, hi)
    return bounds


def _exact_solve(
    rows: dict[int, dict[int, Real]], rhs: dict[int, Real], shape: tuple[int, int]
) -> list[Fraction] | None:
    """A particular solution of rows·u = rhs, `None` if inconsistent."""
    nrows, ncols = shape
    augmented = {r: dict(row) for r, row in rows.items()}
    for r, value in rhs.items():
        augmented.setdefault(r, {})[ncols] = value
    rref, pivots = _domain_matrix(augmented, (nrows, ncols + 1)).rref()
    if ncols in pivots:
        return None
    dense = rref.to_list()
    solution = [Fraction(0)] * ncols
    for r, p in enumerate(pivots):
        solution[p] = _from_qq(dense[r][ncols])
    return solution


def _fit_operator(
    backend: Backend,
    xs: Sequence[LaurentPoly],
    images: Sequence[LaurentPoly],
    bounds: dict[int, tuple[int, int]],
    rows: int,
) -> DiffOperator | None:
    unknowns = [(k, d) for k, (lo, hi) in sorted(bounds.items()) for d in range(lo, hi + 1)]
    if not unknowns:
        return DiffOperator([])
    derivatives = {k: [xs[n].derivative(k) for n in range(rows)] for k in bounds}
    equations: dict[tuple[int, int], dict[int, Scalar]] = {}
    targets: dict[tuple[int, int], Scalar] = {}
    for n in range(rows):
        for u, (k, d) in enumerate(unknowns):
            for e, value in derivatives[k][n]:
                equations.setdefault((n, e + d), {})[u] = value
        for e, value in images[n]:
            targets[n, e] = value
            equations.setdefault((n, e), {})

    # (u + iv)·c = t splits into Re: u·Re c − v·Im c = Re t, Im: u·Im c + v·Re c = Im t
    real_rows: dict[int, dict[int, Real]] = {}
    rhs: dict[int, Real] = {}
    for r, (key, coeffs) in enumerate(equations.items()):
        re_row, im_row = {}, {}
        for u, value in coeffs.items():
            c_re, c_im = backend.parts(value)
            re_row[2 * u], re_row[2 * u + 1] = c_re, -c_im
            im_row[2 * u], im_row[2 * u + 1] = c_im, c_re
        real_rows[2 * r], real_rows[2 * r + 1] = re_row, im_row
        if key in targets:
            rhs[2 * r], rhs[2 * r + 1] = backend.parts(targets[key])
    shape = (2 * len(equations), 2 * len(unknowns))

    if backend.name == "exact":
        solution = _exact_solve(real_rows, rhs, shape)
        if solution is None:
            return None
    else:
        matrix = np.zeros(shape)
        for r, row in real_rows.items():
            for c, value in row.items():
                matrix[r, c] = value
        vector = np.zeros(shape[0])
        for r, value in rhs.items():
            vector[r] = value
        fitted = np.linalg.lstsq(matrix, vector, rcond=None)[0]
        # rounding noise relative to the whole system, not to each coefficient
        cutoff = backend.tau * max(1.0, float(np.max(np.abs(fitted), initial=0.0)))
        fitted[np.abs(fitted) <= cutoff] = 0.0
        solution = [float(v) for v in fitted]

    coeffs: dict[int, dict[int, Scalar]] = {}
    for u, (k, d) in enumerate(unknowns):
        coeffs.setdefault(k, {})[d] = backend.from_parts(solution[2 * u], solution[2 * u + 1])
    order = max(bounds)
    return DiffOperator(LaurentPoly(coeffs.get(k, {}), tau=backend.tau) for k in range(order + 1))


def _validates(
    D: DiffOperator,
    xs: Sequence[LaurentPoly],
    images: Sequence[LaurentPoly],
    backend: Backend,
) -> bool:
    for x, image in zip(xs, images):
        result = op_apply(D, x)
        if backend.name == "exact":
            if result != image:
                return False
        else:
            scale = max([1.0] + [abs(c) for _, c in image])
            if not result.isclose(image, backend.tau * scale * 1e3):
                return False
    return True


def reconstruct_operator(
    alpha: VerblunskySeq, omega: BandMatrix, r: int, window: int
) -> DiffOperator:
    """The differential operator D of minimal order ≤ r with D x = Ω x.

    The coefficients D_k are fitted on the first rows, with degree windows estimated from
    the supports of both sides, and validated on further rows. A failed validation widens
    the degree windows by 2 once before the next order is tried.

    Raises:
        NoSolution: If (ad C)^(r+1) Ω ≠ 0, or no operator of order ≤ r validates.
        WindowTooSmall: If Ω doesn't have enough trusted rows.
    """
    if r < 0:
        raise ValueError(f"Order bound must be nonnegative, got {r=}.")
    backend = alpha.backend
    P = CmvPair.build(alpha, window)
    if omega.size != window:
        omega = BandMatrix(
            window,
            {d: v for d, v in omega.diagonals.items()},
            backend=backend,
            horizon=omega.horizon,
            lower=omega.lower,
            upper=omega.upper,
        )
    if not bm_is_zero(ad_power(P, omega, r + 1), ad_scale(omega, r + 1)):
        raise NoSolution(f"(ad C)^{r + 1} Ω does not vanish, no operator of order ≤ {r}.")

    check = 4 * (r + 1) + 12
    fit = check - 4
    if omega.horizon - omega.upper < check:
        raise WindowTooSmall(
            f"Reconstruction needs {check} trusted rows of Ω, only "
            f"{omega.horizon - omega.upper} available."
        )
    xs = compute_olp(alpha, check + omega.upper + 1).x
    images = _row_images(omega, xs, check)
    for order in range(r + 1):
        bounds = _degree_bounds(xs, images, order, fit)
        for widen in (0, 2):
            widened = {k: (lo - widen, hi + widen) for k, (lo, hi) in bounds.items()}
            D = _fit_operator(backend, xs, images, widened, fit)
            if D is not None and _validates(D, xs[:check], images, backend):
                logger.debug("reconstructed an operator of order %d", D.order)
                return D
            logger.debug("order %d failed with degree bounds %s", order, widened)
    raise NoSolution(f"No differential operator of order ≤ {r} reproduces Ω x.")


def kernel_factor(P: CmvPair, n: int) -> BandMatrix:
    """K(n): (C†)^m for n = 2m and L†(C†)^m for n = 2m + 1."""
    factor = bm_power(P.C, -(n // 2))
    return bm_mul(P.L_dagger, factor) if n % 2 else factor


def _rho_product(alpha: VerblunskySeq, start: int, stop: int) -> Scalar:
    product = alpha.backend.one
    for j in range(start, stop):
        product = product * alpha.rho(j)
    return product


def verify_kernel_basis(
    alpha: VerblunskySeq,
    z: Scalar,
    n: int,
    window: int,
    tail: Sequence[Scalar] | None = None,
) -> KernelCheckReport:
    """Check that x(z), x'(z), …, x^(n−1)(z) span ker(C − zI)^n on trusted rows.

    The derivative vectors satisfy (C − zI)x^(k) = k x^(k−1), and K(n)(C − zI)^n is a
    (2n+1)-diagonal matrix whose top diagonal

        γ_k = ρ_k⋯ρ_(k+n−1)                 k ≡ n (mod 2)
        γ_k = (−1)^n z^n ρ_k⋯ρ_(k+n−1)      otherwise

    never vanishes. With a `tail` λ_0, λ_1, … placed at (j, j+1) and conjugated below,
    the top diagonal (offset 2n+1) of the Hermitian ad-operator applied to it is

        δ_k = ±ρ_k⋯ρ_(k+n−1) λ_(k+n) ρ_(k+n+1)⋯ρ_(k+2n),

    with sign + for even n, and for odd n + at odd k and − at even k.

    Raises:
        ZeroArgument: If z = 0.
    """
    backend = alpha.backend
    z = backend.scalar(z)
    if not z:
        raise ZeroArgument("The kernel of C − zI is only studied for z ≠ 0.")
    if n < 1:
        raise ValueError(f"Order must be at least 1, got {n=}.")
    P = CmvPair.build(alpha, window)
    I = bm_identity(window, backend)
    shifted = bm_sub(P.C, bm_scale(I, z))
    scale = float(max(abs(z), 1.0)) ** n * 2.0**n

    olp = compute_olp(alpha, window)
    vectors = [olp.evaluate(z, k)[:window] for k in range(n)]
    derivative_identities = {}
    for k in range(n):
        image = bm_apply(shifted, vectors[k])
        expected = [k * v for v in vectors[k - 1]] if k else [backend.zero] * len(image)
        derivative_identities[k] = all(
            backend.is_zero(a - b, scale * max(abs(b), 1.0)) for a, b in zip(image, expected)
        )

    power = bm_power(shifted, n)
    binomial = bm_scale(I, 0)
    z_power = backend.one
    for k in range(n + 1):
        term = bm_scale(bm_power(P.C, n - k), (-1) ** k * comb(n, k) * z_power)
        binomial = binomial + term
        z_power = z_power * z
    binomial_expansion = bm_equal(power, binomial, scale)

    K = kernel_factor(P, n)
    gamma_matrix = bm_mul(K, power)
    gamma = bm_diagonal(gamma_matrix, n)
    z_n = z**n
    gamma_expected = []
    for k in range(len(gamma)):
        rho = _rho_product(alpha, k, k + n)
        gamma_expected.append(rho if (k - n) % 2 == 0 else (-1) ** n * z_n * rho)
    gamma_matches = all(backend.is_zero(a - b, scale) for a, b in zip(gamma, gamma_expected))
    gamma_nonzero = all(not backend.is_zero(g, scale) for g in gamma)

    delta = delta_expected = delta_matches = None
    if tail is not None:
        values = [backend.scalar(v) for v in tail]
        omega = BandMatrix(
            window,
            {1: values, -1: [v.conjugate() for v in values]},
            backend=backend,
            horizon=len(values),
            lower=1,
            upper=1,
        )
        image = hermitian_ad(P, omega, n)
        top = bm_diagonal(image, 2 * n + 1)
        count = min(len(top), len(values) - n)
        delta = top[:count]
        delta_expected = []
        for k in range(count):
            sign = 1 if n % 2 == 0 or k % 2 else -1
            delta_expected.append(
                sign
                * _rho_product(alpha, k, k + n)
                * values[k + n]
                * _rho_product(alpha, k + n + 1, k + 2 * n + 1)
            )
        tail_scale = scale * max([1.0] + [abs(v) for v in values])
        beyond = max(bm_effective_band(image, tail_scale)) <= 2 * n + 1
        delta_matches = beyond and all(
            backend.is_zero(a - b, tail_scale) for a, b in zip(delta, delta_expected)
        )

    return KernelCheckReport(
        order=n,
        z=z,
        derivative_identities=derivative_identities,
        binomial_expansion=binomial_expansion,
        kernel_band=bm_effective_band(K),
        product_band=bm_effective_band(gamma_matrix, scale),
        gamma=gamma,
        gamma_expected=gamma_expected,
        gamma_matches=gamma_matches,
        gamma_nonzero=gamma_nonzero,
        horizon=gamma_matrix.horizon,
        delta=delta,
        delta_expected=delta_expected,
        delta_matches=delta_matches,
    )


@dataclass(frozen=True)
class TableEquation:
    """One difference equation of a diagonal of (ad_n C)Λ = 0, as residual."""

    offset: int
    label: str
    residual: Scalar


@dataclass(frozen=True)
class TableRow:
    """Cumulative equivalence for one diagonal offset d.

    Attributes:
        equations_hold: All equations of the diagonals ≥ d are satisfied.
        entries_vanish: All trusted entries of the diagonals ≥ d are zero.
    """

    offset: int
    equations_hold: bool
    entries_vanish: bool


def _table_families(
    n: int,
) -> Iterator[tuple[int, str, int, Callable[..., Scalar]]]:
    """(offset, label, first k, residual builder) of the difference equations.

    Builders take the eigenvalues λ, the coefficients α and k. Fixed equations are
    families with a single k.
    """
    if n == 2:
        yield 3, "(λ[k+1]−λ[k])α[k]", 1, lambda l, a, k: (l[k + 1] - l[k]) * a[k]
        yield 2, "(λ[1]−λ[0])α[0]", -1, lambda l, a, k: (l[1] - l[0]) * a[0]
        yield 1, "(λ[2]−λ[0])α[0]", -1, lambda l, a, k: (l[2] - l[0]) * a[0]
        yield 1, "(λ[k+2]−λ[k−1])α[k]", 1, lambda l, a, k: (l[k + 2] - l[k - 1]) * a[k]
        yield 0, "λ[2]−2λ[0]+λ[1]", -1, lambda l, a, k: l[2] - 2 * l[0] + l[1]
        yield 0, "λ[3]−2λ[1]+λ[0]", -1, lambda l, a, k: l[3] - 2 * l[1] + l[0]
        yield 0, "λ[k+4]−2λ[k+2]+λ[k]", 0, lambda l, a, k: l[k + 4] - 2 * l[k + 2] + l[k]
    elif n == 3:
        yield 5, "(λ[k+1]−λ[k])α[k]", 2, lambda l, a, k: (l[k + 1] - l[k]) * a[k]
        yield 4, "(λ[2]−λ[1])α[1]", -1, lambda l, a, k: (l[2] - l[1]) * a[1]
        yield 3, "(λ[3]−λ[0])α[1]−(λ[1]−λ[0])α[0](ᾱ[0]α[1]−α[0])", -1, lambda l, a, k: (
            (l[3] - l[0]) * a[1] - (l[1] - l[0]) * a[0] * (a[0].conjugate() * a[1] - a[0])
        )
        yield 3, "(λ[k+2]−λ[k−1])α[k]", 2, lambda l, a, k: (l[k + 2] - l[k - 1]) * a[k]
        yield 2, "(λ[2]−λ[0])α[0]", -1, lambda l, a, k: (l[2] - l[0]) * a[0]
        yield 2, "(λ[1]−λ[0])α[0]", -1, lambda l, a, k: (l[1] - l[0]) * a[0]
        yield 1, "(λ[3]−λ[0])α[0]", -1, lambda l, a, k: (l[3] - l[0]) * a[0]
        yield 1, "(λ[4]−λ[0])α[1]", -1, lambda l, a, k: (l[4] - l[0]) * a[1]
        yield 1, "(λ[k+3]−λ[k−2])α[k]", 2, lambda l, a, k: (l[k + 3] - l[k - 2]) * a[k]
        yield 0, "λ[3]−3λ[1]+3λ[0]−λ[2]", -1, lambda l, a, k: l[3] - 3 * l[1] + 3 * l[0] - l[2]
        yield 0, "λ[4]−3λ[2]+3λ[0]−λ[1]", -1, lambda l, a, k: l[4] - 3 * l[2] + 3 * l[0] - l[1]
        yield 0, "λ[5]−3λ[3]+3λ[1]−λ[0]", -1, lambda l, a, k: l[5] - 3 * l[3] + 3 * l[1] - l[0]
        yield 0, "λ[k+6]−3λ[k+4]+3λ[k+2]−λ[k]", 0, lambda l, a, k: (
            l[k + 6] - 3 * l[k + 4] + 3 * l[k + 2] - l[k]
        )
    else:
        raise ValueError(f"Difference equation tables exist for n = 2, 3, got {n=}.")


def table_equations(
    alpha: VerblunskySeq, lambdas: Sequence[Scalar], n: int
) -> list[TableEquation]:
    """The difference equations of (ad_n C)Λ = 0 for real diagonal Λ, n ∈ {2, 3}, with
    families evaluated for every k whose indices stay inside `lambdas`."""
    backend = alpha.backend
    lam = [backend.scalar(v) for v in lambdas]
    a = alpha.alphas(len(lam))
    reach = {2: 4, 3: 6}.get(n, 0)
    equations = []
    for offset, label, first, build in _table_families(n):
        ks = [0] if first < 0 else range(first, len(lam) - reach)
        for k in ks:
            name = label if first < 0 else f"{label}, k={k}"
            equations.append(TableEquation(offset, name, build(lam, a, k)))
    return equations


def table_entries(P: CmvPair, lambdas: Sequence[Scalar], n: int) -> list[TableRow]:
    """Compare the difference equations with the entries of (ad_n C)Λ diagonal by
    diagonal, from the top diagonal 2n − 1 down to the main one.

    Each diagonal's equations are simplified with the ones above it, so the comparison
    is cumulative: the equations of all diagonals ≥ d hold iff the entries of all
    diagonals ≥ d vanish.
    """
    backend = P.backend
    lam = bm_diag(lambdas, backend, P.size)
    image = hermitian_ad(P, lam, n)
    scale = ad_scale(lam, n)
    equations = table_equations(P.alpha, lambdas, n)
    rows = []
    holds = vanish = True
    for offset in range(2 * n - 1, -1, -1):
        holds &= all(backend.is_zero(e.residual, scale) for e in equations if e.offset == offset)
        vanish &= all(backend.is_zero(v, scale) for v in bm_diagonal(image, offset))
        rows.append(TableRow(offset, holds, vanish))
    return rows
