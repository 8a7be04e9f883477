"""
Banded infinite operators on the half-line, seen through a finite window.

A [`BandMatrix`][cmvlab.bandop.BandMatrix] stores the entries (i, j), 0 ≤ i, j < N, of
an operator whose nonzero entries satisfy −p ≤ j − i ≤ q. Since the window cuts off the
sums behind every product, each matrix also carries a trust horizon H: every entry with
max(i, j) < H is known to equal the entry of the infinite operator.

Horizon rules:

- windows built from known entries (identity, diagonals, the shift S, the factors of a
  CMV matrix) have H = N
- a product AB has H = min(H_A, H_B) − min(q_A, p_B), since entry (i, j) sums over
  k ≤ min(i + q_A, j + p_B)
- sums take the smaller horizon, adjoints, transposes and scalar multiples keep it
"""

from __future__ import annotations

import logging
from typing import Any, Callable, Iterator, Mapping, Sequence

from cmvlab.core import Backend, Scalar
from cmvlab.misc import HorizonExhausted

logger = logging.getLogger(__name__)


class BandMatrix:
    """Finite window of a banded operator with a trust horizon.

    Entries are stored by diagonal: diagonal d = j − i holds N − |d| values, and the
    entry (i, j) sits at position min(i, j) of its diagonal.

    Args:
        size: Window size N.
        diagonals: Map of diagonal offset to its values. Short sequences are padded with
            zeros, diagonals outside the declared band are rejected.
        backend: Arithmetic of all entries.
        horizon: Trust horizon, defaults to the window size.
        lower: Declared lower bandwidth p, defaults to the lowest stored diagonal.
        upper: Declared upper bandwidth q, defaults to the highest stored diagonal.

    Raises:
        HorizonExhausted: If the horizon is not positive.
    """

    __slots__ = ("size", "lower", "upper", "horizon", "backend", "_diags")

    def __init__(
        self,
        size: int,
        diagonals: Mapping[int, Sequence[Scalar]],
        *,
        backend: Backend,
        horizon: int | None = None,
        lower: int | None = None,
        upper: int | None = None,
    ):
        if size < 1:
            raise ValueError(f"Window size must be positive, got {size=}.")
        self.size = size
        self.backend = backend
        self.lower = max([-d for d in diagonals if d < 0] + [0]) if lower is None else lower
        self.upper = max([d for d in diagonals if d > 0] + [0]) if upper is None else upper
        self.horizon = size if horizon is None else min(horizon, size)
        if self.horizon <= 0:
            raise HorizonExhausted(
                f"No trusted entries left in a window of {size=}, widen the window."
            )
        zero = backend.zero
        self._diags: dict[int, list[Scalar]] = {}
        for d in range(-self.lower, self.upper + 1):
            length = max(size - abs(d), 0)
            values = list(diagonals.get(d, ()))[:length]
            self._diags[d] = values + [zero] * (length - len(values))
        if stray := [d for d in diagonals if not -self.lower <= d <= self.upper]:
            raise ValueError(f"Diagonals {stray} lie outside the declared band.")

    @classmethod
    def from_entries(
        cls,
        size: int,
        entries: Mapping[tuple[int, int], Scalar],
        *,
        backend: Backend,
        horizon: int | None = None,
    ) -> BandMatrix:
        """Build a window from a sparse (i, j) -> value map."""
        diagonals: dict[int, list[Scalar]] = {}
        for (i, j), value in entries.items():
            if not (0 <= i < size and 0 <= j < size):
                raise ValueError(f"Entry {(i, j)} lies outside a window of {size=}.")
            d = j - i
            values = diagonals.setdefault(d, [backend.zero] * (size - abs(d)))
            values[min(i, j)] = value
        return cls(size, diagonals, backend=backend, horizon=horizon)

    def __getitem__(self, index: tuple[int, int]) -> Scalar:
        i, j = index
        d = j - i
        if d not in self._diags or not (0 <= i < self.size and 0 <= j < self.size):
            return self.backend.zero
        return self._diags[d][min(i, j)]

    def __repr__(self) -> str:
        return (
            f"BandMatrix(size={self.size}, band=({self.lower}, {self.upper}), "
            f"horizon={self.horizon}, backend={self.backend.name})"
        )

    def __matmul__(self, other: BandMatrix) -> BandMatrix:
        return bm_mul(self, other)

    def __add__(self, other: BandMatrix) -> BandMatrix:
        return bm_add(self, other)

    def __sub__(self, other: BandMatrix) -> BandMatrix:
        return bm_sub(self, other)

    def __neg__(self) -> BandMatrix:
        return bm_scale(self, -self.backend.one)

    def __mul__(self, scalar: Any) -> BandMatrix:
        if isinstance(scalar, BandMatrix):
            return NotImplemented
        return bm_scale(self, scalar)

    __rmul__ = __mul__

    @property
    def diagonals(self) -> dict[int, list[Scalar]]:
        return self._diags

    @property
    def dagger(self) -> BandMatrix:
        return bm_dagger(self)

    @property
    def T(self) -> BandMatrix:
        return bm_transpose(self)

    def map(self, fn: Callable[[Scalar], Scalar]) -> BandMatrix:
        return BandMatrix(
            self.size,
            {d: [fn(v) for v in values] for d, values in self._diags.items()},
            backend=self.backend,
            horizon=self.horizon,
            lower=self.lower,
            upper=self.upper,
        )

    def trusted(self) -> Iterator[tuple[int, int, Scalar]]:
        """All (i, j, value) with max(i, j) < H inside the band, zeros included."""
        for d, values in self._diags.items():
            for t in range(min(len(values), self.horizon - abs(d))):
                i, j = (t, t + d) if d >= 0 else (t - d, t)
                yield i, j, values[t]

    def column(self, j: int) -> dict[int, Scalar]:
        """Nonzero window entries of column j, trusted or not."""
        out = {}
        for d, values in self._diags.items():
            i = j - d
            if 0 <= i < self.size and values and (value := values[min(i, j)]):
                out[i] = value
        return out

    def to_rows(self, limit: int | None = None) -> list[list[Scalar]]:
        """Dense view of the trusted block, optionally cut to `limit` rows/columns."""
        n = self.horizon if limit is None else min(limit, self.horizon)
        return [[self[i, j] for j in range(n)] for i in range(n)]

    def restrict(self, horizon: int) -> BandMatrix:
        """The same window with a horizon of at most `horizon`."""
        return BandMatrix(
            self.size,
            self._diags,
            backend=self.backend,
            horizon=min(horizon, self.horizon),
            lower=self.lower,
            upper=self.upper,
        )


def _check_compatible(a: BandMatrix, b: BandMatrix):
    if a.size != b.size or a.backend != b.backend:
        raise ValueError(
            f"Incompatible windows: {a!r} and {b!r} need equal sizes and backends."
        )


def bm_identity(size: int, backend: Backend) -> BandMatrix:
    return BandMatrix(size, {0: [backend.one] * size}, backend=backend)


def bm_diag(
    values: Sequence[Scalar], backend: Backend, size: int | None = None
) -> BandMatrix:
    """Diagonal matrix. With `size` larger than `len(values)` the missing entries are
    unknown, so the horizon stops at `len(values)`."""
    size = len(values) if size is None else size
    return BandMatrix(
        size, {0: [backend.scalar(v) for v in values]}, backend=backend, horizon=len(values)
    )


def bm_shift(size: int, backend: Backend) -> BandMatrix:
    """The shift S with ones on the first upper diagonal, (Sx)_i = x_{i+1}."""
    return BandMatrix(size, {1: [backend.one] * (size - 1)}, backend=backend)


def bm_mul(a: BandMatrix, b: BandMatrix) -> BandMatrix:
    """Product AB with band (p_A + p_B, q_A + q_B).

    Raises:
        HorizonExhausted: If no entry of the product is trusted.
    """
    _check_compatible(a, b)
    horizon = min(a.horizon, b.horizon) - min(a.upper, b.lower)
    if horizon <= 0:
        raise HorizonExhausted(
            f"Product of {a!r} and {b!r} has no trusted entries, widen the window."
        )
    n = a.size
    zero = a.backend.zero
    out: dict[int, list[Scalar]] = {
        d: [zero] * max(n - abs(d), 0) for d in range(-a.lower - b.lower, a.upper + b.upper + 1)
    }
    b_diags = [(db, vb, min(db, 0)) for db, vb in b.diagonals.items() if any(vb)]
    for da, va in a.diagonals.items():
        shift_a = min(da, 0)
        for db, vb, shift_b in b_diags:
            d = da + db
            target = out[d]
            shift = min(d, 0)
            size_b = len(vb)
            for t, x in enumerate(va):
                if not x:
                    continue
                i = t - shift_a
                tb = i + da + shift_b
                if 0 <= tb < size_b and (y := vb[tb]):
                    target[i + shift] = target[i + shift] + x * y
    return BandMatrix(
        n,
        out,
        backend=a.backend,
        horizon=horizon,
        lower=a.lower + b.lower,
        upper=a.upper + b.upper,
    )


def bm_add(a: BandMatrix, b: BandMatrix) -> BandMatrix:
    _check_compatible(a, b)
    lower, upper = max(a.lower, b.lower), max(a.upper, b.upper)
    out: dict[int, list[Scalar]] = {}
    for d in range(-lower, upper + 1):
        va, vb = a.diagonals.get(d), b.diagonals.get(d)
        if va is None:
            out[d] = list(vb) if vb is not None else []
        elif vb is None:
            out[d] = list(va)
        else:
            out[d] = [x + y if y else x for x, y in zip(va, vb)]
    return BandMatrix(
        a.size,
        out,
        backend=a.backend,
        horizon=min(a.horizon, b.horizon),
        lower=lower,
        upper=upper,
    )


def bm_scale(a: BandMatrix, scalar: Any) -> BandMatrix:
    c = a.backend.scalar(scalar)
    return a.map(lambda v: v * c)


def bm_sub(a: BandMatrix, b: BandMatrix) -> BandMatrix:
    return bm_add(a, bm_scale(b, -a.backend.one))


def bm_commutator(a: BandMatrix, b: BandMatrix) -> BandMatrix:
    """[A, B] = AB − BA."""
    return bm_sub(bm_mul(a, b), bm_mul(b, a))


def bm_dagger(a: BandMatrix) -> BandMatrix:
    """Conjugate transpose. Entry (i, j) moves to (j, i), so its diagonal position
    min(i, j) stays put and only the offset flips."""
    return BandMatrix(
        a.size,
        {-d: [v.conjugate() for v in values] for d, values in a.diagonals.items()},
        backend=a.backend,
        horizon=a.horizon,
        lower=a.upper,
        upper=a.lower,
    )


def bm_transpose(a: BandMatrix) -> BandMatrix:
    return BandMatrix(
        a.size,
        {-d: list(values) for d, values in a.diagonals.items()},
        backend=a.backend,
        horizon=a.horizon,
        lower=a.upper,
        upper=a.lower,
    )


def bm_diagonal(a: BandMatrix, d: int) -> list[Scalar]:
    """Trusted entries of diagonal d.

    Element t is the entry (t, t + d) for d ≥ 0 and (t − d, t) for d < 0. Diagonals
    outside the declared band are all zeros.
    """
    count = max(a.horizon - abs(d), 0)
    values = a.diagonals.get(d)
    if values is None:
        return [a.backend.zero] * count
    return values[:count]


def bm_is_zero(a: BandMatrix, scale: float = 1.0) -> bool:
    """True iff every trusted entry is zero (exact) or at most τ·scale (float)."""
    is_zero = a.backend.is_zero
    for d, values in a.diagonals.items():
        for value in values[: max(a.horizon - abs(d), 0)]:
            if not is_zero(value, scale):
                return False
    return True


def bm_equal(a: BandMatrix, b: BandMatrix, scale: float = 1.0) -> bool:
    """Entrywise equality inside the smaller horizon."""
    return bm_is_zero(bm_sub(a, b), scale)


def bm_is_hermitian(a: BandMatrix, scale: float = 1.0) -> bool:
    """Compares (i, j) against conj of (j, i) inside the horizon."""
    return bm_equal(a, bm_dagger(a), scale)


def bm_magnitude(a: BandMatrix) -> float:
    """Largest trusted entry magnitude."""
    return max((abs(v) for _, _, v in a.trusted()), default=0.0)


def bm_effective_band(a: BandMatrix, scale: float = 1.0) -> tuple[int, int]:
    """Lower and upper bandwidth of the trusted nonzero entries."""
    lower = upper = 0
    for d, values in a.diagonals.items():
        if any(not a.backend.is_zero(v, scale) for v in values[: max(a.horizon - abs(d), 0)]):
            lower, upper = max(lower, -d), max(upper, d)
    return lower, upper


def bm_restrict(a: BandMatrix, horizon: int) -> BandMatrix:
    return a.restrict(horizon)


def bm_power(a: BandMatrix, k: int) -> BandMatrix:
    """A^k; negative k gives powers of the adjoint, which is the inverse of a unitary A."""
    base = a if k >= 0 else bm_dagger(a)
    result = bm_identity(a.size, a.backend)
    for _ in range(abs(k)):
        result = bm_mul(result, base)
    return result


def bm_apply(a: BandMatrix, vector: Sequence[Scalar]) -> list[Scalar]:
    """Matrix times vector on the trusted rows.

    Row i is trusted when every column it touches, j ≤ i + q, is inside both the
    horizon and the vector.

    Raises:
        HorizonExhausted: If no row is trusted.
    """
    rows = min(a.horizon, len(vector)) - a.upper
    if rows <= 0:
        raise HorizonExhausted(f"{a!r} applied to {len(vector)} entries has no trusted rows.")
    out = []
    for i in range(rows):
        total = a.backend.zero
        for j in range(max(i - a.lower, 0), i + a.upper + 1):
            if value := a[i, j]:
                total = total + value * vector[j]
        out.append(total)
    return out


def bm_drop_leading(a: BandMatrix, k: int) -> BandMatrix:
    """A^(k): the operator with the first k rows and columns deleted.

    Entries past the original window are unknown, so the horizon shrinks by k.
    """
    return BandMatrix(
        a.size,
        {d: values[k:] for d, values in a.diagonals.items()},
        backend=a.backend,
        horizon=a.horizon - k,
        lower=a.lower,
        upper=a.upper,
    )
