import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmvlab.adops import CmvPair
from cmvlab.bandop import (
    BandMatrix,
    bm_add,
    bm_apply,
    bm_commutator,
    bm_dagger,
    bm_diag,
    bm_diagonal,
    bm_drop_leading,
    bm_effective_band,
    bm_equal,
    bm_identity,
    bm_is_hermitian,
    bm_is_zero,
    bm_mul,
    bm_power,
    bm_restrict,
    bm_shift,
    bm_transpose,
)
from cmvlab.cmv import random_pythagorean
from cmvlab.core import ExactBackend, ExactComplex
from cmvlab.misc import HorizonExhausted

SIZE = 10
backend = ExactBackend()
entry = st.builds(
    ExactComplex,
    st.fractions(min_value=-3, max_value=3, max_denominator=4),
    st.fractions(min_value=-3, max_value=3, max_denominator=4),
)


@st.composite
def band_matrices(draw, lower=st.integers(0, 2), upper=st.integers(0, 2)):
    p, q = draw(lower), draw(upper)
    diagonals = {
        d: draw(st.lists(entry, min_size=SIZE - abs(d), max_size=SIZE - abs(d)))
        for d in range(-p, q + 1)
    }
    return BandMatrix(SIZE, diagonals, backend=backend, lower=p, upper=q)


def dense(a: BandMatrix) -> list[list[ExactComplex]]:
    return [[a[i, j] for j in range(a.size)] for i in range(a.size)]


def dense_product(a: BandMatrix, b: BandMatrix) -> list[list[ExactComplex]]:
    n = a.size
    return [
        [sum((a[i, k] * b[k, j] for k in range(n)), ExactComplex()) for j in range(n)]
        for i in range(n)
    ]


class TestConstruction:
    def test_storage_by_diagonal(self):
        a = BandMatrix.from_entries(
            4, {(0, 1): ExactComplex(2), (3, 1): ExactComplex(5)}, backend=backend
        )

        assert a[0, 1] == 2
        assert a[3, 1] == 5
        assert a[1, 0] == 0
        assert (a.lower, a.upper) == (2, 1)
        assert bm_diagonal(a, -2) == [0, 5]

    def test_out_of_band_diagonals_are_rejected(self):
        with pytest.raises(ValueError):
            BandMatrix(4, {2: [ExactComplex(1)]}, backend=backend, upper=1)

    def test_nonpositive_horizon(self):
        with pytest.raises(HorizonExhausted):
            BandMatrix(4, {}, backend=backend, horizon=0)

    def test_diag_with_unknown_tail(self):
        a = bm_diag([1, 2, 3], backend, size=6)

        assert a.horizon == 3
        assert bm_diagonal(a, 0) == [1, 2, 3]

    def test_trusted_skips_entries_past_the_horizon(self):
        a = bm_restrict(bm_shift(5, backend), 3)

        assert sorted((i, j) for i, j, _ in a.trusted()) == [
            (0, 0), (0, 1), (1, 1), (1, 2), (2, 2),
        ]


class TestProducts:
    def test_horizon_rule(self):
        shift = bm_shift(SIZE, backend)

        assert bm_mul(shift, shift).horizon == SIZE
        assert bm_mul(shift, bm_dagger(shift)).horizon == SIZE - 1
        assert bm_mul(bm_dagger(shift), shift).horizon == SIZE

    def test_shift_is_an_isometry_on_trusted_rows(self):
        shift = bm_shift(SIZE, backend)

        assert bm_equal(bm_mul(shift, bm_dagger(shift)), bm_identity(SIZE, backend))
        # S†S differs from I only in its (0, 0) entry
        assert bm_mul(bm_dagger(shift), shift)[0, 0] == 0

    def test_exhausted_horizon(self):
        wide = bm_power(bm_add(bm_shift(4, backend), bm_dagger(bm_shift(4, backend))), 3)

        with pytest.raises(HorizonExhausted):
            bm_mul(wide, bm_dagger(wide))

    @settings(max_examples=40)
    @given(band_matrices(), band_matrices())
    def test_product_matches_dense_on_trusted_entries(self, a, b):
        product = bm_mul(a, b)
        expected = dense_product(a, b)

        assert (product.lower, product.upper) == (a.lower + b.lower, a.upper + b.upper)
        for i, j, value in product.trusted():
            assert value == expected[i][j]

    @settings(max_examples=40)
    @given(band_matrices(), band_matrices())
    def test_adjoint_reverses_products(self, a, b):
        assert bm_equal(bm_dagger(bm_mul(a, b)), bm_mul(bm_dagger(b), bm_dagger(a)))

    @settings(max_examples=40)
    @given(band_matrices())
    def test_commutator_with_identity(self, a):
        assert bm_is_zero(bm_commutator(a, bm_identity(SIZE, backend)))


class TestQueries:
    @given(band_matrices())
    def test_transpose_and_dagger_are_involutions(self, a):
        assert dense(bm_transpose(bm_transpose(a))) == dense(a)
        assert dense(bm_dagger(bm_dagger(a))) == dense(a)

    @given(band_matrices())
    def test_a_plus_dagger_is_hermitian(self, a):
        assert bm_is_hermitian(bm_add(a, bm_dagger(a)))

    def test_effective_band_ignores_zero_diagonals(self):
        a = BandMatrix(5, {-2: [], 0: [ExactComplex(1)] * 5, 1: []}, backend=backend)

        assert (a.lower, a.upper) == (2, 1)
        assert bm_effective_band(a) == (0, 0)

    def test_float_zero_test_uses_scale(self, floating):
        a = BandMatrix(3, {0: [1e-9 + 0j] * 3}, backend=floating)

        assert not bm_is_zero(a)
        assert bm_is_zero(a, scale=100.0)

    def test_apply(self):
        a = bm_add(bm_identity(5, backend), bm_shift(5, backend))

        assert bm_apply(a, [ExactComplex(k) for k in range(5)]) == [1, 3, 5, 7]

    def test_drop_leading(self):
        a = bm_diag([Fraction(k) for k in range(6)], backend)
        dropped = bm_drop_leading(a, 2)

        assert dropped.horizon == 4
        assert bm_diagonal(dropped, 0) == [2, 3, 4, 5]

    def test_negative_power_is_adjoint_power(self):
        shift = bm_shift(SIZE, backend)

        assert dense(bm_power(shift, -2)) == dense(bm_mul(bm_dagger(shift), bm_dagger(shift)))

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_shift_moves_a_diagonal_past_its_head(self, k):
        lam = bm_diag([Fraction(t * t - 7, 3) for t in range(SIZE)], backend)
        shift = bm_power(bm_shift(SIZE, backend), k)

        assert bm_equal(bm_mul(shift, lam), bm_mul(bm_drop_leading(lam, k), shift))


CHAIN_WINDOW = 16
GENERATORS = ("C", "C†", "L", "M", "Λ")
chains = st.lists(
    st.tuples(st.sampled_from(["mul", "commutator"]), st.sampled_from(GENERATORS)),
    min_size=1,
    max_size=4,
)


def evaluate_chain(seed: int, chain, size: int) -> BandMatrix:
    rng = random.Random(seed)
    lambdas = [Fraction(rng.randint(-9, 9), rng.randint(1, 5)) for _ in range(2 * CHAIN_WINDOW)]
    P = CmvPair.build(random_pythagorean(2 * CHAIN_WINDOW, seed), size)
    generators = {
        "C": P.C,
        "C†": P.C_dagger,
        "L": P.L,
        "M": P.M,
        "Λ": bm_diag(lambdas[:size], backend),
    }
    result = generators["Λ"]
    for step, name in chain:
        other = generators[name]
        result = bm_mul(result, other) if step == "mul" else bm_commutator(result, other)
    return result


@pytest.mark.slow
@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6), chains)
def test_trusted_entries_survive_a_doubled_window(seed, chain):
    small = evaluate_chain(seed, chain, CHAIN_WINDOW)
    large = evaluate_chain(seed, chain, 2 * CHAIN_WINDOW)

    assert small.horizon > 0
    for i, j, value in small.trusted():
        assert value == large[i, j]
