from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cmvlab.bandop import bm_dagger, bm_equal, bm_identity, bm_mul
from cmvlab.core import DiffOperator, ExactComplex, FloatBackend, LaurentPoly
from cmvlab.cmv import (
    VerblunskySeq,
    build_cmv,
    build_factors,
    compute_olp,
    gram_schmidt_oracle,
    inner,
    moment_sequence,
    moments,
    olp_degree,
    olp_expand,
    olp_position,
    operator_matrix,
    random_pythagorean,
    theta,
)
from cmvlab.misc import HorizonExhausted, NotPythagorean


@pytest.fixture(params=[0, 7, 2023], ids=lambda seed: f"seed={seed}")
def pythagorean(request):
    return random_pythagorean(12, request.param)


class TestVerblunskySeq:
    def test_zero(self):
        alpha = VerblunskySeq.zero()

        assert alpha.is_null()
        assert alpha.alpha(5) == 0
        assert alpha.rho(5) == 1

    def test_constant(self):
        alpha = VerblunskySeq.constant("3/5")

        assert alpha.alphas(3) == [Fraction(3, 5)] * 3
        assert alpha.rho(0) == Fraction(4, 5)
        assert not alpha.is_null()

    def test_list_pads_with_zeros(self):
        alpha = VerblunskySeq.from_list(["1/2", ["0", "3/5"]])

        assert alpha.alpha(1) == ExactComplex(0, Fraction(3, 5))
        assert alpha.alpha(2) == 0

    @pytest.mark.parametrize("value", ["1", ["3/5", "4/5"], "-7/5"])
    def test_outside_the_disk(self, value):
        with pytest.raises(ValueError):
            VerblunskySeq.constant(value)

    def test_irrational_rho(self):
        with pytest.raises(NotPythagorean):
            VerblunskySeq.constant("1/2")

    def test_geometric_needs_floats(self):
        with pytest.raises(ValueError):
            VerblunskySeq.geometric("1/2", 0.5, backend=VerblunskySeq.zero().backend)

        alpha = VerblunskySeq.geometric("1/2", 0.5, FloatBackend())
        assert alpha.alpha(3) == pytest.approx(1 / 16)

    def test_negative_index(self):
        with pytest.raises(ValueError):
            VerblunskySeq.zero().alpha(-1)

    def test_with_backend(self):
        alpha = VerblunskySeq.constant("3/5").with_backend(FloatBackend())

        assert alpha.rho(4) == pytest.approx(0.8)


class TestRandomPythagorean:
    def test_seeded(self):
        assert random_pythagorean(6, 11) == random_pythagorean(6, 11)

    def test_rational_rho(self, pythagorean):
        for k in range(12):
            a, r = pythagorean.alpha(k), pythagorean.rho(k)
            assert a.abs2() + r * r == 1
            assert 0 < r.re < 1


class TestFactors:
    def test_theta_is_unitary(self, pythagorean):
        (a, b), (c, d) = theta(pythagorean, 3)

        assert a * a.conjugate() + b * b.conjugate() == 1
        assert a * c.conjugate() + b * d.conjugate() == 0
        assert b == c

    def test_block_structure(self):
        factors = build_factors(VerblunskySeq.zero(), 6)

        # L pairs (0, 1), (2, 3), …, M starts with 1 and pairs (1, 2), (3, 4), …
        assert factors.L[0, 1] == factors.L[2, 3] == 1
        assert factors.L[1, 2] == 0
        assert factors.M[0, 0] == 1
        assert factors.M[1, 2] == 1

    def test_shift_decomposition(self, pythagorean):
        factors = build_factors(pythagorean, 10)
        d = factors

        for i in range(10):
            assert factors.L[i, i] == d.A_e[i, i]
            assert factors.M[i, i] == d.A_o[i, i]
        for i in range(9):
            assert factors.L[i, i + 1] == factors.L[i + 1, i] == d.B_e[i, i]
            assert factors.M[i, i + 1] == factors.M[i + 1, i] == d.B_o[i, i]

    def test_unitary_and_five_diagonal(self, pythagorean):
        C, Ct = build_cmv(pythagorean, 14)

        assert bm_equal(bm_mul(C, bm_dagger(C)), bm_identity(14, C.backend))
        assert bm_equal(bm_mul(bm_dagger(Ct), Ct), bm_identity(14, C.backend))
        assert (C.lower, C.upper) == (2, 2)

    def test_too_small(self):
        with pytest.raises(ValueError):
            build_cmv(VerblunskySeq.zero(), 3)


class TestOlp:
    @given(st.integers(0, 200))
    def test_degree_order(self, n):
        assert olp_position(olp_degree(n)) == n

    def test_degrees(self):
        assert [olp_degree(n) for n in range(7)] == [0, -1, 1, -2, 2, -3, 3]

    def test_lebesgue_polynomials_are_monomials(self, exact):
        olp = compute_olp(VerblunskySeq.zero(), 8)

        for n, x in enumerate(olp.x):
            assert x == LaurentPoly.monomial(olp_degree(n), exact.one)
            assert olp.chi[n] == x.substar()

    def test_chi_is_substar_of_x(self, pythagorean):
        olp = compute_olp(pythagorean, 9)

        for x, chi in zip(olp.x, olp.chi):
            assert chi == x.substar()

    def test_eigenvector_of_cmv(self, pythagorean):
        size = 12
        C, _ = build_cmv(pythagorean, size)
        olp = compute_olp(pythagorean, size + 2)

        for n in range(size - 3):
            row = sum(
                (olp.x[j] * C[n, j] for j in range(max(n - 2, 0), n + 3)),
                LaurentPoly(),
            )
            assert row == olp.x[n].shift(1)

    def test_agrees_with_gram_schmidt(self, pythagorean):
        assert compute_olp(pythagorean, 6).x == gram_schmidt_oracle(pythagorean, 6).x

    def test_expand(self, pythagorean):
        olp = compute_olp(pythagorean, 6)

        assert olp_expand(olp.x[4], olp) == [0, 0, 0, 0, 1]
        with pytest.raises(ValueError):
            olp_expand(LaurentPoly.monomial(5, ExactComplex(1)), olp)

    def test_evaluate(self):
        olp = compute_olp(VerblunskySeq.zero(), 4)
        z = ExactComplex(2)

        assert olp.evaluate(z) == [1, Fraction(1, 2), 2, Fraction(1, 4), 4]
        assert olp.evaluate(z, 1)[:3] == [0, Fraction(-1, 4), 1]

    def test_count(self):
        with pytest.raises(ValueError):
            compute_olp(VerblunskySeq.zero(), 0)


class TestMoments:
    def test_lebesgue_moments(self):
        m = moment_sequence(VerblunskySeq.zero(), 4, 12)

        assert m[0] == 1
        assert all(m[k] == 0 for k in range(-4, 5) if k)

    def test_orthonormal(self, pythagorean):
        m = moment_sequence(pythagorean, 6, 20)
        olp = compute_olp(pythagorean, 5)

        for a in range(5):
            for b in range(5):
                assert inner(olp.x[a], olp.x[b], m) == (1 if a == b else 0)

    def test_conjugate_symmetry(self, pythagorean):
        assert moments(pythagorean, -2, 12) == moments(pythagorean, 2, 12).conjugate()

    def test_window_exhausted(self):
        with pytest.raises(HorizonExhausted):
            moments(VerblunskySeq.zero(), 6, 6)


def test_operator_matrix_of_euler(exact):
    omega = operator_matrix(DiffOperator.euler(exact), VerblunskySeq.zero(), 10)

    for i in range(10):
        for j in range(10):
            assert omega[i, j] == (olp_degree(i) if i == j else 0)
