from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from ncg.coefficients import (CoefficientError, CoefficientModel, GaussRat,
                              GR_I, GR_ONE, PolyFormCoeff, coeff_conj,
                              coeff_d, coeff_mul)


small_ints = st.integers(min_value=-6, max_value=6)
positive = st.integers(min_value=1, max_value=5)


@st.composite
def gauss(draw):
    return GaussRat(draw(small_ints), draw(small_ints), draw(positive))


@st.composite
def polyform(draw, dim=1, max_deg=3):
    n_terms = draw(st.integers(min_value=0, max_value=3))
    terms = {}
    for _ in range(n_terms):
        exps = tuple(draw(st.integers(min_value=0, max_value=max_deg))
                     for _ in range(dim))
        form = draw(st.sampled_from([(), (1,)])) if dim == 1 else ()
        terms[(exps, form)] = draw(gauss())
    return PolyFormCoeff(dim, terms)


class TestGaussRat:
    def test_modulus_example(self):
        a = GaussRat.parse("1/2+1/2*i")
        b = GaussRat.parse("1/2+-1/2*i")
        assert a * b == GaussRat(Fraction(1, 2))

    def test_parse_roundtrip(self):
        for text in ["0/1", "3/2", "-1/3", "1/2+1/3*i", "-2/1+-1/4*i"]:
            assert str(GaussRat.parse(text)) == text

    def test_parse_loose_forms(self):
        assert GaussRat.parse("2") == GaussRat(2)
        assert GaussRat.parse("1+1*i") == GaussRat(1, 1)
        with pytest.raises(CoefficientError):
            GaussRat.parse("x")

    @given(gauss(), gauss(), gauss())
    @settings(max_examples=1000, deadline=None)
    def test_ring_laws(self, a, b, c):
        assert (a + b) + c == a + (b + c)
        assert a + b == b + a
        assert (a * b) * c == a * (b * c)
        assert a * b == b * a
        assert a * (b + c) == a * b + a * c

    @given(gauss())
    def test_conjugation_involutive(self, a):
        assert a.conj().conj() == a
        assert (a * a.conj()).imag == 0

    @given(gauss())
    def test_field_inverse(self, a):
        if not a.is_zero():
            assert a * a.inverse() == GR_ONE

    def test_canonical_form(self):
        v = GaussRat(2, 4, 6)
        assert (v.a, v.b, v.d) == (1, 2, 3)
        assert GaussRat(1, 0, -2) == GaussRat(-1, 0, 2)


class TestPolyForm:
    def test_wedge_nilpotent(self):
        dx = PolyFormCoeff.monomial(1, (0,), (1,))
        assert (dx * dx).is_zero()

    def test_wedge_example(self):
        x_dx = PolyFormCoeff.monomial(1, (1,), (1,))
        x2 = PolyFormCoeff.monomial(1, (2,))
        assert x_dx * x2 == PolyFormCoeff.monomial(1, (3,), (1,))

    def test_exterior_derivative(self):
        x2 = PolyFormCoeff.monomial(1, (2,))
        assert coeff_d(x2) == PolyFormCoeff.monomial(1, (1,), (1,), GaussRat(2))
        assert coeff_d(PolyFormCoeff.monomial(1, (1,), (1,))).is_zero()

    def test_conj_keeps_shape(self):
        w = PolyFormCoeff.monomial(1, (1,), (1,), GR_I)
        assert coeff_conj(w) == PolyFormCoeff.monomial(1, (1,), (1,), -GR_I)

    @given(polyform(), polyform())
    @settings(max_examples=250)
    def test_graded_commutativity(self, a, b):
        # split into homogeneous pieces and check a b = (-1)^{|a||b|} b a
        def split(p):
            out = {}
            for (exps, form), c in p.terms.items():
                out.setdefault(len(form), {})[(exps, form)] = c
            return {d: PolyFormCoeff(p.dim, t) for d, t in out.items()}
        for da, pa in split(a).items():
            for db, pb in split(b).items():
                rhs = pb * pa
                if (da * db) % 2:
                    rhs = -rhs
                assert pa * pb == rhs

    @given(polyform(), polyform())
    @settings(max_examples=250)
    def test_d_is_graded_derivation(self, a, b):
        def split(p):
            out = {}
            for (exps, form), c in p.terms.items():
                out.setdefault(len(form), {})[(exps, form)] = c
            return {d: PolyFormCoeff(p.dim, t) for d, t in out.items()}
        assert coeff_d(coeff_d(a)).is_zero()
        for da, pa in split(a).items():
            rhs = coeff_d(pa) * b + (pa * coeff_d(b) if da % 2 == 0
                                     else -(pa * coeff_d(b)))
            assert coeff_d(pa * b) == rhs

    def test_pullback_examples(self):
        neg = ((GaussRat(-1),),)
        x3 = PolyFormCoeff.monomial(1, (3,))
        dx = PolyFormCoeff.monomial(1, (0,), (1,))
        assert x3.pullback(neg) == PolyFormCoeff.monomial(1, (3,), (), GaussRat(-1))
        assert dx.pullback(neg) == PolyFormCoeff.monomial(1, (0,), (1,), GaussRat(-1))
        ident = ((GR_ONE,),)
        assert x3.pullback(ident) == x3

    @given(polyform())
    @settings(max_examples=150)
    def test_pullback_composition(self, a):
        m1 = ((GaussRat(-1),),)
        m2 = ((GaussRat(2),),)
        prod = ((GaussRat(-2),),)  # m1 @ m2
        assert a.pullback(m1).pullback(m2) == a.pullback(prod)

    def test_dimension_mismatch(self):
        with pytest.raises(CoefficientError):
            PolyFormCoeff.monomial(1, (1,)) * PolyFormCoeff.monomial(2, (1, 0))

    def test_records_roundtrip(self):
        w = PolyFormCoeff(1, {((2,), (1,)): GaussRat(1, 2, 3),
                              ((0,), ()): GR_ONE})
        assert PolyFormCoeff.from_records(1, w.to_records()) == w


class TestModel:
    def test_scalar_mul_guard(self):
        with pytest.raises(CoefficientError):
            coeff_mul(GR_ONE, PolyFormCoeff.monomial(1, (1,)))

    def test_chart_representation_validation(self):
        model = CoefficientModel("chart", dim=1, matrices={
            "e": ((GR_ONE,),), "g": ((GaussRat(-1),),)})
        mult = {("e", "e"): "e", ("e", "g"): "g", ("g", "e"): "g",
                ("g", "g"): "e"}.get
        assert model.validate_representation(lambda a, b: mult((a, b)), "e") == []
        bad = CoefficientModel("chart", dim=1, matrices={
            "e": ((GR_ONE,),), "g": ((GaussRat(2),),)})
        assert bad.validate_representation(lambda a, b: mult((a, b)), "e")
