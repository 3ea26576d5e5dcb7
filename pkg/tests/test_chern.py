from fractions import Fraction

import pytest

from ncg.chern import (VerificationError, chern_form, chern_vector_bundle,
                       heat_exponential, reduce_in_ab, supertrace, trace_e,
                       trace_sum, verify_closedness, verify_theorem,
                       verify_trace_property, verify_vb_closedness)
from ncg.coefficients import GaussRat, GR_ONE, PolyFormCoeff
from ncg.fixtures import load_fixture
from ncg.forms import AbReducer, FormSum
from ncg.groupoid import canonical_h, trivial_bundle, unit_space
from ncg.kernels import (KernelError, KernelSampler, SmoothingKernel,
                         kernel_mul, set_flags)
from ncg.modules import ConnectionData, Section, nabla01, as_module_form
from ncg.reference import trace_reference
from ncg.suites import random_raw_kernel


def connection_for(fixture, key="rank2", u=Fraction(1)):
    hor = fixture.horizontal[key] if fixture.horizontal else None
    return ConnectionData(fixture.bundle(key), fixture.h, horizontal=hor, u=u)


def test_trace_delta_kernel_example():
    fx = load_fixture("z2")
    b = fx.bundles["rank1"]
    tr = trace_e(SmoothingKernel.delta(b), fx.h)
    assert tr.values == {("e",): GR_ONE}


def test_trace_zero_kernel(fixture):
    b = fixture.bundle("rank2")
    zero = SmoothingKernel.zero(b, 1)
    assert trace_e(zero, fixture.h).is_zero()


def test_trace_requires_flags(fixture, rng):
    b = fixture.bundle("rank2")
    raw = random_raw_kernel(b, 1, rng)
    if raw.equivariant is not True:
        with pytest.raises(KernelError):
            trace_e(raw, fixture.h)


def test_trace_against_reference(fixture, rng):
    b = fixture.bundle("rank2")
    poly = 2 if fixture.groupoid.model.kind == "chart" else 0
    sampler = KernelSampler(b, 1, poly_degree=poly)
    for _ in range(6):
        K = sampler.sample(rng)
        if K is None:
            return
        assert trace_e(K, fixture.h) == trace_reference(K, fixture.h)
        assert supertrace(K, fixture.h) == trace_reference(K, fixture.h,
                                                           graded=True)


def test_trace_linearity_and_degree(fixture, rng):
    b = fixture.bundle("rank2")
    poly = 2 if fixture.groupoid.model.kind == "chart" else 0
    sampler = KernelSampler(b, 1, poly_degree=poly)
    k1, k2 = sampler.sample(rng), sampler.sample(rng)
    if k1 is None:
        return
    combined = k1 + k2
    set_flags(combined)
    assert trace_e(combined, fixture.h) == \
        trace_e(k1, fixture.h) + trace_e(k2, fixture.h)
    assert trace_e(k1, fixture.h).degree == k1.slots


def test_supertrace_graded_examples():
    fx = load_fixture("z2")
    graded = fx.bundles["rank2-trivial"]  # grading (+, -), trivial action
    delta = SmoothingKernel.delta(graded)
    assert supertrace(delta, fx.h).is_zero()
    ungraded = trivial_bundle(fx.space, 2)
    delta2 = SmoothingKernel.delta(ungraded)
    assert supertrace(delta2, fx.h) == trace_e(delta2, fx.h)
    flipped = trivial_bundle(fx.space, 2, grading=(-1, -1))
    delta3 = SmoothingKernel.delta(flipped)
    assert supertrace(delta3, fx.h) == -trace_e(delta3, fx.h)


def test_heat_zero_curvature_is_delta_only():
    fx = load_fixture("unit2")
    c = connection_for(fx)
    terms = heat_exponential(c, 4)
    assert len(terms) == 3
    assert terms[0].parts == {0: SmoothingKernel.delta(c.bundle)}
    assert terms[1].is_zero() and terms[2].is_zero()


def test_heat_first_term_is_negative_squared_connection(scalar_fixture):
    c = connection_for(scalar_fixture)
    terms = heat_exponential(c, 2)
    fx = scalar_fixture
    def op(F):
        return nabla01(nabla01(as_module_form(F), fx.h), fx.h)
    for F in Section.basis(c.bundle):
        expected = op(F)
        got = terms[1].apply(F)
        assert got.component(2) == -expected


def test_heat_terms_match_operator_powers(scalar_fixture):
    c = connection_for(scalar_fixture)
    terms = heat_exponential(c, 4)
    fx = scalar_fixture
    h = fx.h
    def square(F):
        return nabla01(nabla01(F, h), h)
    for F in Section.basis(c.bundle):
        target = square(square(as_module_form(F)))
        got = terms[2].apply(F)
        assert got.component(4) == target.scale(GaussRat(Fraction(1, 2)))


def test_heat_semigroup_consistency(scalar_fixture):
    """Sum over a+b=j of term_a * term_b equals the heat terms at doubled
    curvature: exp(-C)^2 = exp(-2C), degree by degree."""
    c = connection_for(scalar_fixture)
    terms = heat_exponential(c, 4)
    for j in (0, 1, 2):
        total = None
        for a in range(j + 1):
            prod = terms[a].mul(terms[j - a])
            total = prod if total is None else total + prod
        expected = terms[j].scale(GaussRat(2 ** j))
        assert total == expected, j


def test_chern_form_degree_zero(fixture):
    c = connection_for(fixture, "rank1")
    components = chern_form(c, Fraction(1, 2), 0)
    comp = components[0].component(0)
    g = fixture.groupoid
    h = fixture.h
    space = fixture.space
    for x in g.objects:
        expected = sum((h(p) for p in space.fiber(x)), Fraction(0))
        got = comp.coeff((g.unit[x],))
        assert got == g.model.from_gauss(GaussRat(expected))


def test_chern_form_graded_cancellation():
    fx = load_fixture("z2")
    c = connection_for(fx, "rank2-trivial")
    components = chern_form(c, Fraction(1, 2), 0)
    assert components[0].is_zero()


def test_chern_u_independent_in_scalar_model(scalar_fixture):
    c0 = connection_for(scalar_fixture, "rank2", Fraction(0))
    c1 = connection_for(scalar_fixture, "rank2", Fraction(1))
    assert chern_form(c0, Fraction(0), 4).keys() == \
        chern_form(c1, Fraction(1), 4).keys()
    for degree, comp in chern_form(c0, Fraction(0), 4).items():
        assert comp == chern_form(c1, Fraction(1), 4)[degree]


def test_verify_theorem_zero_kernel(fixture):
    c = connection_for(fixture)
    zero = SmoothingKernel.zero(c.bundle, 1)
    reducer = AbReducer(fixture.groupoid, 2,
                        generator_bound=4 if fixture.groupoid.model.kind == "chart" else 0)
    assert verify_theorem(c, zero, reducer).passed


def test_verify_theorem_sampled(fixture, rng):
    c = connection_for(fixture)
    poly = 2 if fixture.groupoid.model.kind == "chart" else 0
    sampler = KernelSampler(c.bundle, 1, poly_degree=poly)
    if sampler.dimension == 0:
        return
    bound = 4 if fixture.groupoid.model.kind == "chart" else 0
    reducer = AbReducer(fixture.groupoid, 2, generator_bound=bound)
    for _ in range(5):
        K = sampler.sample(rng)
        verdict = verify_theorem(c, K, reducer)
        assert verdict.passed
        assert verdict.payload()["verdict"] == "PASS"


def test_verify_theorem_broken_kernel_fails(rng):
    """Dense non-linear kernels genuinely break the trace identity on a
    fixture whose target fibers hold two non-unit arrows; the bypassed
    pipeline must report a nonzero residue."""
    from ncg.kernels import commutator_with_d, equivariance_residuals
    fx = load_fixture("z3")
    c = connection_for(fx, "rank1")
    reducer = AbReducer(fx.groupoid, 2)
    found = False
    for _ in range(10):
        raw = random_raw_kernel(c.bundle, 1, rng, density=1.0)
        r1, r2 = equivariance_residuals(raw)
        if not (r1 or r2):
            continue
        raw.equivariant = True  # test-mode: bypass the precondition
        raw.cocycle = True
        tr = trace_e(raw, fx.h)
        lhs = FormSum(fx.groupoid, [tr.d1(), tr.d2()])
        commutator = commutator_with_d(c, raw, test_mode=True)
        rhs = trace_sum(commutator, fx.h)
        verdict = reduce_in_ab(lhs - rhs, reducer, "broken")
        if not verdict.passed:
            assert verdict.residue
            found = True
            break
    assert found


def test_trace_property_delta(fixture, rng):
    b = fixture.bundle("rank2")
    poly = 2 if fixture.groupoid.model.kind == "chart" else 0
    sampler = KernelSampler(b, 1, poly_degree=poly)
    K = sampler.sample(rng)
    if K is None:
        return
    delta = SmoothingKernel.delta(b)
    t1 = trace_e(set_flags(kernel_mul(K, delta)), fixture.h)
    t2 = trace_e(set_flags(kernel_mul(delta, K)), fixture.h)
    assert t1 == t2  # exact equality, no reduction needed


def test_trace_property_sampled(fixture, rng):
    b = fixture.bundle("rank2")
    poly = 2 if fixture.groupoid.model.kind == "chart" else 0
    sampler = KernelSampler(b, 1, poly_degree=poly)
    if sampler.dimension == 0:
        return
    bound = 6 if fixture.groupoid.model.kind == "chart" else 0
    reducer = AbReducer(fixture.groupoid, 2, generator_bound=bound)
    for _ in range(5):
        k1, k2 = sampler.sample(rng), sampler.sample(rng)
        assert verify_trace_property(k1, k2, fixture.h, reducer).passed


def test_pair_groupoid_trace_cyclicity_matches_matrices(rng):
    """0-slot linear kernels on the pair groupoid act like block matrices;
    the localized trace difference of the two products vanishes exactly,
    matching matrix-trace cyclicity."""
    fx = load_fixture("pair2")
    b = fx.bundles["rank1"]
    sampler = KernelSampler(b, 0)
    assert sampler.dimension > 0
    space = b.space

    def block_matrix(kernel, x):
        pts = sorted(space.fiber(x))
        return [[kernel.matrix((p, (), q))[0][0] * GaussRat(space.measure[q])
                 for q in pts] for p in pts]

    for _ in range(10):
        k1, k2 = sampler.sample(rng), sampler.sample(rng)
        t12 = trace_e(set_flags(kernel_mul(k1, k2)), fx.h)
        t21 = trace_e(set_flags(kernel_mul(k2, k1)), fx.h)
        assert t12 == t21
        for x in fx.groupoid.objects:
            m1, m2 = block_matrix(k1, x), block_matrix(k2, x)
            n = len(m1)
            tr12 = sum((m1[i][t] * m2[t][i] for i in range(n) for t in range(n)),
                       GaussRat(0))
            tr21 = sum((m2[i][t] * m1[t][i] for i in range(n) for t in range(n)),
                       GaussRat(0))
            assert tr12 == tr21


def test_verify_closedness_all_u(fixture):
    g = fixture.groupoid
    chart = g.model.kind == "chart"
    max_degree = 2 if chart else 4
    bound = 6 if chart else 0
    reducers = {2 * j + 1: AbReducer(g, 2 * j + 1, generator_bound=bound)
                for j in range(max_degree // 2 + 1)}
    for key in ("rank1", "rank2"):
        for u in (Fraction(0), Fraction(1, 2), Fraction(1)):
            c = connection_for(fixture, key, u)
            verdicts = verify_closedness(c, u, max_degree, reducers)
            assert verdicts and all(verdicts), (key, u)


def test_vb_chern_rank_density(scalar_fixture):
    g = scalar_fixture.groupoid
    us = unit_space(g)
    c = ConnectionData(trivial_bundle(us, 2), canonical_h(us))
    comp = chern_vector_bundle(c, 0)[0].component(0)
    assert comp.values == {(g.unit[x],): g.model.from_gauss(GaussRat(2))
                           for x in g.objects}


def test_vb_chern_requires_unit_space():
    fx = load_fixture("z2")
    c = connection_for(fx, "rank1")
    with pytest.raises(VerificationError):
        chern_vector_bundle(c, 2)


def test_vb_chern_closedness(scalar_fixture):
    g = scalar_fixture.groupoid
    us = unit_space(g)
    c = ConnectionData(trivial_bundle(us, 2), canonical_h(us))
    reducers = {d: AbReducer(g, d) for d in (1, 3, 5)}
    verdicts = verify_vb_closedness(c, 4, reducers)
    assert verdicts and all(verdicts)


def test_vb_chern_chart_with_connection():
    g = load_fixture("z2chart").groupoid
    us = unit_space(g)
    h = canonical_h(us)
    bundle = trivial_bundle(us, 1)
    xdx = PolyFormCoeff.monomial(1, (1,), (1,))
    c = ConnectionData(bundle, h, horizontal={p: ((xdx,),) for p in us.points})
    reducers = {1: AbReducer(g, 1, generator_bound=3),
                3: AbReducer(g, 3, generator_bound=4)}
    verdicts = verify_vb_closedness(c, 2, reducers)
    assert verdicts and all(verdicts)
    comps = chern_vector_bundle(c, 2)
    assert comps[0].component(0).values == {
        ("e",): PolyFormCoeff.constant(1, GR_ONE)}
