"""The bigraded noncommutative form complex of a finite groupoid.

A form of simplicial degree n is a finitely supported map from composable
(n+1)-tuples (g0; g1, ..., gn) to coefficients, with the quotient
normalization built in: any tuple with a unit in a slot >= 1 is projected
out on write.  The slot-0 entry is unrestricted.

Coefficients live in the groupoid's coefficient model.  In the chart model
a coefficient is a polynomial differential form expressed in the chart at
the last source s(gn) of its tuple; whenever an operation moves a value to
a tuple with a different last source, the coefficient is transported by the
exact pullback along the connecting arrow word.

Grading conventions (the scalar model is untouched by all of them):

* the product inserts the Koszul sign (-1)^{m1 * l} when the de Rham part
  of the left factor (degree m1, per homogeneous term) passes the l
  simplicial slots of the right factor;
* d2 is the plain unit-slot insertion; d1 is the entrywise exterior
  derivative times (-1)^n on simplicial degree n;
* the involution conjugates, reverses and inverts, and twists each de Rham
  term of degree m on simplicial degree k by (-1)^{k m + m(m-1)/2}.

These are the unique extensions for which the total complex is an
associative star algebra with an anticommuting pair of square-zero
differentials acting by graded derivations; the property suites check all
of those laws exactly.
"""

from __future__ import annotations

from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .coefficients import GR_ONE, GR_ZERO, GaussRat, PolyFormCoeff
from .groupoid import GroupoidSpec
from .linalg import RowReducer, Vector


class FormError(ValueError):
    """Raised on malformed forms or mismatched operands."""


TupleKey = Tuple[str, ...]


def _star_coeff(coeff, slot_degree: int):
    """Conjugate a coefficient and apply the involution's grading twist."""
    if isinstance(coeff, GaussRat):
        return coeff.conj()
    terms = {}
    for (exps, form), c in coeff.terms.items():
        m = len(form)
        sign = (slot_degree * m + (m * (m - 1)) // 2) % 2
        c = c.conj()
        terms[(exps, form)] = -c if sign else c
    return PolyFormCoeff(coeff.dim, terms)


class NCForm:
    """An element of the degree-n part of the form complex."""

    __slots__ = ("groupoid", "degree", "values")

    def __init__(self, groupoid: GroupoidSpec, degree: int,
                 values: Optional[Dict[TupleKey, object]] = None):
        self.groupoid = groupoid
        self.degree = degree
        clean: Dict[TupleKey, object] = {}
        if values:
            for key, coeff in values.items():
                key = tuple(key)
                if len(key) != degree + 1:
                    raise FormError(f"tuple {key} has wrong length for degree {degree}")
                for a, b in zip(key, key[1:]):
                    if groupoid.src[a] != groupoid.tgt[b]:
                        raise FormError(f"tuple {key} is not composable")
                if any(groupoid.is_unit(a) for a in key[1:]):
                    continue
                coeff = groupoid.model.check_coefficient(coeff)
                if coeff.is_zero():
                    continue
                prev = clean.get(key)
                if prev is not None:
                    coeff = prev + coeff
                    if coeff.is_zero():
                        del clean[key]
                        continue
                clean[key] = coeff
        self.values = clean

    # -- constructors ----------------------------------------------------------

    @classmethod
    def zero(cls, groupoid: GroupoidSpec, degree: int) -> "NCForm":
        return cls(groupoid, degree)

    @classmethod
    def delta(cls, groupoid: GroupoidSpec, key: Sequence[str], coeff=1) -> "NCForm":
        key = tuple(key)
        coeff = groupoid.model.check_coefficient(
            groupoid.model.from_gauss(coeff) if isinstance(coeff, int) else coeff)
        return cls(groupoid, len(key) - 1, {key: coeff})

    @classmethod
    def unit_function(cls, groupoid: GroupoidSpec) -> "NCForm":
        one = groupoid.model.one()
        return cls(groupoid, 0, {(groupoid.unit[x],): one for x in groupoid.objects})

    # -- structure ---------------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.values

    def entries(self):
        return sorted(self.values.items())

    def coeff(self, key: Sequence[str]):
        return self.values.get(tuple(key), self.groupoid.model.zero())

    def form_degrees(self) -> set:
        out = set()
        for c in self.values.values():
            out |= c.form_degrees()
        return out

    def total_degrees(self) -> set:
        return {self.degree + m for m in self.form_degrees()}

    def _check_mate(self, other: "NCForm"):
        if self.groupoid is not other.groupoid:
            raise FormError("forms live on different groupoids")

    # -- linear operations ----------------------------------------------------------

    def __add__(self, other: "NCForm") -> "NCForm":
        self._check_mate(other)
        if self.degree != other.degree:
            raise FormError("cannot add forms of different simplicial degree")
        values = dict(self.values)
        for key, coeff in other.values.items():
            acc = values.get(key)
            acc = coeff if acc is None else acc + coeff
            if acc.is_zero():
                values.pop(key, None)
            else:
                values[key] = acc
        out = NCForm(self.groupoid, self.degree)
        out.values = values
        return out

    def __neg__(self) -> "NCForm":
        out = NCForm(self.groupoid, self.degree)
        out.values = {k: -c for k, c in self.values.items()}
        return out

    def __sub__(self, other: "NCForm") -> "NCForm":
        return self + (-other)

    def scale(self, scalar) -> "NCForm":
        out = NCForm(self.groupoid, self.degree)
        values = {}
        for key, coeff in self.values.items():
            c = coeff.scale(scalar) if isinstance(coeff, PolyFormCoeff) else coeff * scalar
            if not c.is_zero():
                values[key] = c
        out.values = values
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, NCForm):
            return NotImplemented
        return (self.groupoid is other.groupoid and self.degree == other.degree
                and self.values == other.values)

    def __hash__(self):
        return hash((id(self.groupoid), self.degree,
                     tuple(sorted((k, str(v)) for k, v in self.values.items()))))

    def __repr__(self):
        if not self.values:
            return f"NCForm(deg {self.degree}, 0)"
        bits = ", ".join(f"{'|'.join(k)}: {v}" for k, v in self.entries())
        return f"NCForm(deg {self.degree}, {{{bits}}})"

    # -- star algebra ------------------------------------------------------------------

    def convolve(self, other: "NCForm") -> "NCForm":
        """Product: alternating sum over merges of adjacent slots.

        For entries (a0..ak) and (b0..bl) with s(ak) == t(b0), term i = 0
        merges ak with b0; term i >= 1 (sign (-1)^i) merges positions
        (k - i, k - i + 1) of the left tuple and keeps the right tuple
        whole.  Left coefficients are transported along the right tuple's
        composite word and pass its l slots with the graded cross sign.
        """
        self._check_mate(other)
        g = self.groupoid
        k, l = self.degree, other.degree
        chart = g.model.kind == "chart"
        out: Dict[TupleKey, object] = {}

        def put(key: TupleKey, coeff, negate: bool):
            if any(g.is_unit(a) for a in key[1:]):
                return
            if negate:
                coeff = -coeff
            acc = out.get(key)
            acc = coeff if acc is None else acc + coeff
            if acc.is_zero():
                out.pop(key, None)
            else:
                out[key] = acc

        for t2, c2 in other.values.items():
            word2 = g.compose_word(t2)
            for t1, c1 in self.values.items():
                if g.src[t1[-1]] != g.tgt[t2[0]]:
                    continue
                left = c1
                if chart:
                    left = g.model.pullback(left, word2).scale_by_form_degree(l)
                coeff = left * c2
                if coeff.is_zero():
                    continue
                merged = g.mul(t1[-1], t2[0])
                put(t1[:-1] + (merged,) + t2[1:], coeff, False)
                for i in range(1, k + 1):
                    pos = k - i
                    m = g.mul(t1[pos], t1[pos + 1])
                    put(t1[:pos] + (m,) + t1[pos + 2:] + t2, coeff, i % 2 == 1)
        result = NCForm(g, k + l)
        result.values = out
        return result

    __mul__ = convolve

    def involute(self) -> "NCForm":
        """The star operation: reverse, invert, conjugate.

        Each entry (a0..ak) contributes its full reversal
        (ak^-1, ..., a0^-1) with sign +1, and, for every adjacent merge
        position j, the unit-headed key
        (1, a_k^-1, ..., (a_j a_{j+1})^-1, ..., a_0^-1) with sign
        (-1)^{k+j}.  Coefficients are conjugated, twisted, and transported
        along the inverse of the entry's composite word.
        """
        g = self.groupoid
        k = self.degree
        chart = g.model.kind == "chart"
        out: Dict[TupleKey, object] = {}

        def put(key: TupleKey, coeff, negate: bool):
            if any(g.is_unit(a) for a in key[1:]):
                return
            if negate:
                coeff = -coeff
            acc = out.get(key)
            acc = coeff if acc is None else acc + coeff
            if acc.is_zero():
                out.pop(key, None)
            else:
                out[key] = acc

        for t, c in self.values.items():
            coeff = _star_coeff(c, k)
            if chart:
                coeff = g.model.pullback(coeff, g.inv(g.compose_word(t)))
            full = tuple(g.inv(a) for a in reversed(t))
            put(full, coeff, False)
            for j in range(k):
                merged = g.mul(t[j], t[j + 1])
                inv_list = [g.inv(a) for a in reversed(
                    t[:j] + (merged,) + t[j + 2:])]
                head = g.unit[g.tgt[inv_list[0]]]
                put((head, *inv_list), coeff, (k + j) % 2 == 1)
        result = NCForm(g, k)
        result.values = out
        return result

    # -- differentials ---------------------------------------------------------------------

    def d2(self) -> "NCForm":
        """Prepend the unit slot: (d2 w)(g0; g1...) = [g0 unit] w(g1; ...)."""
        g = self.groupoid
        out: Dict[TupleKey, object] = {}
        for t, c in self.values.items():
            if g.is_unit(t[0]):
                continue
            out[(g.unit[g.tgt[t[0]]], *t)] = c
        result = NCForm(g, self.degree + 1)
        result.values = out
        return result

    def d1(self) -> "NCForm":
        """Entrywise exterior derivative times (-1)^degree (zero on scalars)."""
        g = self.groupoid
        if g.model.kind == "scalar":
            return NCForm(g, self.degree)
        negate = self.degree % 2 == 1
        out: Dict[TupleKey, object] = {}
        for t, c in self.values.items():
            dc = c.exterior_d()
            if dc.is_zero():
                continue
            out[t] = -dc if negate else dc
        result = NCForm(g, self.degree)
        result.values = out
        return result

    def d_total(self) -> List["NCForm"]:
        """Components of (d1 + d2): same-degree piece, degree+1 piece."""
        return [self.d1(), self.d2()]


def convolve(w1: NCForm, w2: NCForm) -> NCForm:
    return w1.convolve(w2)


def involute(w: NCForm) -> NCForm:
    return w.involute()


def d1(w: NCForm) -> NCForm:
    return w.d1()


def d2(w: NCForm) -> NCForm:
    return w.d2()


# ---------------------------------------------------------------------------
# Mixed-degree sums (needed once d1 and d2 are combined)
# ---------------------------------------------------------------------------

class FormSum:
    """A finite sum of NCForms of distinct simplicial degrees."""

    __slots__ = ("groupoid", "parts")

    def __init__(self, groupoid: GroupoidSpec, parts: Iterable[NCForm] = ()):
        self.groupoid = groupoid
        self.parts: Dict[int, NCForm] = {}
        for part in parts:
            self._accumulate(part)

    def _accumulate(self, form: NCForm):
        if form.is_zero():
            return
        prev = self.parts.get(form.degree)
        total = form if prev is None else prev + form
        if total.is_zero():
            self.parts.pop(form.degree, None)
        else:
            self.parts[form.degree] = total

    @classmethod
    def of(cls, *forms: NCForm) -> "FormSum":
        if not forms:
            raise FormError("FormSum.of needs at least one form")
        return cls(forms[0].groupoid, forms)

    def component(self, degree: int) -> NCForm:
        return self.parts.get(degree, NCForm(self.groupoid, degree))

    def degrees(self):
        return sorted(self.parts)

    def is_zero(self) -> bool:
        return not self.parts

    def __add__(self, other: "FormSum") -> "FormSum":
        out = FormSum(self.groupoid, self.parts.values())
        for part in other.parts.values():
            out._accumulate(part)
        return out

    def __sub__(self, other: "FormSum") -> "FormSum":
        out = FormSum(self.groupoid, self.parts.values())
        for part in other.parts.values():
            out._accumulate(-part)
        return out

    def d_total(self) -> "FormSum":
        out = FormSum(self.groupoid)
        for part in self.parts.values():
            out._accumulate(part.d1())
            out._accumulate(part.d2())
        return out

    def __eq__(self, other):
        if not isinstance(other, FormSum):
            return NotImplemented
        return self.groupoid is other.groupoid and self.parts == other.parts

    def __hash__(self):
        return hash((id(self.groupoid), tuple(sorted(self.parts))))

    def __repr__(self):
        return f"FormSum({list(self.parts.values())!r})"


def d_total(w) -> FormSum:
    if isinstance(w, NCForm):
        return FormSum(w.groupoid, [w.d1(), w.d2()])
    return w.d_total()


# ---------------------------------------------------------------------------
# The graded-commutator subspace and equality in the abelianization
# ---------------------------------------------------------------------------

def flatten_form(form: NCForm) -> Vector:
    """Flatten to a sparse vector over (degree, tuple[, term]) coordinates."""
    vec: Vector = {}
    for key, coeff in form.values.items():
        if isinstance(coeff, GaussRat):
            vec[(form.degree, key)] = coeff
        else:
            for term_key, c in coeff.terms.items():
                vec[(form.degree, key, term_key)] = c
    return vec


def flatten_sum(forms: Iterable[NCForm]) -> Vector:
    vec: Vector = {}
    for form in forms:
        for coord, value in flatten_form(form).items():
            acc = vec.get(coord, GR_ZERO) + value
            if acc.is_zero():
                vec.pop(coord, None)
            else:
                vec[coord] = acc
    return vec


def _delta_generators(groupoid: GroupoidSpec, total_degree: int, poly_bound: int):
    """Delta-form generators of each total degree up to total_degree."""
    model = groupoid.model
    out: Dict[int, list] = {d: [] for d in range(total_degree + 1)}
    for n in range(total_degree + 1):
        tuples = groupoid.nondegenerate_tuples(n)
        if model.kind == "scalar":
            for t in tuples:
                out[n].append((("delta", t, None), NCForm.delta(groupoid, t, GR_ONE)))
        else:
            dim = model.dim
            monos = _bounded_monomials(dim, poly_bound)
            form_sets = _form_index_subsets(dim)
            for t in tuples:
                for form in form_sets:
                    m = len(form)
                    if n + m > total_degree:
                        continue
                    for exps in monos:
                        coeff = PolyFormCoeff.monomial(dim, exps, form)
                        label = ("delta", t, (exps, form))
                        out[n + m].append((label, NCForm.delta(groupoid, t, coeff)))
    return out


def _bounded_monomials(dim: int, bound: int):
    if dim == 0:
        return [()]
    out = []
    def rec(prefix, remaining):
        if len(prefix) == dim:
            out.append(tuple(prefix))
            return
        for e in range(remaining + 1):
            rec(prefix + [e], remaining - e)
    rec([], bound)
    return out


def _form_index_subsets(dim: int):
    subsets = [()]
    for i in range(1, dim + 1):
        subsets = subsets + [s + (i,) for s in subsets]
    return sorted(subsets, key=lambda s: (len(s), s))


class AbReducer:
    """Row-reduced basis of the graded-commutator span at one total degree.

    Every basis vector is produced from literal commutators of delta-form
    generators, and the certificate of each reduction is an explicit
    combination of those commutators.
    """

    def __init__(self, groupoid: GroupoidSpec, total_degree: int,
                 generator_bound: int = 0):
        self.groupoid = groupoid
        self.total_degree = total_degree
        self.generator_bound = generator_bound
        self.reducer = RowReducer()
        self.commutators: Dict = {}
        bound = generator_bound if groupoid.model.kind == "chart" else 0
        generators = _delta_generators(groupoid, total_degree, bound)
        for d1_ in range(total_degree + 1):
            d2_ = total_degree - d1_
            for label1, form1 in generators[d1_]:
                for label2, form2 in generators[d2_]:
                    if d1_ > d2_ or (d1_ == d2_ and label2 < label1):
                        continue
                    lhs = form1.convolve(form2)
                    rhs = form2.convolve(form1)
                    comm_parts = [lhs, rhs if (d1_ * d2_) % 2 else -rhs]
                    vec = flatten_sum(comm_parts)
                    if not vec:
                        continue
                    label = ("comm", label1, label2)
                    if self.reducer.insert(vec, label):
                        self.commutators[label] = comm_parts

    @property
    def rank(self) -> int:
        return self.reducer.rank

    def reduce(self, forms) -> Tuple[Vector, Dict]:
        """Split a form (or list of components) into residue + combination."""
        if isinstance(forms, NCForm):
            forms = [forms]
        elif isinstance(forms, FormSum):
            forms = list(forms.parts.values())
        for form in forms:
            degs = form.total_degrees()
            if degs and degs != {self.total_degree}:
                raise FormError(
                    f"form of total degree {sorted(degs)} reduced at degree {self.total_degree}")
        return self.reducer.express(flatten_sum(forms))

    def is_zero_in_ab(self, forms):
        """True with an expressing combination, or False with the residue."""
        residue, combo = self.reduce(forms)
        if residue:
            return False, residue
        return True, combo


def commutator_reducer(groupoid: GroupoidSpec, total_degree: int,
                       generator_bound: int = 0) -> AbReducer:
    return AbReducer(groupoid, total_degree, generator_bound)


def is_zero_in_ab(form, reducer: AbReducer):
    return reducer.is_zero_in_ab(form)
