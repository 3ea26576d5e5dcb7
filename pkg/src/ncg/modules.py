"""Section spaces as modules over the form algebra.

Sections live on a fibered right G-space P (the base-space picture is the
special case P = object set via ``unit_space``).  A module form of degree n
maps keys (p, g1, ..., gn) with moment(p) = tgt(g1) and all slots non-unit
to vectors in the bundle fiber at p.g1...gn; coefficients are expressed in
the chart at that endpoint.

The left action of a degree-k form on a degree-l module form produces the
alternating sum over merges of adjacent slots across the concatenated key,
with one boundary term summing over a free arrow appended at the far end
and pulled back through the bundle action.  The connection stack is
horizontal (exterior derivative plus an invariant connection matrix, zero
in the scalar model) plus the simplicial part that appends one arrow
weighted by a partition function.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .coefficients import GaussRat, PolyFormCoeff
from .forms import FormError, NCForm
from .groupoid import (EquivariantBundle, FiberedSpace, GroupoidError,
                       PartitionFunction, ValidationReport)
from .linalg import mat_inverse


def _vec_add(u, v):
    return tuple(a + b for a, b in zip(u, v))


def _vec_is_zero(u) -> bool:
    return all(c.is_zero() for c in u)


def _dot(row, vec):
    acc = None
    for a, b in zip(row, vec):
        term = a * b
        acc = term if acc is None else acc + term
    return acc


def _transport_vec(groupoid, vec, word):
    if groupoid.model.kind == "scalar" or not word:
        return vec
    return tuple(groupoid.transport(c, word) for c in vec)


def _scale_vec_by_form_degree(vec, parity: int):
    if parity % 2 == 0:
        return vec
    return tuple(c.scale_by_form_degree(1) for c in vec)


class Section:
    """A section of the bundle over P: one fiber vector per point."""

    __slots__ = ("bundle", "values")

    def __init__(self, bundle: EquivariantBundle,
                 values: Optional[Mapping[str, Sequence]] = None):
        self.bundle = bundle
        model = bundle.groupoid.model
        zero_vec = tuple(model.zero() for _ in range(bundle.rank))
        vals = {}
        for p in bundle.space.points:
            vec = tuple(model.check_coefficient(c) for c in values[p]) \
                if values and p in values else zero_vec
            if len(vec) != bundle.rank:
                raise FormError(f"section value at {p!r} has wrong rank")
            vals[p] = vec
        self.values = vals

    @classmethod
    def delta(cls, bundle: EquivariantBundle, point: str, index: int,
              coeff=None) -> "Section":
        model = bundle.groupoid.model
        coeff = model.one() if coeff is None else model.check_coefficient(coeff)
        vec = tuple(coeff if j == index else model.zero()
                    for j in range(bundle.rank))
        return cls(bundle, {point: vec})

    @classmethod
    def basis(cls, bundle: EquivariantBundle) -> List["Section"]:
        return [cls.delta(bundle, p, j)
                for p in bundle.space.points for j in range(bundle.rank)]

    def __call__(self, p: str):
        return self.values[p]

    def is_zero(self) -> bool:
        return all(_vec_is_zero(v) for v in self.values.values())

    def __add__(self, other: "Section") -> "Section":
        out = Section(self.bundle)
        out.values = {p: _vec_add(self.values[p], other.values[p])
                      for p in self.values}
        return out

    def __neg__(self) -> "Section":
        out = Section(self.bundle)
        out.values = {p: tuple(-c for c in v) for p, v in self.values.items()}
        return out

    def __sub__(self, other: "Section") -> "Section":
        return self + (-other)

    def scale(self, scalar) -> "Section":
        out = Section(self.bundle)
        out.values = {}
        for p, v in self.values.items():
            out.values[p] = tuple(
                c.scale(scalar) if isinstance(c, PolyFormCoeff) else c * scalar
                for c in v)
        return out

    def __eq__(self, other):
        if not isinstance(other, Section):
            return NotImplemented
        return self.bundle is other.bundle and self.values == other.values

    def to_module_form(self) -> "ModuleForm":
        vals = {(p, ()): v for p, v in self.values.items() if not _vec_is_zero(v)}
        return ModuleForm(self.bundle, 0, vals)

    def __repr__(self):
        bits = ", ".join(f"{p}: ({', '.join(str(c) for c in v)})"
                         for p, v in sorted(self.values.items())
                         if not _vec_is_zero(v))
        return f"Section({{{bits}}})"


class ModuleForm:
    """A degree-n form with values in the bundle, sparse over keys."""

    __slots__ = ("bundle", "degree", "values")

    def __init__(self, bundle: EquivariantBundle, degree: int,
                 values: Optional[Mapping[Tuple[str, tuple], Sequence]] = None):
        self.bundle = bundle
        self.degree = degree
        g = bundle.groupoid
        space = bundle.space
        model = g.model
        clean: Dict[Tuple[str, tuple], tuple] = {}
        if values:
            for (p, word), vec in values.items():
                word = tuple(word)
                if len(word) != degree:
                    raise FormError(f"key {(p, word)} has wrong degree")
                if any(g.is_unit(a) for a in word):
                    continue
                if word and space.moment[p] != g.tgt[word[0]]:
                    raise FormError(f"moment condition fails on {(p, word)}")
                for a, b in zip(word, word[1:]):
                    if g.src[a] != g.tgt[b]:
                        raise FormError(f"slots of {(p, word)} are not composable")
                vec = tuple(model.check_coefficient(c) for c in vec)
                if len(vec) != bundle.rank:
                    raise FormError(f"value at {(p, word)} has wrong rank")
                if _vec_is_zero(vec):
                    continue
                key = (p, word)
                if key in clean:
                    vec = _vec_add(clean[key], vec)
                    if _vec_is_zero(vec):
                        del clean[key]
                        continue
                clean[key] = vec
        self.values = clean

    @classmethod
    def delta(cls, bundle: EquivariantBundle, p: str, word: Sequence[str],
              index: int, coeff=None) -> "ModuleForm":
        model = bundle.groupoid.model
        coeff = model.one() if coeff is None else model.check_coefficient(coeff)
        vec = tuple(coeff if j == index else model.zero()
                    for j in range(bundle.rank))
        return cls(bundle, len(tuple(word)), {(p, tuple(word)): vec})

    @classmethod
    def basis(cls, bundle: EquivariantBundle, degree: int) -> List["ModuleForm"]:
        out = []
        for p, word in module_keys(bundle.space, degree):
            for j in range(bundle.rank):
                out.append(cls.delta(bundle, p, word, j))
        return out

    def is_zero(self) -> bool:
        return not self.values

    def entries(self):
        return sorted(self.values.items())

    def value(self, p: str, word: Sequence[str]):
        model = self.bundle.groupoid.model
        zero = tuple(model.zero() for _ in range(self.bundle.rank))
        return self.values.get((p, tuple(word)), zero)

    def endpoint(self, key) -> str:
        p, word = key
        return self.bundle.space.act_word(p, word)

    def __add__(self, other: "ModuleForm") -> "ModuleForm":
        if self.degree != other.degree:
            raise FormError("cannot add module forms of different degree")
        vals = dict(self.values)
        for key, vec in other.values.items():
            if key in vals:
                acc = _vec_add(vals[key], vec)
                if _vec_is_zero(acc):
                    del vals[key]
                else:
                    vals[key] = acc
            else:
                vals[key] = vec
        out = ModuleForm(self.bundle, self.degree)
        out.values = vals
        return out

    def __neg__(self) -> "ModuleForm":
        out = ModuleForm(self.bundle, self.degree)
        out.values = {k: tuple(-c for c in v) for k, v in self.values.items()}
        return out

    def __sub__(self, other: "ModuleForm") -> "ModuleForm":
        return self + (-other)

    def scale(self, scalar) -> "ModuleForm":
        out = ModuleForm(self.bundle, self.degree)
        vals = {}
        for k, v in self.values.items():
            vec = tuple(c.scale(scalar) if isinstance(c, PolyFormCoeff) else c * scalar
                        for c in v)
            if not _vec_is_zero(vec):
                vals[k] = vec
        out.values = vals
        return out

    def __eq__(self, other):
        if not isinstance(other, ModuleForm):
            return NotImplemented
        return (self.bundle is other.bundle and self.degree == other.degree
                and self.values == other.values)

    def to_section(self) -> Section:
        if self.degree != 0:
            raise FormError("only degree-0 module forms convert to sections")
        return Section(self.bundle, {p: v for (p, _), v in self.values.items()})

    def __repr__(self):
        bits = ", ".join(f"{p}|{','.join(w)}: ({', '.join(str(c) for c in v)})"
                         for (p, w), v in self.entries())
        return f"ModuleForm(deg {self.degree}, {{{bits}}})"


def module_keys(space: FiberedSpace, degree: int):
    """All valid (point, slot-word) keys of the given degree."""
    g = space.groupoid
    if degree == 0:
        return [(p, ()) for p in space.points]
    out = []
    chains = [t for t in g.composable_tuples(degree)
              if all(not g.is_unit(a) for a in t)]
    for word in chains:
        for p in space.fiber(g.tgt[word[0]]):
            out.append((p, word))
    return out


class ModuleSum:
    """A finite sum of module forms of distinct degrees."""

    __slots__ = ("bundle", "parts")

    def __init__(self, bundle: EquivariantBundle, parts: Iterable[ModuleForm] = ()):
        self.bundle = bundle
        self.parts: Dict[int, ModuleForm] = {}
        for part in parts:
            self.accumulate(part)

    def accumulate(self, part):
        if isinstance(part, Section):
            part = part.to_module_form()
        if part.is_zero():
            return
        prev = self.parts.get(part.degree)
        total = part if prev is None else prev + part
        if total.is_zero():
            self.parts.pop(part.degree, None)
        else:
            self.parts[part.degree] = total

    def component(self, degree: int) -> ModuleForm:
        return self.parts.get(degree, ModuleForm(self.bundle, degree))

    def is_zero(self) -> bool:
        return not self.parts

    def scale(self, scalar) -> "ModuleSum":
        return ModuleSum(self.bundle, [p.scale(scalar) for p in self.parts.values()])

    def __add__(self, other: "ModuleSum") -> "ModuleSum":
        out = ModuleSum(self.bundle, self.parts.values())
        for part in other.parts.values():
            out.accumulate(part)
        return out

    def __sub__(self, other: "ModuleSum") -> "ModuleSum":
        out = ModuleSum(self.bundle, self.parts.values())
        for part in other.parts.values():
            out.accumulate(-part)
        return out

    def __eq__(self, other):
        if not isinstance(other, ModuleSum):
            return NotImplemented
        return self.bundle is other.bundle and self.parts == other.parts

    def __repr__(self):
        return f"ModuleSum({sorted(self.parts)})"


def as_module_form(f) -> ModuleForm:
    return f.to_module_form() if isinstance(f, Section) else f


# ---------------------------------------------------------------------------
# The vector representation
# ---------------------------------------------------------------------------

def vector_rep(omega: NCForm, f) -> object:
    """Left action of a degree-k form on a degree-l module form or section.

    Every entry pair contributes k merge terms inside the form's slots, one
    junction merge, l - 1 merges inside the module slots, and one boundary
    term where the trailing arrow of the concatenation is summed freely and
    the value is pulled back through the bundle action.
    """
    F = as_module_form(f)
    bundle = F.bundle
    g = omega.groupoid
    if g is not bundle.groupoid:
        raise FormError("form and module live on different groupoids")
    space = bundle.space
    chart = g.model.kind == "chart"
    k, l = omega.degree, F.degree
    out: Dict[Tuple[str, tuple], tuple] = {}

    def put(p, word, vec, negate):
        if any(g.is_unit(a) for a in word):
            return
        if negate:
            vec = tuple(-c for c in vec)
        key = (p, word)
        if key in out:
            acc = _vec_add(out[key], vec)
            if _vec_is_zero(acc):
                del out[key]
            else:
                out[key] = acc
        else:
            out[key] = vec

    for (q, bs), value in F.values.items():
        vp = space.act_word(q, bs)  # the fiber point where the value lives
        for t, c in omega.values.items():
            # junction: the form's last source must be the module key's moment
            if g.src[t[-1]] != space.moment[q]:
                continue
            coeff = c
            if chart:
                coeff = g.transport(coeff, bs).scale_by_form_degree(l)
            wedge = tuple(coeff * v for v in value)
            if _vec_is_zero(wedge):
                continue
            base = space.act_word(q, [g.inv(a) for a in reversed(t)])
            # merges inside the form tuple: positions (i, i+1), sign (-1)^i
            for i in range(k):
                m = g.mul(t[i], t[i + 1])
                word = t[:i] + (m,) + t[i + 2:] + bs
                put(base, word, wedge, i % 2 == 1)
            # junction merge of t[-1] with bs[0], sign (-1)^k
            if l >= 1:
                m = g.mul(t[-1], bs[0])
                put(base, t[:-1] + (m,) + bs[1:], wedge, k % 2 == 1)
                # merges inside the module slots, sign (-1)^(k+r)
                for r in range(1, l):
                    m = g.mul(bs[r - 1], bs[r])
                    word = t + bs[:r - 1] + (m,) + bs[r + 1:]
                    put(base, word, wedge, (k + r) % 2 == 1)
            # boundary: last arrow of the concatenation summed freely
            full = t + bs
            gamma = full[-1]
            lead = full[:-1]
            back = bundle.act_matrix_inv(space.act_word(base, lead), gamma)
            vec = value
            if chart:
                coeff_b = g.transport(c, bs[:-1] if l >= 1 else (g.inv(gamma),))
                coeff_b = coeff_b.scale_by_form_degree(l)
                vec = _transport_vec(g, value, (g.inv(gamma),))
                wedge_b = tuple(coeff_b * v for v in vec)
            else:
                wedge_b = wedge
            moved = tuple(_dot(back[i], wedge_b) for i in range(bundle.rank))
            put(base, lead, moved, (k + l) % 2 == 1)

    result = ModuleForm(bundle, k + l)
    result.values = out
    if k + l == 0 and isinstance(f, Section):
        return result.to_section()
    return result


# ---------------------------------------------------------------------------
# The form-valued inner product
# ---------------------------------------------------------------------------

def inner_product(u1: Section, u2: Section) -> NCForm:
    """<u1, u2>(g) integrates <u1(p), u2(p.g) g^{-1}> over the fiber at
    tgt(g).

    The pairing is linear in the first argument and conjugate-linear in
    the second; this is the unique choice under which the convolution
    identity f * <u1, u2> == <(action of f) u1, u2> holds for complex
    scalars.
    """
    bundle = u1.bundle
    if bundle is not u2.bundle:
        raise FormError("sections live on different bundles")
    g = bundle.groupoid
    space = bundle.space
    chart = g.model.kind == "chart"
    values = {}
    for arrow in g.arrows:
        total = None
        for p in space.fiber(g.tgt[arrow]):
            v1 = u1.values[p]
            v2 = u2.values[space.act(p, arrow)]
            back = bundle.act_matrix_inv(p, arrow)
            if chart:
                v2 = _transport_vec(g, v2, (g.inv(arrow),))
            moved = tuple(_dot(back[i], v2) for i in range(bundle.rank))
            h = bundle.metric[p]
            term = None
            for i in range(bundle.rank):
                for j in range(bundle.rank):
                    piece = v1[i] * (h[i][j] * moved[j].conj())
                    term = piece if term is None else term + piece
            term = term.scale(GaussRat(space.measure[p]))
            total = term if total is None else total + term
        if total is not None and not total.is_zero():
            if chart:
                total = g.transport(total, (arrow,))
            values[(arrow,)] = total
    return NCForm(g, 0, values)


def base_metric(u1: Section, u2: Section) -> Dict[str, object]:
    """The restriction of the inner product to unit arrows, per object."""
    form = inner_product(u1, u2)
    g = u1.bundle.groupoid
    return {g.tgt[key[0]]: c for key, c in form.values.items()
            if g.is_unit(key[0])}


# ---------------------------------------------------------------------------
# The simplicial connection part
# ---------------------------------------------------------------------------

def nabla01(f, h: PartitionFunction) -> ModuleForm:
    """Append one arrow at the far end, push the value along it, and weight
    by the partition function at the new endpoint; sign (-1)^degree."""
    F = as_module_form(f)
    bundle = F.bundle
    g = bundle.groupoid
    space = bundle.space
    chart = g.model.kind == "chart"
    negate = F.degree % 2 == 1
    out: Dict[Tuple[str, tuple], tuple] = {}
    for (p, word), vec in F.values.items():
        vp = space.act_word(p, word)
        for gamma in g.target_fiber(space.moment[vp]):
            if g.is_unit(gamma):
                continue
            weight = GaussRat(h(space.act(vp, gamma)))
            mat = bundle.act_matrix(vp, gamma)
            moved = vec
            if chart:
                moved = _transport_vec(g, vec, (gamma,))
            pushed = tuple(_dot(mat[i], moved) for i in range(bundle.rank))
            pushed = tuple(c.scale(weight) if chart else c * weight for c in pushed)
            if negate:
                pushed = tuple(-c for c in pushed)
            if _vec_is_zero(pushed):
                continue
            key = (p, word + (gamma,))
            if key in out:
                acc = _vec_add(out[key], pushed)
                if _vec_is_zero(acc):
                    del out[key]
                else:
                    out[key] = acc
            else:
                out[key] = pushed
    result = ModuleForm(bundle, F.degree + 1)
    result.values = out
    return result


# ---------------------------------------------------------------------------
# Germ transport of sections along bisections
# ---------------------------------------------------------------------------

def germ_pullback_section(arrows, f: Section) -> Section:
    """Pull a section back along the partial map p -> p . (arrow over
    moment(p)): value at p becomes the value at the translated point,
    carried back through the bundle action; zero off the domain."""
    bundle = f.bundle
    g = bundle.groupoid
    space = bundle.space
    chart = g.model.kind == "chart"
    by_target = {}
    for a in arrows:
        if g.tgt[a] in by_target:
            raise GroupoidError("target map not injective on the bisection")
        by_target[g.tgt[a]] = a
    out = Section(bundle)
    vals = dict(out.values)
    for p in space.points:
        a = by_target.get(space.moment[p])
        if a is None:
            continue
        v = f.values[space.act(p, a)]
        if chart:
            v = _transport_vec(g, v, (g.inv(a),))
        back = bundle.act_matrix_inv(p, a)
        vals[p] = tuple(_dot(back[i], v) for i in range(bundle.rank))
    out.values = vals
    return out


# ---------------------------------------------------------------------------
# Connection data and the superconnection stack
# ---------------------------------------------------------------------------

class ConnectionData:
    """Horizontal connection matrices (chart model), the partition function
    driving the simplicial part, and the interpolation parameter u."""

    def __init__(self, bundle: EquivariantBundle, h: PartitionFunction,
                 horizontal: Optional[Mapping[str, Sequence[Sequence]]] = None,
                 u: Fraction = Fraction(1)):
        self.bundle = bundle
        self.h = h
        self.u = Fraction(u)
        g = bundle.groupoid
        model = g.model
        self.horizontal = None
        if horizontal is not None:
            if model.kind != "chart":
                raise FormError("horizontal connection matrices need the chart model")
            self.horizontal = {
                p: tuple(tuple(model.check_coefficient(v) for v in row)
                         for row in horizontal[p])
                for p in bundle.space.points}
        self._adjoint = None
        report = self.validate()
        if not report.ok:
            raise FormError(str(report))

    # -- validation -------------------------------------------------------------

    def validate(self) -> ValidationReport:
        report = ValidationReport("connection")
        if self.h.check() is not None:
            report.add("partition function identity fails")
        if self.horizontal is None:
            return report
        bundle, g = self.bundle, self.bundle.groupoid
        basis = Section.basis(bundle)
        for a in g.nonunit_arrows():
            for f in basis:
                lhs = self._horizontal_apply(germ_pullback_section([a], f).to_module_form(),
                                             self.horizontal)
                rhs = self._germ_pullback_degree0(a, self._horizontal_apply(
                    f.to_module_form(), self.horizontal))
                if lhs != rhs:
                    report.add(f"horizontal part not invariant along {a!r}")
                    return report
        return report

    def _germ_pullback_degree0(self, arrow, F: ModuleForm) -> ModuleForm:
        bundle = self.bundle
        g = bundle.groupoid
        space = bundle.space
        out = {}
        for p in space.points:
            if space.moment[p] != g.tgt[arrow]:
                continue
            v = F.values.get((space.act(p, arrow), ()))
            if v is None:
                continue
            v = _transport_vec(g, v, (g.inv(arrow),))
            back = bundle.act_matrix_inv(p, arrow)
            vec = tuple(_dot(back[i], v) for i in range(bundle.rank))
            if not _vec_is_zero(vec):
                out[(p, ())] = vec
        result = ModuleForm(bundle, 0)
        result.values = out
        return result

    # -- the two horizontal operators ----------------------------------------------

    def adjoint_horizontal(self):
        """Connection matrices of the metric adjoint, -conj(H^{-1} A^T H);
        for an anti-selfadjoint matrix and the identity metric this is the
        original matrix, so the adjoint superconnection coincides there."""
        if self.horizontal is None:
            return None
        if self._adjoint is None:
            bundle = self.bundle
            out = {}
            for p, mat in self.horizontal.items():
                rank = bundle.rank
                at = tuple(tuple(mat[j][i] for j in range(rank))
                           for i in range(rank))
                hmat = tuple(tuple(bundle.groupoid.model.from_gauss(v)
                                   for v in row) for row in bundle.metric[p])
                hinv = tuple(tuple(bundle.groupoid.model.from_gauss(v)
                                   for v in row) for row in mat_inverse(bundle.metric[p]))
                prod = _mat_mul_coeff(hinv, _mat_mul_coeff(at, hmat))
                out[p] = tuple(tuple(-v.conj() for v in row) for row in prod)
            self._adjoint = out
        return self._adjoint

    def _horizontal_apply(self, F: ModuleForm, matrices) -> ModuleForm:
        """(-1)^n (exterior derivative + connection matrix at the endpoint)."""
        bundle = self.bundle
        g = bundle.groupoid
        if g.model.kind == "scalar":
            return ModuleForm(bundle, F.degree)
        space = bundle.space
        negate = F.degree % 2 == 1
        out: Dict[Tuple[str, tuple], tuple] = {}
        for (p, word), vec in F.values.items():
            endpoint = space.act_word(p, word)
            amat = matrices[endpoint] if matrices is not None else None
            new = []
            for i in range(bundle.rank):
                acc = vec[i].exterior_d()
                if amat is not None:
                    for j in range(bundle.rank):
                        acc = acc + amat[i][j] * vec[j]
                new.append(-acc if negate else acc)
            new = tuple(new)
            if not _vec_is_zero(new):
                out[(p, word)] = new
        result = ModuleForm(bundle, F.degree)
        result.values = out
        return result

    # -- superconnections ---------------------------------------------------------------

    def apply_d(self, f) -> ModuleSum:
        """D = horizontal + simplicial."""
        F = as_module_form(f)
        return ModuleSum(self.bundle, [self._horizontal_apply(F, self.horizontal),
                                       nabla01(F, self.h)])

    def apply_d_adjoint(self, f) -> ModuleSum:
        F = as_module_form(f)
        return ModuleSum(self.bundle, [self._horizontal_apply(F, self.adjoint_horizontal()),
                                       nabla01(F, self.h)])

    def apply_du(self, f, u: Optional[Fraction] = None) -> ModuleSum:
        """D(u) = u D + (1 - u) D'."""
        u = self.u if u is None else Fraction(u)
        F = as_module_form(f)
        plain = self.apply_d(F)
        if self.horizontal is None:
            return plain  # D == D' when there is no horizontal part
        adj = self.apply_d_adjoint(F)
        return plain.scale(GaussRat(u)) + adj.scale(GaussRat(1 - u))

    def apply_du_sum(self, forms: ModuleSum, u: Optional[Fraction] = None) -> ModuleSum:
        out = ModuleSum(self.bundle)
        for part in forms.parts.values():
            out = out + self.apply_du(part, u)
        return out

    def curvature_operator(self, u: Optional[Fraction] = None) -> Callable:
        def op(f):
            return self.apply_du_sum(self.apply_du(f, u), u)
        return op


def _mat_mul_coeff(a, b):
    n = len(a)
    return tuple(tuple(_dot([a[i][t] for t in range(n)],
                            [b[t][j] for t in range(n)]) for j in range(n))
                 for i in range(n))


def adjunction_residual(c: ConnectionData, u1: Section, u2: Section):
    """d<u1,u2> - <D u1, u2> - <u1, D' u2> restricted to unit arrows;
    identically zero for the computed adjoint."""
    bundle = c.bundle
    g = bundle.groupoid
    lhs = {}
    base = base_metric(u1, u2)
    for x, coeff in base.items():
        d = coeff.exterior_d()
        if not d.is_zero():
            lhs[x] = d
    du1 = c._horizontal_apply(u1.to_module_form(), c.horizontal)
    du2 = c._horizontal_apply(u2.to_module_form(), c.adjoint_horizontal())
    for a, b in ((du1, u2.to_module_form()),
                 (u1.to_module_form(), du2)):
        for p in bundle.space.points:
            va = a.values.get((p, ()))
            vb = b.values.get((p, ()))
            if va is None or vb is None:
                continue
            h = bundle.metric[p]
            term = None
            for i in range(bundle.rank):
                for j in range(bundle.rank):
                    piece = va[i] * (g.model.from_gauss(h[i][j]) * vb[j].conj())
                    term = piece if term is None else term + piece
            term = term.scale(GaussRat(bundle.space.measure[p]))
            x = bundle.space.moment[p]
            lhs[x] = lhs.get(x, g.model.zero()) - term
    return {x: v for x, v in lhs.items() if not v.is_zero()}
