"""Form-linear smoothing operators as explicit kernels.

A k-slot kernel maps keys (p, g_k, ..., g_1, q) - slots listed from the
p-adjacent end, all non-unit, with moment(q) = tgt(g_1) and
moment(p) = src(g_k) - to rank x rank matrices representing maps from the
fiber at q to the fiber at p.  In the chart model the matrix entries are
polynomial forms expressed in the chart at p's moment object.

Applying a kernel to a degree-l module form inserts the kernel's slots
after the form's slots, integrates the q-variable over the fiber against
the invariant measure, and carries the sign (-1)^{k l} (slots crossing
slots) plus the graded cross sign when kernel entries of odd form degree
cross the form's slots.  Kernel multiplication composes so that applying
K2 after K1 equals applying K2 * K1.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .coefficients import GR_ONE, GR_ZERO, GaussRat, PolyFormCoeff
from .forms import NCForm
from .groupoid import EquivariantBundle, FiberedSpace, GroupoidError
from .linalg import nullspace
from .modules import (ConnectionData, ModuleForm, ModuleSum, Section,
                      as_module_form, module_keys, vector_rep,
                      _dot, _transport_vec, _vec_add, _vec_is_zero)


class KernelError(ValueError):
    """Raised on malformed kernels or incompatible operands."""


KernelKey = Tuple[str, Tuple[str, ...], str]


def kernel_keys(space: FiberedSpace, slots: int) -> List[KernelKey]:
    """All valid keys (p, descending slots, q) with the fiber conditions."""
    g = space.groupoid
    out = []
    if slots == 0:
        for x in g.objects:
            for p in space.fiber(x):
                for q in space.fiber(x):
                    out.append((p, (), q))
        return out
    chains = [t for t in g.composable_tuples(slots)
              if all(not g.is_unit(a) for a in t)]
    for chain in chains:  # ascending order (g1, ..., gk)
        desc = tuple(reversed(chain))
        for q in space.fiber(g.tgt[chain[0]]):
            for p in space.fiber(g.src[chain[-1]]):
                out.append((p, desc, q))
    return out


def _mat_add(a, b):
    return tuple(tuple(x + y for x, y in zip(r1, r2)) for r1, r2 in zip(a, b))


def _mat_is_zero(m) -> bool:
    return all(c.is_zero() for row in m for c in row)


def _mat_neg(m):
    return tuple(tuple(-c for c in row) for row in m)


def _mat_scale(m, scalar):
    return tuple(tuple(c.scale(scalar) if isinstance(c, PolyFormCoeff) else c * scalar
                       for c in row) for row in m)


def _mat_scale_form_degree(m, parity: int):
    if parity % 2 == 0:
        return m
    return tuple(tuple(c.scale_by_form_degree(1) for c in row) for row in m)


def _mat_mul(a, b):
    n = len(a)
    return tuple(tuple(_dot(a[i], tuple(b[t][j] for t in range(n)))
                       for j in range(n)) for i in range(n))


def _mat_transport(groupoid, m, word):
    if groupoid.model.kind == "scalar" or not word:
        return m
    return tuple(tuple(groupoid.transport(c, word) for c in row) for row in m)


def _mat_conv(bundle, m):
    """Coerce a GaussRat matrix into the bundle's coefficient model."""
    model = bundle.groupoid.model
    return tuple(tuple(model.from_gauss(v) for v in row) for row in m)


class SmoothingKernel:
    """A sparse k-slot kernel with optional verified linearity flags."""

    __slots__ = ("bundle", "slots", "entries", "equivariant", "cocycle")

    def __init__(self, bundle: EquivariantBundle, slots: int,
                 entries: Optional[Mapping[KernelKey, Sequence[Sequence]]] = None,
                 equivariant: Optional[bool] = None,
                 cocycle: Optional[bool] = None):
        self.bundle = bundle
        self.slots = slots
        self.equivariant = equivariant
        self.cocycle = cocycle
        g = bundle.groupoid
        space = bundle.space
        model = g.model
        clean: Dict[KernelKey, tuple] = {}
        if entries:
            for (p, desc, q), mat in entries.items():
                desc = tuple(desc)
                if len(desc) != slots:
                    raise KernelError(f"key {(p, desc, q)} has wrong slot count")
                chain = tuple(reversed(desc))
                if any(g.is_unit(a) for a in chain):
                    raise KernelError(f"unit slot in kernel key {(p, desc, q)}")
                for a, b in zip(chain, chain[1:]):
                    if g.src[a] != g.tgt[b]:
                        raise KernelError(f"slots of {(p, desc, q)} not composable")
                if slots:
                    if space.moment[q] != g.tgt[chain[0]]:
                        raise KernelError(f"q-side fiber condition fails on {(p, desc, q)}")
                    if space.moment[p] != g.src[chain[-1]]:
                        raise KernelError(f"p-side fiber condition fails on {(p, desc, q)}")
                elif space.moment[p] != space.moment[q]:
                    raise KernelError(f"0-slot key {(p, q)} joins different fibers")
                mat = tuple(tuple(model.check_coefficient(v) for v in row)
                            for row in mat)
                if len(mat) != bundle.rank or any(len(r) != bundle.rank for r in mat):
                    raise KernelError(f"matrix at {(p, desc, q)} has wrong shape")
                if not _mat_is_zero(mat):
                    clean[(p, desc, q)] = mat
        self.entries = clean

    # -- constructors ----------------------------------------------------------

    @classmethod
    def zero(cls, bundle: EquivariantBundle, slots: int) -> "SmoothingKernel":
        return cls(bundle, slots, equivariant=True, cocycle=True)

    @classmethod
    def delta(cls, bundle: EquivariantBundle) -> "SmoothingKernel":
        """The identity operator: diagonal matrices scaled by 1/measure."""
        model = bundle.groupoid.model
        entries = {}
        for p in bundle.space.points:
            inv = GaussRat(Fraction(1, 1) / bundle.space.measure[p])
            mat = tuple(tuple(model.from_gauss(inv if i == j else GR_ZERO)
                              for j in range(bundle.rank))
                        for i in range(bundle.rank))
            entries[(p, (), p)] = mat
        return cls(bundle, 0, entries, equivariant=True, cocycle=True)

    # -- structure ----------------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.entries

    def matrix(self, key: KernelKey):
        model = self.bundle.groupoid.model
        zero = tuple(tuple(model.zero() for _ in range(self.bundle.rank))
                     for _ in range(self.bundle.rank))
        return self.entries.get(key, zero)

    def form_degrees(self) -> set:
        out = set()
        for mat in self.entries.values():
            for row in mat:
                for c in row:
                    out |= c.form_degrees()
        return out

    def __add__(self, other: "SmoothingKernel") -> "SmoothingKernel":
        if other.slots != self.slots:
            raise KernelError("cannot add kernels with different slot counts")
        entries = dict(self.entries)
        for key, mat in other.entries.items():
            acc = _mat_add(entries[key], mat) if key in entries else mat
            if _mat_is_zero(acc):
                entries.pop(key, None)
            else:
                entries[key] = acc
        out = SmoothingKernel(self.bundle, self.slots)
        out.entries = entries
        return out

    def __neg__(self) -> "SmoothingKernel":
        out = SmoothingKernel(self.bundle, self.slots,
                              equivariant=self.equivariant, cocycle=self.cocycle)
        out.entries = {k: _mat_neg(m) for k, m in self.entries.items()}
        return out

    def __sub__(self, other: "SmoothingKernel") -> "SmoothingKernel":
        return self + (-other)

    def scale(self, scalar) -> "SmoothingKernel":
        out = SmoothingKernel(self.bundle, self.slots,
                              equivariant=self.equivariant, cocycle=self.cocycle)
        out.entries = {}
        for k, m in self.entries.items():
            sm = _mat_scale(m, scalar)
            if not _mat_is_zero(sm):
                out.entries[k] = sm
        return out

    def __eq__(self, other):
        if not isinstance(other, SmoothingKernel):
            return NotImplemented
        return (self.bundle is other.bundle and self.slots == other.slots
                and self.entries == other.entries)

    def __repr__(self):
        return (f"SmoothingKernel(slots={self.slots}, {len(self.entries)} entries, "
                f"equivariant={self.equivariant}, cocycle={self.cocycle})")


# ---------------------------------------------------------------------------
# Entry translations (the two fiber-index isomorphisms)
# ---------------------------------------------------------------------------

def translate_p(bundle: EquivariantBundle, p: str, gamma: str, mat):
    """Move the p-index along gamma: left-multiply by the action matrix and
    re-express chart coefficients at the translated point."""
    g = bundle.groupoid
    moved = _mat_transport(g, mat, (gamma,))
    act = _mat_conv(bundle, bundle.act_matrix(p, gamma))
    return _mat_mul(act, moved)


def translate_q(bundle: EquivariantBundle, q: str, gamma: str, mat):
    """Move the q-index along gamma: right-multiply by the inverse action
    matrix (the p-side chart is untouched)."""
    act_inv = _mat_conv(bundle, bundle.act_matrix_inv(q, gamma))
    return _mat_mul(mat, act_inv)


def act_AB(kernel: SmoothingKernel, gamma: str, side: str) -> SmoothingKernel:
    """Translate every entry along gamma on the chosen fiber index.

    side 'A' sends the entry at (p, slots, q) to (p.gamma, slots, q);
    side 'B' sends it to (p, slots, q.gamma).  Raises if any entry is not
    composable with gamma.
    """
    if side not in ("A", "B"):
        raise KernelError(f"side must be 'A' or 'B', got {side!r}")
    bundle = kernel.bundle
    space = bundle.space
    g = bundle.groupoid
    out: Dict[KernelKey, tuple] = {}
    for (p, desc, q), mat in kernel.entries.items():
        if side == "A":
            if space.moment[p] != g.tgt[gamma]:
                raise GroupoidError(f"cannot A-translate {(p, desc, q)} along {gamma!r}")
            out[(space.act(p, gamma), desc, q)] = translate_p(bundle, p, gamma, mat)
        else:
            if space.moment[q] != g.tgt[gamma]:
                raise GroupoidError(f"cannot B-translate {(p, desc, q)} along {gamma!r}")
            out[(p, desc, space.act(q, gamma))] = translate_q(bundle, q, gamma, mat)
    result = SmoothingKernel(bundle, kernel.slots)
    result.entries = out
    return result


# ---------------------------------------------------------------------------
# Kernel application and multiplication
# ---------------------------------------------------------------------------

def apply_kernel(kernel: SmoothingKernel, f) -> ModuleForm:
    """Evaluate the operator on a module form (or section)."""
    F = as_module_form(f)
    bundle = kernel.bundle
    if F.bundle is not bundle:
        raise KernelError("kernel and form live on different bundles")
    g = bundle.groupoid
    space = bundle.space
    chart = g.model.kind == "chart"
    k, l = kernel.slots, F.degree
    negate_kl = (k * l) % 2 == 1
    out: Dict[Tuple[str, tuple], tuple] = {}
    for (P, desc, qhat), mat in kernel.entries.items():
        if chart:
            mat = _mat_scale_form_degree(mat, l)
        weight = GaussRat(space.measure[qhat])
        chain = tuple(reversed(desc))
        back = [g.inv(a) for a in reversed(chain)]
        for (qf, bs), vec in F.values.items():
            if space.act_word(qf, bs) != qhat:
                continue
            moved = _transport_vec(g, vec, chain) if chart else vec
            value = tuple(_dot(mat[i], moved) for i in range(bundle.rank))
            value = tuple(c.scale(weight) if chart else c * weight for c in value)
            if negate_kl:
                value = tuple(-c for c in value)
            if _vec_is_zero(value):
                continue
            p = space.act_word(P, back + [g.inv(a) for a in reversed(bs)])
            key = (p, bs + chain)
            if key in out:
                acc = _vec_add(out[key], value)
                if _vec_is_zero(acc):
                    del out[key]
                else:
                    out[key] = acc
            else:
                out[key] = value
    result = ModuleForm(bundle, k + l)
    result.values = out
    return result


def kernel_mul(k1: SmoothingKernel, k2: SmoothingKernel) -> SmoothingKernel:
    """Composition kernel: applying k2 then k1 equals applying k1 * k2."""
    if k1.bundle is not k2.bundle:
        raise KernelError("kernels live on different bundles")
    bundle = k1.bundle
    g = bundle.groupoid
    space = bundle.space
    chart = g.model.kind == "chart"
    negate = (k1.slots * k2.slots) % 2 == 1
    out: Dict[KernelKey, tuple] = {}
    for (p, desc1, mid), m1 in k1.entries.items():
        if chart:
            m1 = _mat_scale_form_degree(m1, k2.slots)
        weight = GaussRat(space.measure[mid])
        word1 = tuple(reversed(desc1))
        for (mid2, desc2, q), m2 in k2.entries.items():
            if mid2 != mid:
                continue
            moved = _mat_transport(g, m2, word1) if chart else m2
            mat = _mat_mul(m1, moved)
            mat = _mat_scale(mat, weight)
            if negate:
                mat = _mat_neg(mat)
            if _mat_is_zero(mat):
                continue
            key = (p, desc1 + desc2, q)
            if key in out:
                acc = _mat_add(out[key], mat)
                if _mat_is_zero(acc):
                    del out[key]
                else:
                    out[key] = acc
            else:
                out[key] = mat
    result = SmoothingKernel(bundle, k1.slots + k2.slots)
    result.entries = out
    if k1.equivariant and k2.equivariant:
        result.equivariant = True
    if k1.cocycle and k2.cocycle:
        result.cocycle = True
    return result


class KernelSum:
    """A finite sum of kernels with distinct slot counts."""

    __slots__ = ("bundle", "parts")

    def __init__(self, bundle: EquivariantBundle,
                 parts: Iterable[SmoothingKernel] = ()):
        self.bundle = bundle
        self.parts: Dict[int, SmoothingKernel] = {}
        for part in parts:
            self.accumulate(part)

    def accumulate(self, part: SmoothingKernel):
        if part.is_zero():
            return
        prev = self.parts.get(part.slots)
        total = part if prev is None else prev + part
        if total.is_zero():
            self.parts.pop(part.slots, None)
        else:
            self.parts[part.slots] = total

    def component(self, slots: int) -> SmoothingKernel:
        return self.parts.get(slots, SmoothingKernel.zero(self.bundle, slots))

    def is_zero(self) -> bool:
        return not self.parts

    def scale(self, scalar) -> "KernelSum":
        return KernelSum(self.bundle, [p.scale(scalar) for p in self.parts.values()])

    def __add__(self, other: "KernelSum") -> "KernelSum":
        out = KernelSum(self.bundle, self.parts.values())
        for part in other.parts.values():
            out.accumulate(part)
        return out

    def __sub__(self, other: "KernelSum") -> "KernelSum":
        out = KernelSum(self.bundle, self.parts.values())
        for part in other.parts.values():
            out.accumulate(-part)
        return out

    def mul(self, other: "KernelSum") -> "KernelSum":
        out = KernelSum(self.bundle)
        for a in self.parts.values():
            for b in other.parts.values():
                out.accumulate(kernel_mul(a, b))
        return out

    def apply(self, f) -> ModuleSum:
        F = as_module_form(f)
        return ModuleSum(self.bundle,
                         [apply_kernel(part, F) for part in self.parts.values()])

    def __eq__(self, other):
        if not isinstance(other, KernelSum):
            return NotImplemented
        return self.bundle is other.bundle and self.parts == other.parts

    def __repr__(self):
        return f"KernelSum(slots {sorted(self.parts)})"


# ---------------------------------------------------------------------------
# Form-linearity: the exhaustive commutation test and the residual system
# ---------------------------------------------------------------------------

def omega_linearity_failures(kernel: SmoothingKernel, max_cases: Optional[int] = None):
    """Exhaustively test commutation with the function action on the delta
    basis; returns the list of failing (arrow, point, index) triples."""
    bundle = kernel.bundle
    g = bundle.groupoid
    failures = []
    basis = Section.basis(bundle)
    for gamma in g.arrows:
        f = NCForm.delta(g, (gamma,))
        for F in basis:
            lhs = apply_kernel(kernel, vector_rep(f, F))
            rhs = vector_rep(f, apply_kernel(kernel, F))
            if lhs != rhs:
                point, idx = _delta_section_id(F)
                failures.append((gamma, point, idx))
                if max_cases and len(failures) >= max_cases:
                    return failures
    return failures


def _delta_section_id(F: Section):
    for p, vec in F.values.items():
        for i, c in enumerate(vec):
            if not c.is_zero():
                return p, i
    return None, None


def equivariance_residuals(kernel: SmoothingKernel):
    """The two necessary-and-sufficient linear conditions for one-slot
    kernels to commute with the function action.

    The first condition moves the q-index: translating an entry along any
    arrow composable below the slot matches the entry at the shifted key.
    The second is the boundary condition tied to the slot itself: the
    q-translated entry plus the fiber sum of back-translated entries with
    the free arrow in the slot vanishes.  Returns two dicts of nonzero
    residual matrices keyed by their witnesses.
    """
    if kernel.slots != 1:
        raise KernelError("residual formulas are stated for one-slot kernels")
    bundle = kernel.bundle
    g = bundle.groupoid
    space = bundle.space
    res1: Dict[tuple, tuple] = {}
    res2: Dict[tuple, tuple] = {}
    for (P, (sigma,), q) in kernel_keys(space, 1):
        mat = kernel.matrix((P, (sigma,), q))
        # interior: for every non-unit gamma in the target fiber with
        # gamma^{-1} sigma still non-unit
        for gamma in g.target_fiber(g.tgt[sigma]):
            if g.is_unit(gamma) or gamma == sigma:
                continue
            shifted = g.mul(g.inv(gamma), sigma)
            lhs = translate_q(bundle, q, gamma, mat)
            rhs = kernel.matrix((P, (shifted,), space.act(q, gamma)))
            diff = _mat_add(lhs, _mat_neg(rhs))
            if not _mat_is_zero(diff):
                res1[(P, sigma, q, gamma)] = diff
        # boundary: B along the slot plus the free-arrow fiber sum
        total = translate_q(bundle, q, sigma, mat)
        q_shift = space.act(q, sigma)
        for gamma in g.target_fiber(space.moment[P]):
            if g.is_unit(gamma):
                continue
            entry = kernel.matrix((space.act(P, gamma), (gamma,), q_shift))
            moved = _mat_transport(g, entry, (g.inv(gamma),))
            act = _mat_conv(bundle, bundle.act_matrix_inv(P, gamma))
            total = _mat_add(total, _mat_mul(act, moved))
        if not _mat_is_zero(total):
            res2[(P, sigma, q)] = total
    return res1, res2


def set_flags(kernel: SmoothingKernel) -> SmoothingKernel:
    """Verify and record form-linearity on the kernel (in place)."""
    if kernel.slots == 1:
        r1, r2 = equivariance_residuals(kernel)
        kernel.equivariant = not r1
        kernel.cocycle = not r2
    else:
        ok = not omega_linearity_failures(kernel, max_cases=1)
        kernel.equivariant = ok
        kernel.cocycle = ok
    return kernel


# ---------------------------------------------------------------------------
# Sampling the space of form-linear kernels
# ---------------------------------------------------------------------------

def _coefficient_basis(model, poly_degree: int):
    if model.kind == "scalar":
        return [None]  # a single GaussRat unknown per matrix position
    terms = []
    for deg in range(poly_degree + 1):
        for exps in _monomials_of_degree(model.dim, deg):
            terms.append((exps, ()))
    return terms


def _monomials_of_degree(dim, deg):
    if dim == 1:
        return [(deg,)]
    out = []
    def rec(prefix, left):
        if len(prefix) == dim - 1:
            out.append(tuple(prefix) + (left,))
            return
        for e in range(left + 1):
            rec(prefix + [e], left - e)
    rec([], deg)
    return out


def _basis_kernel(bundle, slots, key, i, j, term):
    model = bundle.groupoid.model
    if term is None:
        coeff = model.from_gauss(GR_ONE)
    else:
        coeff = PolyFormCoeff.monomial(model.dim, term[0], term[1])
    mat = tuple(tuple(coeff if (a, b) == (i, j) else model.zero()
                      for b in range(bundle.rank)) for a in range(bundle.rank))
    out = SmoothingKernel(bundle, slots)
    out.entries = {key: mat}
    return out


def linearity_constraint_columns(bundle: EquivariantBundle, slots: int,
                                 poly_degree: int = 0):
    terms = _coefficient_basis(bundle.groupoid.model, poly_degree)
    columns = []
    for key in kernel_keys(bundle.space, slots):
        for i in range(bundle.rank):
            for j in range(bundle.rank):
                for term in terms:
                    columns.append((key, i, j, term))
    return columns


def linearity_nullspace(bundle: EquivariantBundle, slots: int,
                        poly_degree: int = 0):
    """Exact basis of kernels commuting with the function action.

    For one slot the residual system is assembled; for other slot counts
    the commutation equations themselves are used, evaluated column by
    column on basis kernels (both are linear in the kernel).
    """
    columns = linearity_constraint_columns(bundle, slots, poly_degree)
    rows: Dict[tuple, Dict[tuple, GaussRat]] = {}

    def add_row_entries(rowmap, col):
        for coord, value in rowmap.items():
            rows.setdefault(coord, {})[col] = value

    g = bundle.groupoid
    for col in columns:
        key, i, j, term = col
        basis = _basis_kernel(bundle, slots, key, i, j, term)
        if slots == 1:
            r1, r2 = equivariance_residuals(basis)
            coords = _flatten_residual_coords(r1, r2)
        else:
            coords = {}
            for gamma in g.nonunit_arrows():
                f = NCForm.delta(g, (gamma,))
                for F in Section.basis(bundle):
                    point, idx = _delta_section_id(F)
                    diff = apply_kernel(basis, vector_rep(f, F)) - \
                        vector_rep(f, apply_kernel(basis, F))
                    for (mkey, vec) in diff.values.items():
                        for a, c in enumerate(vec):
                            if isinstance(c, GaussRat):
                                if not c.is_zero():
                                    coords[(gamma, point, idx, mkey, a)] = c
                            else:
                                for tkey, v in c.terms.items():
                                    coords[(gamma, point, idx, mkey, a, tkey)] = v
        add_row_entries(coords, col)
    basis_vectors = nullspace(list(rows.values()), columns)
    return columns, basis_vectors


def _flatten_residual_coords(r1, r2):
    coords = {}
    for tag, rdict in (("interior", r1), ("boundary", r2)):
        for witness, mat in rdict.items():
            for i, row in enumerate(mat):
                for j, c in enumerate(row):
                    if isinstance(c, GaussRat):
                        if not c.is_zero():
                            coords[(tag, witness, i, j)] = c
                    else:
                        for tkey, v in c.terms.items():
                            coords[(tag, witness, i, j, tkey)] = v
    return coords


def kernel_from_coordinates(bundle, slots, coords: Mapping[tuple, GaussRat]):
    model = bundle.groupoid.model
    entries: Dict[KernelKey, list] = {}
    for (key, i, j, term), value in coords.items():
        mat = entries.setdefault(
            key, [[model.zero() for _ in range(bundle.rank)]
                  for _ in range(bundle.rank)])
        if term is None:
            mat[i][j] = mat[i][j] + model.from_gauss(value)
        else:
            mat[i][j] = mat[i][j] + PolyFormCoeff.monomial(
                model.dim, term[0], term[1], value)
    out = SmoothingKernel(bundle, slots)
    out.entries = {k: tuple(tuple(row) for row in m)
                   for k, m in entries.items()
                   if not _mat_is_zero(m)}
    return out


class KernelSampler:
    """Seeded sampler over the exact nullspace of the linearity constraints."""

    def __init__(self, bundle: EquivariantBundle, slots: int = 1,
                 poly_degree: int = 0):
        self.bundle = bundle
        self.slots = slots
        self.columns, self.basis = linearity_nullspace(bundle, slots, poly_degree)

    @property
    def dimension(self) -> int:
        return len(self.basis)

    def sample(self, rng) -> Optional[SmoothingKernel]:
        """A random exact combination of nullspace basis vectors; None when
        the space is zero (reported, not an error)."""
        if not self.basis:
            return None
        coords: Dict[tuple, GaussRat] = {}
        nonzero = False
        for vec in self.basis:
            c = GaussRat(Fraction(rng.randint(-3, 3), rng.randint(1, 2)),
                         Fraction(rng.randint(-1, 1)))
            if c.is_zero():
                continue
            nonzero = True
            for col, value in vec.items():
                acc = coords.get(col, GR_ZERO) + c * value
                if acc.is_zero():
                    coords.pop(col, None)
                else:
                    coords[col] = acc
        if not nonzero:
            first = self.basis[0]
            coords = dict(first)
        kernel = kernel_from_coordinates(self.bundle, self.slots, coords)
        set_flags(kernel)
        if not (kernel.equivariant and kernel.cocycle):
            raise KernelError("sampled kernel fails its own constraints")
        return kernel


# ---------------------------------------------------------------------------
# Kernel extraction from a black-box operator
# ---------------------------------------------------------------------------

def operator_to_kernel(op: Callable, bundle: EquivariantBundle, slots: int,
                       check_degree_one: bool = True,
                       require_linear: bool = True) -> SmoothingKernel:
    """Read the kernel of a form-linear operator off the delta basis.

    The operator is evaluated on every delta section; the degree-``slots``
    component of the output determines the kernel uniquely.  The result is
    verified by a round trip on the same basis, on the degree-one delta
    module forms when requested, and (by default) against the
    form-linearity conditions, which reject integral-shaped operators that
    fail to commute with the function action, like the bare simplicial
    connection.
    """
    space = bundle.space
    model = bundle.groupoid.model
    entries: Dict[KernelKey, list] = {}
    for qhat in space.points:
        inv_measure = GaussRat(Fraction(1, 1) / space.measure[qhat])
        for j in range(bundle.rank):
            image = _as_module_sum(op(Section.delta(bundle, qhat, j)), bundle)
            comp = image.component(slots)
            for (p, word), vec in comp.values.items():
                P = space.act_word(p, word)
                key = (P, tuple(reversed(word)), qhat)
                mat = entries.setdefault(
                    key, [[model.zero() for _ in range(bundle.rank)]
                          for _ in range(bundle.rank)])
                for i in range(bundle.rank):
                    mat[i][j] = mat[i][j] + vec[i].scale(inv_measure)
    kernel = SmoothingKernel(bundle, slots,
                             {k: tuple(tuple(row) for row in m)
                              for k, m in entries.items()})
    for qhat in space.points:
        for j in range(bundle.rank):
            F = Section.delta(bundle, qhat, j)
            expect = _as_module_sum(op(F), bundle).component(slots)
            if apply_kernel(kernel, F) != expect:
                raise KernelError(
                    f"operator is not a {slots}-slot smoothing operator "
                    f"(round trip fails on the delta section at {qhat!r})")
    if check_degree_one:
        for key in module_keys(space, 1):
            for j in range(bundle.rank):
                F = ModuleForm.delta(bundle, key[0], key[1], j)
                try:
                    expect = _as_module_sum(op(F), bundle).component(slots + 1)
                except TypeError:
                    break
                if apply_kernel(kernel, F) != expect:
                    raise KernelError(
                        f"operator is not a {slots}-slot smoothing operator "
                        f"(degree-one check fails at {key!r})")
    if require_linear and not kernel.is_zero():
        set_flags(kernel)
        if not (kernel.equivariant and kernel.cocycle):
            raise KernelError(
                f"operator is not a {slots}-slot smoothing operator "
                f"(the kernel fails the form-linearity conditions)")
    return kernel


def _as_module_sum(image, bundle) -> ModuleSum:
    if isinstance(image, ModuleSum):
        return image
    out = ModuleSum(bundle)
    out.accumulate(image)
    return out


# ---------------------------------------------------------------------------
# The commutator with the superconnection
# ---------------------------------------------------------------------------

def commutator_with_d(connection: ConnectionData,
                      kernel: SmoothingKernel,
                      test_mode: bool = False) -> KernelSum:
    """Kernel of the graded commutator with the (u-independent)
    superconnection: the simplicial part appends one slot at either end
    with partition-function weights; the horizontal part differentiates
    the entries and commutes with the connection matrices.

    The result is asserted against the operator-level graded commutator on
    the delta basis.  ``test_mode`` bypasses the linearity precondition and
    the flag enforcement on the output so deliberately broken kernels can
    be pushed through the trace pipeline.
    """
    if kernel.equivariant is not True and not test_mode:
        raise KernelError("commutator needs a kernel with verified linearity flags")
    bundle = kernel.bundle
    g = bundle.groupoid
    space = bundle.space
    chart = g.model.kind == "chart"
    k = kernel.slots
    sign_k = -1 if k % 2 else 1

    nabla_entries: Dict[KernelKey, tuple] = {}

    def put(store, key, mat):
        if _mat_is_zero(mat):
            return
        if key in store:
            acc = _mat_add(store[key], mat)
            if _mat_is_zero(acc):
                del store[key]
            else:
                store[key] = acc
        else:
            store[key] = mat

    for (P, desc, q), mat in kernel.entries.items():
        # new slot at the p-adjacent end
        for gamma in g.target_fiber(space.moment[P]):
            if g.is_unit(gamma):
                continue
            new_p = space.act(P, gamma)
            weight = GaussRat(connection.h(new_p))
            moved = translate_p(bundle, P, gamma, mat)
            moved = _mat_scale(moved, weight)
            if sign_k < 0:
                moved = _mat_neg(moved)
            put(nabla_entries, (new_p, (gamma,) + desc, q), moved)
        # new slot at the q-adjacent end
        for gamma in g.source_fiber(space.moment[q]):
            if g.is_unit(gamma):
                continue
            new_q = space.act(q, g.inv(gamma))
            weight = GaussRat(connection.h(q))
            moved = translate_q(bundle, q, g.inv(gamma), mat)
            moved = _mat_scale(moved, weight)
            if chart:
                moved = _mat_scale_form_degree(moved, 1)
            put(nabla_entries, (P, desc + (gamma,), new_q), _mat_neg(moved))

    nabla_part = SmoothingKernel(bundle, k + 1)
    nabla_part.entries = nabla_entries
    parts = [nabla_part]

    if connection.horizontal is not None:
        hor_entries: Dict[KernelKey, tuple] = {}
        amats = connection.horizontal
        for (P, desc, q), mat in kernel.entries.items():
            chain = tuple(reversed(desc))
            a_p = amats[P]
            a_q = _mat_transport(g, amats[q], chain)
            dmat = tuple(tuple(c.exterior_d() for c in row) for row in mat)
            left = _mat_mul(a_p, mat)
            right = _mat_mul(_mat_scale_form_degree(mat, 1), a_q)
            total = _mat_add(dmat, _mat_add(left, _mat_neg(right)))
            if sign_k < 0:
                total = _mat_neg(total)
            put(hor_entries, (P, desc, q), total)
        hor_part = SmoothingKernel(bundle, k)
        hor_part.entries = hor_entries
        parts.append(hor_part)

    result = KernelSum(bundle, parts)
    _assert_commutator(connection, kernel, result)
    for part in result.parts.values():
        if test_mode:
            part.equivariant = True
            part.cocycle = True
            continue
        set_flags(part)
        if not (part.equivariant and part.cocycle):
            raise KernelError("commutator output failed its linearity flags")
    return result


def _assert_commutator(connection, kernel, result):
    """Operator identity [D, K] F = D(KF) - (-1)^{|K|} K(DF) on the basis,
    graded by the total degree (slots plus form degree) per homogeneous
    piece of the kernel."""
    bundle = kernel.bundle
    pieces = kernel_split_by_form_degree(kernel)
    for F in Section.basis(bundle):
        rhs = ModuleSum(bundle)
        dF = connection.apply_d(F)
        for m, piece in pieces.items():
            for part in connection.apply_d(apply_kernel(piece, F)).parts.values():
                rhs.accumulate(part)
            sign = GaussRat(1 if (kernel.slots + m) % 2 else -1)
            for part in dF.parts.values():
                rhs.accumulate(apply_kernel(piece, part).scale(sign))
        if result.apply(F) != rhs:
            raise KernelError("commutator kernel disagrees with the operator side")


def kernel_split_by_form_degree(kernel: SmoothingKernel) -> Dict[int, SmoothingKernel]:
    """Split chart-model entries into homogeneous de Rham degrees."""
    model = kernel.bundle.groupoid.model
    if model.kind == "scalar":
        return {0: kernel}
    buckets: Dict[int, Dict[KernelKey, list]] = {}
    rank = kernel.bundle.rank
    for key, mat in kernel.entries.items():
        for i in range(rank):
            for j in range(rank):
                for (exps, form), v in mat[i][j].terms.items():
                    m = len(form)
                    mats = buckets.setdefault(m, {})
                    entry = mats.setdefault(
                        key, [[model.zero() for _ in range(rank)] for _ in range(rank)])
                    entry[i][j] = entry[i][j] + PolyFormCoeff.monomial(
                        model.dim, exps, form, v)
    out = {}
    for m, entries in buckets.items():
        kk = SmoothingKernel(kernel.bundle, kernel.slots)
        kk.entries = {k: tuple(tuple(row) for row in mmat)
                      for k, mmat in entries.items()}
        out[m] = kk
    return out
