"""Poisson and generalized (star) brackets.

Brackets of local densities are computed in kernel form: the result is a
two-point expression carrying explicit ``D3`` factors and their
derivatives.  Smeared variants integrate one point out against the
distributions and normalize by parts, producing plain polynomials in
fields and smearing functions; every quantity the pipeline classifies or
matches goes through the smeared route, so the rewrite system never has
to compare raw distributional derivatives.

The C-matrix of a model is the kernel matrix of Poisson brackets among
the non-involutive constraints.  Inversion is supported for kernels of
the form (constant index tensor) x (single constant monomial) x D3,
which covers first-order BF-type models; anything else is rejected.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field as dcfield
from fractions import Fraction

from .expr import (INTERNAL, SPATIAL, Dist, Expression, ExprError, Sym, Term,
                   ZERO, canonicalize, eliminate_point, multiply, relabel_free,
                   repoint, spatial_derivative, strip_smear_derivatives)
from .linsolve import invert_matrix, solve_linear
from .numeval import eval_expression
from .phase import Hamiltonian, Model


class BracketError(ValueError):
    pass


def _expr_of_term(t: Term) -> Expression:
    return Expression((t,))


def poisson_kernel(f: Expression, g: Expression, model: Model) -> Expression:
    """{f(x-side), g(y-side)} as a two-point kernel expression.

    The densities carry their own points; free labels of the two
    arguments must not overlap.
    """
    f_free = {l for l, _ in f.free_signature()}
    g_free = {l for l, _ in g.free_signature()}
    if f_free & g_free:
        raise BracketError("free labels shared between bracket arguments: %s"
                           % ",".join(sorted(f_free & g_free)))
    out = []
    for tf in f.terms:
        for tg in g.terms:
            tg = _avoid_collisions(tg, tf)
            for nf, sf in enumerate(tf.syms):
                for ng, sg in enumerate(tg.syms):
                    kernel = model.table.lookup(sf.name, sf.labels, sf.point,
                                                sg.name, sg.labels, sg.point)
                    if kernel is None:
                        continue
                    for lab in sf.derivs:
                        kernel = spatial_derivative(kernel, lab, sf.point)
                    for lab in sg.derivs:
                        kernel = spatial_derivative(kernel, lab, sg.point)
                    rest_f = replace_syms(tf, nf)
                    rest_g = replace_syms(tg, ng)
                    piece = multiply(multiply(_expr_of_term(rest_f),
                                              _expr_of_term(rest_g)), kernel)
                    out.extend(piece.terms)
    return canonicalize(Expression(tuple(out)))


def replace_syms(t: Term, drop: int) -> Term:
    from dataclasses import replace
    return replace(t, syms=t.syms[:drop] + t.syms[drop + 1:])


_fresh_counter = itertools.count()


def _avoid_collisions(tg: Term, tf: Term) -> Term:
    """Rename tg's dummy labels away from any label used in tf."""
    from .expr import _fresh_dummies
    taken = {l for l, *_ in tf.label_occurrences()}
    return _fresh_dummies(tg, taken, salt=next(_fresh_counter))


# ---------------------------------------------------------------------------
# C-matrix
# ---------------------------------------------------------------------------


def _row_labels(idx, ham):
    return tuple("r%d%d" % (idx, n) for n in range(len(ham.labels)))


def _col_labels(idx, ham):
    return tuple("c%d%d" % (idx, n) for n in range(len(ham.labels)))


@dataclass
class CMatrix:
    hams: list
    entries: dict = dcfield(default_factory=dict)   # (r,c) -> kernel
    inverse: dict = dcfield(default_factory=dict)   # (r,c) -> kernel

    def entry(self, r, c) -> Expression:
        return self.entries.get((r, c), ZERO)

    def inverse_entry(self, r, c) -> Expression:
        return self.inverse.get((r, c), ZERO)

    def labels(self, r, side) -> tuple:
        ham = self.hams[r]
        return _row_labels(r, ham) if side == "row" else _col_labels(r, ham)


def build_c_matrix(noninvolutive, model: Model) -> CMatrix:
    C = CMatrix(hams=list(noninvolutive))
    for r, hr in enumerate(C.hams):
        fr = hr.instantiate(_row_labels(r, hr), "x")
        for c, hc in enumerate(C.hams):
            fc = hc.instantiate(_col_labels(c, hc), "y")
            k = poisson_kernel(fr, fc, model)
            if not k.is_zero():
                C.entries[(r, c)] = k
    _check_antisymmetry(C)
    invert_c_matrix(C, model)
    return C


def _check_antisymmetry(C: CMatrix):
    for (r, c), k in C.entries.items():
        other = C.entry(c, r)
        mapping = dict(zip(_row_labels(c, C.hams[c]), _col_labels(c, C.hams[c])))
        mapping.update(zip(_col_labels(r, C.hams[r]), _row_labels(r, C.hams[r])))
        flipped = repoint(relabel_free(other, mapping), {"x": "y", "y": "x"})
        if not (k + flipped).is_zero():
            raise BracketError("C-matrix fails antisymmetry at (%s, %s)"
                               % (C.hams[r].name, C.hams[c].name))


class _Mono:
    """Scalar of the form q * prod(const^power); sums must be aligned."""

    __slots__ = ("q", "powers")

    def __init__(self, q, powers=()):
        self.q = Fraction(q)
        self.powers = tuple(sorted((n, p) for n, p in powers if p)) if q != 0 else ()

    def __mul__(self, other):
        d = dict(self.powers)
        for n, p in other.powers:
            d[n] = d.get(n, 0) + p
        return _Mono(self.q * other.q, tuple(d.items()))

    def inv(self):
        if self.q == 0:
            raise ZeroDivisionError
        return _Mono(1 / self.q, tuple((n, -p) for n, p in self.powers))

    def __add__(self, other):
        if self.q == 0:
            return other
        if other.q == 0:
            return self
        if self.powers != other.powers:
            raise BracketError("C-matrix entries mix constant monomials; "
                               "inversion not supported")
        return _Mono(self.q + other.q, self.powers)

    def __neg__(self):
        return _Mono(-self.q, self.powers)

    def __bool__(self):
        return self.q != 0


def _kernel_is_constant(k: Expression) -> bool:
    for t in k.terms:
        if t.syms or t.smears:
            return False
        if len(t.dists) != 1 or t.dists[0].derivs:
            return False
    return True


def _kernel_monomial_value(k: Expression, row_assign, col_assign):
    """Evaluate a constant kernel at fixed components as a _Mono."""
    total = _Mono(0)
    assign = dict(row_assign)
    assign.update(col_assign)
    for t in k.terms:
        e = Expression((Term(coeff=t.coeff, eps=t.eps, eta=t.eta,
                             deltas=t.deltas),))
        v = eval_expression(e, assign, {}, {})
        if v:
            total = total + _Mono(v, t.consts)
    return total


def invert_c_matrix(C: CMatrix, model: Model):
    """Populate C.inverse; raises on singular or unsupported kernels."""
    if not C.hams:
        return C
    for k in C.entries.values():
        if not _kernel_is_constant(k):
            raise BracketError(
                "C-matrix entry is not a constant kernel times D3; "
                "field-dependent C-matrices are not supported")

    flat = []
    for idx, h in enumerate(C.hams):
        for comp in h.components():
            flat.append((idx, comp))
    n = len(flat)

    def entry_value(i, j):
        (r, rc), (c, cc) = flat[i], flat[j]
        k = C.entry(r, c)
        if k.is_zero():
            return _Mono(0)
        row_assign = dict(zip(_row_labels(r, C.hams[r]), rc))
        col_assign = dict(zip(_col_labels(c, C.hams[c]), cc))
        return _kernel_monomial_value(k, row_assign, col_assign)

    # Contraction over a family's full index range double counts its
    # antisymmetric pairs relative to the independent components kept here,
    # and the unit kernel of an antisymmetric family evaluates to the
    # reciprocal weight on its diagonal.
    weight = [2 ** len(C.hams[f].anti_pairs()) for f, _ in flat]

    mat = [[entry_value(i, j) * _Mono(weight[j]) for j in range(n)] for i in range(n)]
    inv = _mono_invert(mat, rhs_diag=[Fraction(1, w) for w in weight])
    if inv is None:
        raise BracketError("non-involutive set is not second-class-complete "
                           "(singular C-matrix)")

    # fit symbolic kernels block by block
    for r in range(len(C.hams)):
        for c in range(len(C.hams)):
            block = {}
            for i, (fi, ci) in enumerate(flat):
                if fi != r:
                    continue
                for j, (fj, cj) in enumerate(flat):
                    if fj != c:
                        continue
                    block[(ci, cj)] = inv[i][j]
            fitted = _fit_block(C.hams[r], C.hams[c], r, c, block)
            if fitted is not None and not fitted.is_zero():
                C.inverse[(r, c)] = fitted
    _verify_inverse(C, model)
    return C


def _mono_invert(mat, rhs_diag=None):
    n = len(mat)
    aug = [[mat[i][j] for j in range(n)] +
           [_Mono((rhs_diag[i] if rhs_diag else 1) if i == j else 0)
            for j in range(n)] for i in range(n)]
    for c in range(n):
        pivot = next((i for i in range(c, n) if aug[i][c]), None)
        if pivot is None:
            return None
        aug[c], aug[pivot] = aug[pivot], aug[c]
        pinv = aug[c][c].inv()
        aug[c] = [v * pinv for v in aug[c]]
        for i in range(n):
            if i != c and aug[i][c]:
                f = aug[i][c]
                aug[i] = [a + (-(f * b)) for a, b in zip(aug[i], aug[c])]
    return [[aug[i][n + j] for j in range(n)] for i in range(n)]


def _tensor_candidates(kinds_row, kinds_col, labels_row, labels_col):
    """Constant tensors over the combined slots: delta pairings plus at
    most one Levi-Civita factor per kind."""
    slots = list(zip(labels_row + labels_col, kinds_row + kinds_col))
    spatial = [l for l, k in slots if k == SPATIAL]
    internal = [l for l, k in slots if k == INTERNAL]

    def pairings(labels):
        if not labels:
            yield []
            return
        if len(labels) % 2:
            return
        first, rest = labels[0], labels[1:]
        for i, other in enumerate(rest):
            for tail in pairings(rest[:i] + rest[i + 1:]):
                yield [(first, other)] + tail

    def with_epsilon(labels):
        yield None, labels
        for tri in itertools.combinations(labels, 3):
            remaining = [l for l in labels if l not in tri]
            yield tri, remaining

    out = []
    for sp_tri, sp_rest in with_epsilon(spatial):
        for in_tri, in_rest in with_epsilon(internal):
            for sp_pairs in pairings(sp_rest):
                for in_pairs in pairings(in_rest):
                    deltas = tuple((SPATIAL, a, b) for a, b in sp_pairs) + \
                        tuple((INTERNAL, a, b) for a, b in in_pairs)
                    t = Term(eps=(in_tri,) if in_tri else (),
                             eta=(sp_tri,) if sp_tri else (),
                             deltas=deltas,
                             dists=(Dist("x", "y"),))
                    out.append(canonicalize(Expression((t,))))
    # dedupe canonically equal candidates (e.g. reordered pairings)
    seen = {}
    for e in out:
        if not e.is_zero():
            seen.setdefault(e.terms, e)
    return list(seen.values())


def _fit_block(ham_r, ham_c, r, c, block):
    values = {k: v for k, v in block.items()}
    if all(not v for v in values.values()):
        return None
    monos = {v.powers for v in values.values() if v}
    if len(monos) != 1:
        raise BracketError("inverse block mixes constant monomials")
    powers = monos.pop()

    labels_row = _row_labels(r, ham_r)
    labels_col = _col_labels(c, ham_c)
    cands = _tensor_candidates(ham_r.kinds, ham_c.kinds, labels_row, labels_col)
    if not cands:
        raise BracketError("no tensor ansatz available for inverse block")

    rows, rhs = [], []
    for (rc, cc), v in sorted(values.items()):
        assign = dict(zip(labels_row, rc))
        assign.update(zip(labels_col, cc))
        rows.append([eval_expression(e, assign, {}, {}) for e in cands])
        rhs.append(v.q if v else Fraction(0))
    sol = solve_linear(rows, rhs)
    if sol is None:
        raise BracketError("inverse block does not fit the tensor ansatz")
    out = ZERO
    for coeff, cand in zip(sol, cands):
        if coeff:
            scaled = cand.scale(coeff)
            scaled = Expression(tuple(
                Term(coeff=t.coeff, consts=powers, eps=t.eps, eta=t.eta,
                     deltas=t.deltas, syms=t.syms, smears=t.smears,
                     dists=t.dists) for t in scaled.terms))
            out = out + scaled
    return out


def identity_kernel(ham, labels_row, labels_col) -> Expression:
    """Unit kernel on the constraint family's index structure."""
    deltas = tuple((k, a, b) for k, a, b in
                   zip(ham.kinds, labels_row, labels_col))
    e = Expression((Term(deltas=deltas, dists=(Dist("x", "y"),)),))
    for p, q in ham.anti_pairs():
        swapped = relabel_free(e, {labels_row[p]: labels_row[q],
                                   labels_row[q]: labels_row[p]})
        e = (e - swapped).scale(Fraction(1, 2))
    return canonicalize(e)


def convolve(k1: Expression, mid_labels1, k2: Expression, mid_labels2) -> Expression:
    """Integrate two kernels over their shared middle point.

    ``k1`` carries labels (row@x, mid1@y); ``k2`` carries (mid2@x, col@y).
    The mid labels are identified pairwise and integrated over.
    """
    shared = tuple("m%d" % n for n in range(len(mid_labels1)))
    a = repoint(relabel_free(k1, dict(zip(mid_labels1, shared))), {"y": "z"})
    b = repoint(relabel_free(k2, dict(zip(mid_labels2, shared))), {"x": "z"})
    return eliminate_point(multiply(a, b), "z")


def _verify_inverse(C: CMatrix, model: Model):
    n = len(C.hams)
    for r in range(n):
        for c in range(n):
            acc = ZERO
            for k in range(n):
                e = C.entry(r, k)
                i = C.inverse_entry(k, c)
                if e.is_zero() or i.is_zero():
                    continue
                acc = acc + convolve(e, _col_labels(k, C.hams[k]),
                                     i, _row_labels(k, C.hams[k]))
            if r == c:
                want = identity_kernel(
                    C.hams[r], _row_labels(r, C.hams[r]), _col_labels(c, C.hams[c]))
            else:
                want = ZERO
            if not (acc - want).is_zero():
                raise BracketError("C * C^{-1} fails the convolution identity "
                                   "at (%s, %s)" % (C.hams[r].name, C.hams[c].name))


# ---------------------------------------------------------------------------
# star bracket
# ---------------------------------------------------------------------------


def star_kernel(f: Expression, g: Expression, model: Model, C: CMatrix) -> Expression:
    """Generalized bracket kernel: {f, g} minus the C-matrix projection."""
    result = poisson_kernel(f, g, model)
    if C is None or not C.hams:
        return result
    for (a_idx, b_idx), inv in sorted(C.inverse.items()):
        ha, hb = C.hams[a_idx], C.hams[b_idx]
        mid_a = tuple("za%d" % n for n in range(len(ha.labels)))
        mid_b = tuple("zb%d" % n for n in range(len(hb.labels)))
        left = poisson_kernel(f, ha.instantiate(mid_a, "z"), model)
        if left.is_zero():
            continue
        right = poisson_kernel(hb.instantiate(mid_b, "w"), g, model)
        if right.is_zero():
            continue
        mid = relabel_free(inv, dict(
            zip(_row_labels(a_idx, ha) + _col_labels(b_idx, hb), mid_a + mid_b)))
        mid = repoint(mid, {"x": "z", "y": "w"})
        piece = multiply(multiply(left, mid), right)
        piece = eliminate_point(piece, "w")
        piece = eliminate_point(piece, "z")
        result = result - piece
    return result


def smeared_star(f_ham_density, f_labels, u_name, g_density, g_labels, v_name,
                 model: Model, C: CMatrix, star=True) -> Expression:
    """{F[u], G[v]}(*) as a local polynomial in fields and smearings."""
    fF = tuple("uf%d" % n for n in range(len(f_labels)))
    gF = tuple("vg%d" % n for n in range(len(g_labels)))
    f = relabel_free(f_ham_density, dict(zip(f_labels, fF)))
    f = repoint(f, {p: "x" for p in f.points()})
    g = relabel_free(g_density, dict(zip(g_labels, gF)))
    g = repoint(g, {p: "y" for p in g.points()})
    K = star_kernel(f, g, model, C) if star else poisson_kernel(f, g, model)
    if K.is_zero():
        return ZERO
    sig_f = dict(f.free_signature())
    sig_g = dict(g.free_signature())
    u = Expression((Term(smears=(Sym(u_name, fF, tuple(sig_f[l] for l in fF),
                                     point="x"),)),))
    v = Expression((Term(smears=(Sym(v_name, gF, tuple(sig_g[l] for l in gF),
                                     point="y"),)),))
    out = multiply(multiply(K, u), v)
    out = eliminate_point(out, "y")
    out = strip_smear_derivatives(out, u_name)
    return out


def integrated_bracket_density(f_density, f_labels, g_density, model: Model,
                               C: CMatrix, star=True) -> Expression:
    """``int dy {f^F(x), g(y)}(*)`` as a local density with frees ``F``.

    This is the evolution generator contraction: g is integrated over
    space, so distribution derivatives land on g's fields by parts.
    """
    f = repoint(f_density, {p: "x" for p in f_density.points()})
    g = repoint(g_density, {p: "y" for p in g_density.points()})
    K = star_kernel(f, g, model, C) if star else poisson_kernel(f, g, model)
    if K.is_zero():
        return ZERO
    return eliminate_point(K, "y")


def characteristic_part(var_density, ham: Hamiltonian, param_name,
                        model: Model, C: CMatrix) -> Expression:
    """``int dy {q(x), ham(y)}* param(y)``: one characteristic-equation piece."""
    gF = tuple("vg%d" % n for n in range(len(ham.labels)))
    f = repoint(var_density, {p: "x" for p in var_density.points()})
    K = star_kernel(f, ham.instantiate(gF, "y"), model, C)
    if K.is_zero():
        return ZERO
    v = Expression((Term(smears=(Sym(param_name, gF, ham.kinds, point="y"),)),))
    out = multiply(K, v)
    return eliminate_point(out, "y")
