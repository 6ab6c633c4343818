"""Exact symbolic tensor expressions on a 3d spatial slice.

Expressions are finite sums of terms.  Each term is a product of

* an exact rational coefficient,
* integer powers of formal positive constants (``Xi``, ``Omega``, ...),
* internal Levi-Civita factors ``eps(i,j,k)`` and spatial ones ``eta(a,b,c)``,
* Kronecker deltas between same-kind index pairs,
* field/momentum symbols with index slots, a point label and applied
  spatial derivatives,
* smearing-function symbols (test functions, gauge parameters),
* Dirac distributions ``D3(x,y)`` with applied spatial derivatives.

Both index kinds (spatial and internal) range over {1,2,3}; internal
indices are raised and lowered silently, so only the label matters.
``canonicalize`` brings every expression to a unique normal form:
epsilon pairs of equal kind are expanded through the delta identity,
deltas are contracted away, antisymmetric slot pairs are sorted with the
sign absorbed into the coefficient, and dummy indices are renamed from a
deterministic pool.  Expressions are immutable; all operations are pure.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

SPATIAL = "spatial"
INTERNAL = "internal"

# Canonical dummy pools.  The leading underscore keeps them disjoint from
# user labels (the parser rejects labels that start with one).
_POOL = {SPATIAL: "_abcdefgh", INTERNAL: "_ijklmnpq"}


class ExprError(ValueError):
    """Structural problem in an expression (index balance, bad kinds...)."""


def _dummy_name(kind: str, n: int) -> str:
    pool = _POOL[kind][1:]
    if n < len(pool):
        return "_" + pool[n]
    return "_%s%d" % (pool[n % len(pool)], n // len(pool))


@dataclass(frozen=True)
class Sym:
    """One occurrence of a field, momentum or smearing symbol."""

    name: str
    labels: tuple[str, ...]
    kinds: tuple[str, ...]
    anti: tuple[tuple[int, int], ...] = ()
    point: str = "x"
    derivs: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.labels) != len(self.kinds):
            raise ExprError("slot/kind arity mismatch on %s" % self.name)

    def shape_key(self):
        return ("sym", self.name, self.point, len(self.labels), len(self.derivs), self.anti)

    def slot_class(self, pos: int) -> object:
        for k, (p, q) in enumerate(self.anti):
            if pos in (p, q):
                return ("anti", k)
        return ("slot", pos)


@dataclass(frozen=True)
class Dist:
    """delta^3(p1 - p2) with derivatives taken with respect to ``p1``."""

    p1: str
    p2: str
    derivs: tuple[str, ...] = ()

    def shape_key(self):
        return ("dist", self.p1, self.p2, len(self.derivs))


@dataclass(frozen=True)
class Term:
    coeff: Fraction = Fraction(1)
    consts: tuple[tuple[str, int], ...] = ()
    eps: tuple[tuple[str, str, str], ...] = ()
    eta: tuple[tuple[str, str, str], ...] = ()
    deltas: tuple[tuple[str, str, str], ...] = ()  # (kind, l1, l2)
    syms: tuple[Sym, ...] = ()
    smears: tuple[Sym, ...] = ()
    dists: tuple[Dist, ...] = ()

    # -- label bookkeeping -------------------------------------------------

    def label_occurrences(self):
        """Yield (label, kind, factor_tag, slot_class) for every index slot."""
        for n, t in enumerate(self.eps):
            for lab in t:
                yield lab, INTERNAL, ("eps", n), "e"
        for n, t in enumerate(self.eta):
            for lab in t:
                yield lab, SPATIAL, ("eta", n), "e"
        for n, (kind, l1, l2) in enumerate(self.deltas):
            yield l1, kind, ("delta", n), "d"
            yield l2, kind, ("delta", n), "d"
        for part, group in (("sym", self.syms), ("smear", self.smears)):
            for n, s in enumerate(group):
                for pos, lab in enumerate(s.labels):
                    yield lab, s.kinds[pos], (part, n), s.slot_class(pos)
                for lab in s.derivs:
                    yield lab, SPATIAL, (part, n), "D"
        for n, d in enumerate(self.dists):
            for lab in d.derivs:
                yield lab, SPATIAL, ("dist", n), "D"

    def label_counts(self):
        counts: dict[str, int] = {}
        kinds: dict[str, str] = {}
        for lab, kind, _f, _s in self.label_occurrences():
            counts[lab] = counts.get(lab, 0) + 1
            if kinds.setdefault(lab, kind) != kind:
                raise ExprError("label %r used with mixed index kinds" % lab)
        return counts, kinds

    def free_signature(self):
        counts, kinds = self.label_counts()
        for lab, c in counts.items():
            if c > 2:
                raise ExprError("label %r appears %d times" % (lab, c))
        return tuple(sorted((lab, kinds[lab]) for lab, c in counts.items() if c == 1))


@dataclass(frozen=True)
class Expression:
    """Canonical sum of terms."""

    terms: tuple[Term, ...] = ()

    def __add__(self, other: "Expression") -> "Expression":
        return canonicalize(Expression(self.terms + other.terms))

    def __sub__(self, other: "Expression") -> "Expression":
        return self + (-other)

    def __neg__(self) -> "Expression":
        return self.scale(Fraction(-1))

    def __mul__(self, other: "Expression") -> "Expression":
        return multiply(self, other)

    def scale(self, c) -> "Expression":
        c = Fraction(c)
        if c == 0:
            return ZERO
        return Expression(tuple(replace(t, coeff=t.coeff * c) for t in self.terms))

    def is_zero(self) -> bool:
        return not self.terms

    def free_signature(self):
        if not self.terms:
            return ()
        sig = self.terms[0].free_signature()
        for t in self.terms[1:]:
            if t.free_signature() != sig:
                raise ExprError("terms disagree on free indices: %r vs %r"
                                % (sig, t.free_signature()))
        return sig

    def points(self):
        pts = set()
        for t in self.terms:
            for s in t.syms + t.smears:
                pts.add(s.point)
            for d in t.dists:
                pts.update((d.p1, d.p2))
        return pts


ZERO = Expression(())


def one(coeff=Fraction(1), consts: Mapping[str, int] | None = None) -> Expression:
    cs = tuple(sorted((consts or {}).items()))
    cs = tuple((n, p) for n, p in cs if p != 0)
    return Expression((Term(coeff=Fraction(coeff), consts=cs),))


# ---------------------------------------------------------------------------
# structural rewriting
# ---------------------------------------------------------------------------


def _sort_triple(t):
    """Sort a Levi-Civita index triple, returning (sorted, parity sign)."""
    lst = list(t)
    sign = 1
    for i in range(len(lst)):
        for j in range(len(lst) - 1 - i):
            if lst[j] > lst[j + 1]:
                lst[j], lst[j + 1] = lst[j + 1], lst[j]
                sign = -sign
    return tuple(lst), sign


def _relabel_term(term: Term, mapping: Mapping[str, str]) -> Term:
    def m(l):
        return mapping.get(l, l)

    return Term(
        coeff=term.coeff,
        consts=term.consts,
        eps=tuple(tuple(m(l) for l in t) for t in term.eps),
        eta=tuple(tuple(m(l) for l in t) for t in term.eta),
        deltas=tuple((k, m(l1), m(l2)) for (k, l1, l2) in term.deltas),
        syms=tuple(replace(s, labels=tuple(m(l) for l in s.labels),
                           derivs=tuple(m(l) for l in s.derivs)) for s in term.syms),
        smears=tuple(replace(s, labels=tuple(m(l) for l in s.labels),
                             derivs=tuple(m(l) for l in s.derivs)) for s in term.smears),
        dists=tuple(replace(d, derivs=tuple(m(l) for l in d.derivs)) for d in term.dists),
    )


def _contract_one_delta(term: Term):
    """Contract the first contractible Kronecker delta, or return None."""
    counts, _ = term.label_counts()
    for n, (kind, l1, l2) in enumerate(term.deltas):
        rest = term.deltas[:n] + term.deltas[n + 1:]
        if l1 == l2:
            return replace(term, coeff=term.coeff * 3, deltas=rest)
        # delta uses one occurrence of each label; a second one elsewhere
        # means the delta can be eliminated by renaming.
        if counts[l2] == 2:
            return _relabel_term(replace(term, deltas=rest), {l2: l1})
        if counts[l1] == 2:
            return _relabel_term(replace(term, deltas=rest), {l1: l2})
    return None


def _expand_eps_pair(term: Term):
    """Rewrite the first epsilon (or eta) pair through the delta identity."""
    for attr, kind in (("eps", INTERNAL), ("eta", SPATIAL)):
        triples = getattr(term, attr)
        if len(triples) < 2:
            continue
        (a, b, c), (d, e, f) = triples[0], triples[1]
        rest = triples[2:]
        out = []
        for perm in itertools.permutations((d, e, f)):
            sign = _perm_sign((d, e, f), perm)
            deltas = term.deltas + tuple((kind, x, y) for x, y in zip((a, b, c), perm))
            out.append(replace(term, coeff=term.coeff * sign,
                               deltas=deltas, **{attr: rest}))
        return out
    return None


def _perm_sign(base, perm):
    base = list(base)
    perm = list(perm)
    sign = 1
    for i in range(len(base)):
        if perm[i] != base[i]:
            j = perm.index(base[i], i + 1)
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign


def _term_is_zero(term: Term) -> bool:
    for t in term.eps + term.eta:
        if len(set(t)) < 3:
            return True
    for s in term.syms + term.smears:
        for p, q in s.anti:
            if s.labels[p] == s.labels[q]:
                return True
    return False


# ---------------------------------------------------------------------------
# canonical labeling
# ---------------------------------------------------------------------------


def _wl_colors(term: Term, dummies: set[str], kinds: Mapping[str, str]):
    """Refine dummy-label colors by their factor environments."""
    occ: dict[str, list] = {l: [] for l in dummies}
    factor_labels: dict[tuple, list[str]] = {}
    factor_sig: dict[tuple, tuple] = {}
    for lab, _k, fac, slot in term.label_occurrences():
        factor_labels.setdefault(fac, []).append(lab)
        if lab in dummies:
            occ[lab].append((fac, slot))
    for fac in factor_labels:
        part, n = fac
        if part == "eps":
            factor_sig[fac] = ("eps",)
        elif part == "eta":
            factor_sig[fac] = ("eta",)
        elif part == "delta":
            factor_sig[fac] = ("delta", term.deltas[n][0])
        elif part == "sym":
            factor_sig[fac] = term.syms[n].shape_key()
        elif part == "smear":
            factor_sig[fac] = ("smear",) + term.smears[n].shape_key()
        else:
            factor_sig[fac] = term.dists[n].shape_key()

    color = {l: repr((kinds[l],)) for l in dummies}

    def label_color(l):
        return color[l] if l in dummies else repr(("free", l))

    for _round in range(len(dummies) + 1):
        new = {}
        for l in dummies:
            env = []
            for fac, slot in occ[l]:
                others = sorted(label_color(o) for o in factor_labels[fac] if o != l)
                env.append(repr((factor_sig[fac], slot, tuple(others))))
            new[l] = repr((color[l], tuple(sorted(env))))
        if len(set(new.values())) == len(set(color.values())) and _round > 0:
            color = new
            break
        color = new
    return color


def _encode_term(term: Term):
    """Encoding used for sorting/collecting fully-labeled terms."""
    sign = 1
    eps = []
    for t in term.eps:
        st, s = _sort_triple(t)
        eps.append(st)
        sign *= s
    eta = []
    for t in term.eta:
        st, s = _sort_triple(t)
        eta.append(st)
        sign *= s
    deltas = sorted((k, *sorted((l1, l2))) for (k, l1, l2) in term.deltas)
    syms = []
    for s in term.syms:
        labels = list(s.labels)
        for p, q in s.anti:
            if labels[p] > labels[q]:
                labels[p], labels[q] = labels[q], labels[p]
                sign = -sign
        syms.append((s.name, s.point, tuple(labels), tuple(sorted(s.derivs)), s.kinds, s.anti))
    smears = []
    for s in term.smears:
        labels = list(s.labels)
        for p, q in s.anti:
            if labels[p] > labels[q]:
                labels[p], labels[q] = labels[q], labels[p]
                sign = -sign
        smears.append((s.name, s.point, tuple(labels), tuple(sorted(s.derivs)), s.kinds, s.anti))
    dists = []
    for d in term.dists:
        p1, p2, dv, s = d.p1, d.p2, tuple(sorted(d.derivs)), 1
        if p2 < p1:
            p1, p2 = p2, p1
            s = (-1) ** len(dv)
        sign *= s
        dists.append((p1, p2, dv))
    key = (term.consts, tuple(sorted(eps)), tuple(sorted(eta)), tuple(deltas),
           tuple(sorted(syms)), tuple(sorted(smears)), tuple(sorted(dists)))
    return key, sign


def _canonical_label_term(term: Term):
    """Rename dummies deterministically; returns (key, signed coeff) or None."""
    counts, kinds = term.label_counts()
    bad = [l for l, c in counts.items() if c > 2]
    if bad:
        raise ExprError("label %r appears more than twice" % bad[0])
    dummies = {l for l, c in counts.items() if c == 2}
    if not dummies:
        key, sign = _encode_term(term)
        return key, term.coeff * sign

    color = _wl_colors(term, dummies, kinds)
    groups: dict[tuple, list[str]] = {}
    for l in sorted(dummies):
        groups.setdefault((kinds[l], color[l]), []).append(l)
    ordered_groups = [groups[k] for k in sorted(groups)]

    best = None
    coeffs = set()
    # Pool names must dodge the term's free labels (which are preserved).
    free = {l for l, c in counts.items() if c == 1}
    pool: dict[str, list[str]] = {}
    for kind in (SPATIAL, INTERNAL):
        names, n = [], 0
        while len(names) < len(dummies):
            cand = _dummy_name(kind, n)
            n += 1
            if cand not in free:
                names.append(cand)
        pool[kind] = names
    # Pre-compute name offsets per kind so groups of the same kind chain on.
    offsets = []
    running: dict[str, int] = {}
    for g in ordered_groups:
        kind = kinds[g[0]]
        offsets.append(running.get(kind, 0))
        running[kind] = running.get(kind, 0) + len(g)

    for perm_choice in itertools.product(*[itertools.permutations(g) for g in ordered_groups]):
        mapping = {}
        for g_idx, perm in enumerate(perm_choice):
            kind = kinds[perm[0]]
            for j, lab in enumerate(perm):
                mapping[lab] = pool[kind][offsets[g_idx] + j]
        key, sign = _encode_term(_relabel_term(term, mapping))
        if best is None or key < best:
            best = key
            coeffs = {term.coeff * sign}
        elif key == best:
            coeffs.add(term.coeff * sign)
    if len(coeffs) > 1:
        return None  # term equals its own negative
    return best, coeffs.pop()


_SYM_FIELDS = ("name", "point", "labels", "derivs", "kinds", "anti")


def _term_from_key(key, coeff) -> Term:
    consts, eps, eta, deltas, syms, smears, dists = key
    return Term(
        coeff=coeff,
        consts=consts,
        eps=eps,
        eta=eta,
        deltas=tuple((k, l1, l2) for (k, l1, l2) in deltas),
        syms=tuple(Sym(name=n, point=p, labels=ls, derivs=dv, kinds=ks, anti=an)
                   for (n, p, ls, dv, ks, an) in syms),
        smears=tuple(Sym(name=n, point=p, labels=ls, derivs=dv, kinds=ks, anti=an)
                     for (n, p, ls, dv, ks, an) in smears),
        dists=tuple(Dist(p1=p1, p2=p2, derivs=dv) for (p1, p2, dv) in dists),
    )


def canonicalize(e: Expression) -> Expression:
    """Unique normal form; fixed point of itself."""
    work = list(e.terms)
    irreducible = []
    while work:
        t = work.pop()
        if t.coeff == 0 or _term_is_zero(t):
            continue
        c = _contract_one_delta(t)
        if c is not None:
            work.append(c)
            continue
        ex = _expand_eps_pair(t)
        if ex is not None:
            work.extend(ex)
            continue
        irreducible.append(t)

    collected: dict[tuple, Fraction] = {}
    for t in irreducible:
        labeled = _canonical_label_term(t)
        if labeled is None:
            continue
        key, coeff = labeled
        collected[key] = collected.get(key, Fraction(0)) + coeff

    out = [_term_from_key(k, c) for k, c in sorted(collected.items()) if c != 0]
    result = Expression(tuple(out))
    result.free_signature()  # raises on malformed index balance
    return result


# ---------------------------------------------------------------------------
# arithmetic
# ---------------------------------------------------------------------------


def _merge_consts(a, b):
    d = dict(a)
    for n, p in b:
        d[n] = d.get(n, 0) + p
    return tuple(sorted((n, p) for n, p in d.items() if p != 0))


def _fresh_dummies(term: Term, taken: set[str], salt: int) -> Term:
    counts, kinds = term.label_counts()
    avoid = set(taken) | set(counts)
    mapping = {}
    n = 0
    for l in sorted(counts):
        if counts[l] == 2 and l in taken:
            while True:
                cand = "_t%d_%d" % (salt, n)
                n += 1
                if cand not in avoid:
                    break
            mapping[l] = cand
            avoid.add(cand)
    return _relabel_term(term, mapping) if mapping else term


def multiply(a: Expression, b: Expression) -> Expression:
    """Tensor product of expressions (labels shared across factors contract)."""
    out = []
    for i, ta in enumerate(a.terms):
        a_labels = {l for l, *_ in ta.label_occurrences()}
        for j, tb in enumerate(b.terms):
            tb2 = _fresh_dummies(tb, set(a_labels), salt=i * len(b.terms) + j)
            out.append(Term(
                coeff=ta.coeff * tb2.coeff,
                consts=_merge_consts(ta.consts, tb2.consts),
                eps=ta.eps + tb2.eps,
                eta=ta.eta + tb2.eta,
                deltas=ta.deltas + tb2.deltas,
                syms=ta.syms + tb2.syms,
                smears=ta.smears + tb2.smears,
                dists=ta.dists + tb2.dists,
            ))
    return canonicalize(Expression(tuple(out)))


def relabel_free(e: Expression, mapping: Mapping[str, str]) -> Expression:
    """Rename free indices (and only those) across the expression."""
    out = []
    for t in e.terms:
        counts, _ = t.label_counts()
        m = {l: mapping[l] for l in mapping if counts.get(l) == 1}
        taken = set(counts) | set(mapping.values())
        t2 = _fresh_dummies(t, {v for v in mapping.values()}, salt=len(out))
        out.append(_relabel_term(t2, m))
    return canonicalize(Expression(tuple(out)))


def repoint(e: Expression, mapping: Mapping[str, str]) -> Expression:
    out = []
    for t in e.terms:
        syms = tuple(replace(s, point=mapping.get(s.point, s.point)) for s in t.syms)
        smears = tuple(replace(s, point=mapping.get(s.point, s.point)) for s in t.smears)
        dists = tuple(replace(d, p1=mapping.get(d.p1, d.p1), p2=mapping.get(d.p2, d.p2))
                      for d in t.dists)
        out.append(replace(t, syms=syms, smears=smears, dists=dists))
    return Expression(tuple(out))


def spatial_derivative(e: Expression, label: str, point: str) -> Expression:
    """Leibniz derivative d/dx^label at the given point."""
    out = []
    for t in e.terms:
        for n, s in enumerate(t.syms):
            if s.point == point:
                out.append(replace(t, syms=t.syms[:n] + (replace(s, derivs=s.derivs + (label,)),) + t.syms[n + 1:]))
        for n, s in enumerate(t.smears):
            if s.point == point:
                out.append(replace(t, smears=t.smears[:n] + (replace(s, derivs=s.derivs + (label,)),) + t.smears[n + 1:]))
        for n, d in enumerate(t.dists):
            if d.p1 == point:
                out.append(replace(t, dists=t.dists[:n] + (replace(d, derivs=d.derivs + (label,)),) + t.dists[n + 1:]))
            elif d.p2 == point:
                out.append(replace(t, coeff=-t.coeff,
                                   dists=t.dists[:n] + (replace(d, derivs=d.derivs + (label,)),) + t.dists[n + 1:]))
    return canonicalize(Expression(tuple(out)))


def _leibniz_at_point(term: Term, label: str, point: str, skip_dist: int) -> list[Term]:
    """d/dx^label of every factor at ``point`` except distribution ``skip_dist``."""
    out = []
    for n, s in enumerate(term.syms):
        if s.point == point:
            out.append(replace(term, syms=term.syms[:n] + (replace(s, derivs=s.derivs + (label,)),) + term.syms[n + 1:]))
    for n, s in enumerate(term.smears):
        if s.point == point:
            out.append(replace(term, smears=term.smears[:n] + (replace(s, derivs=s.derivs + (label,)),) + term.smears[n + 1:]))
    for n, d in enumerate(term.dists):
        if n == skip_dist:
            continue
        if d.p1 == point:
            out.append(replace(term, dists=term.dists[:n] + (replace(d, derivs=d.derivs + (label,)),) + term.dists[n + 1:]))
        elif d.p2 == point:
            out.append(replace(term, coeff=-term.coeff,
                               dists=term.dists[:n] + (replace(d, derivs=d.derivs + (label,)),) + term.dists[n + 1:]))
    return out


def eliminate_point(e: Expression, point: str) -> Expression:
    """Integrate the expression over ``point`` against its delta distribution.

    Every term must contain at least one distribution involving ``point``.
    Derivatives carried by that distribution are moved onto the other
    factors at ``point`` by parts before the substitution.
    """
    work = list(e.terms)
    done = []
    while work:
        t = work.pop()
        target = None
        for n, d in enumerate(t.dists):
            if point in (d.p1, d.p2):
                if target is None or (not d.derivs):
                    target = n
                if not d.derivs:
                    break
        if target is None:
            raise ExprError("no distribution involving point %r" % point)
        d = t.dists[target]
        if d.derivs:
            if d.p1 == point:
                # move one derivative off the distribution by parts
                lab = d.derivs[0]
                stripped = replace(d, derivs=d.derivs[1:])
                t2 = replace(t, coeff=-t.coeff,
                             dists=t.dists[:target] + (stripped,) + t.dists[target + 1:])
                work.extend(_leibniz_at_point(t2, lab, point, skip_dist=target))
            else:
                # derivatives are with respect to the far point; flip them here
                flipped = Dist(p1=d.p2, p2=d.p1, derivs=d.derivs)
                t2 = replace(t, coeff=t.coeff * (-1) ** len(d.derivs),
                             dists=t.dists[:target] + (flipped,) + t.dists[target + 1:])
                work.append(t2)
            continue
        other = d.p2 if d.p1 == point else d.p1
        rest = t.dists[:target] + t.dists[target + 1:]
        t2 = replace(t, dists=rest)
        done.append(repoint(Expression((t2,)), {point: other}).terms[0])
    return canonicalize(Expression(tuple(done)))


def strip_smear_derivatives(e: Expression, name: str) -> Expression:
    """Integrate by parts until smearing symbol ``name`` carries no derivatives.

    Only meaningful for expressions standing under an integral sign over
    the symbol's point.
    """
    work = list(e.terms)
    done = []
    while work:
        t = work.pop()
        hit = None
        for n, s in enumerate(t.smears):
            if s.name == name and s.derivs:
                hit = n
                break
        if hit is None:
            done.append(t)
            continue
        s = t.smears[hit]
        lab = s.derivs[0]
        stripped = replace(s, derivs=s.derivs[1:])
        t2 = replace(t, coeff=-t.coeff,
                     smears=t.smears[:hit] + (stripped,) + t.smears[hit + 1:])
        # Leibniz over every other factor at the same point.
        for n2, s2 in enumerate(t2.syms):
            if s2.point == s.point:
                work.append(replace(t2, syms=t2.syms[:n2] + (replace(s2, derivs=s2.derivs + (lab,)),) + t2.syms[n2 + 1:]))
        for n2, s2 in enumerate(t2.smears):
            if s2.point == s.point and not (n2 == hit and s2.name == name):
                work.append(replace(t2, smears=t2.smears[:n2] + (replace(s2, derivs=s2.derivs + (lab,)),) + t2.smears[n2 + 1:]))
        for n2, d2 in enumerate(t2.dists):
            if d2.p1 == s.point:
                work.append(replace(t2, dists=t2.dists[:n2] + (replace(d2, derivs=d2.derivs + (lab,)),) + t2.dists[n2 + 1:]))
            elif d2.p2 == s.point:
                work.append(replace(t2, coeff=-t2.coeff,
                                    dists=t2.dists[:n2] + (replace(d2, derivs=d2.derivs + (lab,)),) + t2.dists[n2 + 1:]))
    return canonicalize(Expression(tuple(done)))


def substitute(e: Expression, bindings: Mapping[str, tuple[Sequence[str], Expression]]) -> Expression:
    """Simultaneous substitution of field symbols, then canonicalize.

    ``bindings`` maps a symbol name to ``(slot_labels, replacement)`` where
    the replacement's free indices are exactly the slot labels (written at
    any single point; it is re-pointed to each occurrence).
    """
    for name, (slots, rhs) in bindings.items():
        want = tuple(sorted(l for l in slots))
        got = tuple(sorted(l for l, _k in rhs.free_signature())) if not rhs.is_zero() else want
        if not rhs.is_zero() and got != want:
            raise ExprError("binding for %s expects indices %r, replacement has %r"
                            % (name, want, got))

    out = []
    for t in e.terms:
        plain, bound = [], []
        for s in t.syms:
            (bound if s.name in bindings else plain).append(s)
        acc = Expression((replace(t, syms=tuple(plain)),))
        ok = True
        for s in bound:
            slots, rhs = bindings[s.name]
            if len(slots) != len(s.labels):
                raise ExprError("binding for %s has %d slots, occurrence has %d"
                                % (s.name, len(slots), len(s.labels)))
            if rhs.is_zero():
                ok = False
                break
            repl = relabel_free(rhs, dict(zip(slots, s.labels)))
            repl = repoint(repl, {p: s.point for p in repl.points()})
            for lab in s.derivs:
                repl = spatial_derivative(repl, lab, s.point)
            acc = multiply(acc, repl)
        if ok:
            out.extend(acc.terms)
    return canonicalize(Expression(tuple(out)))
