"""The constraint-analysis pipeline.

Stages, in order: classify the primary constraints into involutive and
non-involutive sets from their pairwise Poisson brackets; build and
invert the C-matrix over the non-involutive set; run the integrability
loop, where a non-vanishing evolution rate of an involutive constraint
becomes a new constraint and the loop repeats until nothing new arises;
tabulate the closed algebra of the generated constraints; find
reducibility relations among them; count degrees of freedom; and emit
characteristic equations and gauge transformations.

Closure questions ("is this bracket a combination of constraints?") are
decided exactly: a candidate basis of constraint densities dressed with
constant tensors and low-degree field coefficients is matched against
the canonical form of the bracket by rational linear algebra.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field as dcfield, replace
from fractions import Fraction

from .brackets import (CMatrix, build_c_matrix, characteristic_part,
                       integrated_bracket_density, poisson_kernel,
                       smeared_star, star_kernel)
from .dsl import SymbolInfo, canonical_str
from .expr import (INTERNAL, SPATIAL, Dist, Expression, Sym, Term, ZERO,
                   canonicalize, multiply, relabel_free, repoint,
                   spatial_derivative)
from .linsolve import match_span
from .phase import Hamiltonian, Model


class PipelineError(ValueError):
    pass


@dataclass
class Options:
    max_generations: int = 10
    ansatz_degree: int = 1


@dataclass
class Partition:
    involutive: list
    noninvolutive: list
    witnesses: dict = dcfield(default_factory=dict)


@dataclass
class SecondaryInfo:
    ham: Hamiltonian
    parent: str
    sign: int  # stored density = sign * (-d(parent)/dt)


@dataclass
class AlgebraEntry:
    a: str
    b: str
    combination: Expression  # kernel display with constraint symbols, or ZERO
    closed: bool
    residual: Expression


@dataclass
class AlgebraTable:
    entries: list
    closed: bool


@dataclass
class ReducibilityRelation:
    family: str
    lhs: Expression  # divergence density
    rhs: Expression  # combination with constraint symbols
    residual: Expression
    components: int


@dataclass
class DofReport:
    dynamical: int
    raw_involutive: int
    reducibility: int
    independent_involutive: int
    dof: int
    phase_space_dof: Fraction


@dataclass
class CharacteristicEquation:
    variable: str
    labels: tuple
    dt: Expression
    params: dict  # parameter name -> Expression


@dataclass
class BracketTableEntry:
    a: str
    a_labels: tuple
    b: str
    b_labels: tuple
    kernel: Expression


@dataclass
class AnalysisReport:
    model: Model
    partition: Partition
    cmatrix: CMatrix
    fundamental_brackets: list
    generalized_brackets: list
    secondaries: list
    algebra: AlgebraTable
    reducibility: list
    characteristic: list
    gauge: dict
    dof: DofReport
    diagnostics: list
    generations: int


# ---------------------------------------------------------------------------
# span matching with constraint candidates
# ---------------------------------------------------------------------------


@dataclass
class Candidate:
    expr: Expression            # canonical matching form (with smears)
    ham: Hamiltonian
    tensor: Term                # constant tensor skeleton
    field_syms: tuple           # coefficient field factors


def _pairings(labels):
    if not labels:
        yield []
        return
    if len(labels) % 2:
        return
    first, rest = labels[0], labels[1:]
    for i, other in enumerate(rest):
        for tail in _pairings(rest[:i] + rest[i + 1:]):
            yield [(first, other)] + tail


def _tensor_skeletons(spatial, internal):
    """Constant tensors pairing up all given labels: delta pairings with
    at most one Levi-Civita factor of each kind."""
    def options(labels):
        yield None, list(labels)
        for tri in itertools.combinations(labels, 3):
            yield tri, [l for l in labels if l not in tri]

    for sp_tri, sp_rest in options(spatial):
        for in_tri, in_rest in options(internal):
            for sp_pairs in _pairings(sp_rest):
                for in_pairs in _pairings(in_rest):
                    yield Term(
                        eta=(sp_tri,) if sp_tri else (),
                        eps=(in_tri,) if in_tri else (),
                        deltas=tuple((SPATIAL, a, b) for a, b in sp_pairs)
                        + tuple((INTERNAL, a, b) for a, b in in_pairs),
                    )


_candidate_cache: dict = {}


def span_candidates(smears, hams, model, max_field_degree=0, fields=None,
                    point="x"):
    """Constraint-combination candidates sharing the given smear factors."""
    cache_key = (
        tuple((s.name, s.labels, s.kinds, s.point) for s in smears),
        tuple((h.name, h.labels, h.density.terms) for h in hams),
        max_field_degree, tuple(fields) if fields is not None else None,
        model.name, point)
    hit = _candidate_cache.get(cache_key)
    if hit is not None:
        return hit
    base = []
    for s in smears:
        base.extend(zip(s.labels, s.kinds))
    field_names = list(fields if fields is not None else
                       [f.name for f in model.fields])
    combos = [()]
    for deg in range(1, max_field_degree + 1):
        combos.extend(itertools.combinations_with_replacement(field_names, deg))

    out = []
    seen = set()
    for ham in hams:
        G = tuple("g%d" % n for n in range(len(ham.labels)))
        ham_e = ham.instantiate(G, point)
        for combo in combos:
            fsyms = []
            labels = list(base) + list(zip(G, ham.kinds))
            for fi, fname in enumerate(combo):
                kinds, anti = model.symbol_kinds(fname)
                F = tuple("f%d%d" % (fi, n) for n in range(len(kinds)))
                fsyms.append(Sym(fname, F, kinds, anti, point=point))
                labels.extend(zip(F, kinds))
            spatial = [l for l, k in labels if k == SPATIAL]
            internal = [l for l, k in labels if k == INTERNAL]
            for skel in _tensor_skeletons(spatial, internal):
                t = replace(skel, smears=tuple(smears), syms=tuple(fsyms))
                e = canonicalize(multiply(Expression((t,)), ham_e))
                if e.is_zero() or e.terms in seen:
                    continue
                seen.add(e.terms)
                out.append(Candidate(expr=e, ham=ham, tensor=skel,
                                     field_syms=tuple(fsyms)))
    _candidate_cache[cache_key] = out
    return out


def weak_match(target: Expression, candidates):
    """(coeffs, residual); coeffs is None when the target is not in the span."""
    if target.is_zero():
        return [Fraction(0)] * len(candidates), ZERO
    return match_span(target, [c.expr for c in candidates])


def _smear_for(ham: Hamiltonian, name, point="x"):
    labels = tuple("%s%d" % (name, n) for n in range(len(ham.labels)))
    return Sym(name, labels, ham.kinds, point=point)


def smeared_density(density: Expression, labels, smear: Sym, point="x") -> Expression:
    e = relabel_free(density, dict(zip(labels, smear.labels)))
    e = repoint(e, {p: point for p in e.points()})
    return canonicalize(multiply(e, Expression((Term(smears=(smear,)),))))


# ---------------------------------------------------------------------------
# primary constraints from a kinetic one-form
# ---------------------------------------------------------------------------


def derive_primary_hamiltonians(model: Model, kinetic, velocity_names=(),
                                prefix="phi"):
    """Primary constraints of a first-order Lagrangian.

    ``kinetic`` maps field names to ``(labels, coefficient)`` where the
    coefficient multiplies that field's velocity in the Lagrangian.  Each
    field contributes ``p - coefficient``; fields without a kinetic term
    contribute the bare momentum.  Coefficients referencing a velocity
    symbol mean the Lagrangian is not first order and are rejected.
    """
    for fname, (labels, coeff) in kinetic.items():
        for t in coeff.terms:
            for s in t.syms + t.smears:
                if s.name in velocity_names:
                    raise PipelineError(
                        "kinetic coefficient of %s contains velocity %s: "
                        "second-order Lagrangians are not supported"
                        % (fname, s.name))
    out = []
    for n, f in enumerate(model.fields, start=1):
        kinds, anti = model.symbol_kinds(f.name)
        labels = _variable_labels(kinds)
        p = model.symbol_expression(f.momentum, labels, "x")
        if f.name in kinetic:
            ref_labels, coeff = kinetic[f.name]
            density = canonicalize(p - relabel_free(coeff, dict(
                zip(ref_labels, labels))))
        else:
            density = p
        out.append(Hamiltonian(name="%s%d" % (prefix, n), labels=labels,
                               kinds=kinds, density=density, origin="primary"))
    return out


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------


def classify(hams, model: Model, C: CMatrix | None = None, star=False,
             context=None) -> Partition:
    """Partition constraints by weak closure of their pairwise brackets.

    Plain Poisson brackets are used before the C-matrix exists (primary
    stage); afterwards the star bracket decides, with the closure span
    taken over ``context`` (defaults to the classified set itself).
    """
    context = list(context if context is not None else hams)
    bad = set()
    witnesses = {}
    for i, hi in enumerate(hams):
        for j in range(i, len(hams)):
            hj_ = hams[j]
            u = _smear_for(hi, "u", "x")
            v = _smear_for(hj_, "v", "x")
            res = smeared_star(hi.density, hi.labels, "u",
                               hj_.density, hj_.labels, "v",
                               model, C, star=star)
            if res.is_zero():
                continue
            cands = span_candidates((u, v), context, model,
                                    max_field_degree=1)
            coeffs, residual = weak_match(res, cands)
            if coeffs is None:
                bad.add(hi.name)
                bad.add(hj_.name)
                witnesses[(hi.name, hj_.name)] = residual
    involutive, noninvolutive = [], []
    for h in hams:
        cls = "nonInvolutive" if h.name in bad else "involutive"
        h2 = replace(h, classification=cls)
        (noninvolutive if h.name in bad else involutive).append(h2)
    return Partition(involutive, noninvolutive, witnesses)


# ---------------------------------------------------------------------------
# integrability
# ---------------------------------------------------------------------------


def _default_secondary_convention(model, parent, counter):
    name = "psi%d" % counter
    return (name, 0, model.parameters.get(parent.name, "mu_" + parent.name) + "t")


def integrability_loop(model: Model, partition: Partition, C: CMatrix,
                       options: Options):
    """Generate constraints from non-vanishing evolution rates.

    Returns (secondaries, generations, diagnostics).  The stored density
    is ``sign * (-d(parent)/dt)`` with the sign from the model's
    conventions (default: make the canonically-first term positive).
    """
    h0 = model.canonical.density
    involutive = list(partition.involutive)
    secondaries: list[SecondaryInfo] = []
    diagnostics = []
    counter = itertools.count(9)

    for generation in range(1, options.max_generations + 1):
        current = involutive + [s.ham for s in secondaries]
        new = []
        for h in current:
            dt = integrated_bracket_density(h.density, h.labels, h0, model, C)
            if dt.is_zero():
                continue
            u = _smear_for(h, "u")
            target = smeared_density(dt, h.labels, u)
            cands = span_candidates((u,), current, model, max_field_degree=1)
            coeffs, residual = weak_match(target, cands)
            if coeffs is not None:
                continue
            raw = canonicalize(-dt)
            conv = model.secondary_conventions.get(h.name)
            if conv is None:
                conv = _default_secondary_convention(model, h, next(counter))
            name, sign, param = conv
            if sign == 0:
                first = raw.terms[0].coeff if raw.terms else Fraction(1)
                sign = 1 if first > 0 else -1
            density = raw.scale(sign)
            if sign < 0:
                diagnostics.append(
                    "sign normalization: %s stored as -(-d(%s)/dt); the raw "
                    "integrability rate has the opposite overall sign"
                    % (name, h.name))
            sec = Hamiltonian(name=name, labels=h.labels, kinds=h.kinds,
                              density=density,
                              origin="integrability:" + h.name,
                              classification="unknown", parameter=param)
            new.append(SecondaryInfo(sec, h.name, sign))
        if not new:
            return secondaries, generation, diagnostics
        secondaries.extend(new)
    raise PipelineError("integrability loop did not settle within %d generations"
                        % options.max_generations)


# ---------------------------------------------------------------------------
# algebra of generated constraints
# ---------------------------------------------------------------------------


def _display_labels(ham, pool):
    return tuple(next(pool) for _ in ham.labels)


def _combination_display(coeffs, candidates, u, v, row_labels, col_labels
                         ) -> Expression:
    """Rebuild the kernel-form combination from matched candidates.

    The smear factors are dropped, their slots renamed to the display
    labels, and the constraint itself appears as an opaque symbol at the
    far point together with a D3(x,y) factor."""
    terms = []
    for coeff, cand in zip(coeffs, candidates):
        if coeff == 0:
            continue
        gsym = Sym(cand.ham.name,
                   tuple("g%d" % n for n in range(len(cand.ham.labels))),
                   cand.ham.kinds, point="y")
        fsyms = tuple(replace(s, point="y") for s in cand.field_syms)
        t = replace(cand.tensor, coeff=Fraction(coeff), syms=fsyms,
                    smears=(gsym,), dists=(Dist("x", "y"),))
        terms.append(t)
    if not terms:
        return ZERO
    mapping = dict(zip(u.labels, row_labels)) | dict(zip(v.labels, col_labels))
    return canonicalize(Expression(tuple(_relabel(t, mapping) for t in terms)))


def _relabel(term, mapping):
    from .expr import _relabel_term
    return _relabel_term(term, mapping)


def algebra_table(secondaries, model: Model, C: CMatrix) -> AlgebraTable:
    """Pairwise star brackets among generated constraints, expressed as
    constant-coefficient combinations of those constraints."""
    hams = [s.ham for s in secondaries]
    entries = []
    closed = True
    for i, hi in enumerate(hams):
        for j in range(i, len(hams)):
            hj_ = hams[j]
            u = _smear_for(hi, "u")
            v = _smear_for(hj_, "v")
            res = smeared_star(hi.density, hi.labels, "u",
                               hj_.density, hj_.labels, "v", model, C)
            row_labels = _display_pool(hi.kinds, first=True)
            col_labels = _display_pool(hj_.kinds, first=False)
            if res.is_zero():
                entries.append(AlgebraEntry(hi.name, hj_.name, ZERO, True, ZERO))
                continue
            cands = span_candidates((u, v), hams, model, max_field_degree=0)
            coeffs, residual = weak_match(res, cands)
            if coeffs is None:
                closed = False
                entries.append(AlgebraEntry(hi.name, hj_.name, ZERO, False,
                                            residual))
                continue
            display = _combination_display(coeffs, cands, u, v,
                                           row_labels, col_labels)
            entries.append(AlgebraEntry(hi.name, hj_.name, display, True, ZERO))
    return AlgebraTable(entries, closed)


def _display_pool(kinds, first):
    sp = iter("ab" if first else "cd")
    itn = iter("ik" if first else "jl")
    return tuple(next(sp) if k == SPATIAL else next(itn) for k in kinds)


# ---------------------------------------------------------------------------
# reducibility
# ---------------------------------------------------------------------------


def divergence(ham: Hamiltonian, model: Model):
    """d_a ham^{a, rest}: contract the first spatial free label with a
    derivative; remaining labels stay free."""
    spatial_positions = [n for n, k in enumerate(ham.kinds) if k == SPATIAL]
    if not spatial_positions:
        raise PipelineError("constraint %s has no spatial index" % ham.name)
    pos = spatial_positions[0]
    labels = tuple("q%d" % n for n in range(len(ham.labels)))
    e = ham.instantiate(labels, "x")
    e = spatial_derivative(e, labels[pos], "x")
    rest_labels = tuple(l for n, l in enumerate(labels) if n != pos)
    rest_kinds = tuple(k for n, k in enumerate(ham.kinds) if n != pos)
    return canonicalize(e), rest_labels, rest_kinds


def find_reducibility(secondaries, model: Model, C: CMatrix,
                      ansatz_degree=1):
    """Discover divergence identities among the generated constraints."""
    hams = [s.ham for s in secondaries]
    dyn_fields = [f.name for f in model.fields if f.role == "dynamical"]
    out = []
    for s in secondaries:
        h = s.ham
        if SPATIAL not in h.kinds:
            continue
        lhs, rest_labels, rest_kinds = divergence(h, model)
        u = Sym("u", rest_labels, rest_kinds, point="x")
        target = canonicalize(multiply(lhs, Expression((Term(smears=(u,)),))))
        cands = span_candidates((u,), hams, model,
                                max_field_degree=ansatz_degree,
                                fields=dyn_fields)
        coeffs, residual = weak_match(target, cands)
        if coeffs is None:
            continue
        display = _reducibility_display(coeffs, cands, u, rest_labels)
        comp = 1
        for k in rest_kinds:
            comp *= 3
        out.append(ReducibilityRelation(
            family=h.name, lhs=lhs, rhs=display, residual=ZERO,
            components=comp))
    return out


def verify_reducibility(relation_lhs: Expression, combination: Expression,
                        secondaries, model: Model) -> Expression:
    """Residual of lhs - combination after expanding constraint symbols."""
    expanded = expand_constraint_symbols(combination, secondaries)
    return canonicalize(relation_lhs - expanded)


def expand_constraint_symbols(e: Expression, secondaries) -> Expression:
    by_name = {s.ham.name: s.ham for s in secondaries}
    out = ZERO
    for t in e.terms:
        keep_smears = []
        acc = Expression((replace(t, smears=()),))
        for s in t.smears:
            if s.name in by_name:
                ham = by_name[s.name]
                dens = ham.instantiate(s.labels, s.point)
                for lab in s.derivs:
                    dens = spatial_derivative(dens, lab, s.point)
                acc = multiply(acc, dens)
            else:
                keep_smears.append(s)
        if keep_smears:
            acc = multiply(acc, Expression((Term(smears=tuple(keep_smears)),)))
        out = out + acc
    return out


def _reducibility_display(coeffs, candidates, u, free_labels) -> Expression:
    terms = []
    mapping = dict(zip(u.labels, free_labels))
    for coeff, cand in zip(coeffs, candidates):
        if coeff == 0:
            continue
        gsym = Sym(cand.ham.name,
                   tuple("g%d" % n for n in range(len(cand.ham.labels))),
                   cand.ham.kinds, point="x")
        t = replace(cand.tensor, coeff=Fraction(coeff), syms=cand.field_syms,
                    smears=(gsym,))
        terms.append(_relabel(t, mapping))
    if not terms:
        return ZERO
    return canonicalize(Expression(tuple(terms)))


# ---------------------------------------------------------------------------
# counting, characteristic equations, gauge transformations
# ---------------------------------------------------------------------------


def count_dof(model: Model, secondaries, relations) -> DofReport:
    dynamical = 0
    for f in model.fields:
        if f.role == "dynamical":
            dynamical += len(f.components())
    raw = sum(len(s.ham.components()) for s in secondaries)
    red = sum(r.components for r in relations)
    independent = raw - red
    dof = dynamical - independent
    if dof < 0:
        raise PipelineError(
            "negative degree-of-freedom count (%d dynamical vs %d constraints); "
            "classification or reducibility analysis is inconsistent"
            % (dynamical, independent))
    return DofReport(dynamical=dynamical, raw_involutive=raw,
                     reducibility=red, independent_involutive=independent,
                     dof=dof,
                     phase_space_dof=Fraction(2 * dynamical - 2 * independent, 2))


def characteristic_equations(model: Model, partition, secondaries,
                             C: CMatrix) -> list:
    """dq = {q, H0}* dt + sum over involutive constraints of {q, phi}* dparam."""
    h0 = model.canonical.density
    generators = []
    for h in partition.involutive:
        generators.append((h, model.parameters.get(h.name, "mu_" + h.name)))
    for s in secondaries:
        generators.append((s.ham, s.ham.parameter))
    out = []
    for name in model.phase_symbols():
        kinds, anti = model.symbol_kinds(name)
        labels = _variable_labels(kinds)
        q = model.symbol_expression(name, labels, "x")
        dt = integrated_bracket_density(q, labels, h0, model, C)
        params = {}
        for ham, pname in generators:
            part = characteristic_part(q, ham, pname, model, C)
            if not part.is_zero():
                params[pname] = part
        out.append(CharacteristicEquation(variable=name, labels=labels,
                                          dt=dt, params=params))
    return out


def _variable_labels(kinds):
    sp = iter("abcdefg")
    itn = iter("ijklmn")
    return tuple(next(sp) if k == SPATIAL else next(itn) for k in kinds)


def gauge_transformations(char_eqs, secondaries) -> dict:
    secondary_params = {s.ham.parameter for s in secondaries}
    out = {}
    for eq in char_eqs:
        parts = {p: e for p, e in eq.params.items() if p in secondary_params}
        if parts:
            out[eq.variable] = parts
    return out


# ---------------------------------------------------------------------------
# bracket tables
# ---------------------------------------------------------------------------


def bracket_tables(model: Model, C: CMatrix):
    """Fundamental and generalized bracket tables over the phase space.

    Declared pairs are always listed; any other pair with a non-vanishing
    bracket is appended."""
    declared = [(f, m) for (f, m) in model.table.entries()]
    names = model.phase_symbols()
    fundamental, generalized = [], []
    seen = set()

    def labels_for(name, offset):
        kinds, _ = model.symbol_kinds(name)
        sp = iter("ab" if offset == 0 else "cd")
        itn = iter("ik" if offset == 0 else "jl")
        return tuple(next(sp) if k == SPATIAL else next(itn) for k in kinds)

    def add(a, b):
        if (a, b) in seen or (b, a) in seen:
            return
        seen.add((a, b))
        la = labels_for(a, 0)
        lb = labels_for(b, 1)
        ea = model.symbol_expression(a, la, "x")
        eb = model.symbol_expression(b, lb, "y")
        plain = poisson_kernel(ea, eb, model)
        star = star_kernel(ea, eb, model, C)
        fundamental.append(BracketTableEntry(a, la, b, lb, plain))
        generalized.append(BracketTableEntry(a, la, b, lb, star))

    for f, m in declared:
        add(f, m)
    for a, b in itertools.combinations(names, 2):
        if (a, b) in seen or (b, a) in seen:
            continue
        # present undeclared pairs with the higher-rank symbol first, the
        # customary orientation for the auxiliary-sector entries
        if len(model.symbol_kinds(b)[0]) > len(model.symbol_kinds(a)[0]):
            a, b = b, a
        la = labels_for(a, 0)
        lb = labels_for(b, 1)
        ea = model.symbol_expression(a, la, "x")
        eb = model.symbol_expression(b, lb, "y")
        star = star_kernel(ea, eb, model, C)
        if not star.is_zero():
            seen.add((a, b))
            fundamental.append(BracketTableEntry(a, la, b, lb,
                                                 poisson_kernel(ea, eb, model)))
            generalized.append(BracketTableEntry(a, la, b, lb, star))
    return fundamental, generalized


# ---------------------------------------------------------------------------
# the full pipeline
# ---------------------------------------------------------------------------


def analyze(model: Model, options: Options | None = None) -> AnalysisReport:
    options = options or Options()
    diagnostics = list(model.notes)

    primary = model.primary()
    partition = classify(primary, model)
    partition.involutive = [
        replace(h, parameter=model.parameters.get(h.name, "mu_" + h.name))
        for h in partition.involutive]
    partition.noninvolutive = [
        replace(h, parameter=model.parameters.get(h.name, "mu_" + h.name))
        for h in partition.noninvolutive]
    C = build_c_matrix(partition.noninvolutive, model)
    secondaries, generations, diag2 = integrability_loop(
        model, partition, C, options)
    diagnostics.extend(diag2)

    # classify the generated constraints with the star bracket
    sec_hams = [s.ham for s in secondaries]
    context = partition.involutive + sec_hams
    sec_partition = classify(sec_hams, model, C, star=True, context=context)
    if sec_partition.noninvolutive:
        diagnostics.append(
            "generated constraints %s fail star-bracket closure"
            % ", ".join(h.name for h in sec_partition.noninvolutive))
    else:
        secondaries = [replace(s, ham=replace(s.ham, classification="involutive"))
                       for s in secondaries]

    algebra = algebra_table(secondaries, model, C)
    relations = find_reducibility(secondaries, model, C,
                                  ansatz_degree=options.ansatz_degree)
    for r in relations:
        resid = verify_reducibility(r.lhs, r.rhs, secondaries, model)
        if not resid.is_zero():
            raise PipelineError("reducibility relation for %s fails expansion"
                                % r.family)
    dof = count_dof(model, secondaries, relations)
    char_eqs = characteristic_equations(model, partition, secondaries, C)
    gauge = gauge_transformations(char_eqs, secondaries)
    fundamental, generalized = bracket_tables(model, C)

    return AnalysisReport(
        model=model, partition=partition, cmatrix=C,
        fundamental_brackets=fundamental, generalized_brackets=generalized,
        secondaries=secondaries, algebra=algebra, reducibility=relations,
        characteristic=char_eqs, gauge=gauge, dof=dof,
        diagnostics=diagnostics, generations=generations)
