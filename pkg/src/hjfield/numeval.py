"""Component evaluation of tensor expressions.

Evaluates an Expression at explicit index values 1..3, summing dummy
pairs, with field/momentum components supplied by an assignment map.
Distributions evaluate to 1 (their derivatives to 0) and spatial
derivatives of fields to 0; this is the finite-dimensional reduction
used by the numeric oracle and by the C-matrix component solver.

Values combine a scalar part and a tangent part (dual numbers), which
gives exact polynomial gradients without symbolic differentiation.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

from .expr import Expression, ExprError, Term

_EPS3 = {}
for perm, sign in ((("1", "2", "3"), 1), (("2", "3", "1"), 1), (("3", "1", "2"), 1),
                   (("3", "2", "1"), -1), (("2", "1", "3"), -1), (("1", "3", "2"), -1)):
    _EPS3[perm] = sign


def levi_civita(i, j, k):
    return _EPS3.get((str(i), str(j), str(k)), 0)


def sym_component_value(name, comps, anti, assignment):
    """Look up a field component, normalizing antisymmetric slot pairs."""
    comps = list(comps)
    sign = 1
    for p, q in anti:
        if comps[p] == comps[q]:
            return 0
        if comps[p] > comps[q]:
            comps[p], comps[q] = comps[q], comps[p]
            sign = -sign
    return sign * assignment[(name, tuple(comps))]


def eval_expression(e: Expression, index_assign, assignment, const_values,
                    grad_wrt=None):
    """Evaluate at fixed free-index values.

    ``index_assign`` maps free labels to values in {1,2,3} (ints or
    strings); dummy labels are summed.  ``assignment`` maps
    ``(symbol, component)`` to numbers, ``const_values`` maps constant
    names to numbers.  With ``grad_wrt = (symbol, component)`` the
    derivative with respect to that coordinate is returned instead.
    """
    total = 0
    for t in e.terms:
        total += _eval_term(t, index_assign, assignment, const_values, grad_wrt)
    return total


def _eval_term(t: Term, index_assign, assignment, const_values, grad_wrt):
    counts, _kinds = t.label_counts()
    fixed = {l: str(v) for l, v in index_assign.items()}
    dummies = sorted(l for l, c in counts.items() if c == 2 and l not in fixed)
    free_unfixed = [l for l, c in counts.items() if c == 1 and l not in fixed]
    if free_unfixed:
        raise ExprError("unassigned free index %r" % free_unfixed[0])

    const = Fraction(1)
    for name, p in t.consts:
        const *= Fraction(const_values[name]) ** p
    base = t.coeff * const

    if t.smears:
        raise ExprError("cannot numerically evaluate smearing symbols")
    if any(d.derivs for d in t.dists) or any(s.derivs for s in t.syms):
        return 0  # the reduction sets all spatial derivatives to zero

    total = 0
    for combo in itertools.product("123", repeat=len(dummies)):
        env = dict(fixed)
        env.update(zip(dummies, combo))
        sign = 1
        for tri in t.eps + t.eta:
            sign *= levi_civita(*(env[l] for l in tri))
            if sign == 0:
                break
        if sign == 0:
            continue
        if any(env[l1] != env[l2] for _k, l1, l2 in t.deltas):
            continue
        val, dval = base * sign, 0
        for s in t.syms:
            comps = tuple(int(env[l]) for l in s.labels)
            v = sym_component_value(s.name, comps, s.anti, assignment)
            dv = (_component_gradient(s.name, comps, s.anti, grad_wrt)
                  if grad_wrt is not None else 0)
            val, dval = val * v, dval * v + val * dv
        total += dval if grad_wrt is not None else val
    return total


def _component_gradient(name, comps, anti, grad_wrt):
    gname, gcomps = grad_wrt
    if name != gname:
        return 0
    comps = list(comps)
    sign = 1
    for p, q in anti:
        if comps[p] == comps[q]:
            return 0
        if comps[p] > comps[q]:
            comps[p], comps[q] = comps[q], comps[p]
            sign = -sign
    return sign if tuple(comps) == tuple(gcomps) else 0


def eval_gradient(e: Expression, index_assign, assignment, const_values):
    """Full gradient in one sweep: dict (symbol, component) -> value."""
    grad: dict = {}
    for t in e.terms:
        if t.smears:
            raise ExprError("cannot numerically evaluate smearing symbols")
        if any(d.derivs for d in t.dists) or any(s.derivs for s in t.syms):
            continue
        counts, _kinds = t.label_counts()
        fixed = {l: str(v) for l, v in index_assign.items()}
        dummies = sorted(l for l, c in counts.items()
                         if c == 2 and l not in fixed)
        const = Fraction(1)
        for name, p in t.consts:
            const *= Fraction(const_values[name]) ** p
        base = t.coeff * const
        for combo in itertools.product("123", repeat=len(dummies)):
            env = dict(fixed)
            env.update(zip(dummies, combo))
            sign = 1
            for tri in t.eps + t.eta:
                sign *= levi_civita(*(env[l] for l in tri))
                if sign == 0:
                    break
            if sign == 0:
                continue
            if any(env[l1] != env[l2] for _k, l1, l2 in t.deltas):
                continue
            factors = []
            for s in t.syms:
                comps = list(int(env[l]) for l in s.labels)
                fsign = 1
                dead = False
                for p, q in s.anti:
                    if comps[p] == comps[q]:
                        dead = True
                        break
                    if comps[p] > comps[q]:
                        comps[p], comps[q] = comps[q], comps[p]
                        fsign = -fsign
                if dead:
                    factors = None
                    break
                key = (s.name, tuple(comps))
                factors.append((key, fsign, fsign * assignment[key]))
            if factors is None:
                continue
            # product-rule sweep with prefix/suffix products
            n = len(factors)
            prefix = [base * sign] * (n + 1)
            for i in range(n):
                prefix[i + 1] = prefix[i] * factors[i][2]
            suffix = [Fraction(1)] * (n + 1)
            for i in range(n - 1, -1, -1):
                suffix[i] = suffix[i + 1] * factors[i][2]
            for i, (key, fsign, _v) in enumerate(factors):
                contrib = prefix[i] * fsign * suffix[i + 1]
                if contrib:
                    grad[key] = grad.get(key, Fraction(0)) + contrib
    return {k: v for k, v in grad.items() if v}
