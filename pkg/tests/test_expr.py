"""Core rewriting: canonical forms, epsilon/delta identities, derivatives,
substitution."""

from fractions import Fraction

import pytest

from hjfield.dsl import ExpressionParser, SymbolInfo, canonical_str
from hjfield.expr import (INTERNAL, SPATIAL, ExprError, ZERO, canonicalize,
                          eliminate_point, multiply, spatial_derivative,
                          strip_smear_derivatives, substitute)


SYMS = {
    "A": SymbolInfo("A", "field", (SPATIAL, INTERNAL)),
    "U": SymbolInfo("U", "field", (SPATIAL, INTERNAL)),
    "V": SymbolInfo("V", "field", (INTERNAL,)),
    "p0": SymbolInfo("p0", "momentum", (SPATIAL, INTERNAL)),
    "B0": SymbolInfo("B0", "field", (SPATIAL, SPATIAL, INTERNAL), anti=((0, 1),)),
    "Xi": SymbolInfo("Xi", "const"),
    "u": SymbolInfo("u", "smear", (INTERNAL,)),
}


def parse(text, kinds=None):
    return ExpressionParser(SYMS, kinds).parse(text)


def test_eps_delta_identity():
    kinds = {l: INTERNAL for l in "jkmn"}
    lhs = parse("eps(i,j,k) eps(i,m,n)")
    rhs = parse("delta(j,m) delta(k,n) - delta(j,n) delta(k,m)", kinds)
    assert (lhs - rhs).is_zero()


def test_eta_eta_contraction():
    sp = {"a": SPATIAL, "d": SPATIAL}
    assert (parse("eta(a,b,c) eta(d,b,c)") - parse("2 delta(a,d)", sp)).is_zero()
    assert (parse("eta(a,b,c) eta(a,b,c)") - parse("6", {})).is_zero()


def test_antisymmetric_slot_pair_vanishes():
    assert parse("B0[a,a,i]").is_zero()
    e = parse("B0[a,b,i] + B0[b,a,i]")
    assert e.is_zero()


def test_delta_contraction():
    assert (parse("delta(i,j) V[j]") - parse("V[i]")).is_zero()
    assert (parse("delta(i,i)", {"i": INTERNAL}) - parse("3", {})).is_zero()


def test_eps_repeated_label_is_zero():
    assert parse("eps(i,i,k) V[k]").is_zero()


def test_canonicalize_idempotent_and_self_difference():
    e = parse("1/2 Xi eta(a,b,c) (d(b)@A[c,i] - d(c)@A[b,i]"
              " + eps(i,j,k) A[b,j] U[c,k]) + 1/2 p0[a,i]")
    assert canonicalize(e) == e
    assert (e - e).is_zero()


def test_free_signature_mismatch_raises():
    good = parse("A[a,i]")
    with pytest.raises(ExprError):
        (good + parse("V[i]")).free_signature()


def test_label_appearing_three_times_raises():
    with pytest.raises(ExprError):
        parse("V[i] V[i] V[i]")


def test_derivative_of_constant_vanishes():
    assert spatial_derivative(parse("3 Xi", {}), "a", "x").is_zero()


def test_leibniz_rule():
    e = spatial_derivative(parse("U[b,i] U[c,j]"), "a", "x")
    want = parse("d(a)@U[b,i] U[c,j] + U[b,i] d(a)@U[c,j]")
    assert (e - want).is_zero()


def test_derivative_hits_distribution():
    e = spatial_derivative(parse("D3(x,y)", {}), "a", "x")
    assert e.terms[0].dists[0].derivs == ("a",)
    # derivative at the far point flips the stored orientation sign
    e2 = spatial_derivative(parse("D3(x,y)", {}), "a", "y")
    assert (e + e2).is_zero()


def test_eliminate_point_integrates_by_parts():
    # int dy  d_a(x) D3(x,y) U(y)  =  d_a U(x)
    e = parse("d(a)@D3(x,y) U[b,i]@y")
    out = eliminate_point(e, "y")
    assert (out - parse("d(a)@U[b,i]")).is_zero()


def test_strip_smear_derivatives_moves_by_parts():
    e = parse("d(a)@u[i] A[a,i]")
    out = strip_smear_derivatives(e, "u")
    assert (out + parse("u[i] d(a)@A[a,i]")).is_zero()


def test_substitute_identity():
    e = parse("Xi eta(a,b,c) A[b,j] U[c,j] p0[a,i]")
    same = substitute(e, {"A": (("r", "s"), parse("A[r,s]", {"r": SPATIAL, "s": INTERNAL}))})
    assert (e - same).is_zero()


def test_substitute_zero_kills_terms():
    e = parse("A[a,i] V[i] + U[a,j] V[j]")
    out = substitute(e, {"V": (("m",), ZERO)})
    assert out.is_zero()
    out2 = substitute(parse("A[a,i] + U[a,i]"), {"A": (("r", "s"), ZERO)})
    assert (out2 - parse("U[a,i]")).is_zero()


def test_substitute_applies_derivatives():
    e = parse("d(b)@V[i]")
    out = substitute(e, {"V": (("m",), parse("d(c)@A[c,m]"))})
    want = parse("d(b)@d(c)@A[c,i]")
    assert (out - want).is_zero()


def test_substitute_signature_mismatch():
    with pytest.raises(ExprError):
        substitute(parse("V[i]"), {"V": (("m", "n"), parse("A[m,n]", {"m": SPATIAL, "n": INTERNAL}))})


def test_multiply_contracts_shared_labels():
    a = parse("eta(a,b,c) A[b,i]")
    b = parse("U[c,i]")
    prod = multiply(a, b)
    sig = dict(prod.free_signature())
    assert set(sig) == {"a"}
