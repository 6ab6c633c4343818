"""Model-language parsing and canonical printing."""

import pytest

from hjfield.dsl import (ExpressionParser, ParseError, SymbolInfo,
                         canonical_str, parse_model_statements)
from hjfield.expr import INTERNAL, SPATIAL
from hjfield.phase import builtin_model, builtin_source, load_model
from hjfield.report import model_source


SYMS = {
    "A": SymbolInfo("A", "field", (SPATIAL, INTERNAL)),
    "p0": SymbolInfo("p0", "momentum", (SPATIAL, INTERNAL)),
    "B0": SymbolInfo("B0", "field", (SPATIAL, SPATIAL, INTERNAL), anti=((0, 1),)),
    "Xi": SymbolInfo("Xi", "const"),
    "Omega": SymbolInfo("Omega", "const"),
    "tau": SymbolInfo("tau", "smear", (INTERNAL,)),
}


def parse(text, kinds=None):
    return ExpressionParser(SYMS, kinds).parse(text)


@pytest.mark.parametrize("text", [
    "p0[a,i] + Xi eta(a,b,c) B0[b,c,i]",
    "-1/2 Omega/Xi A[a,i]",
    "Xi^2 delta(a,b) delta(i,j) D3(x,y)",
    "d(b)@d(c)@A[c,i] tau[i]",
    "eps(i,j,k) A[a,j] d(a)@tau[k]",
    "1/2 A[a,i]@y D3(x,y)",
    "3",
])
def test_print_parse_round_trip(text):
    kinds = {"a": SPATIAL, "b": SPATIAL, "i": INTERNAL, "j": INTERNAL}
    e = parse(text, kinds)
    printed = canonical_str(e)
    again = parse(printed, dict(e.free_signature()))
    assert (e - again).is_zero(), printed


def test_parse_error_has_position():
    with pytest.raises(ParseError) as err:
        parse("A[a,i] + $")
    assert "line 1" in str(err.value)


def test_undeclared_symbol():
    with pytest.raises(ParseError) as err:
        parse("Q[a,i]")
    assert "undeclared" in str(err.value)


def test_kind_mismatch_rejected():
    with pytest.raises(ParseError):
        parse("eps(a,j,k) A[a,i]")  # spatial a reused as internal


def test_arity_mismatch_rejected():
    with pytest.raises(ParseError):
        parse("A[a]")


def test_labels_cannot_start_with_underscore():
    with pytest.raises(ParseError):
        parse("A[_a,i]")


def test_constant_powers_and_division():
    e = parse("Omega^2/Xi A[a,i]")
    assert e.terms[0].consts == (("Omega", 2), ("Xi", -1))
    e2 = parse("1/Xi A[a,i]")
    assert e2.terms[0].consts == (("Xi", -1),)


def test_model_statements():
    stmts = parse_model_statements(
        "const Xi\n"
        "field B0 slots=(spatial,spatial,internal) antisym=(1,2) "
        "role=auxiliary momentum=P0\n"
        "bracket {B0[a,b,i], P0[c,d,j]} = 1/2 (delta(a,c) delta(b,d) "
        "- delta(a,d) delta(b,c)) delta(i,j) D3(x,y)\n"
        "hamiltonian phi7 free=(a,b,i) = P0[a,b,i] primary\n")
    kinds = [type(s).__name__ for s in stmts]
    assert kinds == ["ConstStmt", "FieldStmt", "BracketStmt", "HamiltonianStmt"]
    assert stmts[1].anti == ((0, 1),)
    assert stmts[3].flag == "primary"


def test_line_continuation_and_comments():
    stmts = parse_model_statements(
        "# comment\n"
        "const \\\n  Xi\n")
    assert stmts[0].name == "Xi"


def test_unknown_statement():
    with pytest.raises(ParseError):
        parse_model_statements("frobnicate everything\n")


@pytest.mark.parametrize("name", ["pontryagin", "euler"])
def test_model_source_round_trip(name):
    model = builtin_model(name)
    again = load_model(model_source(model), name=name)
    assert [f.name for f in again.fields] == [f.name for f in model.fields]
    for h1, h2 in zip(model.hamiltonians, again.hamiltonians):
        assert h1.name == h2.name
        assert (h1.density - h2.density).is_zero()
    assert (model.canonical.density - again.canonical.density).is_zero()
    for key, (fl, ml, kern) in model.table.entries().items():
        fl2, ml2, kern2 = again.table.entries()[key]
        k1 = model.table.lookup(key[0], fl, "x", key[1], ml, "y")
        k2 = again.table.lookup(key[0], fl, "x", key[1], ml, "y")
        assert (k1 - k2).is_zero()


def test_builtin_source_is_text():
    src = builtin_source("pontryagin")
    assert "hamiltonian H0" in src
