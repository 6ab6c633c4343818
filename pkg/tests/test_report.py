"""Report emission: text, structured round-trip, latex."""

import json

import pytest

from hjfield.hj import analyze
from hjfield.phase import load_model
from hjfield.report import emit, model_source, parse_structured, to_struct


def test_text_contains_dof_line(pontryagin_report):
    text = emit(pontryagin_report, "text")
    assert "DOF = 18 - 18 = 0" in text


def test_text_lists_partition_and_diagnostics(euler_report):
    text = emit(euler_report, "text")
    assert "involutive:     phi3, phi4, phi5, phi6" in text
    assert "non-involutive: phi1, phi2, phi7, phi8" in text
    assert "sign normalization: phi10" in text


def test_text_deterministic(pontryagin, pontryagin_report):
    t1 = emit(pontryagin_report, "text")
    t2 = emit(analyze(pontryagin), "text")
    assert t1 == t2


@pytest.mark.parametrize("which", ["pontryagin_report", "euler_report"])
def test_structured_round_trip(request, which):
    rep = request.getfixturevalue(which)
    s1 = emit(rep, "structured")
    rep2 = parse_structured(s1)
    s2 = emit(rep2, "structured")
    assert s1 == s2


def test_structured_schema_and_content(pontryagin_report):
    data = json.loads(emit(pontryagin_report, "structured"))
    assert data["schema_version"] == 1
    assert data["dof"]["dof"] == 0
    assert data["algebra"]["closed"] is True
    names = [h["name"] for h in data["secondary_hamiltonians"]]
    assert names == ["phi9", "phi10", "phi11", "phi12"]


def test_structured_rejects_unknown_schema(pontryagin_report):
    data = json.loads(emit(pontryagin_report, "structured"))
    data["schema_version"] = 99
    with pytest.raises(ValueError):
        parse_structured(json.dumps(data))


def test_euler_structured_has_2omega_entry(euler_report):
    data = json.loads(emit(euler_report, "structured"))
    mixed = [e for e in data["generalized_brackets"]
             if (e["a"], e["b"]) == ("B0", "U")]
    assert mixed and "1/2 1/Omega" in mixed[0]["kernel"]


def test_latex_document_structure(pontryagin_report):
    tex = emit(pontryagin_report, "latex")
    assert tex.startswith("\\documentclass")
    assert tex.rstrip().endswith("\\end{document}")
    assert "\\phi_{9}" in tex
    assert "\\delta^{3}(x-y)" in tex
    assert "\\Upsilon" in tex
    assert "\\mathrm{DOF} = 18 - 18 = 0" in tex
    # environments balance
    assert tex.count("\\begin{align*}") == tex.count("\\end{align*}")


def test_latex_uses_tilded_parameters(euler_report):
    tex = emit(euler_report, "latex")
    assert "\\tilde{\\tau}" in tex
    assert "d\\tilde{\\lambda}" in tex or "d\\tilde{\\tau}" in tex


def test_minimal_model_report_is_valid(tmp_path):
    toy = load_model("""
field q slots=(internal) role=dynamical momentum=p
field T slots=(internal) role=multiplier momentum=That
bracket {q[i], p[j]} = delta(i,j) D3(x,y)
bracket {T[i], That[j]} = delta(i,j) D3(x,y)
hamiltonian phi1 free=(i) = That[i] primary
hamiltonian H0 = p[i] T[i] canonical
""", name="minimal")
    rep = analyze(toy)
    for fmt in ("text", "structured", "latex"):
        out = emit(rep, fmt)
        assert out
    s1 = emit(rep, "structured")
    assert emit(parse_structured(s1), "structured") == s1


def test_model_source_is_loadable(pontryagin):
    src = model_source(pontryagin)
    again = load_model(src, name="again")
    assert [h.name for h in again.hamiltonians] == \
        [h.name for h in pontryagin.hamiltonians]


def test_color_escape_only_when_enabled(pontryagin_report, monkeypatch):
    monkeypatch.delenv("HJ_COLOR", raising=False)
    assert "\x1b[" not in emit(pontryagin_report, "text")
    monkeypatch.setenv("HJ_COLOR", "1")
    assert "\x1b[" in emit(pontryagin_report, "text")
    monkeypatch.setenv("HJ_COLOR", "0")
    assert "\x1b[" not in emit(pontryagin_report, "text")


def test_unknown_format_rejected(pontryagin_report):
    with pytest.raises(ValueError):
        emit(pontryagin_report, "pdf")
