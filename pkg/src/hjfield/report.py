"""Serialization of analysis results.

Three formats: ``text`` (human-readable summary), ``structured`` (a
versioned JSON tree that parses back losslessly, including enough model
source to rebuild every expression), and ``latex`` (a standalone
compilable document using the conventional symbol names).
"""

from __future__ import annotations

import json
import os
from fractions import Fraction

from . import dsl
from .brackets import CMatrix
from .dsl import SymbolInfo, canonical_str
from .expr import Expression, INTERNAL, SPATIAL, ZERO
from .hj import (AlgebraEntry, AlgebraTable, AnalysisReport,
                 BracketTableEntry, CharacteristicEquation, DofReport,
                 Partition, ReducibilityRelation, SecondaryInfo,
                 _display_pool)
from .phase import FieldDecl, Hamiltonian, Model, load_model

SCHEMA_VERSION = 1


def emit(report: AnalysisReport, fmt: str) -> str:
    if fmt == "text":
        return emit_text(report)
    if fmt == "structured":
        return json.dumps(to_struct(report), indent=2) + "\n"
    if fmt == "latex":
        return emit_latex(report)
    raise ValueError("unknown format %r (expected text, structured or latex)" % fmt)


# ---------------------------------------------------------------------------
# model source reconstruction (used by the structured format)
# ---------------------------------------------------------------------------


def model_source(model: Model) -> str:
    lines = []
    for c in model.constants:
        lines.append("const %s" % c)
    for f in model.fields:
        anti = ""
        if f.anti:
            p, q = f.anti[0]
            anti = " antisym=(%d,%d)" % (p + 1, q + 1)
        lines.append("field %s slots=(%s)%s role=%s momentum=%s"
                     % (f.name, ",".join(f.kinds), anti, f.role, f.momentum))
    for (fn, mn), (fl, ml, kernel) in model.table.entries().items():
        lines.append("bracket {%s[%s], %s[%s]} = %s"
                     % (fn, ",".join(fl), mn, ",".join(ml),
                        canonical_str(kernel)))
    for h in model.hamiltonians:
        free = " free=(%s)" % ",".join(h.labels) if h.labels else ""
        lines.append("hamiltonian %s%s = %s primary"
                     % (h.name, free, canonical_str(h.density)))
    lines.append("hamiltonian %s = %s canonical"
                 % (model.canonical.name, canonical_str(model.canonical.density)))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# structured format
# ---------------------------------------------------------------------------


def _ham_struct(h: Hamiltonian):
    return {
        "name": h.name,
        "labels": list(h.labels),
        "kinds": list(h.kinds),
        "density": canonical_str(h.density),
        "origin": h.origin,
        "classification": h.classification,
        "parameter": h.parameter,
    }


def to_struct(report: AnalysisReport) -> dict:
    C = report.cmatrix
    return {
        "schema_version": SCHEMA_VERSION,
        "model": {
            "name": report.model.name,
            "source": model_source(report.model),
            "parameters": dict(report.model.parameters),
            "secondary_conventions": {
                k: list(v) for k, v in report.model.secondary_conventions.items()},
            "notes": list(report.model.notes),
        },
        "generations": report.generations,
        "partition": {
            "involutive": [_ham_struct(h) for h in report.partition.involutive],
            "noninvolutive": [_ham_struct(h) for h in report.partition.noninvolutive],
        },
        "c_matrix": {
            "order": [h.name for h in C.hams],
            "entries": [
                {"row": C.hams[r].name, "col": C.hams[c].name,
                 "row_labels": list(C.labels(r, "row")),
                 "col_labels": list(C.labels(c, "col")),
                 "kernel": canonical_str(k)}
                for (r, c), k in sorted(C.entries.items())],
            "inverse": [
                {"row": C.hams[r].name, "col": C.hams[c].name,
                 "row_labels": list(C.labels(r, "row")),
                 "col_labels": list(C.labels(c, "col")),
                 "kernel": canonical_str(k)}
                for (r, c), k in sorted(C.inverse.items())],
        },
        "fundamental_brackets": [
            {"a": e.a, "a_labels": list(e.a_labels),
             "b": e.b, "b_labels": list(e.b_labels),
             "kernel": canonical_str(e.kernel)}
            for e in report.fundamental_brackets],
        "generalized_brackets": [
            {"a": e.a, "a_labels": list(e.a_labels),
             "b": e.b, "b_labels": list(e.b_labels),
             "kernel": canonical_str(e.kernel)}
            for e in report.generalized_brackets],
        "secondary_hamiltonians": [
            {"parent": s.parent, "sign": s.sign, **_ham_struct(s.ham)}
            for s in report.secondaries],
        "algebra": {
            "closed": report.algebra.closed,
            "entries": [
                {"a": e.a, "b": e.b,
                 "combination": canonical_str(e.combination),
                 "closed": e.closed,
                 "residual": canonical_str(e.residual)}
                for e in report.algebra.entries],
        },
        "reducibility": [
            {"family": r.family, "lhs": canonical_str(r.lhs),
             "rhs": canonical_str(r.rhs),
             "residual": canonical_str(r.residual),
             "components": r.components}
            for r in report.reducibility],
        "characteristic_equations": [
            {"variable": eq.variable, "labels": list(eq.labels),
             "dt": canonical_str(eq.dt),
             "parameters": {p: canonical_str(e)
                            for p, e in sorted(eq.params.items())}}
            for eq in report.characteristic],
        "gauge_transformations": {
            var: {p: canonical_str(e) for p, e in sorted(parts.items())}
            for var, parts in sorted(report.gauge.items())},
        "dof": {
            "dynamical": report.dof.dynamical,
            "raw_involutive": report.dof.raw_involutive,
            "reducibility": report.dof.reducibility,
            "independent_involutive": report.dof.independent_involutive,
            "dof": report.dof.dof,
            "phase_space_dof": str(report.dof.phase_space_dof),
        },
        "diagnostics": list(report.diagnostics),
    }


def parse_structured(text: str) -> AnalysisReport:
    data = json.loads(text)
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ValueError("unsupported schema version %r" % data.get("schema_version"))
    model = load_model(data["model"]["source"], name=data["model"]["name"])
    model.parameters = dict(data["model"]["parameters"])
    model.secondary_conventions = {
        k: tuple(v) for k, v in data["model"]["secondary_conventions"].items()}
    model.notes = list(data["model"]["notes"])

    # smear symbols usable inside stored expressions: gauge parameters and
    # the constraint symbols appearing in combination displays
    extra = {}
    all_hams = (data["partition"]["involutive"]
                + data["partition"]["noninvolutive"]
                + data["secondary_hamiltonians"])
    for h in all_hams:
        extra[h["name"]] = SymbolInfo(h["name"], "smear", tuple(h["kinds"]))
        if h.get("parameter"):
            extra[h["parameter"]] = SymbolInfo(h["parameter"], "smear",
                                               tuple(h["kinds"]))
    for hname, (_n, _s, param) in model.secondary_conventions.items():
        ham = next((h for h in all_hams if h["name"] == hname), None)
        if ham is not None:
            extra[param] = SymbolInfo(param, "smear", tuple(ham["kinds"]))

    def parser(label_kinds=None):
        return model.parser(extra_symbols=extra, label_kinds=label_kinds)

    def parse_expr(s, label_kinds=None):
        return parser(label_kinds).parse(s)

    def ham_from(h):
        return Hamiltonian(
            name=h["name"], labels=tuple(h["labels"]), kinds=tuple(h["kinds"]),
            density=parse_expr(h["density"]), origin=h["origin"],
            classification=h["classification"], parameter=h["parameter"])

    partition = Partition(
        involutive=[ham_from(h) for h in data["partition"]["involutive"]],
        noninvolutive=[ham_from(h) for h in data["partition"]["noninvolutive"]])

    C = CMatrix(hams=list(partition.noninvolutive))
    name_to_idx = {h.name: n for n, h in enumerate(C.hams)}
    for bucket, target in (("entries", C.entries), ("inverse", C.inverse)):
        for ent in data["c_matrix"][bucket]:
            r, c = name_to_idx[ent["row"]], name_to_idx[ent["col"]]
            kinds = dict(zip(ent["row_labels"], C.hams[r].kinds))
            kinds.update(zip(ent["col_labels"], C.hams[c].kinds))
            target[(r, c)] = parse_expr(ent["kernel"], kinds)

    def table_entries(key):
        out = []
        for ent in data[key]:
            ka, _ = model.symbol_kinds(ent["a"])
            kb, _ = model.symbol_kinds(ent["b"])
            kinds = dict(zip(ent["a_labels"], ka))
            kinds.update(zip(ent["b_labels"], kb))
            out.append(BracketTableEntry(
                ent["a"], tuple(ent["a_labels"]), ent["b"],
                tuple(ent["b_labels"]), parse_expr(ent["kernel"], kinds)))
        return out

    secondaries = [
        SecondaryInfo(ham=ham_from(h), parent=h["parent"], sign=h["sign"])
        for h in data["secondary_hamiltonians"]]

    algebra = AlgebraTable(
        entries=[AlgebraEntry(e["a"], e["b"], parse_expr(e["combination"]),
                              e["closed"], parse_expr(e["residual"]))
                 for e in data["algebra"]["entries"]],
        closed=data["algebra"]["closed"])

    reducibility = [
        ReducibilityRelation(family=r["family"], lhs=parse_expr(r["lhs"]),
                             rhs=parse_expr(r["rhs"]),
                             residual=parse_expr(r["residual"]),
                             components=r["components"])
        for r in data["reducibility"]]

    characteristic = []
    for eq in data["characteristic_equations"]:
        kinds_var, _ = model.symbol_kinds(eq["variable"])
        kinds = dict(zip(eq["labels"], kinds_var))
        characteristic.append(CharacteristicEquation(
            variable=eq["variable"], labels=tuple(eq["labels"]),
            dt=parse_expr(eq["dt"], kinds),
            params={p: parse_expr(e, kinds)
                    for p, e in eq["parameters"].items()}))

    gauge = {}
    for var, parts in data["gauge_transformations"].items():
        kinds_var, _ = model.symbol_kinds(var)
        eq = next(e for e in characteristic if e.variable == var)
        kinds = dict(zip(eq.labels, kinds_var))
        gauge[var] = {p: parse_expr(e, kinds) for p, e in parts.items()}

    d = data["dof"]
    dof = DofReport(dynamical=d["dynamical"],
                    raw_involutive=d["raw_involutive"],
                    reducibility=d["reducibility"],
                    independent_involutive=d["independent_involutive"],
                    dof=d["dof"],
                    phase_space_dof=Fraction(d["phase_space_dof"]))

    return AnalysisReport(
        model=model, partition=partition, cmatrix=C,
        fundamental_brackets=table_entries("fundamental_brackets"),
        generalized_brackets=table_entries("generalized_brackets"),
        secondaries=secondaries, algebra=algebra, reducibility=reducibility,
        characteristic=characteristic, gauge=gauge, dof=dof,
        diagnostics=list(data["diagnostics"]),
        generations=data["generations"])


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------


def _color_enabled():
    v = os.environ.get("HJ_COLOR")
    return v == "1"


def _head(s):
    if _color_enabled():
        return "\x1b[1m%s\x1b[0m" % s
    return s


def emit_text(report: AnalysisReport) -> str:
    L = []
    m = report.model
    L.append(_head("Hamilton-Jacobi constraint analysis: %s" % m.name))
    L.append("=" * 60)
    L.append("")
    L.append(_head("Constraint classification"))
    L.append("  involutive:     " + ", ".join(h.name for h in report.partition.involutive))
    L.append("  non-involutive: " + ", ".join(h.name for h in report.partition.noninvolutive))
    L.append("  integrability generations until stable: %d" % report.generations)
    L.append("")

    L.append(_head("C-matrix (Poisson brackets of non-involutive constraints)"))
    C = report.cmatrix
    for (r, c), k in sorted(C.entries.items()):
        L.append("  C[%s(%s)@x, %s(%s)@y] = %s" % (
            C.hams[r].name, ",".join(C.labels(r, "row")),
            C.hams[c].name, ",".join(C.labels(c, "col")), canonical_str(k)))
    L.append("  inverse:")
    for (r, c), k in sorted(C.inverse.items()):
        L.append("  Cinv[%s(%s)@x, %s(%s)@y] = %s" % (
            C.hams[r].name, ",".join(C.labels(r, "row")),
            C.hams[c].name, ",".join(C.labels(c, "col")), canonical_str(k)))
    L.append("")

    L.append(_head("Fundamental brackets"))
    for e in report.fundamental_brackets:
        L.append("  {%s[%s](x), %s[%s](y)} = %s" % (
            e.a, ",".join(e.a_labels), e.b, ",".join(e.b_labels),
            canonical_str(e.kernel)))
    L.append("")
    L.append(_head("Generalized brackets"))
    for e in report.generalized_brackets:
        L.append("  {%s[%s](x), %s[%s](y)}* = %s" % (
            e.a, ",".join(e.a_labels), e.b, ",".join(e.b_labels),
            canonical_str(e.kernel)))
    L.append("")

    L.append(_head("Constraints generated by integrability"))
    for s in report.secondaries:
        L.append("  %s (from %s, parameter %s, sign %+d):" % (
            s.ham.name, s.parent, s.ham.parameter, s.sign))
        L.append("    %s[%s] = %s" % (s.ham.name, ",".join(s.ham.labels),
                                      canonical_str(s.ham.density)))
    L.append("")

    L.append(_head("Algebra of generated constraints (closed: %s)"
                   % ("yes" if report.algebra.closed else "NO")))
    for e in report.algebra.entries:
        if e.closed:
            L.append("  {%s, %s}* = %s" % (e.a, e.b, canonical_str(e.combination)))
        else:
            L.append("  {%s, %s}* FAILS closure; residual = %s"
                     % (e.a, e.b, canonical_str(e.residual)))
    L.append("")

    L.append(_head("Reducibility relations (%d component conditions)"
                   % sum(r.components for r in report.reducibility)))
    for r in report.reducibility:
        L.append("  div %s = %s" % (r.family, canonical_str(r.rhs)))
        L.append("    residual after expansion: %s" % canonical_str(r.residual))
    L.append("")

    d = report.dof
    L.append(_head("Degrees of freedom"))
    L.append("  dynamical variables:               %d" % d.dynamical)
    L.append("  involutive constraints (raw):      %d" % d.raw_involutive)
    L.append("  reducibility conditions:           %d" % d.reducibility)
    L.append("  independent involutive constraints: %d" % d.independent_involutive)
    L.append("  DOF = %d - %d = %d" % (d.dynamical, d.independent_involutive, d.dof))
    L.append("  phase-space count (2N_q - 2N_c)/2 = %s" % d.phase_space_dof)
    L.append("")

    L.append(_head("Characteristic equations"))
    for eq in report.characteristic:
        L.append("  d%s[%s] =" % (eq.variable, ",".join(eq.labels)))
        L.append("    dt part:  %s" % canonical_str(eq.dt))
        for p, e in sorted(eq.params.items()):
            L.append("    d%s part: %s" % (p, canonical_str(e)))
    L.append("")

    L.append(_head("Gauge transformations (dt = 0)"))
    for var, parts in sorted(report.gauge.items()):
        for p, e in sorted(parts.items()):
            L.append("  delta %s / d%s = %s" % (var, p, canonical_str(e)))
    L.append("")

    L.append(_head("Diagnostics"))
    for dmsg in report.diagnostics:
        L.append("  - %s" % dmsg)
    if not report.diagnostics:
        L.append("  (none)")
    L.append("")
    return "\n".join(L)


# ---------------------------------------------------------------------------
# latex format
# ---------------------------------------------------------------------------


_GREEK_LABEL = {}


def _latex_label(lab):
    return lab if len(lab) == 1 else lab


def _latex_sym(s, display):
    labels = tuple(_latex_label(l) for l in s.labels)
    tpl = display.get(s.name)
    if tpl is not None:
        try:
            core = tpl % labels
        except TypeError:
            core = "%s_{%s}" % (s.name, "".join(labels))
    else:
        core = "%s_{%s}" % (s.name, "".join(labels)) if labels else s.name
    for lab in sorted(s.derivs, reverse=True):
        core = r"\partial_{%s}%s" % (_latex_label(lab), core)
    return core


def latex_expr(e: Expression, display) -> str:
    e = dsl._externalize_dummies(e)
    if not e.terms:
        return "0"
    chunks = []
    for n, t in enumerate(e.terms):
        coeff = t.coeff
        mag = abs(coeff)
        parts = []
        if mag.denominator == 1:
            if mag != 1:
                parts.append(str(mag.numerator))
        else:
            parts.append(r"\tfrac{%d}{%d}" % (mag.numerator, mag.denominator))
        for name, p in t.consts:
            base = display.get(name, name)
            if p == 1:
                parts.append(base)
            elif p == -1:
                parts.append(r"%s^{-1}" % base)
            else:
                parts.append(r"%s^{%d}" % (base, p))
        for tri in t.eps:
            parts.append(r"\epsilon^{%s}" % "".join(map(_latex_label, tri)))
        for tri in t.eta:
            parts.append(r"\eta^{%s}" % "".join(map(_latex_label, tri)))
        for _k, l1, l2 in t.deltas:
            parts.append(r"\delta^{%s%s}" % (_latex_label(l1), _latex_label(l2)))
        for s in t.syms:
            parts.append(_latex_sym(s, display))
        for s in t.smears:
            parts.append(_latex_sym(s, display))
        for dist in t.dists:
            core = r"\delta^{3}(%s-%s)" % (dist.p1, dist.p2)
            for lab in sorted(dist.derivs, reverse=True):
                core = r"\partial_{%s}%s" % (_latex_label(lab), core)
            parts.append(core)
        body = r"\,".join(parts) if parts else "1"
        if n == 0:
            chunks.append(body if coeff >= 0 else "-" + body)
        else:
            chunks.append(("+" if coeff >= 0 else "-") + body)
    return " ".join(chunks)


def emit_latex(report: AnalysisReport) -> str:
    m = report.model
    disp = dict(m.display)
    X = lambda e: latex_expr(e, disp)

    def hname(h, labels=None):
        tpl = disp.get(h if isinstance(h, str) else h.name)
        name = h if isinstance(h, str) else h.name
        labs = labels if labels is not None else \
            (h.labels if not isinstance(h, str) else ())
        if tpl:
            try:
                return tpl % tuple(labs)
            except TypeError:
                pass
        return r"\mathrm{%s}" % name

    def align(rows):
        if not rows:
            L.append("(none)")
            return
        L.append(r"\begin{align*}")
        L.append(" \\\\\n".join(rows))
        L.append(r"\end{align*}")

    L = []
    L.append(r"\documentclass{article}")
    L.append(r"\usepackage{amsmath,amssymb}")
    L.append(r"\allowdisplaybreaks")
    L.append(r"\title{Hamilton--Jacobi constraint analysis: %s}" % m.name)
    L.append(r"\date{}")
    L.append(r"\begin{document}")
    L.append(r"\maketitle")

    L.append(r"\section*{Classification}")
    L.append("Involutive: $%s$; non-involutive: $%s$."
             % (",\\ ".join(hname(h) for h in report.partition.involutive),
                ",\\ ".join(hname(h) for h in report.partition.noninvolutive)))

    L.append(r"\section*{C-matrix and inverse}")
    C = report.cmatrix
    rows = []
    for (r, c), k in sorted(C.entries.items()):
        rows.append(r"\{%s(x), %s(y)\} &= %s" % (
            hname(C.hams[r], C.labels(r, "row")),
            hname(C.hams[c], C.labels(c, "col")), X(k)))
    for (r, c), k in sorted(C.inverse.items()):
        rows.append(r"(C^{-1})[%s, %s] &= %s" % (
            hname(C.hams[r], C.labels(r, "row")),
            hname(C.hams[c], C.labels(c, "col")), X(k)))
    align(rows)

    def table_section(title, entries, star):
        L.append(r"\section*{%s}" % title)
        rows = []
        for e in entries:
            lhs = r"\{%s(x), %s(y)\}%s" % (
                hname(e.a, e.a_labels), hname(e.b, e.b_labels),
                "^{*}" if star else "")
            rows.append("%s &= %s" % (lhs, X(e.kernel)))
        align(rows)

    table_section("Fundamental brackets", report.fundamental_brackets, False)
    table_section("Generalized brackets", report.generalized_brackets, True)

    L.append(r"\section*{Constraints from integrability}")
    align(["%s &= %s" % (hname(s.ham), X(s.ham.density))
           for s in report.secondaries])

    L.append(r"\section*{Constraint algebra}")
    rows = []
    for e in report.algebra.entries:
        ha = next(s.ham for s in report.secondaries if s.ham.name == e.a)
        hb = next(s.ham for s in report.secondaries if s.ham.name == e.b)
        la = _display_pool(ha.kinds, first=True)
        lb = _display_pool(hb.kinds, first=False)
        rows.append(r"\{%s(x), %s(y)\}^{*} &= %s" % (
            hname(ha, la), hname(hb, lb), X(e.combination)))
    align(rows)

    L.append(r"\section*{Reducibility}")
    rows = []
    for r in report.reducibility:
        fam = next(s.ham for s in report.secondaries if s.ham.name == r.family)
        rest = tuple(l for l, k in zip(fam.labels, fam.kinds) if k != SPATIAL)
        rows.append(r"\partial_{a}%s &= %s" % (
            hname(fam, ("a",) + tuple("i" for _ in rest)), X(r.rhs)))
    align(rows)

    d = report.dof
    L.append(r"\section*{Degrees of freedom}")
    L.append(r"\[ \mathrm{DOF} = %d - %d = %d \]"
             % (d.dynamical, d.independent_involutive, d.dof))

    def with_d_prefix(params, prefix):
        disp2 = dict(disp)
        for p in params:
            base = disp.get(p, p)
            disp2[p] = prefix + base
        return disp2

    L.append(r"\section*{Characteristic equations}")
    rows = []
    for eq in report.characteristic:
        lhs = "d%s" % hname(eq.variable, eq.labels)
        pieces = []
        if not eq.dt.is_zero():
            pieces.append(r"\left[%s\right]dt" % X(eq.dt))
        disp2 = with_d_prefix(eq.params, "d")
        for p, e in sorted(eq.params.items()):
            pieces.append(latex_expr(e, disp2))
        rows.append("%s &= %s" % (lhs, " + ".join(pieces) if pieces else "0"))
    align(rows)

    L.append(r"\section*{Gauge transformations ($dt=0$)}")
    rows = []
    for var, parts in sorted(report.gauge.items()):
        eq = next(e for e in report.characteristic if e.variable == var)
        disp2 = with_d_prefix(parts, r"\delta ")
        pieces = [latex_expr(e, disp2) for _p, e in sorted(parts.items())]
        rows.append(r"\delta %s &= %s" % (hname(var, eq.labels), " + ".join(pieces)))
    align(rows)

    L.append(r"\section*{Diagnostics}")
    L.append(r"\begin{itemize}")
    for dmsg in report.diagnostics:
        L.append(r"\item %s" % dmsg.replace("_", r"\_"))
    if not report.diagnostics:
        L.append(r"\item none")
    L.append(r"\end{itemize}")
    L.append(r"\end{document}")
    return "\n".join(L) + "\n"
