"""Phase-space declarations: fields, momenta, bracket tables, models.

A :class:`Model` bundles the field content of a theory, the declared
fundamental bracket table, the canonical Hamiltonian density and the
primary constraint densities.  The two built-in models transcribe the
3+1 BF presentations of the Pontryagin and Euler invariants; their
sources live under ``models/`` and are parsed through the regular
loader, so they exercise the same code path as user files.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field as dcfield
from fractions import Fraction

from . import dsl
from .expr import (INTERNAL, SPATIAL, Expression, ExprError, Sym, ZERO,
                   canonicalize, relabel_free, repoint, spatial_derivative)


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class FieldDecl:
    name: str
    kinds: tuple[str, ...]
    anti: tuple[tuple[int, int], ...]
    role: str  # dynamical | multiplier | auxiliary
    momentum: str

    def components(self):
        """Independent index tuples (antisymmetric pairs stored increasing)."""
        out = [()]
        for k in self.kinds:
            out = [c + (v,) for c in out for v in (1, 2, 3)]
        for p, q in self.anti:
            out = [c for c in out if c[p] < c[q]]
        return out


@dataclass(frozen=True)
class Hamiltonian:
    """A named constraint density with free indices."""

    name: str
    labels: tuple[str, ...]
    kinds: tuple[str, ...]
    density: Expression
    origin: str = "primary"  # "primary" | "integrability:<parent>"
    classification: str = "unknown"  # unknown | involutive | nonInvolutive
    parameter: str = ""

    def anti_pairs(self):
        """Free-label pairs antisymmetrized through a single field factor."""
        pairs = set()
        for t in self.density.terms:
            for s in t.syms:
                for p, q in s.anti:
                    l1, l2 = s.labels[p], s.labels[q]
                    if l1 in self.labels and l2 in self.labels:
                        pairs.add((self.labels.index(l1), self.labels.index(l2)))
        return tuple(sorted(pairs))

    def components(self):
        out = [()]
        for k in self.kinds:
            out = [c + (v,) for c in out for v in (1, 2, 3)]
        for p, q in self.anti_pairs():
            out = [c for c in out if c[p] < c[q]]
        return out

    def instantiate(self, labels, point):
        """Density with fresh free labels at the given point."""
        mapping = dict(zip(self.labels, labels))
        e = relabel_free(self.density, mapping)
        return repoint(e, {p: point for p in e.points()})


class BracketTable:
    """Declared fundamental brackets {field, momentum} = kernel.

    Entries are stored in the field-first orientation; the reverse lookup
    swaps the roles and flips the sign.  Missing pairs are zero.
    """

    def __init__(self):
        self._entries = {}

    def add(self, field_name, field_labels, mom_name, mom_labels, kernel: Expression):
        key = (field_name, mom_name)
        if key in self._entries:
            raise ModelError("duplicate bracket entry for {%s, %s}" % key)
        self._entries[key] = (tuple(field_labels), tuple(mom_labels), kernel)

    def entries(self):
        return dict(self._entries)

    def lookup(self, name_a, labels_a, point_a, name_b, labels_b, point_b):
        """Kernel for {a(point_a), b(point_b)} or None."""
        if (name_a, name_b) in self._entries:
            fl, ml, kernel = self._entries[(name_a, name_b)]
            sign = 1
            mapping = dict(zip(fl, labels_a)) | dict(zip(ml, labels_b))
            points = {"x": point_a, "y": point_b}
        elif (name_b, name_a) in self._entries:
            fl, ml, kernel = self._entries[(name_b, name_a)]
            sign = -1
            mapping = dict(zip(fl, labels_b)) | dict(zip(ml, labels_a))
            points = {"x": point_b, "y": point_a}
        else:
            return None
        e = relabel_free(kernel, mapping)
        e = repoint(e, points)
        return e.scale(sign)


@dataclass
class Model:
    name: str
    fields: list[FieldDecl]
    constants: tuple[str, ...]
    table: BracketTable
    hamiltonians: list[Hamiltonian]
    canonical: Hamiltonian
    symbols: dict[str, dsl.SymbolInfo]
    # presentation metadata (display strings, parameter names, sign picks)
    parameters: dict[str, str] = dcfield(default_factory=dict)
    secondary_conventions: dict[str, tuple[str, int, str]] = dcfield(default_factory=dict)
    display: dict[str, str] = dcfield(default_factory=dict)
    notes: list[str] = dcfield(default_factory=list)

    def field_decl(self, name) -> FieldDecl:
        for f in self.fields:
            if f.name == name:
                return f
        raise ModelError("unknown field %r" % name)

    def momentum_of(self, name) -> str:
        return self.field_decl(name).momentum

    def phase_symbols(self):
        """All phase-space symbol names in declaration order."""
        out = []
        for f in self.fields:
            out.append(f.name)
        for f in self.fields:
            out.append(f.momentum)
        return out

    def symbol_kinds(self, name):
        info = self.symbols[name]
        return info.kinds, info.anti

    def components_of(self, name):
        kinds, anti = self.symbol_kinds(name)
        out = [()]
        for k in kinds:
            out = [c + (v,) for c in out for v in (1, 2, 3)]
        for p, q in anti:
            out = [c for c in out if c[p] < c[q]]
        return out

    def primary(self):
        return [h for h in self.hamiltonians if h.origin == "primary"]

    def sym(self, name, labels, point="x", derivs=()):
        kinds, anti = self.symbol_kinds(name)
        return Sym(name=name, labels=tuple(labels), kinds=kinds, anti=anti,
                   point=point, derivs=tuple(derivs))

    def symbol_expression(self, name, labels, point="x") -> Expression:
        from .expr import Term
        return Expression((Term(syms=(self.sym(name, labels, point),)),))

    def parser(self, extra_symbols=None, label_kinds=None, default_point="x"):
        syms = dict(self.symbols)
        if extra_symbols:
            syms.update(extra_symbols)
        return dsl.ExpressionParser(syms, label_kinds, default_point)


def load_model(text: str, name: str = "model") -> Model:
    """Parse and validate a model file."""
    stmts = dsl.parse_model_statements(text)

    symbols: dict[str, dsl.SymbolInfo] = {}
    fields: list[FieldDecl] = []
    constants: list[str] = []
    for s in stmts:
        if isinstance(s, dsl.ConstStmt):
            if s.name in symbols:
                raise ModelError("duplicate symbol %r" % s.name)
            symbols[s.name] = dsl.SymbolInfo(s.name, "const")
            constants.append(s.name)
        elif isinstance(s, dsl.FieldStmt):
            if any(f.momentum == s.momentum for f in fields):
                raise ModelError("duplicate momentum assignment %r" % s.momentum)
            for nm in (s.name, s.momentum):
                if nm in symbols:
                    raise ModelError("duplicate symbol %r (line %d)" % (nm, s.line))
            symbols[s.name] = dsl.SymbolInfo(s.name, "field", s.kinds, s.anti)
            symbols[s.momentum] = dsl.SymbolInfo(s.momentum, "momentum", s.kinds, s.anti)
            fields.append(FieldDecl(s.name, s.kinds, s.anti, s.role, s.momentum))

    if not fields:
        raise ModelError("no fields declared")

    table = BracketTable()
    hams: list[Hamiltonian] = []
    canonical = None
    for s in stmts:
        if isinstance(s, dsl.BracketStmt):
            if s.field_name not in symbols or symbols[s.field_name].role != "field":
                raise ModelError("bracket lhs %r is not a declared field (line %d)"
                                 % (s.field_name, s.line))
            if s.momentum_name not in symbols or symbols[s.momentum_name].role != "momentum":
                raise ModelError("bracket rhs %r is not a declared momentum (line %d)"
                                 % (s.momentum_name, s.line))
            kinds = {}
            for lab, k in zip(s.field_labels, symbols[s.field_name].kinds):
                kinds[lab] = k
            for lab, k in zip(s.momentum_labels, symbols[s.momentum_name].kinds):
                if kinds.get(lab, k) != k:
                    raise ModelError("bracket header reuses label %r with another kind" % lab)
                kinds[lab] = k
            parser = dsl.ExpressionParser(symbols, kinds, default_point="x")
            kernel = parser.parse(s.rhs, s.line)
            _check_kernel(kernel, s)
            table.add(s.field_name, s.field_labels, s.momentum_name,
                      s.momentum_labels, kernel)
        elif isinstance(s, dsl.HamiltonianStmt):
            if s.name in symbols:
                raise ModelError("hamiltonian %r clashes with a symbol" % s.name)
            parser = dsl.ExpressionParser(symbols, None, default_point="x")
            density = parser.parse(s.rhs, s.line)
            sig = dict(density.free_signature())
            free = tuple(s.free)
            if set(free) != set(sig):
                raise ModelError(
                    "hamiltonian %s declares free=(%s) but density has free indices (%s)"
                    % (s.name, ",".join(free), ",".join(sorted(sig))))
            kinds = tuple(sig[l] for l in free)
            h = Hamiltonian(name=s.name, labels=free, kinds=kinds, density=density)
            if s.flag == "canonical":
                if canonical is not None:
                    raise ModelError("more than one canonical hamiltonian")
                if free:
                    raise ModelError("canonical hamiltonian must have no free indices")
                canonical = h
            elif s.flag == "primary":
                hams.append(h)
            else:
                raise ModelError("hamiltonian %s needs a primary or canonical flag"
                                 % s.name)

    if canonical is None:
        raise ModelError("no canonical hamiltonian declared")

    model = Model(name=name, fields=fields, constants=tuple(constants),
                  table=table, hamiltonians=list(hams), canonical=canonical,
                  symbols=symbols)
    _validate(model)
    return model


def _check_kernel(kernel: Expression, stmt):
    for t in kernel.terms:
        if t.smears:
            raise ModelError("bracket kernel cannot contain smearings (line %d)" % stmt.line)
        if len(t.dists) != 1 or {t.dists[0].p1, t.dists[0].p2} != {"x", "y"}:
            raise ModelError("bracket kernel must carry exactly one D3(x,y) (line %d)"
                             % stmt.line)


def _validate(model: Model):
    # every field needs a self-consistent index signature in every density
    for h in model.hamiltonians + [model.canonical]:
        h.density.free_signature()
    # bracket antisymmetry closure is by construction; spot-check orientation
    for (f, m), (fl, ml, kernel) in model.table.entries().items():
        fwd = model.table.lookup(f, fl, "x", m, ml, "y")
        rev = model.table.lookup(m, ml, "y", f, fl, "x")
        if not (fwd + rev).is_zero():
            raise ModelError("bracket {%s,%s} fails antisymmetry closure" % (f, m))


# ---------------------------------------------------------------------------
# built-in models
# ---------------------------------------------------------------------------

_PARAMS_COMMON = {
    "phi3": "tau", "phi4": "lam", "phi5": "sigma", "phi6": "zeta",
    "phi7": "theta", "phi8": "xi",
}

# parameter names of the non-involutive pair sector differ between models
_PARAMS = {
    "pontryagin": dict(_PARAMS_COMMON, phi1="rho", phi2="vphi"),
    "euler": dict(_PARAMS_COMMON, phi1="omega", phi2="varphi"),
}

# parent -> (new name, sign relative to -d(phi)/dt, parameter)
_SECONDARY = {
    "pontryagin": {
        "phi3": ("phi9", +1, "taut"), "phi4": ("phi10", +1, "lamt"),
        "phi5": ("phi11", +1, "sigmat"), "phi6": ("phi12", +1, "zetat"),
    },
    "euler": {
        "phi3": ("phi9", +1, "taut"), "phi4": ("phi10", -1, "lamt"),
        "phi5": ("phi11", -1, "sigmat"), "phi6": ("phi12", -1, "zetat"),
    },
}

_DISPLAY = {
    "A": r"A_{%s0}{}^{%s}", "U": r"\Upsilon_{%s}{}^{%s}",
    "T": r"T^{%s}", "L": r"\Lambda^{%s}",
    "sig": r"\varsigma_{%s}{}^{%s}", "chi": r"\chi_{%s}{}^{%s}",
    "B0": r"B_{%s%s0}{}^{%s}", "B": r"B_{%s%s}{}^{%s}",
    "p0": r"p^{%s0%s}", "pi": r"\pi^{%s%s}",
    "That": r"\hat{T}^{%s}", "Lhat": r"\hat{\Lambda}^{%s}",
    "sighat": r"\hat{\varsigma}^{%s%s}", "chihat": r"\hat{\chi}^{%s%s}",
    "P0": r"p^{%s%s0%s}", "P": r"p^{%s%s%s}",
    "Xi": r"\Xi", "Omega": r"\Omega",
    "phi1": r"\phi_{1}^{%s0%s}", "phi2": r"\phi_{2}^{%s%s}",
    "phi3": r"\phi_{3}^{%s}", "phi4": r"\phi_{4}^{%s}",
    "phi5": r"\phi_{5}^{%s%s}", "phi6": r"\phi_{6}^{%s%s}",
    "phi7": r"\phi_{7}^{%s%s0%s}", "phi8": r"\phi_{8}^{%s%s%s}",
    "phi9": r"\phi_{9}^{%s}", "phi10": r"\phi_{10}^{%s}",
    "phi11": r"\phi_{11}^{%s%s}", "phi12": r"\phi_{12}^{%s%s}",
    "H0": r"H_{0}", "Hp": r"H'",
    "tau": r"\tau_{%s}", "lam": r"\lambda_{%s}",
    "sigma": r"\sigma_{%s%s}", "zeta": r"\zeta_{%s%s}",
    "rho": r"\rho_{%s0%s}", "vphi": r"\tilde{\varphi}_{%s%s}",
    "omega": r"\omega_{%s0%s}", "varphi": r"\varphi_{%s%s}",
    "theta": r"\theta_{%s%s0%s}", "xi": r"\xi_{%s%s%s}",
    "taut": r"\tilde{\tau}_{%s}", "lamt": r"\tilde{\lambda}_{%s}",
    "sigmat": r"\tilde{\sigma}_{%s%s}", "zetat": r"\tilde{\zeta}_{%s%s}",
}

_NOTES = {
    "pontryagin": [
        "phi1 stores the auxiliary-sector term as +Xi eta(a,b,c) B0[b,c,i]; "
        "with the raised-0 convention (eta^{00} = -1) this equals the "
        "-Xi eta^{abc} B_{bc}^{0i} form and is the sign consistent with the "
        "declared {B0, P0} bracket, the C-matrix and the generalized brackets.",
        "bracket {T, That}: the pair carries no spatial index; a spatial "
        "delta factor sometimes attached to this entry in transcriptions is "
        "dropped.",
        "the divergence identity for phi12 carries -1/2 phi9 with the "
        "boxed sign of phi9; transcriptions using the opposite "
        "(integrability-rate) sign of phi9 write it as +1/2 phi9.",
        "the taut-part of dU and the T-part of dU/dt take the covariant "
        "form -(delta d - eps U) tau: the relative sign between the "
        "gradient and the U term follows from {U, pi} = delta and agrees "
        "with the Euler equations of motion, which both theories share.",
        "dB0 and dB characteristic equations are emitted in phase-space "
        "variables (sig, chi) rather than B_{0a} combinations.",
    ],
    "euler": [
        "phi1-phi8 reuse the Pontryagin symbol shapes, including the Xi "
        "weight in phi1 and phi2.",
        "secondary Hamiltonians phi10, phi11, phi12 are sign-normalized "
        "relative to the raw -d(phi)/dt rule (see diagnostics); the "
        "lamt-part of dU and the sigmat-part of dA therefore have the "
        "opposite sign relative to transcriptions that pair the "
        "parameters with the un-normalized constraints.",
        "algebra entries {phi10, phi11}* = -eps phi12 and {phi10, phi12}* "
        "= +eps phi11 follow from the normalized constraints and are "
        "numerically cross-validated; transcriptions reusing the "
        "rotation-sector table verbatim show the opposite signs.",
        "the divergence identity for phi12 carries +1/2 phi9 and "
        "+eps A phi11; for phi11 it carries +1/2 phi10 and -eps A phi12 "
        "(exact expansion, residual zero).",
        "dB0 and dB characteristic equations are emitted in phase-space "
        "variables (sig, chi) rather than B_{0a} combinations.",
    ],
}

BUILTIN_MODELS = ("pontryagin", "euler")


def builtin_model(name: str) -> Model:
    if name not in BUILTIN_MODELS:
        raise ModelError("unknown model %r (expected one of %s)"
                         % (name, ", ".join(BUILTIN_MODELS)))
    src = builtin_source(name)
    model = load_model(src, name=name)
    model.parameters = dict(_PARAMS[name])
    model.secondary_conventions = dict(_SECONDARY[name])
    model.display = dict(_DISPLAY)
    model.notes = list(_NOTES[name])
    return model


def builtin_source(name: str) -> str:
    if name not in BUILTIN_MODELS:
        raise ModelError("unknown model %r" % name)
    return (importlib.resources.files(__package__) / "models" / (name + ".hj")).read_text()
