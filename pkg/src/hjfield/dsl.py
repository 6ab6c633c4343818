"""Parsing and printing of the model-definition language.

The model files are line oriented::

    const NAME
    field NAME slots=(spatial,internal) [antisym=(1,2)] role=... momentum=PNAME
    bracket {FIELD[a,i], MOMENTUM[b,j]} = EXPR
    hamiltonian NAME [free=(a,i)] = EXPR [primary|canonical]

Expressions use explicit index lists: ``eps(i,j,k)`` and ``eta(a,b,c)``
are the internal/spatial Levi-Civita symbols, ``delta(i,j)`` a Kronecker
delta, ``d(a)@F[...]`` a spatial derivative, ``D3(x,y)`` the Dirac
distribution, rational literals, declared constants (with ``^n`` powers
and ``/`` for inverses), and declared symbols as ``NAME[l1,...]`` with an
optional ``@point``.  A trailing backslash continues a statement on the
next line; ``#`` starts a comment.

``canonical_str`` prints expressions in a form this parser reads back.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction

from .expr import (INTERNAL, SPATIAL, Dist, Expression, ExprError, Sym, Term,
                   canonicalize)


class ParseError(ValueError):
    def __init__(self, msg, line=None, col=None):
        where = ""
        if line is not None:
            where = " at line %d" % line
            if col is not None:
                where += ", column %d" % col
        super().__init__(msg + where)
        self.line = line
        self.col = col


@dataclass(frozen=True)
class SymbolInfo:
    """Static declaration of a symbol usable inside expressions."""

    name: str
    role: str  # "field" | "momentum" | "smear" | "const"
    kinds: tuple[str, ...] = ()
    anti: tuple[tuple[int, int], ...] = ()


_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<int>\d+)
  | (?P<name>[A-Za-z][A-Za-z0-9_]*)
  | (?P<op>[-+*/^@=(){},\[\]])
""", re.VERBOSE)


def tokenize(text: str, line_no: int = 1):
    tokens = []
    pos = 0
    line = line_no
    col = 1
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError("unexpected character %r" % text[pos], line, col)
        kind = m.lastgroup
        val = m.group()
        if kind != "ws":
            tokens.append((kind, val, line, col))
        line += val.count("\n")
        if "\n" in val:
            col = len(val) - val.rfind("\n")
        else:
            col += len(val)
        pos = m.end()
    tokens.append(("end", "", line, col))
    return tokens


class _Tokens:
    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect(self, val):
        kind, v, line, col = self.next()
        if v != val:
            raise ParseError("expected %r, found %r" % (val, v or "end of input"), line, col)

    def at(self, val):
        return self.peek()[1] == val


# ---------------------------------------------------------------------------
# expression parsing
# ---------------------------------------------------------------------------


@dataclass
class _RawFactor:
    kind: str  # const / eps / eta / delta / sym / dist
    data: tuple
    derivs: tuple[str, ...] = ()


@dataclass
class _RawTerm:
    coeff: Fraction = Fraction(1)
    consts: dict = field(default_factory=dict)
    factors: list = field(default_factory=list)


class ExpressionParser:
    """Recursive-descent parser producing canonical Expressions."""

    def __init__(self, symbols: dict[str, SymbolInfo], label_kinds=None,
                 default_point: str = "x"):
        self.symbols = symbols
        self.label_kinds = dict(label_kinds or {})
        self.default_point = default_point
        self._delta_links = []

    def parse(self, text: str, line_no: int = 1) -> Expression:
        self._delta_links = []
        toks = _Tokens(tokenize(text, line_no))
        e = self._expr(toks)
        kind, v, line, col = toks.peek()
        if kind != "end":
            raise ParseError("trailing input %r" % v, line, col)
        return e

    # grammar

    def _expr(self, toks):
        return self._finish(self._collect_sum(toks))

    def _term(self, toks, sign):
        raw = _RawTerm(coeff=Fraction(sign))
        parts = [raw]
        while True:
            kind, v, line, col = toks.peek()
            if v == "*":
                toks.next()
                continue
            if kind == "end" or v in ("+", "-", ")", "]", "}", ",", "="):
                break
            sub = self._factor(toks, raw)
            if sub is not None:
                # parenthesized sub-expression: multiply out later
                parts.append(sub)
        return self._expand(parts)

    def _expand(self, parts):
        """Distribute parenthesized sub-expressions over the raw term."""
        raw = parts[0]
        terms = [raw]
        for sub in parts[1:]:
            out = []
            for t in terms:
                for st in sub:
                    out.append(_RawTerm(
                        coeff=t.coeff * st.coeff,
                        consts={k: t.consts.get(k, 0) + st.consts.get(k, 0)
                                for k in set(t.consts) | set(st.consts)},
                        factors=t.factors + st.factors,
                    ))
            terms = out
        return terms

    def _factor(self, toks, raw):
        kind, v, line, col = toks.peek()
        if kind == "int":
            toks.next()
            raw.coeff *= int(v)
            self._maybe_div(toks, raw)
            return None
        if v == "(":
            toks.next()
            inner = self._collect_sum(toks)
            toks.expect(")")
            return inner
        if kind != "name":
            raise ParseError("unexpected token %r" % v, line, col)
        toks.next()
        if v == "eps" or v == "eta":
            labels = self._label_list(toks, 3)
            for l in labels:
                self._bind_kind(l, INTERNAL if v == "eps" else SPATIAL, line, col)
            raw.factors.append(_RawFactor(v, tuple(labels)))
            return None
        if v == "delta":
            labels = self._label_list(toks, 2)
            raw.factors.append(_RawFactor("delta", tuple(labels)))
            self._delta_links.append(tuple(labels))
            return None
        if v == "D3":
            toks.expect("(")
            p1 = self._point(toks)
            toks.expect(",")
            p2 = self._point(toks)
            toks.expect(")")
            raw.factors.append(_RawFactor("dist", (p1, p2)))
            return None
        if v == "d":
            toks.expect("(")
            lab = self._label(toks)
            toks.expect(")")
            toks.expect("@")
            self._bind_kind(lab, SPATIAL, line, col)
            before = len(raw.factors)
            sub = self._factor(toks, raw)
            if sub is not None or len(raw.factors) != before + 1:
                raise ParseError("d(%s)@ must wrap a field, smearing or D3 factor" % lab,
                                 line, col)
            f = raw.factors[-1]
            if f.kind not in ("sym", "dist"):
                raise ParseError("d(%s)@ cannot apply to %s" % (lab, f.kind), line, col)
            raw.factors[-1] = _RawFactor(f.kind, f.data, f.derivs + (lab,))
            return None
        info = self.symbols.get(v)
        if info is None:
            raise ParseError("undeclared symbol %r" % v, line, col)
        if info.role == "const":
            power = 1
            if toks.at("^"):
                toks.next()
                power = self._signed_int(toks)
            raw.consts[v] = raw.consts.get(v, 0) + power
            self._maybe_div(toks, raw)
            return None
        labels = self._label_list(toks, len(info.kinds))
        for l, k in zip(labels, info.kinds):
            self._bind_kind(l, k, line, col)
        point = self.default_point
        if toks.at("@"):
            toks.next()
            point = self._point(toks)
        raw.factors.append(_RawFactor("sym", (v, tuple(labels), point)))
        return None

    def _maybe_div(self, toks, raw):
        """Handle ``/2`` and ``/Xi`` suffixes after a numeric or constant."""
        while toks.at("/"):
            save = toks.i
            toks.next()
            kind, v, line, col = toks.peek()
            if kind == "int":
                toks.next()
                raw.coeff /= int(v)
            elif kind == "name" and v in self.symbols and self.symbols[v].role == "const":
                toks.next()
                power = 1
                if toks.at("^"):
                    toks.next()
                    power = self._signed_int(toks)
                raw.consts[v] = raw.consts.get(v, 0) - power
            else:
                toks.i = save
                break

    def _collect_sum(self, toks):
        terms = []
        sign = 1
        if toks.at("-"):
            toks.next()
            sign = -1
        elif toks.at("+"):
            toks.next()
        terms.extend(self._term(toks, sign))
        while toks.peek()[1] in ("+", "-"):
            sign = 1 if toks.next()[1] == "+" else -1
            terms.extend(self._term(toks, sign))
        return terms

    def _label_list(self, toks, n):
        if toks.at("["):
            toks.next()
            closer = "]"
        else:
            toks.expect("(")
            closer = ")"
        labels = []
        if not toks.at(closer):
            labels.append(self._label(toks))
            while toks.at(","):
                toks.next()
                labels.append(self._label(toks))
        toks.expect(closer)
        if len(labels) != n:
            kind, v, line, col = toks.peek()
            raise ParseError("expected %d indices, found %d" % (n, len(labels)), line, col)
        return labels

    def _label(self, toks):
        kind, v, line, col = toks.next()
        if kind != "name" or v.startswith("_"):
            raise ParseError("invalid index label %r" % v, line, col)
        return v

    def _point(self, toks):
        kind, v, line, col = toks.next()
        if kind != "name":
            raise ParseError("invalid point label %r" % v, line, col)
        return v

    def _signed_int(self, toks):
        sign = 1
        if toks.at("-"):
            toks.next()
            sign = -1
        kind, v, line, col = toks.next()
        if kind != "int":
            raise ParseError("expected integer exponent", line, col)
        return sign * int(v)

    def _bind_kind(self, label, kind, line, col):
        prev = self.label_kinds.get(label)
        if prev is not None and prev != kind:
            raise ParseError("index %r used as both %s and %s" % (label, prev, kind),
                             line, col)
        self.label_kinds[label] = kind

    # driver

    def _finish(self, raw_terms):
        # resolve delta kinds through the equality links gathered while parsing
        changed = True
        while changed:
            changed = False
            for l1, l2 in self._delta_links:
                k1, k2 = self.label_kinds.get(l1), self.label_kinds.get(l2)
                if k1 and not k2:
                    self.label_kinds[l2] = k1
                    changed = True
                elif k2 and not k1:
                    self.label_kinds[l1] = k2
                    changed = True
                elif k1 and k2 and k1 != k2:
                    raise ParseError("delta(%s,%s) links indices of different kinds"
                                     % (l1, l2))
        out = []
        for rt in raw_terms:
            eps, eta, deltas, syms, smears, dists = [], [], [], [], [], []
            for f in rt.factors:
                if f.kind == "eps":
                    eps.append(f.data)
                elif f.kind == "eta":
                    eta.append(f.data)
                elif f.kind == "delta":
                    l1, l2 = f.data
                    k = self.label_kinds.get(l1) or self.label_kinds.get(l2)
                    if k is None:
                        raise ParseError("cannot infer index kind for delta(%s,%s)"
                                         % (l1, l2))
                    deltas.append((k, l1, l2))
                elif f.kind == "dist":
                    dists.append(Dist(p1=f.data[0], p2=f.data[1],
                                      derivs=tuple(f.derivs)))
                else:
                    name, labels, point = f.data
                    info = self.symbols[name]
                    s = Sym(name=name, labels=labels, kinds=info.kinds,
                            anti=info.anti, point=point, derivs=tuple(f.derivs))
                    (smears if info.role == "smear" else syms).append(s)
            consts = tuple(sorted((k, p) for k, p in rt.consts.items() if p))
            out.append(Term(coeff=rt.coeff, consts=consts, eps=tuple(eps),
                            eta=tuple(eta), deltas=tuple(deltas),
                            syms=tuple(syms), smears=tuple(smears),
                            dists=tuple(dists)))
        return canonicalize(Expression(tuple(out)))


def parse_expression(text, symbols, label_kinds=None, default_point="x",
                     line_no=1) -> Expression:
    return ExpressionParser(symbols, label_kinds, default_point).parse(text, line_no)


# ---------------------------------------------------------------------------
# model file statements
# ---------------------------------------------------------------------------


@dataclass
class FieldStmt:
    name: str
    kinds: tuple[str, ...]
    anti: tuple[tuple[int, int], ...]
    role: str
    momentum: str
    line: int


@dataclass
class BracketStmt:
    field_name: str
    field_labels: tuple[str, ...]
    momentum_name: str
    momentum_labels: tuple[str, ...]
    rhs: str
    line: int


@dataclass
class HamiltonianStmt:
    name: str
    free: tuple[str, ...]
    rhs: str
    flag: str  # "primary" | "canonical" | ""
    line: int


@dataclass
class ConstStmt:
    name: str
    line: int


def _logical_lines(text):
    """Join backslash continuations; yield (line_number, content)."""
    buf = ""
    start = None
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].rstrip()
        if not line.strip() and not buf:
            continue
        if start is None:
            start = n
        if line.endswith("\\"):
            buf += line[:-1] + " "
            continue
        buf += line
        if buf.strip():
            yield start, buf
        buf = ""
        start = None
    if buf.strip():
        yield start, buf


def parse_model_statements(text):
    """Parse a model file into a list of statement records."""
    stmts = []
    for line_no, content in _logical_lines(text):
        words = content.split(None, 1)
        head = words[0]
        rest = words[1] if len(words) > 1 else ""
        if head == "const":
            name = rest.strip()
            if not re.fullmatch(r"[A-Za-z][A-Za-z0-9_]*", name or ""):
                raise ParseError("const expects a single name", line_no)
            stmts.append(ConstStmt(name, line_no))
        elif head == "field":
            stmts.append(_parse_field(rest, line_no))
        elif head == "bracket":
            stmts.append(_parse_bracket(rest, line_no))
        elif head == "hamiltonian":
            stmts.append(_parse_hamiltonian(rest, line_no))
        else:
            raise ParseError("unknown statement %r" % head, line_no)
    return stmts


def _parse_field(rest, line_no):
    m = re.fullmatch(
        r"(?P<name>\w+)\s+slots=\((?P<slots>[a-z,\s]*)\)"
        r"(?:\s+antisym=\((?P<anti>[\d,\s]+)\))?"
        r"\s+role=(?P<role>dynamical|multiplier|auxiliary)"
        r"\s+momentum=(?P<mom>\w+)\s*", rest)
    if not m:
        raise ParseError("malformed field declaration", line_no)
    kinds = tuple(s.strip() for s in m.group("slots").split(",") if s.strip())
    for k in kinds:
        if k not in (SPATIAL, INTERNAL):
            raise ParseError("unknown slot kind %r" % k, line_no)
    anti = ()
    if m.group("anti"):
        nums = [int(x) for x in m.group("anti").split(",")]
        if len(nums) != 2:
            raise ParseError("antisym expects two slot positions", line_no)
        p, q = nums[0] - 1, nums[1] - 1
        if not (0 <= p < q < len(kinds)) or kinds[p] != kinds[q]:
            raise ParseError("antisym slots out of range or of mixed kind", line_no)
        anti = ((p, q),)
    return FieldStmt(m.group("name"), kinds, anti, m.group("role"),
                     m.group("mom"), line_no)


def _parse_bracket(rest, line_no):
    m = re.fullmatch(
        r"\{\s*(?P<f>\w+)\[(?P<fl>[\w,\s]*)\]\s*,\s*(?P<m>\w+)\[(?P<ml>[\w,\s]*)\]\s*\}"
        r"\s*=\s*(?P<rhs>.+)", rest)
    if not m:
        raise ParseError("malformed bracket declaration", line_no)
    fl = tuple(s.strip() for s in m.group("fl").split(",") if s.strip())
    ml = tuple(s.strip() for s in m.group("ml").split(",") if s.strip())
    return BracketStmt(m.group("f"), fl, m.group("m"), ml, m.group("rhs"), line_no)


def _parse_hamiltonian(rest, line_no):
    m = re.fullmatch(
        r"(?P<name>\w+)(?:\s+free=\((?P<free>[\w,\s]+)\))?\s*=\s*(?P<rhs>.+?)"
        r"(?:\s+(?P<flag>primary|canonical))?\s*", rest)
    if not m:
        raise ParseError("malformed hamiltonian declaration", line_no)
    free = ()
    if m.group("free"):
        free = tuple(s.strip() for s in m.group("free").split(","))
    return HamiltonianStmt(m.group("name"), free, m.group("rhs"),
                           m.group("flag") or "", line_no)


# ---------------------------------------------------------------------------
# printing
# ---------------------------------------------------------------------------


def _coeff_str(c: Fraction):
    if c.denominator == 1:
        return str(abs(c.numerator))
    return "%d/%d" % (abs(c.numerator), c.denominator)


def _const_str(consts):
    num, den = [], []
    for name, p in consts:
        target = num if p > 0 else den
        p = abs(p)
        target.append(name if p == 1 else "%s^%d" % (name, p))
    s = " ".join(num)
    for d in den:
        s += "/" + d if s else "1/" + d
    return s


def _sym_str(s: Sym):
    core = "%s[%s]" % (s.name, ",".join(s.labels))
    if s.point != "x":
        core += "@" + s.point
    for lab in sorted(s.derivs, reverse=True):
        core = "d(%s)@%s" % (lab, core)
    return core


def _dist_str(d: Dist):
    core = "D3(%s,%s)" % (d.p1, d.p2)
    for lab in sorted(d.derivs, reverse=True):
        core = "d(%s)@%s" % (lab, core)
    return core


def canonical_str(e: Expression) -> str:
    """Deterministic, re-parseable rendering (dummy labels keep their
    underscore prefix; the parser refuses them, so strings are relabeled
    to plain letters first)."""
    e = _externalize_dummies(e)
    if not e.terms:
        return "0"
    chunks = []
    for n, t in enumerate(e.terms):
        parts = []
        cs = _const_str(t.consts)
        coeff_txt = _coeff_str(t.coeff)
        factors = []
        factors += ["eps(%s)" % ",".join(tr) for tr in t.eps]
        factors += ["eta(%s)" % ",".join(tr) for tr in t.eta]
        factors += ["delta(%s,%s)" % (l1, l2) for (_k, l1, l2) in t.deltas]
        factors += [_sym_str(s) for s in t.syms]
        factors += [_sym_str(s) for s in t.smears]
        factors += [_dist_str(d) for d in t.dists]
        if coeff_txt != "1" or (not factors and not cs):
            parts.append(coeff_txt)
        if cs:
            parts.append(cs)
        parts.extend(factors)
        body = " ".join(parts)
        if n == 0:
            chunks.append(body if t.coeff >= 0 else "-" + body)
        else:
            chunks.append(("+ " if t.coeff >= 0 else "- ") + body)
    return " ".join(chunks)


def _externalize_dummies(e: Expression) -> Expression:
    """Rename pool dummies (_a, _i, ...) to plain letters free of clashes."""
    from .expr import _relabel_term  # local import of a private helper

    if not e.terms:
        return e
    free = {lab for lab, _k in e.free_signature()}
    pools = {SPATIAL: [c for c in "abcdefgh"] + ["a%d" % i for i in range(1, 30)],
             INTERNAL: [c for c in "ijklmnpq"] + ["i%d" % i for i in range(1, 30)]}
    out = []
    for t in e.terms:
        counts, kinds = t.label_counts()
        mapping = {}
        used = {SPATIAL: 0, INTERNAL: 0}
        for lab in sorted(l for l in counts if l.startswith("_")):
            kind = kinds[lab]
            while True:
                cand = pools[kind][used[kind]]
                used[kind] += 1
                if cand not in free:
                    break
            mapping[lab] = cand
        out.append(_relabel_term(t, mapping))
    return Expression(tuple(out))
