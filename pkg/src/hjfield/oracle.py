"""Independent numeric cross-validation of the symbolic brackets.

The check reduces the field theory to a finite-dimensional system: one
spatial point, all spatial derivatives set to zero, D3 factors set to
one.  Fundamental brackets become an antisymmetric matrix J over the
independent field/momentum components, Poisson brackets become
grad(f) . J . grad(g), the C-matrix is assembled and inverted
numerically, and the generalized bracket follows by the same projection
formula the symbolic engine uses.  Agreement over many random
configurations validates the index algebra of every symbolic result
without trusting the rewrite system.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction

from .expr import Expression
from .numeval import eval_expression, eval_gradient
from .phase import Model


class OracleError(ValueError):
    pass


@dataclass
class PointReduction:
    """Deterministic random assignment for every independent component."""

    seed: int
    assignment: dict
    constants: dict

    @classmethod
    def sample(cls, model: Model, seed: int) -> "PointReduction":
        rng = random.Random(seed)
        assignment = {}
        for name in model.phase_symbols():
            for comp in model.components_of(name):
                assignment[(name, comp)] = Fraction(rng.randint(-12, 12),
                                                    rng.randint(1, 6))
        constants = {c: Fraction(rng.randint(2, 8), 4) for c in model.constants}
        return cls(seed=seed, assignment=assignment, constants=constants)


def _coordinates(model: Model):
    coords = []
    for name in model.phase_symbols():
        for comp in model.components_of(name):
            coords.append((name, comp))
    return coords


def _kernel_value(model, kernel: Expression, labels_a, comp_a, labels_b,
                  comp_b, constants):
    assign = dict(zip(labels_a, comp_a))
    assign.update(zip(labels_b, comp_b))
    return eval_expression(kernel, assign, {}, constants)


def fundamental_matrix(model: Model, constants):
    """J over independent components, from the declared bracket table."""
    coords = _coordinates(model)
    index = {c: n for n, c in enumerate(coords)}
    J = {}
    for (fname, mname), (fl, ml, kernel) in model.table.entries().items():
        for fc in model.components_of(fname):
            for mc in model.components_of(mname):
                v = _kernel_value(model, kernel, fl, fc, ml, mc, constants)
                if v:
                    i, j = index[(fname, fc)], index[(mname, mc)]
                    J[(i, j)] = J.get((i, j), 0) + v
                    J[(j, i)] = J.get((j, i), 0) - v
    return coords, index, J


def gradient(e: Expression, index_assign, reduction: PointReduction, coords,
             index=None):
    if index is None:
        index = {c: n for n, c in enumerate(coords)}
    g = eval_gradient(e, index_assign, reduction.assignment,
                      reduction.constants)
    return {index[k]: v for k, v in g.items()}


def _j_apply(J, grad_g):
    """Column vector J . grad(g) as a sparse dict over first indices."""
    out = {}
    for (i, j), v in J.items():
        g = grad_g.get(j)
        if g:
            out[i] = out.get(i, 0) + v * g
    return out


def _pairing(grad_f, J, grad_g, _cache={}):
    total = 0
    for (i, j), v in J.items():
        a = grad_f.get(i)
        if not a:
            continue
        b = grad_g.get(j)
        if b:
            total += a * v * b
    return total


class NumericStarBracket:
    """Brute-force generalized bracket at one point reduction."""

    def __init__(self, model: Model, noninvolutive, reduction: PointReduction):
        self.model = model
        self.reduction = reduction
        self.coords, self.index, self.J = fundamental_matrix(
            model, reduction.constants)
        self.constraints = []
        for ham in noninvolutive:
            for comp in ham.components():
                labels = tuple("z%d" % n for n in range(len(ham.labels)))
                dens = ham.instantiate(labels, "x")
                g = gradient(dens, dict(zip(labels, comp)), reduction,
                             self.coords, self.index)
                self.constraints.append(((ham.name, comp), g))
        self._build_c_inverse()

    def _build_c_inverse(self):
        n = len(self.constraints)
        C = [[_pairing(self.constraints[i][1], self.J, self.constraints[j][1])
              for j in range(n)] for i in range(n)]
        from .linsolve import invert_matrix
        try:
            inv = invert_matrix(C) if n else []
        except ZeroDivisionError:
            inv = None
        if n and inv is None:
            raise OracleError("numeric C-matrix is singular at seed %d"
                              % self.reduction.seed)
        self.c_inverse = inv or []

    def poisson(self, f: Expression, f_assign, g: Expression, g_assign):
        gf = gradient(f, f_assign, self.reduction, self.coords, self.index)
        gg = gradient(g, g_assign, self.reduction, self.coords, self.index)
        return _pairing(gf, self.J, gg)

    def star(self, f: Expression, f_assign, g: Expression, g_assign):
        gf = gradient(f, f_assign, self.reduction, self.coords, self.index)
        gg = gradient(g, g_assign, self.reduction, self.coords, self.index)
        total = _pairing(gf, self.J, gg)
        n = len(self.constraints)
        if not n:
            return total
        left = [_pairing(gf, self.J, self.constraints[a][1]) for a in range(n)]
        right = [_pairing(self.constraints[b][1], self.J, gg) for b in range(n)]
        for a in range(n):
            if not left[a]:
                continue
            for b in range(n):
                if right[b] and self.c_inverse[a][b]:
                    total -= left[a] * self.c_inverse[a][b] * right[b]
        return total


@dataclass
class ValidationFailure:
    pair: tuple
    seed: int
    components: tuple
    symbolic: float
    numeric: float


@dataclass
class ValidationReport:
    trials: int
    checks: int
    max_deviation: float
    failures: list

    @property
    def passed(self):
        return not self.failures


def cross_validate(model: Model, noninvolutive, pairs, trials=100,
                   tol=1e-10, seed=0) -> ValidationReport:
    """Compare symbolic star-bracket kernels against the numeric oracle.

    ``pairs`` is a list of (name_a, labels_a, name_b, labels_b, kernel)
    with the kernel the symbolic generalized bracket.  For every trial a
    fresh point reduction is drawn and a random component of each side
    is compared.
    """
    failures = []
    max_dev = 0.0
    checks = 0
    for t in range(trials):
        reduction = PointReduction.sample(model, seed + 1000 * t)
        oracle = NumericStarBracket(model, noninvolutive, reduction)
        rng = random.Random(seed + 7919 * t + 1)
        for (name_a, labels_a, name_b, labels_b, kernel) in pairs:
            comp_a = tuple(rng.randint(1, 3) for _ in labels_a)
            comp_b = tuple(rng.randint(1, 3) for _ in labels_b)
            assign = dict(zip(labels_a, comp_a)) | dict(zip(labels_b, comp_b))
            sym = eval_expression(kernel, assign, reduction.assignment,
                                  reduction.constants)
            fa = model.symbol_expression(name_a, labels_a, "x")
            fb = model.symbol_expression(name_b, labels_b, "x")
            num = oracle.star(fa, dict(zip(labels_a, comp_a)),
                              fb, dict(zip(labels_b, comp_b)))
            dev = abs(float(sym - num))
            max_dev = max(max_dev, dev)
            checks += 1
            if dev > tol:
                failures.append(ValidationFailure(
                    pair=(name_a, name_b), seed=reduction.seed,
                    components=(comp_a, comp_b),
                    symbolic=float(sym), numeric=float(num)))
    return ValidationReport(trials=trials, checks=checks,
                            max_deviation=max_dev, failures=failures)
