"""Exact linear algebra over Fractions and expression-span matching."""

from __future__ import annotations

from fractions import Fraction

from .expr import Expression, canonicalize


def solve_linear(rows, rhs):
    """Solve A x = b exactly.  Returns a particular solution (free
    variables set to zero) or None when inconsistent.

    ``rows`` is a list of coefficient lists, ``rhs`` the right-hand sides.
    """
    m = [list(map(Fraction, r)) + [Fraction(v)] for r, v in zip(rows, rhs)]
    n_rows = len(m)
    n_cols = len(rows[0]) if rows else 0
    pivots = []
    r = 0
    for c in range(n_cols):
        pivot = next((i for i in range(r, n_rows) if m[i][c] != 0), None)
        if pivot is None:
            continue
        m[r], m[pivot] = m[pivot], m[r]
        inv = 1 / m[r][c]
        m[r] = [v * inv for v in m[r]]
        for i in range(n_rows):
            if i != r and m[i][c] != 0:
                f = m[i][c]
                m[i] = [a - f * b for a, b in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
        if r == n_rows:
            break
    for i in range(r, n_rows):
        if m[i][n_cols] != 0:
            return None
    x = [Fraction(0)] * n_cols
    for row, c in enumerate(pivots):
        x[c] = m[row][n_cols]
    return x


def invert_matrix(rows):
    """Exact inverse of a square Fraction matrix, or None if singular."""
    n = len(rows)
    m = [list(map(Fraction, rows[i])) + [Fraction(int(i == j)) for j in range(n)]
         for i in range(n)]
    for c in range(n):
        pivot = next((i for i in range(c, n) if m[i][c] != 0), None)
        if pivot is None:
            return None
        m[c], m[pivot] = m[pivot], m[c]
        inv = 1 / m[c][c]
        m[c] = [v * inv for v in m[c]]
        for i in range(n):
            if i != c and m[i][c] != 0:
                f = m[i][c]
                m[i] = [a - f * b for a, b in zip(m[i], m[c])]
    return [row[n:] for row in m]


def sparse_solve(cols, rhs):
    """Solve ``sum_j x_j cols[j] = rhs`` where columns and rhs are sparse
    dicts keyed by arbitrary hashables.  Returns a particular solution
    (free variables zero) or None when inconsistent."""
    rows: dict = {}
    for j, col in enumerate(cols):
        for k, c in col.items():
            if c:
                rows.setdefault(k, {})[j] = Fraction(c)
    b = {k: Fraction(v) for k, v in rhs.items() if v}
    var_rows: dict[int, set] = {}
    for k, row in rows.items():
        for j in row:
            var_rows.setdefault(j, set()).add(k)

    solution = [Fraction(0)] * len(cols)
    pivot_of: dict[int, object] = {}
    for j in range(len(cols)):
        keys = [k for k in var_rows.get(j, ()) if rows.get(k, {}).get(j)]
        if not keys:
            continue
        pk = min(keys, key=lambda k: (len(rows[k]), repr(k)))
        prow = rows.pop(pk)
        pval = prow.pop(j)
        prhs = b.pop(pk, Fraction(0))
        prow = {jj: v / pval for jj, v in prow.items()}
        prhs /= pval
        for jj in prow:
            var_rows[jj].discard(pk)
        var_rows[j].discard(pk)
        for k in list(var_rows.get(j, ())):
            row = rows.get(k)
            if row is None or j not in row:
                var_rows[j].discard(k)
                continue
            f = row.pop(j)
            var_rows[j].discard(k)
            for jj, v in prow.items():
                nv = row.get(jj, Fraction(0)) - f * v
                if nv:
                    row[jj] = nv
                    var_rows.setdefault(jj, set()).add(k)
                elif jj in row:
                    del row[jj]
                    var_rows[jj].discard(k)
            if k in b or prhs:
                nb = b.get(k, Fraction(0)) - f * prhs
                if nb:
                    b[k] = nb
                elif k in b:
                    del b[k]
            if not row:
                rows.pop(k, None)
        pivot_of[j] = (prow, prhs)

    # after full elimination every surviving equation must be 0 = 0
    if any(v for v in b.values()):
        return None

    # back-substitute in reverse elimination order (free vars stay zero)
    for j in sorted(pivot_of, reverse=True):
        prow, prhs = pivot_of[j]
        acc = prhs
        for jj, v in prow.items():
            if solution[jj]:
                acc -= v * solution[jj]
        solution[j] = acc
    return solution


def match_span(target: Expression, candidates):
    """Write ``target`` as an exact linear combination of ``candidates``.

    Returns (coeffs, residual) where residual is the zero expression on
    success; on failure coeffs is None and residual is the target.
    """
    target = canonicalize(target)
    cands = [canonicalize(c) for c in candidates]

    def keyed(e):
        return {(t.consts, t.eps, t.eta, t.deltas, t.syms, t.smears, t.dists):
                t.coeff for t in e.terms}

    tvec = keyed(target)
    cvecs = [keyed(c) for c in cands]

    # prune candidates owning a monomial nobody else can cancel
    alive = set(range(len(cands)))
    changed = True
    while changed:
        changed = False
        support: dict = {}
        for j in alive:
            for k in cvecs[j]:
                support.setdefault(k, []).append(j)
        for k, owners in support.items():
            if k not in tvec and len(owners) == 1 and owners[0] in alive:
                alive.discard(owners[0])
                changed = True
    alive = sorted(alive)
    if any(k not in {kk for j in alive for kk in cvecs[j]} for k in tvec):
        return None, target

    sol = sparse_solve([cvecs[j] for j in alive], tvec)
    if sol is None:
        return None, target
    coeffs = [Fraction(0)] * len(cands)
    for j, c in zip(alive, sol):
        coeffs[j] = c
    combo = None
    for c, e in zip(coeffs, cands):
        if c:
            piece = e.scale(c)
            combo = piece if combo is None else combo + piece
    residual = target - combo if combo is not None else target
    if not residual.is_zero():
        return None, residual
    return coeffs, residual
