"""Per-sentence tree decoding and exact enumeration oracles.

``mst_decode`` runs Chu-Liu/Edmonds over all directed spanning trees;
``projective_decode`` runs the Eisner dynamic program over non-crossing
trees.  The brute-force functions enumerate candidate trees outright and
exist as independent references for verifying the fast decoders and for
solving the corpus-level constrained problem exactly on tiny inputs.

All argmax steps resolve ties toward the lower head index, so decoding is
deterministic.
"""

from __future__ import annotations

from functools import lru_cache
from itertools import product
from typing import Iterator, Sequence

import numpy as np

from .constraints import Constraint, class_matrix
from .core import NEG_INF, Corpus, ParseTree, ScoreMatrix, is_tree


class InfeasibleError(RuntimeError):
    """No joint tree assignment satisfies all constraints."""


# ---------------------------------------------------------------------------
# Chu-Liu/Edmonds maximum spanning arborescence
# ---------------------------------------------------------------------------

def _find_cycle(parent: np.ndarray, m: int) -> list[int] | None:
    color = [0] * m  # 0 unvisited, 1 on current path, 2 finished
    color[0] = 2
    for start in range(1, m):
        if color[start]:
            continue
        path = []
        v = start
        while color[v] == 0:
            color[v] = 1
            path.append(v)
            v = int(parent[v])
        if color[v] == 1:
            return path[path.index(v):]
        for u in path:
            color[u] = 2
    return None


def _max_arborescence(weights: np.ndarray) -> np.ndarray:
    """Greedy selection plus cycle contraction on an m x m weight matrix.

    Node 0 is the root (column 0 must be -inf).  Returns the parent of every
    node; entry 0 is unused.
    """
    m = weights.shape[0]
    parent = np.zeros(m, dtype=int)
    for d in range(1, m):
        parent[d] = int(np.argmax(weights[:, d]))
    cycle = _find_cycle(parent, m)
    if cycle is None:
        return parent

    in_cycle = np.zeros(m, dtype=bool)
    in_cycle[cycle] = True
    rest = [v for v in range(m) if not in_cycle[v]]
    index = {v: i for i, v in enumerate(rest)}
    c_id = len(rest)
    contracted = np.full((c_id + 1, c_id + 1), NEG_INF)
    entering: dict[int, tuple[int, int]] = {}
    leaving: dict[int, int] = {}
    for h in range(m):
        row = weights[h]
        if in_cycle[h]:
            for d in range(1, m):
                if in_cycle[d] or row[d] == NEG_INF:
                    continue
                nd = index[d]
                if row[d] > contracted[c_id, nd]:
                    contracted[c_id, nd] = row[d]
                    leaving[nd] = h
        else:
            nh = index[h]
            for d in range(1, m):
                if row[d] == NEG_INF:
                    continue
                if in_cycle[d]:
                    gain = row[d] - weights[parent[d], d]
                    if gain > contracted[nh, c_id]:
                        contracted[nh, c_id] = gain
                        entering[nh] = (h, d)
                else:
                    contracted[nh, index[d]] = row[d]

    sub_parent = _max_arborescence(contracted)
    result = parent.copy()
    for v in rest:
        if v == 0:
            continue
        p = int(sub_parent[index[v]])
        result[v] = leaving[index[v]] if p == c_id else rest[p]
    head, dep = entering[int(sub_parent[c_id])]
    result[dep] = head
    return result


def _square_weights(matrix: ScoreMatrix) -> np.ndarray:
    n = matrix.n
    weights = np.full((n + 1, n + 1), NEG_INF)
    weights[:, 1:] = matrix.scores
    return weights


def mst_decode(matrix: ScoreMatrix, *, single_root: bool = False) -> ParseTree:
    """Highest-scoring directed spanning tree over all head assignments.

    ``single_root`` restricts the root to exactly one child (off by
    default; multi-root trees are legal).
    """
    n = matrix.n
    if n == 1:
        return ParseTree((0,))
    weights = _square_weights(matrix)
    if not single_root:
        parent = _max_arborescence(weights)
        return ParseTree(tuple(int(parent[d]) for d in range(1, n + 1)))
    best: tuple[float, ParseTree] | None = None
    for child in range(1, n + 1):
        forced = weights.copy()
        forced[0, :] = NEG_INF
        forced[0, child] = weights[0, child]
        parent = _max_arborescence(forced)
        tree = ParseTree(tuple(int(parent[d]) for d in range(1, n + 1)))
        score = matrix.tree_score(tree.heads)
        if best is None or score > best[0]:
            best = (score, tree)
    assert best is not None
    return best[1]


# ---------------------------------------------------------------------------
# Eisner projective decoding
# ---------------------------------------------------------------------------

_LEFT, _RIGHT = 0, 1  # _LEFT: head at the right span end; _RIGHT: head at the left end


def _eisner_chart(weights: np.ndarray, lo: int, hi: int, ban_into_lo: bool):
    """Fill complete/incomplete span charts over the node range [lo, hi]."""
    size = hi + 1
    comp = np.full((size, size, 2), NEG_INF)
    incomp = np.full((size, size, 2), NEG_INF)
    comp_bp = np.zeros((size, size, 2), dtype=int)
    incomp_bp = np.zeros((size, size, 2), dtype=int)
    for i in range(lo, hi + 1):
        comp[i, i, :] = 0.0
    for span in range(1, hi - lo + 1):
        for i in range(lo, hi - span + 1):
            j = i + span
            split_best = NEG_INF
            split_k = i
            for k in range(i, j):
                value = comp[i, k, _RIGHT] + comp[k + 1, j, _LEFT]
                if value > split_best:
                    split_best = value
                    split_k = k
            if not (ban_into_lo and i == lo):
                incomp[i, j, _LEFT] = split_best + weights[j, i]
                incomp_bp[i, j, _LEFT] = split_k
            incomp[i, j, _RIGHT] = split_best + weights[i, j]
            incomp_bp[i, j, _RIGHT] = split_k
            best = NEG_INF
            best_k = i
            for k in range(i, j):
                value = comp[i, k, _LEFT] + incomp[k, j, _LEFT]
                if value > best:
                    best = value
                    best_k = k
            comp[i, j, _LEFT] = best
            comp_bp[i, j, _LEFT] = best_k
            best = NEG_INF
            best_k = i + 1
            for k in range(i + 1, j + 1):
                value = incomp[i, k, _RIGHT] + comp[k, j, _RIGHT]
                if value > best:
                    best = value
                    best_k = k
            comp[i, j, _RIGHT] = best
            comp_bp[i, j, _RIGHT] = best_k
    return comp, incomp, comp_bp, incomp_bp


def _eisner_backtrack(charts, i: int, j: int, direction: int, complete: bool,
                      heads: list[int]) -> None:
    _, _, comp_bp, incomp_bp = charts
    if i == j:
        return
    if complete:
        k = int(comp_bp[i, j, direction])
        if direction == _LEFT:
            _eisner_backtrack(charts, i, k, _LEFT, True, heads)
            _eisner_backtrack(charts, k, j, _LEFT, False, heads)
        else:
            _eisner_backtrack(charts, i, k, _RIGHT, False, heads)
            _eisner_backtrack(charts, k, j, _RIGHT, True, heads)
    else:
        k = int(incomp_bp[i, j, direction])
        if direction == _LEFT:
            heads[i - 1] = j
        else:
            heads[j - 1] = i
        _eisner_backtrack(charts, i, k, _RIGHT, True, heads)
        _eisner_backtrack(charts, k + 1, j, _LEFT, True, heads)


def projective_decode(matrix: ScoreMatrix, *, single_root: bool = False) -> ParseTree:
    """Highest-scoring projective tree (no crossing arcs)."""
    n = matrix.n
    if n == 1:
        return ParseTree((0,))
    weights = _square_weights(matrix)
    heads = [0] * n
    if not single_root:
        charts = _eisner_chart(weights, 0, n, ban_into_lo=True)
        _eisner_backtrack(charts, 0, n, _RIGHT, True, heads)
    else:
        charts = _eisner_chart(weights, 1, n, ban_into_lo=False)
        comp = charts[0]
        best = NEG_INF
        best_m = 1
        for m in range(1, n + 1):
            value = weights[0, m] + comp[1, m, _LEFT] + comp[m, n, _RIGHT]
            if value > best:
                best = value
                best_m = m
        heads[best_m - 1] = 0
        _eisner_backtrack(charts, 1, best_m, _LEFT, True, heads)
        _eisner_backtrack(charts, best_m, n, _RIGHT, True, heads)
    return ParseTree(tuple(heads))


def is_projective(heads: Sequence[int]) -> bool:
    """True iff no two arcs (i, j), (k, l) interleave as i < k < j < l."""
    spans = [tuple(sorted((head, dep))) for dep, head in enumerate(heads, start=1)]
    for a in range(len(spans)):
        i, j = spans[a]
        for b in range(a + 1, len(spans)):
            k, l = spans[b]
            if i < k < j < l or k < i < l < j:
                return False
    return True


# ---------------------------------------------------------------------------
# Brute-force oracles
# ---------------------------------------------------------------------------

_TABLE_MAX_N = 6


@lru_cache(maxsize=None)
def tree_table(n: int) -> np.ndarray:
    """All head assignments over n tokens that form trees, in lexicographic
    order, as a (T, n) int array."""
    if n > _TABLE_MAX_N:
        raise ValueError(f"tree table limited to n <= {_TABLE_MAX_N}, got {n}")
    choices = [[h for h in range(n + 1) if h != d] for d in range(1, n + 1)]
    rows = [heads for heads in product(*choices) if is_tree(heads)]
    return np.asarray(rows, dtype=int)


@lru_cache(maxsize=None)
def projective_tree_table(n: int) -> np.ndarray:
    """Subset of ``tree_table(n)`` without crossing arcs."""
    table = tree_table(n)
    keep = [i for i, heads in enumerate(table) if is_projective(heads)]
    return table[keep]


def _iter_trees(n: int) -> Iterator[tuple[int, ...]]:
    choices = [[h for h in range(n + 1) if h != d] for d in range(1, n + 1)]
    for heads in product(*choices):
        if is_tree(heads):
            yield heads


def brute_force_decode(matrix: ScoreMatrix) -> tuple[ParseTree, float]:
    """Exact optimum by enumeration; guards against n > 8."""
    n = matrix.n
    if n > 8:
        raise ValueError(f"brute force limited to n <= 8, got {n}")
    if n <= _TABLE_MAX_N:
        table = tree_table(n)
        totals = matrix.scores[table, np.arange(n)].sum(axis=1)
        best = int(np.argmax(totals))
        heads = tuple(int(h) for h in table[best])
        return ParseTree(heads), matrix.tree_score(heads)
    best_heads: tuple[int, ...] | None = None
    best_score = NEG_INF
    for heads in _iter_trees(n):
        score = matrix.tree_score(heads)
        if score > best_score:
            best_score = score
            best_heads = heads
    assert best_heads is not None
    return ParseTree(best_heads), best_score


def brute_force_constrained(
    corpus: Corpus,
    constraints: Sequence[Constraint],
    *,
    projective: bool = False,
    root_counts_left: bool = False,
    guard: int = 10**6,
) -> tuple[list[ParseTree], float]:
    """Exact maximizer of the corpus objective subject to every constraint's
    ratio band, by enumerating the Cartesian product of per-sentence trees.

    Raises InfeasibleError when no joint assignment satisfies all
    constraints, and ValueError when the product exceeds ``guard``.
    """
    tables = []
    total = 1
    for sentence, matrix in corpus:
        table = projective_tree_table(matrix.n) if projective else tree_table(matrix.n)
        total *= len(table)
        if total > guard:
            raise ValueError(f"search space exceeds guard of {guard} joint assignments")
        tables.append(table)

    shape = tuple(len(t) for t in tables)
    score_total = np.zeros(shape)
    plus_total = [np.zeros(shape) for _ in constraints]
    minus_total = [np.zeros(shape) for _ in constraints]
    for k, ((sentence, matrix), table) in enumerate(zip(corpus, tables)):
        cols = np.arange(matrix.n)
        axis = [1] * len(shape)
        axis[k] = shape[k]
        scores_k = matrix.scores[table, cols].sum(axis=1).reshape(axis)
        score_total = score_total + scores_k
        for c, constraint in enumerate(constraints):
            classes = class_matrix(constraint, sentence, root_counts_left=root_counts_left)
            picked = classes[table, cols]
            plus_total[c] = plus_total[c] + (picked == 1).sum(axis=1).reshape(axis)
            minus_total[c] = minus_total[c] + (picked == -1).sum(axis=1).reshape(axis)

    feasible = np.ones(shape, dtype=bool)
    for c, constraint in enumerate(constraints):
        denom = plus_total[c] + minus_total[c]
        with np.errstate(invalid="ignore"):
            ratio = np.where(denom > 0, plus_total[c] / np.maximum(denom, 1), np.nan)
        ok = (denom == 0) | (
            (ratio >= constraint.lower - 1e-12) & (ratio <= constraint.upper + 1e-12)
        )
        feasible &= ok
    if not feasible.any():
        raise InfeasibleError("no joint tree assignment satisfies all constraints")

    masked = np.where(feasible, score_total, NEG_INF)
    flat_best = int(np.argmax(masked))
    picks = np.unravel_index(flat_best, shape) if shape else ()
    trees = [
        ParseTree(tuple(int(h) for h in tables[k][pick]))
        for k, pick in enumerate(picks)
    ]
    objective = sum(
        matrix.tree_score(tree.heads) for (_, matrix), tree in zip(corpus, trees)
    )
    return trees, float(objective)


def decode_corpus(
    corpus: Corpus,
    *,
    projective: bool = False,
    single_root: bool = False,
) -> list[ParseTree]:
    """Per-sentence unconstrained decode of a whole corpus."""
    decode = projective_decode if projective else mst_decode
    return [decode(matrix, single_root=single_root) for _, matrix in corpus]
