"""Corpus-statistics constraints over word order.

A constraint bounds, over all decoded trees of a corpus, the fraction of
"positive" arcs among the arcs it matches:

* unary(POS): matches arcs whose dependent carries POS; positive means the
  head is to the left of the dependent.
* binary(POS1, POS2): matches arcs whose two endpoints carry POS1 and POS2
  (in either head/dependent role); positive means the POS1 endpoint precedes
  the POS2 endpoint.

The admissible band is ``[r - theta, r + theta]`` clamped to [0, 1].  Arcs
headed by the artificial root are not counted by default because the root
has no surface position; ``root_counts_left`` restores the literal reading
in which position 0 is to the left of everything.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import IO, Sequence

import numpy as np

from .core import ArcDistribution, Corpus, ParseTree, Sentence


class ArcClass(Enum):
    PLUS = 1
    MINUS = -1
    NEITHER = 0


class Direction(Enum):
    """Which side of the ratio band a feature row encodes."""

    UPPER = "upper"
    LOWER = "lower"


@dataclass(frozen=True)
class Constraint:
    id: str
    kind: str  # "unary" | "binary"
    pos: str
    r: float
    theta: float
    pos2: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("unary", "binary"):
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        if self.kind == "binary":
            if not self.pos2:
                raise ValueError("binary constraint requires pos2")
            if self.pos2 == self.pos:
                raise ValueError("binary constraint requires two distinct POS tags")
        elif self.pos2 is not None:
            raise ValueError("unary constraint must not carry pos2")
        if not 0.0 <= self.r <= 1.0:
            raise ValueError(f"ratio r={self.r} outside [0, 1]")
        if not 0.0 <= self.theta <= 0.5:
            raise ValueError(f"margin theta={self.theta} outside [0, 0.5]")

    @property
    def lower(self) -> float:
        return max(0.0, self.r - self.theta)

    @property
    def upper(self) -> float:
        return min(1.0, self.r + self.theta)


def classify_arc(
    constraint: Constraint,
    sentence: Sentence,
    head: int,
    dep: int,
    *,
    root_counts_left: bool = False,
) -> ArcClass:
    """Class of the arc head -> dep under the constraint.

    Exactly one class is returned; binary classification is symmetric in the
    head/dependent roles.
    """
    n = len(sentence)
    if not 0 <= head <= n or not 1 <= dep <= n or head == dep:
        raise ValueError(f"invalid arc ({head}, {dep}) for a {n}-token sentence")
    if constraint.kind == "unary":
        if sentence.upos[dep - 1] != constraint.pos:
            return ArcClass.NEITHER
        if head == 0:
            return ArcClass.PLUS if root_counts_left else ArcClass.NEITHER
        return ArcClass.PLUS if head < dep else ArcClass.MINUS
    if head == 0:
        return ArcClass.NEITHER  # the root carries no POS tag
    pos_head = sentence.upos[head - 1]
    pos_dep = sentence.upos[dep - 1]
    if pos_head == constraint.pos and pos_dep == constraint.pos2:
        first = head
    elif pos_head == constraint.pos2 and pos_dep == constraint.pos:
        first = dep
    else:
        return ArcClass.NEITHER
    return ArcClass.PLUS if first == min(head, dep) else ArcClass.MINUS


def class_matrix(
    constraint: Constraint,
    sentence: Sentence,
    *,
    root_counts_left: bool = False,
) -> np.ndarray:
    """(n+1) x n int8 grid of arc classes (+1 / -1 / 0), self positions 0."""
    n = len(sentence)
    grid = np.zeros((n + 1, n), dtype=np.int8)
    for dep in range(1, n + 1):
        for head in range(0, n + 1):
            if head == dep:
                continue
            cls = classify_arc(
                constraint, sentence, head, dep, root_counts_left=root_counts_left
            )
            grid[head, dep - 1] = cls.value
    return grid


def arc_counts(
    constraint: Constraint,
    sentence: Sentence,
    heads: Sequence[int],
    *,
    root_counts_left: bool = False,
) -> tuple[int, int]:
    """(positive, negative) arc counts of one head assignment."""
    plus = minus = 0
    for dep, head in enumerate(heads, start=1):
        cls = classify_arc(
            constraint, sentence, head, dep, root_counts_left=root_counts_left
        )
        if cls is ArcClass.PLUS:
            plus += 1
        elif cls is ArcClass.MINUS:
            minus += 1
    return plus, minus


def ratio(
    constraint: Constraint,
    corpus: Corpus,
    trees: Sequence[ParseTree],
    *,
    root_counts_left: bool = False,
) -> float | None:
    """Corpus-wide fraction of positive arcs among matched arcs, or None
    when the constraint matches no arc."""
    if len(trees) != len(corpus):
        raise ValueError("trees and corpus differ in length")
    plus = minus = 0
    for (sentence, _), tree in zip(corpus, trees):
        if len(tree) != len(sentence):
            raise ValueError("tree and sentence lengths differ")
        p, m = arc_counts(
            constraint, sentence, tree.heads, root_counts_left=root_counts_left
        )
        plus += p
        minus += m
    if plus + minus == 0:
        return None
    return plus / (plus + minus)


def expected_ratio(
    constraint: Constraint,
    corpus: Corpus,
    dists: Sequence[ArcDistribution],
    *,
    root_counts_left: bool = False,
) -> float | None:
    """Ratio with tree indicators replaced by arc marginal probabilities."""
    if len(dists) != len(corpus):
        raise ValueError("distributions and corpus differ in length")
    plus = minus = 0.0
    for (sentence, _), dist in zip(corpus, dists):
        if dist.n != len(sentence):
            raise ValueError("distribution and sentence lengths differ")
        classes = class_matrix(constraint, sentence, root_counts_left=root_counts_left)
        plus += float(dist.probs[classes == 1].sum())
        minus += float(dist.probs[classes == -1].sum())
    if plus + minus == 0.0:
        return None
    return plus / (plus + minus)


def coverage(
    constraint: Constraint,
    corpus: Corpus,
    trees: Sequence[ParseTree],
    *,
    root_counts_left: bool = False,
) -> float:
    """Fraction of arcs the constraint matches among all arcs of the trees."""
    if len(trees) != len(corpus):
        raise ValueError("trees and corpus differ in length")
    matched = 0
    total = 0
    for (sentence, _), tree in zip(corpus, trees):
        p, m = arc_counts(
            constraint, sentence, tree.heads, root_counts_left=root_counts_left
        )
        matched += p + m
        total += len(sentence)
    return matched / total if total else 0.0


def phi(
    constraint: Constraint,
    direction: Direction,
    sentence: Sentence,
    head: int,
    dep: int,
    *,
    root_counts_left: bool = False,
) -> float:
    """Per-arc feature whose expectation's sign encodes one side of the band.

    The margin is folded into an effective ratio: the UPPER row uses
    ``min(1, r + theta)`` with values (1 - r_eff, -r_eff, 0) for positive /
    negative / unmatched arcs; the LOWER row uses ``max(0, r - theta)`` with
    the signs flipped.  A nonpositive expectation of the row then means the
    corresponding bound holds.
    """
    cls = classify_arc(constraint, sentence, head, dep, root_counts_left=root_counts_left)
    return _phi_value(constraint, direction, cls)


def _phi_value(constraint: Constraint, direction: Direction, cls: ArcClass) -> float:
    if cls is ArcClass.NEITHER:
        return 0.0
    if direction is Direction.UPPER:
        eff = constraint.upper
        return 1.0 - eff if cls is ArcClass.PLUS else -eff
    eff = constraint.lower
    return -(1.0 - eff) if cls is ArcClass.PLUS else eff


def phi_matrix(
    constraint: Constraint,
    direction: Direction,
    sentence: Sentence,
    *,
    root_counts_left: bool = False,
) -> np.ndarray:
    """(n+1) x n grid of phi values for one constraint row."""
    classes = class_matrix(constraint, sentence, root_counts_left=root_counts_left)
    grid = np.zeros(classes.shape, dtype=float)
    grid[classes == 1] = _phi_value(constraint, direction, ArcClass.PLUS)
    grid[classes == -1] = _phi_value(constraint, direction, ArcClass.MINUS)
    return grid


def is_satisfied(constraint: Constraint, measured: float | None) -> bool:
    """True iff the measured ratio lies in the band; an undefined ratio is
    vacuously satisfied."""
    if measured is None:
        return True
    return constraint.lower - 1e-12 <= measured <= constraint.upper + 1e-12


def ratio_gap(
    constraints: Sequence[Constraint],
    source_ratios: Sequence[float],
    target_ratios: Sequence[float],
    coverages: Sequence[float],
) -> float:
    """Coverage-weighted mean absolute difference between two ratio vectors."""
    if not (len(constraints) == len(source_ratios) == len(target_ratios) == len(coverages)):
        raise ValueError("ratio_gap inputs differ in length")
    weights = np.asarray(coverages, dtype=float)
    if np.any(weights < 0):
        raise ValueError("coverages must be nonnegative")
    total = weights.sum()
    if total == 0:
        raise ValueError("all coverages are zero")
    diffs = np.abs(np.asarray(source_ratios, dtype=float) - np.asarray(target_ratios, dtype=float))
    return float((weights * diffs).sum() / total)


# ---------------------------------------------------------------------------
# Constraint files
# ---------------------------------------------------------------------------

def load_constraints(stream: IO[str]) -> list[Constraint]:
    """Read a JSON array of constraint objects."""
    data = json.load(stream)
    if not isinstance(data, list):
        raise ValueError("constraint file must contain a JSON array")
    out = []
    for obj in data:
        out.append(
            Constraint(
                id=str(obj["id"]),
                kind=str(obj["kind"]),
                pos=str(obj["pos"]),
                r=float(obj["r"]),
                theta=float(obj["theta"]),
                pos2=str(obj["pos2"]) if obj.get("pos2") is not None else None,
            )
        )
    return out


def save_constraints(constraints: Sequence[Constraint], stream: IO[str]) -> None:
    """Write constraints in the canonical form read by ``load_constraints``.

    The output is deterministic, so a load/save round trip is byte-stable.
    """
    payload = []
    for c in constraints:
        obj: dict[str, object] = {"id": c.id, "kind": c.kind, "pos": c.pos}
        if c.kind == "binary":
            obj["pos2"] = c.pos2
        obj["r"] = c.r
        obj["theta"] = c.theta
        payload.append(obj)
    json.dump(payload, stream, indent=2)
    stream.write("\n")
