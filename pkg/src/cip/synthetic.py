"""Deterministic synthetic corpora with planted word-order statistics.

Gold trees are sampled first (projective by default); POS tags are then
assigned so that each planted constraint's gold ratio hits its target: the
planted POS is placed on left-headed vs right-headed tokens (unary) or on
arc endpoints in the chosen order (binary) in the exact proportion.  Scores
separate the gold arc by ``margin`` plus Gaussian noise; optional
order-flipping corruption boosts a head candidate on the opposite side of
each matched arc, biasing the baseline decode against the planted order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .constraints import ArcClass, Constraint, classify_arc, ratio
from .core import Corpus, ParseTree, ScoreMatrix, Sentence


@dataclass(frozen=True)
class SyntheticSpec:
    n_sentences: int
    min_len: int
    max_len: int
    pos_weights: tuple[tuple[str, float], ...]
    planted: tuple[Constraint, ...] = ()
    sigma: float = 0.0
    margin: float = 1.0
    flip_prob: float = 0.0
    flip_boost: float = 0.5
    allow_nonprojective: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_sentences < 1:
            raise ValueError("n_sentences must be at least 1")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError("need 1 <= min_len <= max_len")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if not 0 <= self.flip_prob <= 1:
            raise ValueError("flip_prob must lie in [0, 1]")
        seen = set()
        for pos, weight in self.pos_weights:
            if weight <= 0:
                raise ValueError(f"POS weight for {pos!r} must be positive")
            if pos in seen:
                raise ValueError(f"duplicate POS {pos!r} in inventory")
            seen.add(pos)
        for constraint in self.planted:
            if constraint.pos not in seen:
                raise ValueError(f"planted POS {constraint.pos!r} not in inventory")
            if constraint.kind == "binary" and constraint.pos2 not in seen:
                raise ValueError(f"planted POS {constraint.pos2!r} not in inventory")

    @classmethod
    def from_dict(cls, obj: Mapping) -> "SyntheticSpec":
        planted = tuple(
            Constraint(
                id=str(c["id"]),
                kind=str(c["kind"]),
                pos=str(c["pos"]),
                r=float(c["r"]),
                theta=float(c.get("theta", 0.0)),
                pos2=str(c["pos2"]) if c.get("pos2") is not None else None,
            )
            for c in obj.get("planted", ())
        )
        return cls(
            n_sentences=int(obj["n_sentences"]),
            min_len=int(obj["min_len"]),
            max_len=int(obj["max_len"]),
            pos_weights=tuple((str(p), float(w)) for p, w in obj["pos_weights"].items()),
            planted=planted,
            sigma=float(obj.get("sigma", 0.0)),
            margin=float(obj.get("margin", 1.0)),
            flip_prob=float(obj.get("flip_prob", 0.0)),
            flip_boost=float(obj.get("flip_boost", 0.5)),
            allow_nonprojective=bool(obj.get("allow_nonprojective", False)),
            seed=int(obj.get("seed", 0)),
        )


def _random_projective_heads(length: int, rng: np.random.Generator) -> list[int]:
    heads = [0] * length

    def fill(lo: int, hi: int, head: int) -> None:
        if lo > hi:
            return
        m = int(rng.integers(lo, hi + 1))
        heads[m - 1] = head
        fill(lo, m - 1, m)
        fill(m + 1, hi, m)

    root_child = int(rng.integers(1, length + 1))
    heads[root_child - 1] = 0
    fill(1, root_child - 1, root_child)
    fill(root_child + 1, length, root_child)
    return heads


def _random_tree_heads(length: int, rng: np.random.Generator) -> list[int]:
    heads = [0] * length
    connected = [0]
    for pos in rng.permutation(length) + 1:
        heads[int(pos) - 1] = connected[int(rng.integers(0, len(connected)))]
        connected.append(int(pos))
    return heads


def _plant_unary(
    constraint: Constraint,
    weight: float,
    slots: dict[tuple[int, int], str],
    tags: list[list[str | None]],
    total_tokens: int,
    rng: np.random.Generator,
) -> None:
    count = round(weight * total_tokens)
    n_plus = round(constraint.r * count)
    n_minus = count - n_plus
    left = [key for key, side in slots.items() if side == "L" and tags[key[0]][key[1] - 1] is None]
    right = [key for key, side in slots.items() if side == "R" and tags[key[0]][key[1] - 1] is None]
    if len(left) < n_plus or len(right) < n_minus:
        raise ValueError(
            f"planted ratio {constraint.r} for {constraint.id} is infeasible: "
            f"need {n_plus} left-headed and {n_minus} right-headed tokens, "
            f"have {len(left)} and {len(right)}"
        )
    for pool, take in ((left, n_plus), (right, n_minus)):
        chosen = rng.choice(len(pool), size=take, replace=False) if take else []
        for i in chosen:
            k, j = pool[int(i)]
            tags[k][j - 1] = constraint.pos


def _plant_binary(
    constraint: Constraint,
    weight: float,
    arcs: list[tuple[int, int, int]],
    tags: list[list[str | None]],
    total_tokens: int,
    rng: np.random.Generator,
) -> None:
    count = round(weight * total_tokens)
    n_plus = round(constraint.r * count)
    order = rng.permutation(len(arcs))
    placed_plus = placed_minus = 0
    for i in order:
        if placed_plus + placed_minus == count:
            break
        k, head, dep = arcs[int(i)]
        if tags[k][head - 1] is not None or tags[k][dep - 1] is not None:
            continue
        left, right = min(head, dep), max(head, dep)
        if placed_plus < n_plus:
            tags[k][left - 1] = constraint.pos
            tags[k][right - 1] = constraint.pos2
            placed_plus += 1
        else:
            tags[k][left - 1] = constraint.pos2
            tags[k][right - 1] = constraint.pos
            placed_minus += 1
    if placed_plus + placed_minus < count:
        raise ValueError(
            f"planted ratio {constraint.r} for {constraint.id} is infeasible: "
            f"only {placed_plus + placed_minus} of {count} arcs available"
        )


def generate_synthetic(spec: SyntheticSpec) -> tuple[Corpus, dict[str, float | None]]:
    """Build a corpus with planted gold trees; returns it with the measured
    gold ratio of every planted constraint."""
    rng = np.random.default_rng(spec.seed)
    lengths = [int(v) for v in rng.integers(spec.min_len, spec.max_len + 1, spec.n_sentences)]
    make_tree = _random_tree_heads if spec.allow_nonprojective else _random_projective_heads
    all_heads = [make_tree(length, rng) for length in lengths]

    total_tokens = sum(lengths)
    tags: list[list[str | None]] = [[None] * length for length in lengths]
    slots: dict[tuple[int, int], str] = {}
    gold_arcs: list[tuple[int, int, int]] = []
    for k, heads in enumerate(all_heads):
        for dep, head in enumerate(heads, start=1):
            if head == 0:
                slots[(k, dep)] = "root"
            else:
                slots[(k, dep)] = "L" if head < dep else "R"
                gold_arcs.append((k, head, dep))

    weights = dict(spec.pos_weights)
    for constraint in spec.planted:
        if constraint.kind == "unary":
            _plant_unary(constraint, weights[constraint.pos], slots, tags, total_tokens, rng)
        else:
            share = min(weights[constraint.pos], weights[constraint.pos2 or ""])
            _plant_binary(constraint, share, gold_arcs, tags, total_tokens, rng)

    planted_pos = {c.pos for c in spec.planted} | {
        c.pos2 for c in spec.planted if c.pos2 is not None
    }
    filler = [(pos, w) for pos, w in spec.pos_weights if pos not in planted_pos]
    untagged = [
        (k, j) for k, row in enumerate(tags) for j in range(1, len(row) + 1)
        if row[j - 1] is None
    ]
    if untagged and not filler:
        raise ValueError("no POS left for filler tokens; extend the inventory")
    if untagged:
        names = [pos for pos, _ in filler]
        probs = np.asarray([w for _, w in filler], dtype=float)
        probs /= probs.sum()
        draws = rng.choice(len(names), size=len(untagged), p=probs)
        for (k, j), pick in zip(untagged, draws):
            tags[k][j - 1] = names[int(pick)]

    sentences = []
    for k, (length, heads) in enumerate(zip(lengths, all_heads)):
        upos = tuple(tags[k][j] or "X" for j in range(length))
        forms = tuple(f"{pos.lower()}{j + 1}" for j, pos in enumerate(upos))
        sentences.append(
            Sentence(
                forms=forms,
                upos=upos,
                sent_id=f"synth-{k}",
                gold_heads=tuple(heads),
                gold_labels=("dep",) * length,
            )
        )

    matrices = []
    for k, (sentence, heads) in enumerate(zip(sentences, all_heads)):
        length = len(sentence)
        scores = (
            rng.normal(0.0, spec.sigma, size=(length + 1, length))
            if spec.sigma > 0
            else np.zeros((length + 1, length))
        )
        for dep, head in enumerate(heads, start=1):
            scores[head, dep - 1] += spec.margin
        for constraint in spec.planted:
            if spec.flip_prob == 0.0:
                continue
            for dep, head in enumerate(heads, start=1):
                if head == 0:
                    continue
                cls = classify_arc(constraint, sentence, head, dep)
                if cls is ArcClass.NEITHER or rng.random() >= spec.flip_prob:
                    continue
                if cls is ArcClass.PLUS:
                    if dep == length:
                        continue
                    competitor = min(dep + (dep - head), length)
                else:
                    if dep == 1:
                        continue
                    competitor = max(dep - (head - dep), 1)
                scores[competitor, dep - 1] += spec.margin + spec.flip_boost
        matrices.append(ScoreMatrix(scores, sent_id=sentence.sent_id))

    corpus = Corpus(tuple(zip(sentences, matrices)))
    gold_trees = [ParseTree(tuple(heads)) for heads in all_heads]
    true_ratios = {
        constraint.id: ratio(constraint, corpus, gold_trees)
        for constraint in spec.planted
    }
    return corpus, true_ratios
