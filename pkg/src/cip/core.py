"""Domain types, treebank / score-file I/O, and UAS evaluation.

Arc-indexed quantities (scores, probabilities) are stored as ``(n+1) x n``
float arrays: row ``i`` is the head position (0 is the artificial root),
column ``j-1`` is the dependent at position ``j``.  Self arcs keep a ``-inf``
(scores) or ``0`` (probabilities) sentinel so the arrays stay rectangular.
All types are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Iterable, Iterator, Sequence

import numpy as np

NEG_INF = float("-inf")


class FormatError(ValueError):
    """Malformed CoNLL-U or score-file input."""


def is_tree(heads: Sequence[int]) -> bool:
    """True iff ``heads[j-1]`` assigns every token a head forming a directed
    spanning tree rooted at position 0."""
    n = len(heads)
    children: list[list[int]] = [[] for _ in range(n + 1)]
    for dep, head in enumerate(heads, start=1):
        if not 0 <= head <= n or head == dep:
            return False
        children[head].append(dep)
    reached = 0
    stack = [0]
    while stack:
        node = stack.pop()
        reached += 1
        stack.extend(children[node])
    return reached == n + 1


@dataclass(frozen=True)
class Sentence:
    """A POS-tagged sentence, optionally with gold heads and labels.

    Positions are 1-based; a gold head of 0 means the artificial root.
    Gold labels are carried through unchanged by every operation in this
    package.
    """

    forms: tuple[str, ...]
    upos: tuple[str, ...]
    sent_id: str = ""
    gold_heads: tuple[int, ...] | None = None
    gold_labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        n = len(self.forms)
        if n < 1:
            raise ValueError("sentence must contain at least one token")
        if len(self.upos) != n:
            raise ValueError("forms and upos lengths differ")
        if self.gold_heads is not None:
            if len(self.gold_heads) != n:
                raise ValueError("gold heads length differs from token count")
            if not is_tree(self.gold_heads):
                raise ValueError("gold heads do not form a tree rooted at 0")
        if self.gold_labels is not None and len(self.gold_labels) != n:
            raise ValueError("gold labels length differs from token count")

    def __len__(self) -> int:
        return len(self.forms)


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    """Per-sentence arc log-potentials.

    ``scores[i, j-1]`` is the score of the arc from head ``i`` to dependent
    ``j``.  Self positions are forced to ``-inf`` at construction; all other
    entries must be finite.
    """

    scores: np.ndarray
    sent_id: str = ""

    def __post_init__(self) -> None:
        s = np.array(self.scores, dtype=float)
        if s.ndim != 2 or s.shape[0] != s.shape[1] + 1 or s.shape[1] < 1:
            raise ValueError(f"expected (n+1) x n score array, got {s.shape}")
        n = s.shape[1]
        deps = np.arange(1, n + 1)
        s[deps, deps - 1] = NEG_INF
        offdiag = np.ones_like(s, dtype=bool)
        offdiag[deps, deps - 1] = False
        if not np.isfinite(s[offdiag]).all():
            raise ValueError("non-finite score at a non-self position")
        s.flags.writeable = False
        object.__setattr__(self, "scores", s)

    @property
    def n(self) -> int:
        return self.scores.shape[1]

    def tree_score(self, heads: Sequence[int]) -> float:
        """Sum of the scores of the arcs selected by ``heads``."""
        idx = np.asarray(heads, dtype=int)
        return float(np.sum(self.scores[idx, np.arange(self.n)]))


@dataclass(frozen=True, eq=False)
class ArcDistribution:
    """Per-dependent head distributions: ``probs[i, j-1] = P(head(j) = i)``.

    Every column sums to 1; self positions are exactly 0.
    """

    probs: np.ndarray

    def __post_init__(self) -> None:
        p = np.array(self.probs, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1] + 1 or p.shape[1] < 1:
            raise ValueError(f"expected (n+1) x n probability array, got {p.shape}")
        n = p.shape[1]
        deps = np.arange(1, n + 1)
        if np.any(p[deps, deps - 1] != 0.0):
            raise ValueError("self positions must carry probability 0")
        if np.any(p < 0.0) or np.any(p > 1.0):
            raise ValueError("probabilities outside [0, 1]")
        if np.max(np.abs(p.sum(axis=0) - 1.0)) > 1e-9:
            raise ValueError("columns must sum to 1 within 1e-9")
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)

    @property
    def n(self) -> int:
        return self.probs.shape[1]


@dataclass(frozen=True)
class ParseTree:
    """Head assignment per token; ``heads[j-1]`` is the head of position ``j``."""

    heads: tuple[int, ...]

    def __post_init__(self) -> None:
        if not is_tree(self.heads):
            raise ValueError(f"heads {self.heads} do not form a tree rooted at 0")

    def __len__(self) -> int:
        return len(self.heads)

    def arcs(self) -> Iterator[tuple[int, int]]:
        """Yield (head, dependent) pairs, dependents 1-based."""
        for dep, head in enumerate(self.heads, start=1):
            yield head, dep


@dataclass(frozen=True, eq=False)
class Corpus:
    """Ordered (Sentence, ScoreMatrix) pairs with matching dimensions."""

    entries: tuple[tuple[Sentence, ScoreMatrix], ...]

    def __post_init__(self) -> None:
        for k, (sentence, matrix) in enumerate(self.entries):
            if matrix.n != len(sentence):
                raise ValueError(
                    f"entry {k}: matrix is for {matrix.n} tokens, "
                    f"sentence has {len(sentence)}"
                )

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[tuple[Sentence, ScoreMatrix]]:
        return iter(self.entries)

    def __getitem__(self, k: int) -> tuple[Sentence, ScoreMatrix]:
        return self.entries[k]

    @property
    def sentences(self) -> tuple[Sentence, ...]:
        return tuple(s for s, _ in self.entries)

    @property
    def matrices(self) -> tuple[ScoreMatrix, ...]:
        return tuple(m for _, m in self.entries)


def pair_corpus(sentences: Sequence[Sentence], matrices: Sequence[ScoreMatrix]) -> Corpus:
    """Zip sentences with their score matrices, checking counts and ids."""
    if len(sentences) != len(matrices):
        raise ValueError(
            f"{len(sentences)} sentences but {len(matrices)} score matrices"
        )
    for k, (s, m) in enumerate(zip(sentences, matrices)):
        if s.sent_id and m.sent_id and s.sent_id != m.sent_id:
            raise ValueError(
                f"entry {k}: sent_id mismatch ({s.sent_id!r} vs {m.sent_id!r})"
            )
    return Corpus(tuple(zip(sentences, matrices)))


# ---------------------------------------------------------------------------
# CoNLL-U
# ---------------------------------------------------------------------------

def read_conllu(stream: IO[str] | Iterable[str]) -> list[Sentence]:
    """Parse CoNLL-U text into sentences.

    Only the ID, FORM, UPOS, HEAD and DEPREL columns are consumed.
    Multiword-token ranges and empty nodes are skipped; of the comments only
    ``# sent_id = ...`` is honored.  A HEAD value of ``_`` anywhere in a
    sentence leaves that sentence without gold heads.
    """
    sentences: list[Sentence] = []
    rows: list[tuple[int, list[str]]] = []
    sent_id = ""

    def flush(end_line: int) -> None:
        nonlocal rows, sent_id
        if not rows:
            return
        forms, upos, heads, labels = [], [], [], []
        annotated = True
        for expected, (lineno, cols) in enumerate(rows, start=1):
            if int(cols[0]) != expected:
                raise FormatError(
                    f"line {lineno}: malformed ID sequence "
                    f"(expected {expected}, got {cols[0]})"
                )
            forms.append(cols[1])
            upos.append(cols[3])
            if cols[6] == "_":
                annotated = False
                heads.append(0)
            else:
                try:
                    heads.append(int(cols[6]))
                except ValueError:
                    raise FormatError(f"line {lineno}: HEAD {cols[6]!r} is not an integer") from None
            labels.append(cols[7])
        n = len(rows)
        if annotated:
            for (lineno, _), head in zip(rows, heads):
                if not 0 <= head <= n:
                    raise FormatError(f"line {lineno}: HEAD {head} out of range [0, {n}]")
            if not is_tree(heads):
                raise FormatError(
                    f"line {rows[0][0]}: gold heads not a tree rooted at 0"
                )
        sentences.append(
            Sentence(
                forms=tuple(forms),
                upos=tuple(upos),
                sent_id=sent_id,
                gold_heads=tuple(heads) if annotated else None,
                gold_labels=tuple(labels) if annotated else None,
            )
        )
        rows = []
        sent_id = ""

    lineno = 0
    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\r\n")
        if not line:
            flush(lineno)
            continue
        if line.startswith("#"):
            if line[1:].split("=", 1)[0].strip() == "sent_id" and "=" in line:
                sent_id = line.split("=", 1)[1].strip()
            continue
        cols = line.split("\t")
        if len(cols) < 8:
            raise FormatError(f"line {lineno}: expected >= 8 tab-separated columns")
        if "-" in cols[0] or "." in cols[0]:
            continue
        if not cols[0].isdigit():
            raise FormatError(f"line {lineno}: malformed ID {cols[0]!r}")
        rows.append((lineno, cols))
    flush(lineno + 1)
    return sentences


def write_conllu(
    sentences: Sequence[Sentence],
    stream: IO[str],
    trees: Sequence[ParseTree] | None = None,
) -> None:
    """Write sentences in CoNLL-U format.

    With ``trees`` given, the HEAD column carries the predicted heads while
    DEPREL passes the gold labels through unchanged; otherwise gold heads are
    written (``_`` when absent).
    """
    if trees is not None and len(trees) != len(sentences):
        raise ValueError("trees and sentences differ in length")
    for k, sentence in enumerate(sentences):
        if sentence.sent_id:
            stream.write(f"# sent_id = {sentence.sent_id}\n")
        heads: Sequence[int] | None
        heads = list(trees[k].heads) if trees is not None else sentence.gold_heads
        for j, (form, pos) in enumerate(zip(sentence.forms, sentence.upos), start=1):
            head = str(heads[j - 1]) if heads is not None else "_"
            label = sentence.gold_labels[j - 1] if sentence.gold_labels else "_"
            stream.write(f"{j}\t{form}\t_\t{pos}\t_\t_\t{head}\t{label}\t_\t_\n")
        stream.write("\n")


# ---------------------------------------------------------------------------
# Score files (JSON lines)
# ---------------------------------------------------------------------------

def read_scores(stream: IO[str] | Iterable[str]) -> list[ScoreMatrix]:
    """Parse a JSON-lines score file: one object per sentence with keys
    ``sent_id``, ``n`` and ``scores`` ((n+1) rows of n entries).

    Self positions are overwritten with ``-inf`` regardless of file content.
    """
    matrices: list[ScoreMatrix] = []
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"line {lineno}: invalid JSON ({exc.msg})") from None
        try:
            n = int(obj["n"])
            rows = obj["scores"]
        except (KeyError, TypeError, ValueError):
            raise FormatError(f"line {lineno}: expected object with 'n' and 'scores'") from None
        if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
            raise FormatError(f"line {lineno}: 'scores' is not a list of rows")
        if len(rows) != n + 1:
            raise FormatError(f"line {lineno}: expected {n + 1} rows, got {len(rows)}")
        for i, row in enumerate(rows):
            if len(row) != n:
                raise FormatError(
                    f"line {lineno}: row {i} has {len(row)} entries, expected {n}"
                )
        try:
            scores = np.asarray(rows, dtype=float)
        except (TypeError, ValueError):
            raise FormatError(f"line {lineno}: non-numeric score entry") from None
        deps = np.arange(1, n + 1)
        scores[deps, deps - 1] = NEG_INF
        try:
            matrix = ScoreMatrix(scores, sent_id=str(obj.get("sent_id", "")))
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
        matrices.append(matrix)
    return matrices


def write_scores(matrices: Sequence[ScoreMatrix], stream: IO[str]) -> None:
    """Write score matrices as JSON lines with full double precision.

    Self positions are serialized as 0.0 placeholders (readers overwrite
    them with ``-inf``).
    """
    for matrix in matrices:
        n = matrix.n
        grid = matrix.scores.copy()
        deps = np.arange(1, n + 1)
        grid[deps, deps - 1] = 0.0
        obj = {"sent_id": matrix.sent_id, "n": n, "scores": grid.tolist()}
        stream.write(json.dumps(obj) + "\n")


# ---------------------------------------------------------------------------
# Probabilities and evaluation
# ---------------------------------------------------------------------------

def to_distribution(matrix: ScoreMatrix) -> ArcDistribution:
    """Per-dependent softmax over candidate heads.

    Adding a constant to a whole column of the score matrix leaves the
    result unchanged (the per-dependent normalizer absorbs it).
    """
    s = matrix.scores
    shifted = s - s.max(axis=0)
    e = np.exp(shifted)
    return ArcDistribution(e / e.sum(axis=0))


def uas(predicted: Sequence[ParseTree], gold: Sequence[Sentence]) -> float:
    """Unlabeled attachment score, micro-averaged over tokens."""
    if len(predicted) != len(gold):
        raise ValueError("predicted and gold differ in sentence count")
    correct = 0
    total = 0
    for k, (tree, sentence) in enumerate(zip(predicted, gold)):
        if sentence.gold_heads is None:
            raise ValueError(f"sentence {k} has no gold heads")
        if len(tree) != len(sentence):
            raise ValueError(f"sentence {k}: tree and sentence lengths differ")
        correct += sum(p == g for p, g in zip(tree.heads, sentence.gold_heads))
        total += len(sentence)
    return correct / total
