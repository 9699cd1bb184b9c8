"""Posterior reweighting of arc distributions under expectation constraints.

The model's per-dependent head distributions are projected (in KL) onto the
set of distributions whose expected constraint features are nonpositive.
The projection has the closed form ``q(arc) ~ p(arc) * exp(-lambda . phi(arc))``
with nonnegative duals ``lambda`` maximizing ``-log Z(lambda)``.  Under the
arc-independence assumption the log-partition function factorizes per
dependent:

    log Z(lambda) = sum_k sum_dep log sum_head p(head|dep) exp(-lambda . phi)

which sums over all head assignments, not only trees; the final MAP decode
restores the tree constraint.  ``-log Z`` is concave, so projected
(stochastic) gradient ascent finds the optimum; each constraint contributes
an upper and a lower feature row (margins folded into effective ratios).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np
from scipy.special import logsumexp

from .constraints import Constraint, Direction, phi_matrix
from .core import ArcDistribution, Corpus, ParseTree, ScoreMatrix, to_distribution
from .decoder import mst_decode, projective_decode

_ADAM_BETA1 = 0.9
_ADAM_BETA2 = 0.999
_ADAM_EPS = 1e-8


@dataclass(frozen=True)
class PrParams:
    lr0: float = 1.0
    decay: float = 0.98
    max_iter: int = 100
    batch_size: int = 128
    optimizer: str = "adaptive_moments"  # or "plain_sgd"
    grad_tol: float = 1e-4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")
        if not 0 < self.decay <= 1:
            raise ValueError("decay must lie in (0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.optimizer not in ("adaptive_moments", "plain_sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass(frozen=True, eq=False)
class FeatureIndex:
    """Sparse per-arc feature values, two rows per constraint.

    Row ``2i`` is the upper-bound feature of constraint ``i`` and row
    ``2i + 1`` the lower-bound feature.  For sentence ``k`` and feature
    ``f``, ``entries[k][f]`` holds parallel (heads, columns, values) arrays
    covering exactly the arcs the constraint matches.
    """

    labels: tuple[str, ...]
    entries: tuple[tuple[tuple[np.ndarray, np.ndarray, np.ndarray], ...], ...]

    @property
    def n_features(self) -> int:
        return len(self.labels)

    def exponent(self, k: int, lambdas: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
        """Per-arc value of ``lambda . phi`` for sentence ``k``."""
        out = np.zeros(shape)
        for f, (heads, cols, values) in enumerate(self.entries[k]):
            if lambdas[f] != 0.0 and heads.size:
                np.add.at(out, (heads, cols), lambdas[f] * values)
        return out


def build_feature_index(
    corpus: Corpus,
    constraints: Sequence[Constraint],
    *,
    root_counts_left: bool = False,
) -> FeatureIndex:
    labels = []
    for c in constraints:
        labels.extend([f"{c.id}:upper", f"{c.id}:lower"])
    entries = []
    for sentence, _ in corpus:
        rows = []
        for c in constraints:
            for direction in (Direction.UPPER, Direction.LOWER):
                grid = phi_matrix(
                    c, direction, sentence, root_counts_left=root_counts_left
                )
                heads, cols = np.nonzero(grid)
                rows.append((heads, cols, grid[heads, cols]))
        entries.append(tuple(rows))
    return FeatureIndex(labels=tuple(labels), entries=tuple(entries))


def log_probs(dist: ArcDistribution) -> np.ndarray:
    p = dist.probs
    out = np.full_like(p, -np.inf)
    np.log(p, out=out, where=p > 0)
    return out


def log_partition(
    corpus: Corpus,
    dists: Sequence[ArcDistribution],
    fi: FeatureIndex,
    lambdas: np.ndarray,
    *,
    subset: Sequence[int] | None = None,
) -> float:
    """Factorized log normalizer of the reweighted head distributions."""
    lambdas = np.asarray(lambdas, dtype=float)
    indices = range(len(corpus)) if subset is None else subset
    total = 0.0
    for k in indices:
        dist = dists[k]
        logw = log_probs(dist) - fi.exponent(k, lambdas, dist.probs.shape)
        total += float(logsumexp(logw, axis=0).sum())
    return total


def grad_log_partition(
    corpus: Corpus,
    dists: Sequence[ArcDistribution],
    fi: FeatureIndex,
    lambdas: np.ndarray,
    *,
    subset: Sequence[int] | None = None,
) -> np.ndarray:
    """Gradient of ``log_partition``: the per-dependent expectation of
    ``-phi`` under the reweighted head distributions."""
    lambdas = np.asarray(lambdas, dtype=float)
    indices = range(len(corpus)) if subset is None else subset
    grad = np.zeros(fi.n_features)
    for k in indices:
        dist = dists[k]
        logw = log_probs(dist) - fi.exponent(k, lambdas, dist.probs.shape)
        weights = np.exp(logw - logsumexp(logw, axis=0))
        for f, (heads, cols, values) in enumerate(fi.entries[k]):
            if heads.size:
                grad[f] -= float(np.sum(values * weights[heads, cols]))
    return grad


@dataclass(frozen=True)
class DualTraceRecord:
    iteration: int
    grad_norm: float
    neg_log_z: float
    lambdas: tuple[float, ...]


def solve_dual(
    corpus: Corpus,
    dists: Sequence[ArcDistribution],
    fi: FeatureIndex,
    params: PrParams = PrParams(),
) -> tuple[np.ndarray, list[DualTraceRecord]]:
    """Projected stochastic ascent on ``-log Z`` over the nonnegative orthant.

    Batches are sampled without replacement per epoch and the batch gradient
    is rescaled to full-corpus magnitude.  The loop stops at the iteration
    cap or when the full-corpus gradient norm, restricted to coordinates not
    pinned at the boundary, falls below ``grad_tol``.
    """
    d = fi.n_features
    lambdas = np.zeros(d)
    trace: list[DualTraceRecord] = []
    if d == 0:
        return lambdas, trace

    size = len(corpus)
    batch = min(params.batch_size, size)
    rng = np.random.default_rng(params.seed)
    order = rng.permutation(size)
    cursor = 0
    moment1 = np.zeros(d)
    moment2 = np.zeros(d)
    steps = 0

    def record(iteration: int) -> float:
        ascent = -grad_log_partition(corpus, dists, fi, lambdas)
        projected = np.where(lambdas > 0, ascent, np.maximum(ascent, 0.0))
        norm = float(np.linalg.norm(projected))
        trace.append(
            DualTraceRecord(
                iteration=iteration,
                grad_norm=norm,
                neg_log_z=-log_partition(corpus, dists, fi, lambdas),
                lambdas=tuple(float(v) for v in lambdas),
            )
        )
        return norm

    for iteration in range(params.max_iter):
        if record(iteration) < params.grad_tol:
            return lambdas, trace
        if cursor + batch > size:
            order = rng.permutation(size)
            cursor = 0
        subset = order[cursor:cursor + batch]
        cursor += batch
        gradient = -grad_log_partition(corpus, dists, fi, lambdas, subset=subset)
        gradient *= size / batch
        rate = params.lr0 * params.decay**iteration
        if params.optimizer == "adaptive_moments":
            steps += 1
            moment1 = _ADAM_BETA1 * moment1 + (1 - _ADAM_BETA1) * gradient
            moment2 = _ADAM_BETA2 * moment2 + (1 - _ADAM_BETA2) * gradient**2
            m_hat = moment1 / (1 - _ADAM_BETA1**steps)
            v_hat = moment2 / (1 - _ADAM_BETA2**steps)
            step = rate * m_hat / (np.sqrt(v_hat) + _ADAM_EPS)
        else:
            step = rate * gradient
        lambdas = np.maximum(lambdas + step, 0.0)

    record(params.max_iter)
    return lambdas, trace


def posterior_arc_probs(
    corpus: Corpus,
    dists: Sequence[ArcDistribution],
    fi: FeatureIndex,
    lambdas: np.ndarray,
) -> list[ArcDistribution]:
    """Reweight each head distribution by ``exp(-lambda . phi)`` and
    renormalize per dependent."""
    lambdas = np.asarray(lambdas, dtype=float)
    out = []
    for k, dist in enumerate(dists):
        logw = log_probs(dist) - fi.exponent(k, lambdas, dist.probs.shape)
        probs = np.exp(logw - logsumexp(logw, axis=0))
        probs /= probs.sum(axis=0)
        out.append(ArcDistribution(probs))
    return out


def kl_divergence(
    q: Sequence[ArcDistribution], p: Sequence[ArcDistribution]
) -> float:
    """Arc-factored KL(q || p) summed over all dependents."""
    total = 0.0
    for qd, pd in zip(q, p):
        mask = qd.probs > 0
        total += float(
            np.sum(qd.probs[mask] * (np.log(qd.probs[mask]) - np.log(pd.probs[mask])))
        )
    return total


def pr_infer(
    corpus: Corpus,
    constraints: Sequence[Constraint],
    params: PrParams = PrParams(),
    *,
    projective: bool = False,
    single_root: bool = False,
    root_counts_left: bool = False,
) -> tuple[list[ParseTree], np.ndarray]:
    """Full pipeline: normalize scores, solve the dual, reweight, decode."""
    if len(corpus) == 0:
        raise ValueError("corpus is empty")
    dists = [to_distribution(matrix) for _, matrix in corpus]
    fi = build_feature_index(corpus, constraints, root_counts_left=root_counts_left)
    lambdas, _ = solve_dual(corpus, dists, fi, params)
    posteriors = posterior_arc_probs(corpus, dists, fi, lambdas)
    decode = projective_decode if projective else mst_decode
    trees = []
    for dist in posteriors:
        log_q = log_probs(dist)
        trees.append(decode(ScoreMatrix(log_q), single_root=single_root))
    return trees, lambdas


def write_pr_trace(
    trace: Sequence[DualTraceRecord], labels: Sequence[str], stream: IO[str]
) -> None:
    """CSV dual trace: iteration, gradient norm, -log Z, multiplier values."""
    writer = csv.writer(stream)
    writer.writerow(["iter", "grad_norm", "neg_log_Z", *[f"lambda_{l}" for l in labels]])
    for record in trace:
        writer.writerow(
            [record.iteration, record.grad_norm, record.neg_log_z, *record.lambdas]
        )
