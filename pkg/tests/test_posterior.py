"""Partition function, dual ascent, and posterior decoding."""

import io
from itertools import product

import numpy as np
import pytest

import cip
from cip.constraints import Direction, phi
from cip.posterior import DualTraceRecord, kl_divergence, log_probs, write_pr_trace

from conftest import make_sentence, noun_toy_entry, random_corpus

NOUN_LEFT = cip.Constraint(id="noun-left", kind="unary", pos="NOUN", r=1.0, theta=0.01)


def enum_log_partition(corpus, dists, constraints, lambdas):
    """Independent oracle: enumerate every head assignment outright."""
    total = 1.0
    for k, (sentence, _) in enumerate(corpus):
        n = len(sentence)
        sentence_sum = 0.0
        candidates = [[h for h in range(n + 1) if h != d] for d in range(1, n + 1)]
        for assignment in product(*candidates):
            weight = 1.0
            for dep, head in enumerate(assignment, start=1):
                exponent = 0.0
                for i, c in enumerate(constraints):
                    exponent += lambdas[2 * i] * phi(c, Direction.UPPER, sentence, head, dep)
                    exponent += lambdas[2 * i + 1] * phi(c, Direction.LOWER, sentence, head, dep)
                weight *= dists[k].probs[head, dep - 1] * np.exp(-exponent)
            sentence_sum += weight
        total *= sentence_sum
    return float(np.log(total))


def small_problem(rng, constraints=None, n_sentences=2, lengths=(2, 3, 4)):
    corpus = random_corpus(rng, n_sentences, list(lengths))
    dists = [cip.to_distribution(m) for _, m in corpus]
    cons = constraints or [
        cip.Constraint(id="u", kind="unary", pos="NOUN", r=0.7, theta=0.05),
        cip.Constraint(id="b", kind="binary", pos="NOUN", pos2="ADP", r=0.3, theta=0.1),
    ]
    fi = cip.build_feature_index(corpus, cons)
    return corpus, dists, cons, fi


class TestParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            cip.PrParams(lr0=0)
        with pytest.raises(ValueError):
            cip.PrParams(decay=1.5)
        with pytest.raises(ValueError):
            cip.PrParams(batch_size=0)
        with pytest.raises(ValueError):
            cip.PrParams(optimizer="sgd++")


class TestFeatureIndex:
    def test_labels_and_pointwise_values(self):
        rng = np.random.default_rng(40)
        corpus, _, cons, fi = small_problem(rng)
        assert fi.labels == ("u:upper", "u:lower", "b:upper", "b:lower")
        for k, (sentence, _) in enumerate(corpus):
            for i, c in enumerate(cons):
                for f, direction in ((2 * i, Direction.UPPER), (2 * i + 1, Direction.LOWER)):
                    heads, cols, values = fi.entries[k][f]
                    for h, j, v in zip(heads, cols, values):
                        assert v == phi(c, direction, sentence, int(h), int(j) + 1)
                        assert v != 0.0


class TestLogPartition:
    def test_zero_lambda_is_zero(self):
        rng = np.random.default_rng(41)
        corpus, dists, _, fi = small_problem(rng)
        assert cip.log_partition(corpus, dists, fi, np.zeros(4)) == pytest.approx(0.0, abs=1e-12)

    def test_no_matching_arcs(self):
        sentence = make_sentence(("DET", "VERB"))
        matrix = cip.ScoreMatrix(np.random.default_rng(0).normal(0, 1, (3, 2)))
        corpus = cip.Corpus(((sentence, matrix),))
        dists = [cip.to_distribution(matrix)]
        fi = cip.build_feature_index(corpus, [NOUN_LEFT])
        for lam in (0.0, 1.0, 7.0):
            assert cip.log_partition(corpus, dists, fi, np.array([lam, lam])) == 0.0

    def test_two_token_hand_case(self):
        sentence = make_sentence(("DET", "NOUN"))
        scores = np.array([[0.3, 1.2], [0.0, -0.4], [0.7, 0.0]])
        matrix = cip.ScoreMatrix(scores)
        corpus = cip.Corpus(((sentence, matrix),))
        dists = [cip.to_distribution(matrix)]
        cons = [cip.Constraint(id="u", kind="unary", pos="NOUN", r=0.6, theta=0.1)]
        fi = cip.build_feature_index(corpus, cons)
        lam = np.array([0.9, 0.0])
        value = cip.log_partition(corpus, dists, fi, lam)
        oracle = enum_log_partition(corpus, dists, cons, lam)
        assert value == pytest.approx(oracle, abs=1e-12)

    def test_matches_enumeration_randomized(self):
        rng = np.random.default_rng(42)
        for _ in range(25):
            corpus, dists, cons, fi = small_problem(rng, lengths=(2, 3, 4))
            lam = rng.uniform(0, 2, 4)
            value = cip.log_partition(corpus, dists, fi, lam)
            oracle = enum_log_partition(corpus, dists, cons, lam)
            assert value == pytest.approx(oracle, abs=1e-9)


class TestGradient:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(43)
        for _ in range(30):
            corpus, dists, _, fi = small_problem(rng)
            lam = rng.uniform(0.1, 2, 4)
            grad = cip.grad_log_partition(corpus, dists, fi, lam)
            step = 1e-6
            for i in range(4):
                up, down = lam.copy(), lam.copy()
                up[i] += step
                down[i] -= step
                fd = (
                    cip.log_partition(corpus, dists, fi, up)
                    - cip.log_partition(corpus, dists, fi, down)
                ) / (2 * step)
                assert abs(grad[i] - fd) <= 1e-5 * max(1.0, abs(fd))

    def test_zero_features_zero_gradient(self):
        sentence = make_sentence(("DET", "VERB"))
        matrix = cip.ScoreMatrix(np.zeros((3, 2)))
        corpus = cip.Corpus(((sentence, matrix),))
        dists = [cip.to_distribution(matrix)]
        fi = cip.build_feature_index(corpus, [NOUN_LEFT])
        np.testing.assert_array_equal(
            cip.grad_log_partition(corpus, dists, fi, np.array([1.0, 2.0])), 0.0
        )

    def test_at_zero_equals_negative_feature_expectation(self):
        rng = np.random.default_rng(44)
        corpus, dists, cons, fi = small_problem(rng)
        grad = cip.grad_log_partition(corpus, dists, fi, np.zeros(4))
        expected = np.zeros(4)
        for k, (sentence, _) in enumerate(corpus):
            for f, (heads, cols, values) in enumerate(fi.entries[k]):
                for h, j, v in zip(heads, cols, values):
                    expected[f] -= v * dists[k].probs[h, j]
        np.testing.assert_allclose(grad, expected, atol=1e-12)

    def test_neg_log_partition_concave_along_segments(self):
        rng = np.random.default_rng(45)
        corpus, dists, _, fi = small_problem(rng)
        for _ in range(10):
            a = rng.uniform(0, 2, 4)
            b = rng.uniform(0, 2, 4)
            values = [
                -cip.log_partition(corpus, dists, fi, a + t * (b - a))
                for t in np.linspace(0, 1, 9)
            ]
            second = np.diff(values, 2)
            assert np.all(second <= 1e-9)


class TestSolveDual:
    def test_satisfied_baseline_keeps_lambda_zero(self):
        # Baseline noun ratio is 1/3; a band centered there is satisfied in
        # expectation, so the ascent never leaves the origin.
        corpus = cip.Corpus((noun_toy_entry(0.5), noun_toy_entry(0.7), noun_toy_entry(-0.4)))
        dists = [cip.to_distribution(m) for _, m in corpus]
        c = cip.Constraint(id="x", kind="unary", pos="NOUN", r=0.5, theta=0.45)
        fi = cip.build_feature_index(corpus, [c])
        assert cip.expected_ratio(c, corpus, dists) <= c.upper
        assert cip.expected_ratio(c, corpus, dists) >= c.lower
        lam, trace = cip.solve_dual(corpus, dists, fi, cip.PrParams())
        np.testing.assert_array_equal(lam, 0.0)
        assert trace[-1].grad_norm < cip.PrParams().grad_tol

    def test_vacuous_upper_feature(self):
        corpus = cip.Corpus((noun_toy_entry(0.5),))
        dists = [cip.to_distribution(m) for _, m in corpus]
        c = cip.Constraint(id="x", kind="unary", pos="NOUN", r=0.875, theta=0.125)
        fi = cip.build_feature_index(corpus, [c])
        lam, _ = cip.solve_dual(corpus, dists, fi, cip.PrParams(max_iter=20))
        assert lam[0] == 0.0  # effective upper ratio 1.0 never binds

    def test_no_features(self):
        corpus = cip.Corpus((noun_toy_entry(0.5),))
        dists = [cip.to_distribution(m) for _, m in corpus]
        fi = cip.build_feature_index(corpus, [])
        lam, trace = cip.solve_dual(corpus, dists, fi, cip.PrParams())
        assert lam.size == 0 and trace == []

    def test_random_probe_optimality(self):
        rng = np.random.default_rng(46)
        corpus, dists, _, _ = small_problem(rng, n_sentences=3)
        cons = [cip.Constraint(id="u", kind="unary", pos="NOUN", r=0.2, theta=0.0)]
        fi = cip.build_feature_index(corpus, cons)
        params = cip.PrParams(max_iter=3000, decay=1.0, lr0=0.05, grad_tol=1e-10)
        lam, _ = cip.solve_dual(corpus, dists, fi, params)
        best = -cip.log_partition(corpus, dists, fi, lam)
        for _ in range(1000):
            probe = rng.uniform(0, 4, fi.n_features)
            assert best >= -cip.log_partition(corpus, dists, fi, probe) - 1e-6


class TestPosteriorArcProbs:
    def test_zero_lambda_is_identity(self):
        rng = np.random.default_rng(47)
        corpus, dists, _, fi = small_problem(rng)
        out = cip.posterior_arc_probs(corpus, dists, fi, np.zeros(4))
        for q, p in zip(out, dists):
            np.testing.assert_allclose(q.probs, p.probs, atol=1e-12)

    def test_columns_normalized(self):
        rng = np.random.default_rng(48)
        corpus, dists, _, fi = small_problem(rng)
        out = cip.posterior_arc_probs(corpus, dists, fi, np.array([0.5, 1.5, 0.2, 3.0]))
        for q in out:
            np.testing.assert_allclose(q.probs.sum(axis=0), 1.0, atol=1e-9)

    def test_monotone_steering(self):
        corpus = cip.Corpus(tuple(noun_toy_entry(b) for b in (0.5, 0.2, -0.3, 0.8)))
        dists = [cip.to_distribution(m) for _, m in corpus]
        c = cip.Constraint(id="x", kind="unary", pos="NOUN", r=0.3, theta=0.1)
        fi = cip.build_feature_index(corpus, [c])
        previous = None
        for lam in np.linspace(0, 4, 20):
            q = cip.posterior_arc_probs(corpus, dists, fi, np.array([lam, 0.0]))
            measured = cip.expected_ratio(c, corpus, q)
            if previous is not None:
                assert measured <= previous
            previous = measured

    def test_kl_zero_at_identity_nonnegative_elsewhere(self):
        rng = np.random.default_rng(49)
        corpus, dists, _, fi = small_problem(rng)
        same = cip.posterior_arc_probs(corpus, dists, fi, np.zeros(4))
        assert kl_divergence(same, dists) == pytest.approx(0.0, abs=1e-12)
        moved = cip.posterior_arc_probs(corpus, dists, fi, np.array([1.0, 0.0, 2.0, 0.5]))
        assert kl_divergence(moved, dists) >= 0.0


class TestPrInfer:
    def test_empty_constraints_identity(self):
        rng = np.random.default_rng(50)
        corpus = random_corpus(rng, 5, [2, 3, 4, 5])
        baseline = cip.decode_corpus(corpus)
        trees, lam = cip.pr_infer(corpus, [])
        assert lam.size == 0
        assert [t.heads for t in trees] == [t.heads for t in baseline]

    def test_map_decode_invariant_to_normalization(self):
        rng = np.random.default_rng(51)
        for _ in range(20):
            n = int(rng.integers(2, 6))
            matrix = cip.ScoreMatrix(rng.normal(0, 2, (n + 1, n)))
            via_q = cip.mst_decode(cip.ScoreMatrix(log_probs(cip.to_distribution(matrix))))
            direct = cip.mst_decode(matrix)
            assert via_q.heads == direct.heads

    def test_directional_improvement(self, noun_toy_corpus):
        c = cip.Constraint(id="x", kind="unary", pos="NOUN", r=0.9, theta=0.05)
        baseline = cip.decode_corpus(noun_toy_corpus)
        base_ratio = cip.ratio(c, noun_toy_corpus, baseline)
        trees, _ = cip.pr_infer(noun_toy_corpus, [c])
        new_ratio = cip.ratio(c, noun_toy_corpus, trees)

        def distance(value):
            return max(c.lower - value, value - c.upper, 0.0)

        assert distance(new_ratio) < distance(base_ratio)

    def test_agrees_with_lagrangian_on_toy(self, noun_toy_corpus):
        lr_trees, _, converged = cip.lr_infer(noun_toy_corpus, [NOUN_LEFT])
        pr_trees, _ = cip.pr_infer(noun_toy_corpus, [NOUN_LEFT])
        assert converged
        assert cip.is_satisfied(
            NOUN_LEFT, cip.ratio(NOUN_LEFT, noun_toy_corpus, lr_trees)
        )
        assert cip.is_satisfied(
            NOUN_LEFT, cip.ratio(NOUN_LEFT, noun_toy_corpus, pr_trees)
        )

    def test_projective_flag(self, noun_toy_corpus):
        trees, _ = cip.pr_infer(noun_toy_corpus, [NOUN_LEFT], projective=True)
        assert all(cip.is_projective(t.heads) for t in trees)


def test_trace_csv():
    trace = [DualTraceRecord(0, 0.5, -0.1, (0.0, 0.0)), DualTraceRecord(1, 0.1, -0.2, (0.3, 0.0))]
    out = io.StringIO()
    write_pr_trace(trace, ["c:upper", "c:lower"], out)
    lines = out.getvalue().strip().splitlines()
    assert lines[0] == "iter,grad_norm,neg_log_Z,lambda_c:upper,lambda_c:lower"
    assert len(lines) == 3
