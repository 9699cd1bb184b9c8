"""Synthetic corpus generation: determinism, planting, recoverability."""

import numpy as np
import pytest

import cip


POS = (("NOUN", 0.3), ("VERB", 0.25), ("DET", 0.25), ("ADJ", 0.2))


def unary_spec(**kwargs):
    defaults = dict(
        n_sentences=40,
        min_len=3,
        max_len=8,
        pos_weights=POS,
        planted=(
            cip.Constraint(id="noun-left", kind="unary", pos="NOUN", r=0.9, theta=0.0),
        ),
        seed=5,
    )
    defaults.update(kwargs)
    return cip.SyntheticSpec(**defaults)


class TestSpecValidation:
    def test_planted_pos_must_exist(self):
        with pytest.raises(ValueError, match="not in inventory"):
            unary_spec(
                planted=(
                    cip.Constraint(id="x", kind="unary", pos="PRON", r=0.5, theta=0.0),
                )
            )

    def test_bad_lengths(self):
        with pytest.raises(ValueError):
            unary_spec(min_len=5, max_len=3)

    def test_from_dict_round_trip(self):
        spec = cip.SyntheticSpec.from_dict(
            {
                "n_sentences": 7,
                "min_len": 2,
                "max_len": 5,
                "pos_weights": {"NOUN": 0.5, "VERB": 0.5},
                "planted": [
                    {"id": "c", "kind": "unary", "pos": "NOUN", "r": 0.8}
                ],
                "sigma": 0.2,
                "flip_prob": 0.4,
                "seed": 9,
            }
        )
        assert spec.n_sentences == 7
        assert spec.planted[0].pos == "NOUN"
        assert spec.flip_prob == 0.4


class TestGeneration:
    def test_bit_identical_across_runs(self):
        a, ra = cip.generate_synthetic(unary_spec(sigma=0.3, flip_prob=0.5))
        b, rb = cip.generate_synthetic(unary_spec(sigma=0.3, flip_prob=0.5))
        assert ra == rb
        for (sa, ma), (sb, mb) in zip(a, b):
            assert sa == sb
            np.testing.assert_array_equal(ma.scores, mb.scores)

    def test_noise_free_scores_recover_gold(self):
        corpus, _ = cip.generate_synthetic(unary_spec())
        trees = cip.decode_corpus(corpus)
        assert cip.uas(trees, corpus.sentences) == 1.0

    def test_planted_unary_ratio_concentrates(self):
        spec = unary_spec(n_sentences=500, seed=77)
        corpus, true_ratios = cip.generate_synthetic(spec)
        measured, count = cip.estimate_ratio(
            corpus.sentences,
            cip.Constraint(id="x", kind="unary", pos="NOUN", r=0.9, theta=0.0),
        )
        assert count > 200
        assert abs(measured - 0.9) <= 0.05
        assert abs(true_ratios["noun-left"] - measured) < 1e-12

    def test_planted_binary_ratio(self):
        spec = cip.SyntheticSpec(
            n_sentences=300,
            min_len=4,
            max_len=8,
            pos_weights=POS + (("ADP", 0.15),),
            planted=(
                cip.Constraint(
                    id="noun-adp", kind="binary", pos="NOUN", pos2="ADP",
                    r=0.8, theta=0.0,
                ),
            ),
            seed=8,
        )
        corpus, true_ratios = cip.generate_synthetic(spec)
        assert abs(true_ratios["noun-adp"] - 0.8) <= 0.05

    def test_infeasible_planting(self):
        # Length-2 sentences have at most one non-root arc, half of them
        # right-headed; demanding 90% of tokens be right-headed nouns fails.
        spec = cip.SyntheticSpec(
            n_sentences=50,
            min_len=2,
            max_len=2,
            pos_weights=(("NOUN", 0.9), ("VERB", 0.1)),
            planted=(
                cip.Constraint(id="x", kind="unary", pos="NOUN", r=0.0, theta=0.0),
            ),
            seed=1,
        )
        with pytest.raises(ValueError, match="infeasible"):
            cip.generate_synthetic(spec)

    def test_projective_by_default_nonprojective_on_request(self):
        corpus, _ = cip.generate_synthetic(unary_spec(n_sentences=60, max_len=10))
        assert all(
            cip.is_projective(s.gold_heads) for s, _ in corpus
        )
        loose, _ = cip.generate_synthetic(
            unary_spec(n_sentences=60, max_len=10, allow_nonprojective=True, seed=2)
        )
        assert any(not cip.is_projective(s.gold_heads) for s, _ in loose)

    def test_corruption_moves_baseline_ratio(self):
        clean, ratios = cip.generate_synthetic(unary_spec(n_sentences=120, sigma=0.1))
        corrupt, _ = cip.generate_synthetic(
            unary_spec(n_sentences=120, sigma=0.1, flip_prob=1.0, flip_boost=1.0)
        )
        c = cip.Constraint(
            id="x", kind="unary", pos="NOUN", r=ratios["noun-left"], theta=0.01
        )
        clean_ratio = cip.ratio(c, clean, cip.decode_corpus(clean))
        corrupt_ratio = cip.ratio(c, corrupt, cip.decode_corpus(corrupt))
        assert abs(corrupt_ratio - c.r) > abs(clean_ratio - c.r) + 0.2
