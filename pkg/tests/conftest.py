"""Shared corpus builders for the test suite."""

import numpy as np
import pytest

import cip


def make_sentence(upos, gold_heads=None, sent_id=""):
    forms = tuple(f"w{i + 1}" for i in range(len(upos)))
    return cip.Sentence(
        forms=forms,
        upos=tuple(upos),
        sent_id=sent_id,
        gold_heads=tuple(gold_heads) if gold_heads is not None else None,
    )


def random_corpus(rng, n_sentences, lengths, pos_pool=("NOUN", "VERB", "DET", "ADP")):
    entries = []
    for _ in range(n_sentences):
        n = int(rng.choice(lengths))
        upos = tuple(str(rng.choice(pos_pool)) for _ in range(n))
        sentence = make_sentence(upos)
        matrix = cip.ScoreMatrix(rng.normal(0, 2, (n + 1, n)))
        entries.append((sentence, matrix))
    return cip.Corpus(tuple(entries))


def noun_toy_entry(noun_head_bias):
    """Sentence DET NOUN VERB whose NOUN picks head 1 (left) or head 3
    (right) depending on the bias; the other tokens attach firmly to root."""
    sentence = make_sentence(("DET", "NOUN", "VERB"))
    scores = np.zeros((4, 3))
    scores[0, 0] = 5.0
    scores[1, 0] = -1.0
    scores[0, 2] = 5.0
    scores[1, 1] = 1.0
    scores[3, 1] = 1.0 + noun_head_bias
    return sentence, cip.ScoreMatrix(scores)


@pytest.fixture
def noun_toy_corpus():
    """Three sentences; the baseline decode puts 2 of 3 noun heads on the
    right (ratio 1/3)."""
    return cip.Corpus((noun_toy_entry(0.5), noun_toy_entry(0.7), noun_toy_entry(-0.4)))
