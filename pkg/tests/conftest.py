"""Shared fixtures: tiny corpora and small models used across test modules."""

import numpy as np
import pytest

from lsner.corpus import Dataset, LabelTaxonomy, Sentence
from lsner.matcher import init_model


@pytest.fixture
def conll_taxonomy():
    return LabelTaxonomy([("PER", "person"), ("LOC", "location"),
                          ("ORG", "organization"), ("MISC", "miscellaneous")])


@pytest.fixture
def two_type_taxonomy():
    return LabelTaxonomy([("PER", "person"), ("LOC", "location")])


@pytest.fixture
def tiny_dataset(two_type_taxonomy):
    sentences = [
        Sentence(["John", "lives", "in", "Paris"], ["B-PER", "O", "O", "B-LOC"]),
        Sentence(["Mary", "Ann", "left"], ["B-PER", "I-PER", "O"]),
        Sentence(["nothing", "here"], ["O", "O"]),
        Sentence(["New", "York", "and", "Rome"], ["B-LOC", "I-LOC", "O", "B-LOC"]),
        Sentence(["Bob", "met", "Alice"], ["B-PER", "O", "B-PER"]),
    ]
    return Dataset("tiny", sentences, two_type_taxonomy)


def make_random_corpus(rng, n_types, n_sentences, min_per_type=0,
                       max_len=8, p_entity=0.35):
    """A random BIO corpus over synthetic types T0..T{n-1}.

    When min_per_type > 0, extra dedicated sentences guarantee every type
    has at least that many entity occurrences.
    """
    types = [f"T{i}" for i in range(n_types)]
    sentences = []
    for _ in range(n_sentences):
        length = int(rng.integers(2, max_len + 1))
        tags = []
        i = 0
        while i < length:
            if rng.random() < p_entity:
                t = types[int(rng.integers(n_types))]
                span = min(int(rng.integers(1, 3)), length - i)
                tags += ["B-" + t] + ["I-" + t] * (span - 1)
                i += span
            else:
                tags.append("O")
                i += 1
        sentences.append(Sentence(["w"] * len(tags), tags))
    if min_per_type:
        from lsner.sampler import count_entity_occurrences
        taxonomy = LabelTaxonomy([(t, t.lower()) for t in types])
        counts = count_entity_occurrences(sentences, taxonomy)
        for t in types:
            for _ in range(max(0, min_per_type - counts[t])):
                sentences.append(Sentence(["w", "w"], ["B-" + t, "O"]))
    taxonomy = LabelTaxonomy([(t, t.lower()) for t in types])
    return Dataset("random", sentences, taxonomy)


@pytest.fixture
def small_model(tiny_dataset):
    """Identity contextualizers, no caps feature: predictions are pure
    embedding dot products, easy to reason about."""
    from lsner.encoders import build_vocabulary
    vocab = build_vocabulary(tiny_dataset.sentences,
                             extra_tokens=["begin", "inside", "other",
                                           "person", "location"])
    return init_model(vocab, tiny_dataset.taxonomy, dim=8, seed=3,
                      token_ctx="identity", label_ctx="identity",
                      caps_feature=False)
