"""Token and label encoders, vocabulary, contextual label inputs."""

import numpy as np
import pytest

from lsner.corpus import LabelTaxonomy, Sentence, expand_tag_labels
from lsner.encoders import (MASK_TOKEN, PAD_TOKEN, UNK_TOKEN, LabelScheme,
                            Vocabulary, build_contextual_label_inputs,
                            build_vocabulary, case_index, encode_labels,
                            encode_tokens, load_static_vectors,
                            select_label_contexts)
from lsner.matcher import init_model


class TestVocabulary:
    def test_specials_come_first(self):
        vocab = build_vocabulary([Sentence(["Hello", "world"], ["O", "O"])])
        assert vocab.tokens[:3] == [PAD_TOKEN, UNK_TOKEN, MASK_TOKEN]
        assert "hello" in vocab.index  # lowercased by default

    def test_min_freq(self):
        sents = [Sentence(["a", "a", "b"], ["O", "O", "O"])]
        vocab = build_vocabulary(sents, min_freq=2)
        assert "a" in vocab.index and "b" not in vocab.index

    def test_unknown_maps_to_unk(self):
        vocab = build_vocabulary([Sentence(["a"], ["O"])])
        assert vocab.lookup("zzz") == vocab.index[UNK_TOKEN]

    def test_extra_tokens_appended_once(self):
        sents = [Sentence(["person"], ["O"])]
        vocab = build_vocabulary(sents, extra_tokens=["person", "begin"])
        assert vocab.tokens.count("person") == 1
        assert "begin" in vocab.index

    def test_requires_unk(self):
        with pytest.raises(AssertionError):
            Vocabulary(["a", "b"])


class TestCaseFeature:
    @pytest.mark.parametrize("token,expected", [
        ("hello", 0), ("123", 0), ("-", 0),
        ("Hello", 1), ("EU", 2), ("McDonald", 3), ("iPhone", 3)])
    def test_classes(self, token, expected):
        assert case_index(token) == expected


class TestLabelScheme:
    def test_parse_name(self):
        s = LabelScheme.parse("name")
        assert s.kind == "name" and str(s) == "name"

    def test_parse_contextual(self):
        s = LabelScheme.parse("contextual:BIOTAG_COLON_MASK")
        assert (s.kind, s.sub) == ("contextual", "BIOTAG_COLON_MASK")
        assert str(s) == "contextual:BIOTAG_COLON_MASK"
        assert s.budget == 10

    def test_unknown_rejected(self):
        with pytest.raises(ValueError):
            LabelScheme.parse("contextual:NOPE")
        with pytest.raises(ValueError):
            LabelScheme.parse("bagofwords")


class TestTokenEncoder:
    def test_identity_encoder_returns_embedding_rows(self, small_model):
        m = small_model
        sent = Sentence(["john", "lives"], ["O", "O"])
        out = encode_tokens(sent, m.token_params, m.vocab)
        rows = m.token_params.embedding.values[
            [m.vocab.lookup("john"), m.vocab.lookup("lives")]]
        np.testing.assert_array_equal(out.data, rows)

    def test_caps_feature_adds_case_row(self, tiny_dataset):
        vocab = build_vocabulary(tiny_dataset.sentences)
        m = init_model(vocab, tiny_dataset.taxonomy, dim=8, seed=0,
                       token_ctx="identity", caps_feature=True)
        m.token_params.caps.tensor.data[:] = np.arange(4)[:, None]
        lower = encode_tokens(Sentence(["john"], ["O"]), m.token_params, m.vocab)
        title = encode_tokens(Sentence(["John"], ["O"]), m.token_params, m.vocab)
        np.testing.assert_allclose(title.data - lower.data, 1.0)

    def test_empty_sentence_rejected(self, small_model):
        with pytest.raises(ValueError, match="empty"):
            encode_tokens(Sentence([], []), small_model.token_params,
                          small_model.vocab)


class TestLabelEncoderNamePath:
    def test_tied_single_word_label_equals_token_vector(self, small_model):
        """With tied tables and identity contextualizers, the label 'begin
        person' pooled by max must touch only rows for 'begin'/'person'."""
        m = small_model
        labels = expand_tag_labels(m.taxonomy)
        out = encode_labels(labels, m.label_params, m.vocab)
        assert out.data.shape == (2 * m.taxonomy.n_labels - 1, 8)
        emb = m.label_params.embedding.values
        begin_person = np.maximum(emb[m.vocab.lookup("begin")],
                                  emb[m.vocab.lookup("person")])
        np.testing.assert_allclose(out.data[1], begin_person)
        np.testing.assert_allclose(out.data[0], emb[m.vocab.lookup("other")])

    def test_mean_and_first_pooling(self, small_model):
        m = small_model
        emb = m.label_params.embedding.values
        labels = expand_tag_labels(m.taxonomy)
        rows = emb[[m.vocab.lookup("inside"), m.vocab.lookup("location")]]
        m.label_params.pool = "mean"
        out = encode_labels(labels, m.label_params, m.vocab)
        np.testing.assert_allclose(out.data[4], rows.mean(axis=0))
        m.label_params.pool = "first"
        out = encode_labels(labels, m.label_params, m.vocab)
        np.testing.assert_allclose(out.data[4], rows[0])


FOOTBALL = Sentence(["Cristiano", "Ronaldo", "is", "a", "soccer", "player"],
                    ["B-PER", "I-PER", "O", "O", "O", "O"])


class TestContextualLabelInputs:
    @staticmethod
    def label(text="begin person"):
        from lsner.corpus import TaggingLabel
        role = text.split()[0]
        return TaggingLabel(text, 1, role, "PER")

    def test_label_substitution(self):
        out = build_contextual_label_inputs(
            self.label(), [FOOTBALL], "LABEL", np.random.default_rng(0))
        assert out == [["person", "person", "is", "a", "soccer", "player"]]

    def test_token_scheme_keeps_surface_form(self):
        out = build_contextual_label_inputs(
            self.label(), [FOOTBALL], "TOKEN", np.random.default_rng(0))
        assert out == [list(FOOTBALL.tokens)]

    def test_mask_scheme(self):
        out = build_contextual_label_inputs(
            self.label(), [FOOTBALL], "MASK", np.random.default_rng(0))
        assert out == [[MASK_TOKEN, MASK_TOKEN, "is", "a", "soccer", "player"]]

    def test_biotag_colon_mask_marks_positions(self):
        out = build_contextual_label_inputs(
            self.label(), [FOOTBALL], "BIOTAG_COLON_MASK",
            np.random.default_rng(0))
        assert out == [["begin", ":", MASK_TOKEN, "inside", ":", MASK_TOKEN,
                        "is", "a", "soccer", "player"]]

    def test_paren_biotag_label(self):
        out = build_contextual_label_inputs(
            self.label(), [FOOTBALL], "PAREN_BIOTAG_LABEL",
            np.random.default_rng(0))
        assert out == [["(", "begin", ")", "person", "(", "inside", ")",
                        "person", "is", "a", "soccer", "player"]]

    def test_budget_caps_sentence_count(self):
        sents = [FOOTBALL] * 25
        out = build_contextual_label_inputs(
            self.label(), sents, "LABEL", np.random.default_rng(1), budget=10)
        assert len(out) == 10

    def test_other_label_gets_no_contexts(self):
        from lsner.corpus import TaggingLabel
        other = TaggingLabel("other", 0, "other", None)
        assert build_contextual_label_inputs(
            other, [FOOTBALL], "LABEL", np.random.default_rng(0)) == []

    def test_no_matching_sentence_gives_empty(self):
        loc = self.label()
        sents = [Sentence(["a"], ["O"])]
        assert build_contextual_label_inputs(
            loc, sents, "LABEL", np.random.default_rng(0)) == []

    def test_select_label_contexts_covers_all_labels(self, two_type_taxonomy):
        labels = expand_tag_labels(two_type_taxonomy)
        scheme = LabelScheme.parse("contextual:LABEL")
        contexts = select_label_contexts(labels, [FOOTBALL], scheme,
                                         np.random.default_rng(0))
        assert set(contexts) == {l.text for l in labels}
        assert contexts["begin location"] == []  # no LOC sentence available


class TestContextualEncoding:
    def test_fallback_to_name_when_no_context(self, small_model):
        m = small_model
        labels = expand_tag_labels(m.taxonomy)
        scheme = LabelScheme.parse("contextual:LABEL")
        empty = {l.text: [] for l in labels}
        ctx = encode_labels(labels, m.label_params, m.vocab,
                            scheme=scheme, contexts=empty)
        plain = encode_labels(labels, m.label_params, m.vocab)
        np.testing.assert_allclose(ctx.data, plain.data)

    def test_contextual_is_mean_over_positions_and_sentences(self, small_model):
        m = small_model
        labels = expand_tag_labels(m.taxonomy)
        scheme = LabelScheme.parse("contextual:LABEL")
        contexts = {l.text: [] for l in labels}
        contexts["begin person"] = [["person", "lives"], ["john"]]
        out = encode_labels(labels, m.label_params, m.vocab,
                            scheme=scheme, contexts=contexts)
        emb = m.label_params.embedding.values
        first = (emb[m.vocab.lookup("person")] + emb[m.vocab.lookup("lives")]) / 2
        second = emb[m.vocab.lookup("john")]
        np.testing.assert_allclose(out.data[1], (first + second) / 2)

    def test_contextual_scheme_requires_contexts(self, small_model):
        m = small_model
        labels = expand_tag_labels(m.taxonomy)
        with pytest.raises(ValueError, match="support contexts"):
            encode_labels(labels, m.label_params, m.vocab,
                          scheme=LabelScheme.parse("contextual:LABEL"))


class TestStaticVectors:
    def test_load_and_coverage(self, tmp_path):
        vocab = build_vocabulary([Sentence(["red", "blue"], ["O", "O"])])
        path = tmp_path / "vecs.txt"
        path.write_text("red 1.0 2.0\ngreen 0.5 0.5\n")
        table, coverage = load_static_vectors(path, vocab, 2,
                                              np.random.default_rng(0))
        assert table.shape == (len(vocab), 2)
        np.testing.assert_allclose(table[vocab.lookup("red")], [1.0, 2.0])
        assert coverage == pytest.approx(1 / len(vocab))

    def test_dimension_mismatch_reports_line(self, tmp_path):
        vocab = build_vocabulary([Sentence(["a"], ["O"])])
        path = tmp_path / "vecs.txt"
        path.write_text("a 1.0 2.0 3.0\n")
        with pytest.raises(ValueError, match=":1:"):
            load_static_vectors(path, vocab, 2, np.random.default_rng(0))
