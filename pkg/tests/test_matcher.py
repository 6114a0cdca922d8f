"""Scoring, prediction, two-stage training, optimizer and label caching."""

import numpy as np
import pytest

from lsner.corpus import LabelTaxonomy, Sentence, rename_taxonomy
from lsner.encoders import build_vocabulary
from lsner.matcher import (Adam, TrainingConfig, build_label_cache,
                           gold_indices, init_model, label_matrix,
                           predict_tags, score_tokens, sentence_loss,
                           taxonomy_hash, train_stage, run_two_stage)
from lsner.numeric import ParamGroup
from lsner.autodiff import Tensor


def param_bytes(model):
    return b"".join(g.values.tobytes() for g in model.param_groups())


class TestScoring:
    def test_dot_product_oracle(self):
        e = np.array([[1.0, 2.0], [0.0, -1.0]])
        b = np.array([[1.0, 1.0], [2.0, 0.0], [0.0, 3.0]])
        np.testing.assert_array_equal(
            score_tokens(e, b), [[3.0, 2.0, 6.0], [-1.0, 0.0, -3.0]])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            score_tokens(np.zeros((2, 3)), np.zeros((4, 2)))

    def test_tensor_path_matches(self):
        rng = np.random.default_rng(0)
        e, b = rng.normal(size=(3, 4)), rng.normal(size=(5, 4))
        np.testing.assert_allclose(score_tokens(Tensor(e.copy()),
                                                Tensor(b.copy())).data,
                                   score_tokens(e, b))


class TestPrediction:
    def test_all_zero_scores_predict_lowest_index(self, tiny_dataset):
        # zero embeddings tie every label; "other" has index 0 and wins
        vocab = build_vocabulary(tiny_dataset.sentences,
                                 extra_tokens=["begin", "inside", "other",
                                               "person", "location"])
        m = init_model(vocab, tiny_dataset.taxonomy, dim=4, seed=0,
                       token_ctx="identity", caps_feature=False,
                       static_table=np.zeros((len(vocab), 4)))
        for s in tiny_dataset.sentences:
            assert predict_tags(m, s) == ["O"] * len(s)

    def test_uniform_scores_loss_is_log_label_count(self, tiny_dataset):
        vocab = build_vocabulary(tiny_dataset.sentences,
                                 extra_tokens=["begin", "inside", "other",
                                               "person", "location"])
        m = init_model(vocab, tiny_dataset.taxonomy, dim=4, seed=0,
                       token_ctx="identity", caps_feature=False,
                       static_table=np.zeros((len(vocab), 4)))
        loss = sentence_loss(m, tiny_dataset.sentences[0])
        n_tagging = 2 * tiny_dataset.taxonomy.n_labels - 1
        assert float(loss.data) == pytest.approx(np.log(n_tagging), rel=1e-12)

    def test_gold_indices(self, small_model):
        s = Sentence(["a", "b", "c"], ["B-PER", "I-LOC", "O"])
        assert gold_indices(s, small_model.tag_labels) == [1, 4, 0]


class TestAdam:
    def test_matches_reference_updates(self):
        g = ParamGroup("w", Tensor(np.array([[1.0, -2.0]])))
        opt = Adam([g], lr=0.1)
        m = v = np.zeros(2)
        ref = np.array([1.0, -2.0])
        for t in range(1, 4):
            grad = np.array([0.5, -1.0]) * t
            g.tensor.grad = grad.reshape(1, 2).copy()
            opt.step()
            m = 0.9 * m + 0.1 * grad
            v = 0.999 * v + 0.001 * grad * grad
            ref -= 0.1 * (m / (1 - 0.9 ** t)) / (
                np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
            np.testing.assert_allclose(g.values[0], ref, rtol=1e-12)

    def test_skips_groups_without_gradients(self):
        g = ParamGroup("w", Tensor(np.ones((1, 1))))
        before = g.values.copy()
        Adam([g]).step()
        np.testing.assert_array_equal(g.values, before)


class TestTrainingConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            TrainingConfig(learning_rate=0.0)
        with pytest.raises(ValueError):
            TrainingConfig(batch_size=0)
        with pytest.raises(ValueError):
            TrainingConfig(finetune_epochs=-1)


class TestTrainStage:
    def test_zero_epochs_leave_parameters_untouched(self, tiny_dataset, small_model):
        before = param_bytes(small_model)
        trace = train_stage(small_model, tiny_dataset,
                            TrainingConfig(finetune_epochs=0))
        assert trace == []
        assert param_bytes(small_model) == before

    def test_rerun_from_same_state_is_bit_identical(self, tiny_dataset):
        def fresh():
            vocab = build_vocabulary(tiny_dataset.sentences,
                                     extra_tokens=["begin", "inside", "other",
                                                   "person", "location"])
            return init_model(vocab, tiny_dataset.taxonomy, dim=8, seed=7)

        results = []
        for _ in range(2):
            m = fresh()
            train_stage(m, tiny_dataset, TrainingConfig(finetune_epochs=3, seed=1))
            results.append(param_bytes(m))
        assert results[0] == results[1]

    def test_loss_decreases(self, tiny_dataset):
        vocab = build_vocabulary(tiny_dataset.sentences,
                                 extra_tokens=["begin", "inside", "other",
                                               "person", "location"])
        m = init_model(vocab, tiny_dataset.taxonomy, dim=8, seed=2,
                       token_ctx="identity")
        trace = train_stage(m, tiny_dataset, TrainingConfig(finetune_epochs=30))
        assert trace[-1] < trace[0]

    def test_empty_dataset_rejected(self, small_model, two_type_taxonomy):
        from lsner.corpus import Dataset
        empty = Dataset.__new__(Dataset)
        empty.name, empty.sentences, empty.taxonomy = "e", [], two_type_taxonomy
        with pytest.raises(ValueError, match="empty"):
            train_stage(small_model, empty, TrainingConfig())

    def test_gradients_reach_both_encoders(self, tiny_dataset):
        # untied tables: both must move during a training step
        vocab = build_vocabulary(tiny_dataset.sentences,
                                 extra_tokens=["begin", "inside", "other",
                                               "person", "location"])
        m = init_model(vocab, tiny_dataset.taxonomy, dim=8, seed=0,
                       token_ctx="identity", tie_embeddings=False)
        tok_before = m.token_params.embedding.values.copy()
        lab_before = m.label_params.embedding.values.copy()
        train_stage(m, tiny_dataset, TrainingConfig(finetune_epochs=1))
        assert not np.array_equal(m.token_params.embedding.values, tok_before)
        assert not np.array_equal(m.label_params.embedding.values, lab_before)


class TestTwoStage:
    def test_only_label_list_changes_at_boundary(self, tiny_dataset):
        from lsner.corpus import Dataset
        vocab = build_vocabulary(tiny_dataset.sentences,
                                 extra_tokens=["begin", "inside", "other",
                                               "person", "location", "city"])
        source_tax = LabelTaxonomy([("PER", "person")])
        source = Dataset("src", [s for s in tiny_dataset.sentences
                                 if all(t == "O" or t.endswith("PER") for t in s.tags)],
                         source_tax, role="source")
        m = init_model(vocab, source_tax, dim=8, seed=1, token_ctx="identity")
        cfg = TrainingConfig(prefinetune_epochs=2, finetune_epochs=0)
        train_stage(m, source, cfg, stage="prefinetune")
        after_stage1 = param_bytes(m)
        m.set_taxonomy(tiny_dataset.taxonomy)
        # swapping the taxonomy rebuilds tagging labels but keeps weights
        assert param_bytes(m) == after_stage1
        assert [l.text for l in m.tag_labels] == \
            ["other", "begin person", "inside person",
             "begin location", "inside location"]

    def test_run_two_stage_returns_both_traces(self, tiny_dataset):
        vocab = build_vocabulary(tiny_dataset.sentences,
                                 extra_tokens=["begin", "inside", "other",
                                               "person", "location"])
        m = init_model(vocab, tiny_dataset.taxonomy, dim=8, seed=1,
                       token_ctx="identity")
        cfg = TrainingConfig(prefinetune_epochs=2, finetune_epochs=3)
        _, traces = run_two_stage(m, tiny_dataset, tiny_dataset, cfg)
        assert len(traces["prefinetune"]) == 2
        assert len(traces["finetune"]) == 3

    def test_skips_prefinetune_without_source(self, tiny_dataset, small_model):
        _, traces = run_two_stage(small_model, None, tiny_dataset,
                                  TrainingConfig(finetune_epochs=1))
        assert set(traces) == {"finetune"}


class TestLabelCache:
    def test_cached_predictions_match_recomputed(self, tiny_dataset, small_model):
        cache = build_label_cache(small_model)
        assert cache.matrix.shape[0] == 2 * tiny_dataset.taxonomy.n_labels - 1
        for s in tiny_dataset.sentences:
            assert predict_tags(small_model, s, cache=cache) == \
                predict_tags(small_model, s)

    def test_stale_cache_rejected(self, small_model):
        cache = build_label_cache(small_model)
        renamed = rename_taxonomy(small_model.taxonomy, "meaningless")
        small_model.set_taxonomy(renamed)
        with pytest.raises(ValueError, match="cache"):
            predict_tags(small_model, Sentence(["a"], ["O"]), cache=cache)

    def test_taxonomy_hash_tracks_naming(self, two_type_taxonomy):
        h1 = taxonomy_hash(two_type_taxonomy)
        assert h1 == taxonomy_hash(LabelTaxonomy(list(two_type_taxonomy.types)))
        assert h1 != taxonomy_hash(rename_taxonomy(two_type_taxonomy, "meaningless"))


class TestModelState:
    def test_tied_embeddings_share_one_group(self, small_model):
        names = [g.name for g in small_model.param_groups()]
        assert names.count("embedding") == 1
        assert small_model.tied

    def test_untied_models_have_two_tables(self, tiny_dataset):
        vocab = build_vocabulary(tiny_dataset.sentences)
        m = init_model(vocab, tiny_dataset.taxonomy, dim=4, seed=0,
                       tie_embeddings=False)
        names = [g.name for g in m.param_groups()]
        assert "embedding" in names and "label_embedding" in names
        assert not m.tied

    def test_label_pool_defaults(self, tiny_dataset):
        vocab = build_vocabulary(tiny_dataset.sentences)
        static = init_model(vocab, tiny_dataset.taxonomy, dim=4,
                            label_ctx="identity")
        learned = init_model(vocab, tiny_dataset.taxonomy, dim=4,
                             label_ctx="self-attention")
        assert static.label_params.pool == "max"
        assert learned.label_params.pool == "first"

    def test_static_table_shape_checked(self, tiny_dataset):
        vocab = build_vocabulary(tiny_dataset.sentences)
        with pytest.raises(ValueError, match="static table"):
            init_model(vocab, tiny_dataset.taxonomy, dim=4,
                       static_table=np.zeros((3, 4)))
