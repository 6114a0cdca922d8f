"""Token/label matching, two-stage training and cached inference.

The prediction rule is a raw dot product between token and label
representations followed by per-token argmax (lowest index on ties).
Training is mean token cross-entropy with Adam; both encoders receive
gradients on every iteration.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import expand_tag_labels, surface_tag
from .encoders import (LabelEncoderParams, LabelScheme, TokenEncoderParams,
                       encode_labels, encode_tokens, select_label_contexts)
from .numeric import ParamGroup, init_contextualizer, token_cross_entropy


@dataclass
class TrainingConfig:
    # the published recipe uses lr 1e-5 for a pretrained 110M-parameter
    # encoder; a randomly initialized desk-scale model needs 1e-3
    learning_rate: float = 1e-3
    batch_size: int = 10
    prefinetune_epochs: int = 3
    finetune_epochs: int = 200
    optimizer: str = "adam"
    seed: int = 0
    scheme: str = "name"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1 or self.prefinetune_epochs < 0 or self.finetune_epochs < 0:
            raise ValueError("counts must be non-negative, batch size positive")


@dataclass
class ModelState:
    vocab: object
    token_params: TokenEncoderParams
    label_params: LabelEncoderParams
    taxonomy: object = None
    tag_labels: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    seed: int = 0

    def set_taxonomy(self, taxonomy):
        """Rebuild the tagging-label list; no parameter is touched."""
        self.taxonomy = taxonomy
        self.tag_labels = expand_tag_labels(taxonomy)

    def param_groups(self):
        """All trainable groups, deduplicated (embedding may be tied)."""
        out = []
        seen = set()
        for g in self.token_params.groups() + self.label_params.groups():
            if id(g) not in seen:
                seen.add(id(g))
                out.append(g)
        return out

    @property
    def tied(self):
        return self.token_params.embedding is self.label_params.embedding


@dataclass
class LabelCache:
    taxonomy_hash: str
    matrix: np.ndarray
    meta: dict = field(default_factory=dict)


def taxonomy_hash(taxonomy):
    h = hashlib.sha256()
    h.update(b"other\x00")
    for orig, nat in taxonomy.types:
        h.update(orig.encode())
        h.update(b"\x00")
        h.update(nat.encode())
        h.update(b"\x00")
    return h.hexdigest()


def init_model(vocab, taxonomy, dim=32, seed=0, token_ctx="self-attention",
               label_ctx="identity", label_pool=None, tie_embeddings=True,
               caps_feature=True, lowercase=True, window=2,
               static_table=None, config=None):
    """Build a fresh ModelState.

    `label_pool` defaults to "first" for a learned label contextualizer
    and "max" for the static-vector style (identity contextualizer).
    `static_table` optionally seeds the embedding table.
    """
    rng = np.random.default_rng(seed)
    if static_table is not None:
        table = np.asarray(static_table, dtype=float)
        if table.shape != (len(vocab), dim):
            raise ValueError(f"static table shape {table.shape} != {(len(vocab), dim)}")
    else:
        table = rng.normal(0.0, 1.0 / np.sqrt(dim), size=(len(vocab), dim))
    embedding = ParamGroup("embedding", Tensor(table))

    token_params = TokenEncoderParams(
        dim=dim, embedding=embedding,
        ctx_kind=token_ctx,
        ctx_params=init_contextualizer(token_ctx, dim, rng, prefix="tok"),
        caps=ParamGroup("caps", Tensor(np.zeros((4, dim)))) if caps_feature else None,
        lowercase=lowercase, window=window)

    if tie_embeddings:
        label_embedding = embedding
    else:
        label_embedding = ParamGroup(
            "label_embedding",
            Tensor(rng.normal(0.0, 1.0 / np.sqrt(dim), size=(len(vocab), dim))))
    if label_pool is None:
        label_pool = "max" if label_ctx == "identity" else "first"
    label_params = LabelEncoderParams(
        dim=dim, embedding=label_embedding,
        ctx_kind=label_ctx,
        ctx_params=init_contextualizer(label_ctx, dim, rng, prefix="lab"),
        pool=label_pool, window=window)

    model = ModelState(vocab, token_params, label_params, seed=seed,
                       config=dict(config or {}))
    model.config.setdefault("dim", dim)
    model.config.setdefault("token_ctx", token_ctx)
    model.config.setdefault("label_ctx", label_ctx)
    model.config.setdefault("label_pool", label_pool)
    model.config.setdefault("tie_embeddings", tie_embeddings)
    model.config.setdefault("caps_feature", caps_feature)
    model.config.setdefault("lowercase", lowercase)
    model.config.setdefault("window", window)
    model.set_taxonomy(taxonomy)
    return model


def score_tokens(e, b):
    """Raw dot-product logits, T x L. No temperature, no bias."""
    e_data = e.data if isinstance(e, Tensor) else np.asarray(e, dtype=float)
    b_data = b.data if isinstance(b, Tensor) else np.asarray(b, dtype=float)
    if e_data.shape[1] != b_data.shape[1]:
        raise ValueError(
            f"dimension mismatch: tokens {e_data.shape} vs labels {b_data.shape}")
    if isinstance(e, Tensor) or isinstance(b, Tensor):
        et = e if isinstance(e, Tensor) else Tensor(e_data)
        bt = b if isinstance(b, Tensor) else Tensor(b_data)
        return ad.matmul(et, ad.transpose(bt))
    return e_data @ b_data.T


def label_matrix(model, scheme=None, contexts=None):
    """Current label representations as a Tensor, (2*N_L - 1) x d."""
    return encode_labels(model.tag_labels, model.label_params, model.vocab,
                         scheme=scheme, contexts=contexts)


def predict_tags(model, sentence, cache=None):
    """Per-token argmax prediction mapped back to surface BIO tags.

    With a LabelCache the label encoder is not run; the cache must match
    the model's current taxonomy.
    """
    with ad.no_grad():
        if cache is not None:
            if cache.taxonomy_hash != taxonomy_hash(model.taxonomy):
                raise ValueError("label cache does not match the current taxonomy")
            b = cache.matrix
        else:
            b = label_matrix(model).data
        e = encode_tokens(sentence, model.token_params, model.vocab).data
    logits = e @ b.T
    picks = np.argmax(logits, axis=1)  # first max wins on ties
    return [surface_tag(model.tag_labels[i]) for i in picks]


def gold_indices(sentence, tag_labels):
    by_surface = {surface_tag(lbl): lbl.index for lbl in tag_labels}
    return [by_surface[t] for t in sentence.tags]


def sentence_loss(model, sentence, labels=None, scheme=None, contexts=None):
    """Cross-entropy of one sentence; gradients reach both encoders."""
    if labels is None:
        labels = label_matrix(model, scheme=scheme, contexts=contexts)
    e = encode_tokens(sentence, model.token_params, model.vocab)
    logits = score_tokens(e, labels)
    return token_cross_entropy(logits, gold_indices(sentence, model.tag_labels))


class Adam:
    """Bias-corrected adaptive-moment optimizer over ParamGroups."""

    def __init__(self, groups, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.groups = list(groups)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(g.values) for g in self.groups]
        self.v = [np.zeros_like(g.values) for g in self.groups]

    def zero_grad(self):
        for g in self.groups:
            g.zero_grad()

    def step(self):
        self.t += 1
        for i, g in enumerate(self.groups):
            grad = g.grad
            if grad is None:
                continue
            self.m[i] = self.b1 * self.m[i] + (1 - self.b1) * grad
            self.v[i] = self.b2 * self.v[i] + (1 - self.b2) * grad * grad
            mhat = self.m[i] / (1 - self.b1 ** self.t)
            vhat = self.v[i] / (1 - self.b2 ** self.t)
            g.tensor.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def train_stage(model, dataset, config, stage="finetune", support_sentences=None,
                trace_hook=None):
    """One training stage; returns the per-epoch mean loss trace.

    The tagging-label list is rebuilt from the dataset taxonomy at stage
    start; every parameter persists. Contextual label inputs are selected
    once here and frozen for the whole stage.
    """
    if not dataset.sentences:
        raise ValueError("cannot train on an empty dataset")
    model.set_taxonomy(dataset.taxonomy)
    scheme = LabelScheme.parse(config.scheme)

    epochs = (config.prefinetune_epochs if stage == "prefinetune"
              else config.finetune_epochs)
    rng = np.random.default_rng([config.seed, 0 if stage == "prefinetune" else 1])

    contexts = None
    if scheme.kind == "contextual":
        if support_sentences is None:
            support_sentences = dataset.sentences
        contexts = select_label_contexts(model.tag_labels, support_sentences,
                                         scheme, rng)

    opt = Adam(model.param_groups(), lr=config.learning_rate)
    n = len(dataset.sentences)
    trace = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        epoch_tokens = 0
        for start in range(0, n, config.batch_size):
            batch = [dataset.sentences[i] for i in order[start:start + config.batch_size]]
            opt.zero_grad()
            labels = label_matrix(model, scheme=scheme, contexts=contexts)
            # per-token mean over the whole batch
            parts = []
            total_tokens = sum(len(s) for s in batch)
            for s in batch:
                loss_s = sentence_loss(model, s, labels=labels)
                parts.append(ad.scale(loss_s, len(s) / total_tokens))
            loss = parts[0]
            for p in parts[1:]:
                loss = ad.add(loss, p)
            loss.backward()
            opt.step()
            epoch_loss += float(loss.data) * total_tokens
            epoch_tokens += total_tokens
        trace.append(epoch_loss / max(epoch_tokens, 1))
        if trace_hook is not None:
            trace_hook(stage, epoch, trace[-1])
    return trace


def run_two_stage(model, source, target_support, config, trace_hook=None):
    """Pre-finetune on the source (if any), then finetune on the support.

    Only the tagging-label list changes at the stage boundary; no
    parameter array is reset or reinitialized.
    """
    traces = {}
    if source is not None:
        traces["prefinetune"] = train_stage(model, source, config,
                                            stage="prefinetune",
                                            trace_hook=trace_hook)
    traces["finetune"] = train_stage(model, target_support, config,
                                     stage="finetune",
                                     support_sentences=target_support.sentences,
                                     trace_hook=trace_hook)
    return model, traces


def build_label_cache(model, scheme=None, contexts=None, meta=None):
    """Freeze the current label representations for cached inference."""
    with ad.no_grad():
        matrix = label_matrix(model, scheme=scheme, contexts=contexts).data.copy()
    return LabelCache(taxonomy_hash(model.taxonomy), matrix,
                      dict(meta or {"seed": model.seed}))
