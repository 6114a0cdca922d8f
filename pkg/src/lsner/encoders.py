"""Token-side and label-side encoders sharing one d-dimensional space.

Both sides can share the embedding table (tied by default), so a label
name like "person" starts out at the same point as the token "person".
The label side supports the plain name-only representation and the
contextual schemes that substitute the label name into support sentences.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import extract_spans
from .numeric import ParamGroup, apply_contextualizer, init_contextualizer, pool_rows

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
MASK_TOKEN = "<mask>"

CONTEXTUAL_SCHEMES = ("TOKEN", "LABEL", "MASK", "BIOTAG_COLON_MASK",
                      "PAREN_BIOTAG_MASK", "BIOTAG_COLON_LABEL",
                      "PAREN_BIOTAG_LABEL")


@dataclass
class Vocabulary:
    tokens: list
    index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.index:
            self.index = {t: i for i, t in enumerate(self.tokens)}
        assert UNK_TOKEN in self.index

    def __len__(self):
        return len(self.tokens)

    def lookup(self, token):
        return self.index.get(token, self.index[UNK_TOKEN])


def build_vocabulary(sentences, min_freq=1, lowercase=True, extra_tokens=()):
    """Vocabulary from training sentences plus any extra surface forms.

    Label-name words should be passed through `extra_tokens` so the label
    encoder never hits <unk> on its own names.
    """
    from collections import Counter
    counts = Counter()
    for s in sentences:
        for tok in s.tokens:
            counts[tok.lower() if lowercase else tok] += 1
    tokens = [PAD_TOKEN, UNK_TOKEN, MASK_TOKEN]
    for tok, c in counts.items():
        if c >= min_freq:
            tokens.append(tok)
    for tok in extra_tokens:
        tok = tok.lower() if lowercase else tok
        if tok not in tokens[3:] and tok not in (PAD_TOKEN, UNK_TOKEN, MASK_TOKEN):
            tokens.append(tok)
    # dedupe preserving first occurrence
    seen = set()
    uniq = []
    for tok in tokens:
        if tok not in seen:
            seen.add(tok)
            uniq.append(tok)
    return Vocabulary(uniq)


# capitalization feature classes: lower, title, upper, other
N_CASES = 4


def case_index(token):
    if token.islower() or not any(c.isalpha() for c in token):
        return 0
    if token.istitle():
        return 1
    if token.isupper():
        return 2
    return 3


@dataclass
class LabelScheme:
    """How tagging labels are represented: plain names or in context."""

    kind: str = "name"  # "name" | "contextual"
    sub: str | None = None
    budget: int = 10

    @classmethod
    def parse(cls, text):
        if text == "name":
            return cls("name")
        if text.startswith("contextual:"):
            sub = text.split(":", 1)[1]
            if sub not in CONTEXTUAL_SCHEMES:
                raise ValueError(f"unknown contextual sub-scheme {sub!r}")
            return cls("contextual", sub)
        raise ValueError(f"unknown label scheme {text!r}")

    def __str__(self):
        return self.kind if self.kind == "name" else f"contextual:{self.sub}"


@dataclass
class TokenEncoderParams:
    dim: int
    embedding: ParamGroup
    ctx_kind: str
    ctx_params: dict
    caps: ParamGroup | None = None
    lowercase: bool = True
    window: int = 2

    def groups(self):
        out = [self.embedding] + list(self.ctx_params.values())
        if self.caps is not None:
            out.append(self.caps)
        return out


@dataclass
class LabelEncoderParams:
    dim: int
    embedding: ParamGroup  # possibly the same object as the token table
    ctx_kind: str
    ctx_params: dict
    pool: str = "first"
    window: int = 2

    def groups(self):
        return [self.embedding] + list(self.ctx_params.values())


def encode_tokens(sentence, params, vocab):
    """Encode one sentence to a T x d Tensor."""
    if len(sentence) == 0:
        raise ValueError("cannot encode an empty sentence")
    if params.lowercase:
        idx = [vocab.lookup(t.lower()) for t in sentence.tokens]
    else:
        idx = [vocab.lookup(t) for t in sentence.tokens]
    x = ad.take_rows(params.embedding.tensor, idx)
    if params.caps is not None:
        cases = [case_index(t) for t in sentence.tokens]
        x = ad.add(x, ad.take_rows(params.caps.tensor, cases))
    return apply_contextualizer(x, params.ctx_params, params.ctx_kind,
                                window=params.window)


def _encode_token_list(tokens, params, vocab):
    idx = [vocab.lookup(t.lower()) for t in tokens]
    x = ad.take_rows(params.embedding.tensor, idx)
    return apply_contextualizer(x, params.ctx_params, params.ctx_kind,
                                window=params.window)


def _replacement(sub, position_in_span, name_tokens):
    """Token sequence that replaces one entity token under a sub-scheme."""
    bio = "begin" if position_in_span == 0 else "inside"
    if sub == "TOKEN":
        return None  # keep original token
    if sub == "LABEL":
        return list(name_tokens)
    if sub == "MASK":
        return [MASK_TOKEN]
    if sub == "BIOTAG_COLON_LABEL":
        return [bio, ":"] + list(name_tokens)
    if sub == "PAREN_BIOTAG_LABEL":
        return ["(", bio, ")"] + list(name_tokens)
    if sub == "BIOTAG_COLON_MASK":
        return [bio, ":", MASK_TOKEN]
    if sub == "PAREN_BIOTAG_MASK":
        return ["(", bio, ")", MASK_TOKEN]
    raise ValueError(f"unknown sub-scheme {sub!r}")


def build_contextual_label_inputs(label, support_sentences, sub, rng, budget=10):
    """Context token lists for one tagging label.

    Picks up to `budget` distinct support sentences containing an entity
    of the label's type, and in each one rewrites every token of one
    (randomly chosen) occurrence according to the sub-scheme. Returns an
    empty list when no sentence qualifies (callers fall back to the
    name-only representation).
    """
    if label.original is None:
        return []
    eligible = [s for s in support_sentences
                if any(sp.type == label.original for sp in extract_spans(s.tags))]
    if not eligible:
        return []
    n = min(budget, len(eligible))
    picks = rng.choice(len(eligible), size=n, replace=False)
    name_tokens = label.text.split()[1:]  # strip the begin/inside word

    out = []
    for p in sorted(int(i) for i in picks):
        s = eligible[p]
        spans = [sp for sp in extract_spans(s.tags) if sp.type == label.original]
        span = spans[int(rng.integers(len(spans)))]
        tokens = []
        for i, tok in enumerate(s.tokens):
            if span.start <= i < span.end:
                rep = _replacement(sub, i - span.start, name_tokens)
                tokens.extend([tok] if rep is None else rep)
            else:
                tokens.append(tok)
        out.append(tokens)
    return out


def select_label_contexts(labels, support_sentences, scheme, rng):
    """Freeze the contextual inputs for every tagging label at stage start."""
    return {label.text: build_contextual_label_inputs(
        label, support_sentences, scheme.sub, rng, scheme.budget)
        for label in labels}


def encode_labels(labels, params, vocab, scheme=None, contexts=None):
    """Encode the canonical tagging-label list to a (2*N_L - 1) x d Tensor.

    Name-only: whitespace-tokenize each label text, embed, contextualize
    and pool. Contextual: encode each frozen context sentence, mean-pool
    over all positions and average across sentences; labels without any
    context fall back to the name-only path.
    """
    if scheme is None:
        scheme = LabelScheme("name")
    if scheme.kind == "contextual" and contexts is None:
        raise ValueError("contextual label scheme requires support contexts")

    rows = []
    for label in labels:
        ctx_sents = (contexts or {}).get(label.text, ())
        if scheme.kind == "contextual" and ctx_sents:
            pooled = [ad.mean_rows(_encode_token_list(toks, params, vocab))
                      for toks in ctx_sents]
            rows.append(ad.average(pooled))
        else:
            enc = _encode_token_list(label.text.split(), params, vocab)
            rows.append(pool_rows(enc, params.pool))
    return ad.stack_rows(rows)


def load_static_vectors(path, vocab, dim, rng):
    """Initialize an embedding table from a plain-text vector file.

    Returns (table, coverage). Tokens absent from the file get the
    standard random init; the table stays trainable either way.
    """
    vectors = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if len(values) != dim:
                raise ValueError(
                    f"{path}:{lineno}: vector has {len(values)} dims, expected {dim}")
            vectors[token] = np.array([float(v) for v in values])

    table = rng.normal(0.0, 1.0 / np.sqrt(dim), size=(len(vocab), dim))
    covered = 0
    for i, token in enumerate(vocab.tokens):
        if token in vectors:
            table[i] = vectors[token]
            covered += 1
    return table, covered / len(vocab)
