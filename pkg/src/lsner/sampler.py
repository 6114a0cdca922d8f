"""K-shot support set construction and verification.

Counts are entity-level: a multi-token entity is one occurrence. A valid
support set satisfies two criteria: (1) every entity type has at least K
occurrences; (2) removing any single sentence breaks (1) for some type.
"""

from collections import Counter
from dataclasses import dataclass, field

from .corpus import Dataset, extract_spans


class SamplingError(ValueError):
    pass


@dataclass
class SupportSet:
    dataset_name: str
    shot: int
    seed: int | None
    indices: list  # sentence indices into the parent dataset, insertion order
    counts: dict = field(default_factory=dict)  # entity type -> occurrences


@dataclass
class Verdict:
    ok: bool
    reason: str | None = None
    detail: object = None


def count_entity_occurrences(sentences, taxonomy):
    """Per-type entity span counts over a list of sentences."""
    counts = Counter({orig: 0 for orig in taxonomy.originals()})
    for s in sentences:
        for span in extract_spans(s.tags):
            counts[span.type] += 1
    return dict(counts)


def _sentence_counts(dataset):
    per_sentence = []
    for s in dataset.sentences:
        c = Counter()
        for span in extract_spans(s.tags):
            c[span.type] += 1
        per_sentence.append(c)
    return per_sentence


def sample_support(dataset, k, rng):
    """Sample a K-shot support set (greedy add, then one pruning pass).

    Phase 1 walks entity types in taxonomy order and adds uniformly random
    unused sentences containing the type until its count reaches K. Phase 2
    revisits support sentences in insertion order and drops each one whose
    removal keeps every count at K or above.
    """
    if k < 1:
        raise SamplingError("k must be >= 1")
    per_sentence = _sentence_counts(dataset)
    totals = count_entity_occurrences(dataset.sentences, dataset.taxonomy)
    for label in dataset.taxonomy.originals():
        if totals.get(label, 0) < k:
            raise SamplingError(
                f"label {label!r} has only {totals.get(label, 0)} "
                f"occurrences, need {k}")

    chosen = []
    in_support = set()
    counts = Counter({orig: 0 for orig in dataset.taxonomy.originals()})

    for label in dataset.taxonomy.originals():
        while counts[label] < k:
            candidates = [i for i, c in enumerate(per_sentence)
                          if c[label] > 0 and i not in in_support]
            if not candidates:
                raise SamplingError(f"ran out of sentences containing {label!r}")
            pick = candidates[int(rng.integers(len(candidates)))]
            chosen.append(pick)
            in_support.add(pick)
            counts.update(per_sentence[pick])

    for idx in list(chosen):
        trial = counts.copy()
        trial.subtract(per_sentence[idx])
        if all(trial[label] >= k for label in dataset.taxonomy.originals()):
            chosen.remove(idx)
            in_support.remove(idx)
            counts = trial

    return SupportSet(dataset.name, k, None, chosen, dict(counts))


def verify_kshot(dataset, support, k):
    """Check both criteria; criterion 2 via single-sentence deletion trials."""
    sentences = [dataset.sentences[i] for i in support.indices]
    counts = count_entity_occurrences(sentences, dataset.taxonomy)
    for label in dataset.taxonomy.originals():
        if counts.get(label, 0) < k:
            return Verdict(False, "criterion1_failed", label)
    for pos, idx in enumerate(support.indices):
        rest = sentences[:pos] + sentences[pos + 1:]
        rest_counts = count_entity_occurrences(rest, dataset.taxonomy)
        if all(rest_counts.get(label, 0) >= k
               for label in dataset.taxonomy.originals()):
            return Verdict(False, "criterion2_failed", idx)
    return Verdict(True)


def support_dataset(dataset, support):
    """The support set as a Dataset view (for finetuning)."""
    return Dataset(dataset.name + f"-support{support.shot}",
                   [dataset.sentences[i] for i in support.indices],
                   dataset.taxonomy, role=dataset.role)


def serialize_support(support):
    lines = [f"# dataset={support.dataset_name}",
             f"# k={support.shot}",
             f"# seed={'' if support.seed is None else support.seed}"]
    lines += [str(i) for i in support.indices]
    return "\n".join(lines) + "\n"


def parse_support(lines):
    header = {}
    indices = []
    for line in lines:
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            header[key.strip()] = value.strip()
        else:
            indices.append(int(line))
    seed = int(header["seed"]) if header.get("seed") else None
    return SupportSet(header.get("dataset", ""), int(header.get("k", 0)),
                      seed, indices)


def load_support(path):
    with open(path, encoding="utf-8") as f:
        return parse_support(f)
