"""Short-text clustering with the Gibbs-sampling Dirichlet multinomial mixture.

Each document belongs to exactly one cluster.  A collapsed Gibbs sampler
repeatedly removes a document from its cluster and reassigns it with
probability proportional to

    (m_k + alpha) * prod_w prod_{j<c_w} (n_kw + beta + j)
                  / prod_{i<N_d} (n_k + V*beta + i)

where m_k is the number of documents in cluster k, n_kw the count of word w
in cluster k, n_k the cluster's token total, c_w the count of w in the
document and N_d the document length.  Clusters that empty out are dropped
at the end and the survivors are relabelled densely.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, InputError

DEFAULT_STOPWORDS = frozenset(
    """a an and are as at be but by for from has have he her his i in is it its
    me my not of on or our she so that the their them they this to was we were
    what when which who will with you your""".split()
)


@dataclass(frozen=True)
class Corpus:
    documents: tuple[tuple[int, ...], ...]
    vocab_size: int
    doc_ids: tuple[str, ...]
    vocab: tuple[str, ...] = ()

    def __post_init__(self):
        if self.vocab_size <= 0:
            raise InputError("vocab_size must be positive")
        if not self.documents:
            raise InputError("corpus is empty")
        if len(self.doc_ids) != len(self.documents):
            raise InputError("doc_ids and documents differ in length")
        for doc_id, doc in zip(self.doc_ids, self.documents):
            if not doc:
                raise InputError(f"document {doc_id!r} has no tokens")
            if min(doc) < 0 or max(doc) >= self.vocab_size:
                raise InputError(f"document {doc_id!r} has a token id outside [0, {self.vocab_size})")

    @classmethod
    def from_token_lists(cls, docs: Sequence[Sequence[str]], doc_ids: Sequence[str] | None = None) -> "Corpus":
        """Build a corpus from string tokens; ids follow first appearance."""
        vocab: dict[str, int] = {}
        encoded = []
        for doc in docs:
            encoded.append(tuple(vocab.setdefault(tok, len(vocab)) for tok in doc))
        if doc_ids is None:
            doc_ids = [str(i) for i in range(len(encoded))]
        return cls(tuple(encoded), len(vocab), tuple(doc_ids), tuple(vocab))

    def __len__(self):
        return len(self.documents)


@dataclass(frozen=True)
class ClusteringConfig:
    max_clusters: int = 40
    alpha: float = 0.1
    beta: float = 0.1
    iterations: int = 30
    seed: int = 0
    map_decode: bool = True

    def __post_init__(self):
        if self.max_clusters < 1:
            raise ConfigError("max_clusters must be >= 1")
        if not (self.alpha > 0 and self.beta > 0):
            raise ConfigError("alpha and beta must be positive")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")


@dataclass(frozen=True)
class TopicUniverse:
    """The J topics produced by clustering.

    ``source_clusters[j]`` is the sampler's cluster id that became topic j.
    """

    num_topics: int
    source_clusters: tuple[int, ...] = ()
    sizes: tuple[int, ...] = ()

    @property
    def labels(self) -> tuple[int, ...]:
        return tuple(range(self.num_topics))


@dataclass(frozen=True)
class TopicAssignment:
    labels: tuple[int, ...]
    occupied_clusters: tuple[int, ...]
    topic_universe: TopicUniverse
    occupied_history: tuple[int, ...] = field(default=(), compare=False)

    @classmethod
    def from_labels(cls, labels: Sequence[int], history: Sequence[int] = ()) -> "TopicAssignment":
        labels = tuple(int(x) for x in labels)
        counts = Counter(labels)
        occupied = tuple(sorted(counts))
        universe = TopicUniverse(len(occupied), occupied, tuple(counts[k] for k in occupied))
        return cls(labels, occupied, universe, tuple(history))


def tokenize(text: str, stopwords=DEFAULT_STOPWORDS) -> list[str]:
    """Whitespace/punctuation split, lowercase, stopword removal.

    Intended for synthetic corpora; it does no stemming.
    """
    return [tok for tok in re.findall(r"[a-z0-9]+", text.lower()) if tok not in stopwords]


def conditional_distribution(
    doc_words: np.ndarray,
    doc_offsets: np.ndarray,
    cluster_docs: np.ndarray,
    cluster_tokens: np.ndarray,
    cluster_word_counts: np.ndarray,
    alpha: float,
    beta: float,
) -> np.ndarray:
    """Normalized reassignment probabilities of one (removed) document.

    ``doc_words[i]`` is the word at the i-th token after sorting and
    ``doc_offsets[i]`` how many earlier tokens of the same word precede it.
    """
    vocab_size = cluster_word_counts.shape[1]
    n_tokens = len(doc_words)
    log_p = np.log(cluster_docs + alpha)
    log_p += np.log(cluster_word_counts[:, doc_words] + beta + doc_offsets).sum(axis=1)
    log_p -= np.log(cluster_tokens[:, None] + vocab_size * beta + np.arange(n_tokens)).sum(axis=1)
    p = np.exp(log_p - log_p.max())
    return p / p.sum()


def _doc_layout(doc: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    words = np.sort(np.asarray(doc, dtype=np.int64))
    offsets = np.zeros(len(words))
    for i in range(1, len(words)):
        if words[i] == words[i - 1]:
            offsets[i] = offsets[i - 1] + 1
    return words, offsets


def fit_gsdmm(corpus: Corpus, cfg: ClusteringConfig = ClusteringConfig()) -> TopicAssignment:
    """Run ``cfg.iterations`` Gibbs sweeps and return compacted topic labels.

    With ``cfg.map_decode`` the sweeps are followed by one pass that assigns
    each document to the argmax of its conditional distribution.

    Randomness comes from numpy's PCG64 generator seeded with ``cfg.seed``,
    so a given (corpus, cfg) always yields the same assignment.
    """
    if not isinstance(corpus, Corpus):
        raise InputError("expected a Corpus")
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    n_clusters = cfg.max_clusters
    cluster_docs = np.zeros(n_clusters)
    cluster_tokens = np.zeros(n_clusters)
    word_counts = np.zeros((n_clusters, corpus.vocab_size))

    layouts = [_doc_layout(doc) for doc in corpus.documents]
    labels = rng.integers(0, n_clusters, size=len(corpus))

    def move(d, k, sign):
        words = layouts[d][0]
        cluster_docs[k] += sign
        cluster_tokens[k] += sign * len(words)
        np.add.at(word_counts[k], words, sign)

    def reassign(d, pick):
        move(d, labels[d], -1)
        words, offsets = layouts[d]
        p = conditional_distribution(words, offsets, cluster_docs, cluster_tokens, word_counts, cfg.alpha, cfg.beta)
        labels[d] = pick(p)
        move(d, labels[d], +1)

    def sample(p):
        return min(int(np.searchsorted(np.cumsum(p), rng.random(), side="right")), n_clusters - 1)

    for d in range(len(layouts)):
        move(d, labels[d], +1)

    history = []
    for _ in range(cfg.iterations):
        for d in range(len(layouts)):
            reassign(d, sample)
        history.append(int(np.count_nonzero(cluster_docs)))

    if cfg.map_decode:
        # deterministic argmax pass; clears isolated documents left by the last random sweep
        for d in range(len(layouts)):
            reassign(d, lambda p: int(np.argmax(p)))
        history.append(int(np.count_nonzero(cluster_docs)))

    return relabel_compact(TopicAssignment.from_labels(labels, history))


def relabel_compact(assignment: TopicAssignment) -> TopicAssignment:
    """Map cluster ids to 0..J-1 in order of first appearance."""
    mapping: dict[int, int] = {}
    for label in assignment.labels:
        mapping.setdefault(label, len(mapping))
    labels = tuple(mapping[x] for x in assignment.labels)
    source = {new: old for old, new in mapping.items()}
    # keep the sampler's original ids when relabelling an already-compacted result
    prev = assignment.topic_universe.source_clusters
    prev_map = dict(zip(assignment.occupied_clusters, prev)) if prev else {}
    counts = Counter(labels)
    universe = TopicUniverse(
        len(mapping),
        tuple(prev_map.get(source[j], source[j]) for j in range(len(mapping))),
        tuple(counts[j] for j in range(len(mapping))),
    )
    return TopicAssignment(labels, tuple(range(len(mapping))), universe, assignment.occupied_history)


def topic_histogram(assignment: TopicAssignment) -> list[tuple[int, int]]:
    """(topic, count) pairs, largest first, ties by topic id."""
    counts = Counter(assignment.labels)
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


def read_corpus(path: str | Path) -> Corpus:
    """Read ``doc_id<TAB>space-separated tokens`` lines."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"corpus file not found: {path}")
    ids, docs = [], []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        doc_id, sep, text = line.partition("\t")
        if not sep:
            raise InputError(f"{path}:{lineno}: expected doc_id<TAB>tokens")
        tokens = text.split()
        if not tokens:
            raise InputError(f"{path}:{lineno}: document {doc_id!r} has no tokens")
        ids.append(doc_id)
        docs.append(tokens)
    return Corpus.from_token_lists(docs, ids)


def write_assignment(path: str | Path, corpus: Corpus, assignment: TopicAssignment) -> None:
    lines = [f"{doc_id}\t{label}" for doc_id, label in zip(corpus.doc_ids, assignment.labels)]
    lines.append(f"J={assignment.topic_universe.num_topics}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_assignment(path: str | Path) -> dict[str, int]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("J=") or not line.strip():
            continue
        doc_id, label = line.split("\t")
        out[doc_id] = int(label)
    return out
