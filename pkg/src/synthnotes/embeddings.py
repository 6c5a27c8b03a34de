"""Skip-gram negative-sampling word embeddings and the word-pair
similarity/relatedness evaluation (Spearman correlation of cosine scores
against gold ratings)."""

from __future__ import annotations

import collections
import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit as sigmoid
from scipy.stats import spearmanr

from .corpus import Corpus


@dataclass(frozen=True)
class SgnsConfig:
    dim: int = 300
    window: int = 5
    negatives: int = 10
    iterations: int = 10
    min_count: int = 5
    initial_lr: float = 0.025
    min_lr: float = 1e-4
    noise_power: float = 0.75  # negative-sampling distribution exponent
    batch_pairs: int = 512
    seed: int = 0
    workers: int = 1  # >1 trains pair shards in processes and averages them;
                      # conformance (bit-reproducible) mode is workers=1

    def __post_init__(self):
        if self.dim < 1 or self.window < 1 or self.iterations < 1:
            raise ValueError("dim, window and iterations must be >= 1")
        if self.negatives < 1:
            raise ValueError("negatives must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class EmbeddingSet:
    words: tuple[str, ...]
    matrix: np.ndarray  # (len(words), dim)
    config: dict = field(default_factory=dict)
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.matrix.shape[0] != len(self.words):
            raise ValueError("embedding matrix row count != word count")
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("non-finite embedding values")
        object.__setattr__(self, "_index", {w: i for i, w in enumerate(self.words)})

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __contains__(self, word: str) -> bool:
        return word in self._index

    def __len__(self) -> int:
        return len(self.words)

    def vector(self, word: str) -> np.ndarray:
        return self.matrix[self._index[word]]


def extract_window_pairs(tokens: list, window: int) -> list[tuple]:
    """(center, context) pairs within a symmetric fixed window, in order."""
    pairs = []
    n = len(tokens)
    for i in range(n):
        for j in range(max(0, i - window), min(n, i + window + 1)):
            if j != i:
                pairs.append((tokens[i], tokens[j]))
    return pairs


def sgns_pair_loss(center: np.ndarray, context: np.ndarray, negatives: np.ndarray):
    """Loss and gradients of one (center, context, negatives) triple:
    -log s(c.o) - sum_n log s(-c.n). Returns (loss, d_center, d_context, d_negatives)."""
    pos = float(sigmoid(center @ context))
    negs = sigmoid(negatives @ center)
    loss = -np.log(pos) - float(np.sum(np.log(1.0 - negs)))
    d_center = (pos - 1.0) * context + negs @ negatives
    d_context = (pos - 1.0) * center
    d_negatives = negs[:, None] * center[None, :]
    return loss, d_center, d_context, d_negatives


def _noise_cdf(counts: np.ndarray, power: float) -> np.ndarray:
    weights = counts.astype(np.float64) ** power
    return np.cumsum(weights / weights.sum())


def _sgd_pass(w_in, w_out, centers, contexts, cdf, config: SgnsConfig,
              rng: np.random.Generator, seen: int, total_visits: int) -> int:
    """One pass over the given pairs, updating w_in/w_out in place."""
    for lo in range(0, len(centers), config.batch_pairs):
        c = centers[lo : lo + config.batch_pairs]
        o = contexts[lo : lo + config.batch_pairs]
        b = len(c)
        lr = max(config.min_lr, config.initial_lr * (1.0 - seen / total_visits))
        seen += b

        negs = np.searchsorted(cdf, rng.random((b, config.negatives)), side="right")
        targets = np.concatenate([o[:, None], negs], axis=1)  # (B, 1+k)
        labels = np.zeros((b, 1 + config.negatives))
        labels[:, 0] = 1.0
        live = np.ones_like(labels)
        live[:, 1:] = negs != o[:, None]  # skip collided negatives

        l1 = w_in[c]  # (B, D)
        l2 = w_out[targets]  # (B, 1+k, D)
        scores = np.einsum("bd,bkd->bk", l1, l2)
        g = (labels - sigmoid(scores)) * live * lr
        np.add.at(w_out, targets, g[:, :, None] * l1[:, None, :])
        np.add.at(w_in, c, np.einsum("bk,bkd->bd", g, l2))
    return seen


def _shard_task(w_in, w_out, centers, contexts, cdf, config, seed_key, seen, total_visits):
    rng = np.random.default_rng(seed_key)
    _sgd_pass(w_in, w_out, centers, contexts, cdf, config, rng, seen, total_visits)
    return w_in, w_out


def train_sgns(corpus: Corpus, config: SgnsConfig = SgnsConfig()) -> EmbeddingSet:
    """Train skip-gram negative-sampling embeddings on a corpus.

    Single-threaded and deterministic under the config seed. Windows are
    fixed-width, extracted per sentence after dropping words under the
    training min_count; the learning rate decays linearly over all pair
    visits. Negatives are drawn from the unigram distribution raised to
    `noise_power`; a negative that collides with the true context word is
    skipped.
    """
    if len(corpus) == 0 or corpus.word_count == 0:
        raise ValueError("cannot train embeddings on an empty corpus")
    counts = corpus.token_counts()
    words = sorted((w for w, c in counts.items() if c >= config.min_count),
                   key=lambda w: (-counts[w], w))
    if not words:
        raise ValueError(f"no word reaches the embedding min_count {config.min_count}")
    index = {w: i for i, w in enumerate(words)}
    freq = np.array([counts[w] for w in words], dtype=np.int64)

    centers: list[int] = []
    contexts: list[int] = []
    for note in corpus:
        for sent in note.sentences:
            ids = [index[t] for t in sent if t in index]
            for c, o in extract_window_pairs(ids, config.window):
                centers.append(c)
                contexts.append(o)
    if not centers:
        raise ValueError("no usable training pairs (corpus too sparse)")
    centers = np.asarray(centers, dtype=np.int64)
    contexts = np.asarray(contexts, dtype=np.int64)

    rng = np.random.default_rng(config.seed)
    n_words = len(words)
    w_in = rng.uniform(-0.5 / config.dim, 0.5 / config.dim, size=(n_words, config.dim))
    w_out = np.zeros((n_words, config.dim))
    cdf = _noise_cdf(freq, config.noise_power)

    total_visits = config.iterations * len(centers)
    seen = 0
    if config.workers == 1:
        for _ in range(config.iterations):
            seen = _sgd_pass(w_in, w_out, centers, contexts, cdf, config, rng,
                             seen, total_visits)
    else:
        # data-parallel mode: shards train on parameter copies, the results
        # are averaged per iteration; deterministic but not identical to the
        # serial conformance mode
        import concurrent.futures

        shards = np.array_split(np.arange(len(centers)), config.workers)
        with concurrent.futures.ProcessPoolExecutor(max_workers=config.workers) as pool:
            for iteration in range(config.iterations):
                futures = [
                    pool.submit(_shard_task, w_in.copy(), w_out.copy(),
                                centers[idx], contexts[idx], cdf, config,
                                (config.seed, iteration, si), seen, total_visits)
                    for si, idx in enumerate(shards)
                ]
                results = [f.result() for f in futures]
                w_in = np.mean([r[0] for r in results], axis=0)
                w_out = np.mean([r[1] for r in results], axis=0)
                seen += len(centers)

    return EmbeddingSet(
        words=tuple(words),
        matrix=w_in,
        config={
            "dim": config.dim, "window": config.window, "negatives": config.negatives,
            "iterations": config.iterations, "min_count": config.min_count,
            "seed": config.seed,
        },
    )


def cosine(v1: np.ndarray, v2: np.ndarray) -> float:
    n1 = float(np.linalg.norm(v1))
    n2 = float(np.linalg.norm(v2))
    if n1 == 0.0 or n2 == 0.0:
        raise ValueError("cosine similarity of a zero vector is undefined")
    return float(np.dot(v1, v2) / (n1 * n2))


@dataclass(frozen=True)
class SimilarityBenchmark:
    name: str
    pairs: tuple[tuple[str, str, float], ...]

    def __post_init__(self):
        seen = set()
        for w1, w2, _ in self.pairs:
            key = frozenset((w1, w2))
            if key in seen:
                raise ValueError(f"duplicate benchmark pair {w1!r}/{w2!r}")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.pairs)


def evaluate_similarity(emb: EmbeddingSet, bench: SimilarityBenchmark,
                        min_count: int, counts) -> tuple[float, int]:
    """Spearman correlation (average ranks on ties) between gold scores and
    embedding cosine scores, over pairs whose words both reach min_count in
    the embeddings' training corpus."""
    gold = []
    predicted = []
    for w1, w2, score in bench.pairs:
        if counts.get(w1, 0) < min_count or counts.get(w2, 0) < min_count:
            continue
        if w1 not in emb or w2 not in emb:
            continue
        gold.append(score)
        predicted.append(cosine(emb.vector(w1), emb.vector(w2)))
    if len(gold) < 3:
        raise ValueError(
            f"only {len(gold)} usable pairs in benchmark {bench.name!r}; need at least 3")
    rho = spearmanr(gold, predicted).statistic
    return float(rho), len(gold)


def read_benchmark(path: str | Path, name: str | None = None) -> SimilarityBenchmark:
    """CSV with header word1,word2,score."""
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["word1", "word2", "score"]:
            raise ValueError(f"{path}: expected header 'word1,word2,score'")
        pairs = tuple((row[0], row[1], float(row[2])) for row in reader if row)
    return SimilarityBenchmark(name or path.stem, pairs)


def write_benchmark(bench: SimilarityBenchmark, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["word1", "word2", "score"])
        for w1, w2, score in bench.pairs:
            writer.writerow([w1, w2, score])


def write_embeddings(emb: EmbeddingSet, path: str | Path) -> None:
    """word2vec-style text format: '<count> <dim>' then one word per line."""
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(f"{len(emb)} {emb.dim}\n")
        for word, row in zip(emb.words, emb.matrix):
            fh.write(word + " " + " ".join(repr(float(v)) for v in row) + "\n")


def read_embeddings(path: str | Path) -> EmbeddingSet:
    with Path(path).open(encoding="utf-8") as fh:
        count, dim = map(int, fh.readline().split())
        words = []
        rows = np.empty((count, dim))
        for i in range(count):
            parts = fh.readline().rstrip("\n").split(" ")
            words.append(parts[0])
            rows[i] = [float(v) for v in parts[1 : dim + 1]]
    return EmbeddingSet(words=tuple(words), matrix=rows)


def corpus_token_counts(corpus: Corpus) -> collections.Counter:
    return corpus.token_counts()
