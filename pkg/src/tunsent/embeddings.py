"""Subword-aware skipgram embeddings trained with negative sampling.

Two subword schemes share one trainer:

* character n-grams hashed into a fixed bucket table (FNV-1a-32), so unseen
  words still get vectors;
* byte-pair-encoded subunits, one table row per learned subunit, no hashing.

A word is represented during training and lookup as the mean of its own
vector row (when in vocabulary) and its subword rows; a sentence is the mean
of its word vectors. Single-worker training is deterministic for a fixed
config and seed.
"""

from __future__ import annotations

import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"TNZEMB01"

_FNV_OFFSET = 0x811C9DC5
_FNV_PRIME = 0x01000193


class EmbeddingError(ValueError):
    pass


class EmptyVocabularyError(EmbeddingError):
    """No token reached the min_count threshold."""


class TrainingError(RuntimeError):
    """Training diverged (non-finite loss) or could not run."""


@dataclass(frozen=True)
class EmbedConfig:
    dim: int = 100
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    learning_rate: float = 0.05
    n_min: int = 3
    n_max: int = 6
    bucket_count: int = 1 << 18
    min_count: int = 2
    seed: int = 1

    def validate(self) -> None:
        if self.dim < 1:
            raise EmbeddingError("dim must be >= 1")
        if self.window < 1:
            raise EmbeddingError("window must be >= 1")
        if self.negatives < 1:
            raise EmbeddingError("negatives must be >= 1")
        if self.epochs < 0:
            raise EmbeddingError("epochs must be >= 0")
        if self.learning_rate <= 0:
            raise EmbeddingError("learning_rate must be > 0")
        if not (1 <= self.n_min <= self.n_max):
            raise EmbeddingError("need 1 <= n_min <= n_max")
        if self.bucket_count < 1:
            raise EmbeddingError("bucket_count must be >= 1")
        if self.min_count < 1:
            raise EmbeddingError("min_count must be >= 1")


@dataclass
class Vocabulary:
    words: list[tuple[str, int]]  # (surface form, corpus frequency), id order
    index: dict[str, int]
    min_count: int
    total_tokens: int

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.index


def build_vocab(documents, min_count: int) -> Vocabulary:
    """Count tokens and keep those with frequency >= min_count.

    Ids are dense 0..V-1, ordered by descending frequency then
    lexicographically, so identical corpora always yield identical ids.
    """
    counts = Counter()
    total = 0
    for tokens in documents:
        counts.update(tokens)
        total += len(tokens)
    kept = sorted(
        ((w, f) for w, f in counts.items() if f >= min_count),
        key=lambda wf: (-wf[1], wf[0]),
    )
    if not kept:
        raise EmptyVocabularyError(
            f"no token reached min_count={min_count} (saw {len(counts)} distinct tokens)"
        )
    index = {w: i for i, (w, _) in enumerate(kept)}
    return Vocabulary(words=kept, index=index, min_count=min_count, total_tokens=total)


def fnv1a_32(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & 0xFFFFFFFF
    return h


@dataclass(frozen=True)
class SubwordIndex:
    n_min: int = 3
    n_max: int = 6
    bucket_count: int = 1 << 18


def char_ngrams(word: str, n_min: int, n_max: int) -> list[str]:
    """All sliding character n-grams of '<word>' with n in [n_min, n_max]."""
    wrapped = f"<{word}>"
    grams = []
    for n in range(n_min, n_max + 1):
        for i in range(len(wrapped) - n + 1):
            grams.append(wrapped[i : i + n])
    return grams


def extract_ngrams(word: str, index: SubwordIndex) -> list[int]:
    """Bucket ids for the word's character n-grams, in enumeration order.

    The wrapped word gets no extra entry beyond its sliding n-grams; its
    whole-word representation lives in the vocabulary table instead.
    """
    if not word:
        raise EmbeddingError("cannot extract n-grams of an empty word")
    return [
        fnv1a_32(g.encode("utf-8")) % index.bucket_count
        for g in char_ngrams(word, index.n_min, index.n_max)
    ]


# ---------------------------------------------------------------------------
# Byte pair encoding


@dataclass
class BpeModel:
    merges: list[tuple[str, str]]
    symbols: list[str]  # initial characters plus one merged symbol per merge
    _ranks: dict[tuple[str, str], int] = field(init=False, repr=False)

    def __post_init__(self):
        self._ranks = {pair: i for i, pair in enumerate(self.merges)}


def _merge_once(symbols: list[str], pair: tuple[str, str], merged: str) -> list[str]:
    out = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == pair[0] and symbols[i + 1] == pair[1]:
            out.append(merged)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return out


def _learn_bpe_from_frequencies(freqs: dict[str, int], num_merges: int) -> BpeModel:
    seqs = {word: list(word) for word in freqs}
    merges: list[tuple[str, str]] = []
    for _ in range(num_merges):
        pair_counts: Counter = Counter()
        for word, f in freqs.items():
            s = seqs[word]
            for a, b in zip(s, s[1:]):
                pair_counts[(a, b)] += f
        if not pair_counts:
            break
        best, best_count = min(pair_counts.items(), key=lambda kv: (-kv[1], kv[0]))
        if best_count < 2:
            break
        merges.append(best)
        merged = best[0] + best[1]
        for word in seqs:
            seqs[word] = _merge_once(seqs[word], best, merged)
    symbols = sorted({ch for word in freqs for ch in word})
    symbols.extend(a + b for a, b in merges)
    return BpeModel(merges=merges, symbols=symbols)


def learn_bpe(documents, num_merges: int) -> BpeModel:
    """Learn merges from a tokenized corpus.

    Repeatedly merges the most frequent adjacent symbol pair (ties broken
    lexicographically); stops after num_merges merges or once the best pair
    occurs fewer than twice.
    """
    if num_merges < 0:
        raise EmbeddingError("num_merges must be >= 0")
    freqs = Counter(token for tokens in documents for token in tokens)
    if not freqs:
        raise EmbeddingError("cannot learn BPE merges from an empty corpus")
    return _learn_bpe_from_frequencies(dict(freqs), num_merges)


def bpe_segment(model: BpeModel, word: str) -> list[str]:
    """Segment a word by applying merges greedily in priority order."""
    if not word:
        raise EmbeddingError("cannot segment an empty word")
    symbols = list(word)
    while len(symbols) >= 2:
        pairs = set(zip(symbols, symbols[1:]))
        best = min(pairs, key=lambda p: model._ranks.get(p, len(model.merges)))
        if best not in model._ranks:
            break
        symbols = _merge_once(symbols, best, best[0] + best[1])
    return symbols


# ---------------------------------------------------------------------------
# Model


@dataclass
class EmbeddingModel:
    config: EmbedConfig
    vocab: Vocabulary
    subwords: SubwordIndex | None  # n-gram hashing variant
    bpe: BpeModel | None  # BPE subunit variant
    input_vectors: np.ndarray  # (V + subword rows, dim) float32
    output_vectors: np.ndarray  # (V, dim) float32
    training_losses: list[float] = field(default_factory=list)
    _subunit_index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self._subunit_index = {}
        if self.bpe is not None:
            for i, s in enumerate(self.bpe.symbols):
                self._subunit_index.setdefault(s, i)

    @property
    def dim(self) -> int:
        return self.config.dim

    def subword_rows(self, word: str) -> np.ndarray:
        """Rows in input_vectors for the word's subword units (not the word row)."""
        v = len(self.vocab)
        if self.bpe is not None:
            rows = [
                v + self._subunit_index[s]
                for s in bpe_segment(self.bpe, word)
                if s in self._subunit_index
            ]
            return np.asarray(rows, dtype=np.int64)
        ids = extract_ngrams(word, self.subwords)
        return v + np.asarray(ids, dtype=np.int64)


def word_vector(model: EmbeddingModel, word: str) -> np.ndarray:
    """Mean of the word's own row (when in vocabulary) and its subword rows.

    Out-of-vocabulary words fall back to subword rows alone and never fail;
    a word with no known subword units maps to the zero vector.
    """
    if not word:
        raise EmbeddingError("cannot embed an empty word")
    rows = model.subword_rows(word)
    wid = model.vocab.index.get(word)
    if wid is not None:
        rows = np.concatenate(([wid], rows))
    if rows.size == 0:
        return np.zeros(model.dim, dtype=np.float32)
    return model.input_vectors[rows].mean(axis=0)


def sentence_vector(model: EmbeddingModel, tokens) -> np.ndarray:
    """Arithmetic mean of word vectors; an empty token list gives zeros."""
    if not tokens:
        return np.zeros(model.dim, dtype=np.float32)
    acc = np.zeros(model.dim, dtype=np.float64)
    for t in tokens:
        acc += word_vector(model, t)
    return (acc / len(tokens)).astype(np.float32)


# ---------------------------------------------------------------------------
# Negative-sampling objective (shared by the trainer and the gradient checks)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form avoids exp overflow at large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def negative_sampling_loss(center_vec: np.ndarray, out_rows: np.ndarray) -> float:
    """Loss of one (center, positive, negatives...) block.

    out_rows[0] is the observed context word's output row; the remaining rows
    are noise samples.
    """
    s = out_rows @ center_vec
    return float(np.logaddexp(0.0, -s[0]) + np.logaddexp(0.0, s[1:]).sum())


def negative_sampling_grads(center_vec: np.ndarray, out_rows: np.ndarray):
    """Analytic gradients of negative_sampling_loss wrt the center vector
    and each output row."""
    s = out_rows @ center_vec
    p = _sigmoid(s)
    y = np.zeros_like(p)
    y[0] = 1.0
    g = p - y
    return g @ out_rows, np.outer(g, center_vec)


# ---------------------------------------------------------------------------
# Training


def _init_matrices(rng: np.random.Generator, n_input_rows: int, v: int, dim: int):
    inp = rng.uniform(-1.0 / dim, 1.0 / dim, size=(n_input_rows, dim)).astype(np.float32)
    out = np.zeros((v, dim), dtype=np.float32)
    return inp, out


def _noise_cdf(vocab: Vocabulary) -> np.ndarray:
    freqs = np.array([f for _, f in vocab.words], dtype=np.float64)
    weights = freqs**0.75
    cdf = np.cumsum(weights)
    return cdf / cdf[-1]


def _train(model: EmbeddingModel, documents, word_rows: list[np.ndarray]) -> None:
    cfg = model.config
    index = model.vocab.index
    sentences = [
        ids
        for tokens in documents
        if (ids := np.array([index[t] for t in tokens if t in index], dtype=np.int64)).size
    ]
    total_positions = sum(s.size for s in sentences)
    total_steps = cfg.epochs * total_positions
    if total_steps == 0:
        return

    rng = np.random.default_rng(cfg.seed)
    cdf = _noise_cdf(model.vocab)
    v_count = len(model.vocab)
    inp, out = model.input_vectors, model.output_vectors
    k = cfg.negatives
    step = 0

    for _ in range(cfg.epochs):
        epoch_loss = 0.0
        epoch_pairs = 0
        for sent in sentences:
            length = sent.size
            for pos in range(length):
                lr = cfg.learning_rate * (1.0 - step / total_steps)
                step += 1
                b = int(rng.integers(1, cfg.window + 1))
                lo = max(0, pos - b)
                hi = min(length, pos + b + 1)
                n_ctx = hi - lo - 1
                if n_ctx <= 0:
                    continue
                targets = np.concatenate((sent[lo:pos], sent[pos + 1 : hi]))
                outs = np.empty((n_ctx, k + 1), dtype=np.int64)
                outs[:, 0] = targets
                for j, t in enumerate(targets):
                    negs = np.minimum(
                        np.searchsorted(cdf, rng.random(k), side="right"), v_count - 1
                    )
                    # standard practice: a noise draw equal to the positive is redrawn
                    for _retry in range(8):
                        clash = negs == t
                        if not clash.any():
                            break
                        negs[clash] = np.minimum(
                            np.searchsorted(cdf, rng.random(int(clash.sum())), side="right"),
                            v_count - 1,
                        )
                    outs[j, 1:] = negs

                rows = word_rows[sent[pos]]
                center = inp[rows].mean(axis=0)
                flat = outs.ravel()
                block = out[flat]
                s = block @ center
                p = _sigmoid(s)
                y = np.zeros_like(s)
                y[:: k + 1] = 1.0
                g = p - y

                s64 = s.astype(np.float64)
                epoch_loss += float(
                    np.logaddexp(0.0, -s64[:: k + 1]).sum()
                    + np.logaddexp(0.0, np.delete(s64, slice(None, None, k + 1))).sum()
                )
                epoch_pairs += n_ctx

                grad_center = (g @ block) * (lr / rows.size)
                np.add.at(out, flat, np.outer(-lr * g, center))
                np.add.at(inp, rows, -grad_center)

        mean_loss = epoch_loss / max(epoch_pairs, 1)
        if not np.isfinite(mean_loss):
            raise TrainingError(f"training diverged: epoch loss is {mean_loss}")
        model.training_losses.append(mean_loss)


def train_skipgram(documents, config: EmbedConfig = EmbedConfig()) -> EmbeddingModel:
    """Train hashed-character-n-gram skipgram embeddings on tokenized docs.

    Each center position samples a window radius uniformly from
    [1, config.window]; every in-window context word is a positive paired with
    config.negatives noise draws from the unigram distribution raised to 0.75.
    The learning rate decays linearly to zero over all scheduled positions.
    """
    config.validate()
    vocab = build_vocab(documents, config.min_count)
    sub = SubwordIndex(config.n_min, config.n_max, config.bucket_count)
    rng = np.random.default_rng(config.seed)
    inp, out = _init_matrices(rng, len(vocab) + config.bucket_count, len(vocab), config.dim)
    model = EmbeddingModel(
        config=config,
        vocab=vocab,
        subwords=sub,
        bpe=None,
        input_vectors=inp,
        output_vectors=out,
    )
    word_rows = [
        np.concatenate(([wid], model.subword_rows(word)))
        for wid, (word, _) in enumerate(vocab.words)
    ]
    _train(model, documents, word_rows)
    return model


def train_skipgram_bpe(
    documents, config: EmbedConfig = EmbedConfig(), num_merges: int = 1000
) -> EmbeddingModel:
    """Train the BPE-subunit variant: bpe_segment replaces character n-grams.

    Merges are learned from the vocabulary words (frequency-weighted), so the
    subunit table is exactly the sorted vocabulary characters plus one symbol
    per merge and can be rebuilt from a saved model.
    """
    config.validate()
    vocab = build_vocab(documents, config.min_count)
    bpe = _learn_bpe_from_frequencies(dict(vocab.words), num_merges)
    rng = np.random.default_rng(config.seed)
    inp, out = _init_matrices(rng, len(vocab) + len(bpe.symbols), len(vocab), config.dim)
    model = EmbeddingModel(
        config=config,
        vocab=vocab,
        subwords=None,
        bpe=bpe,
        input_vectors=inp,
        output_vectors=out,
    )
    word_rows = [
        np.concatenate(([wid], model.subword_rows(word)))
        for wid, (word, _) in enumerate(vocab.words)
    ]
    _train(model, documents, word_rows)
    return model


# ---------------------------------------------------------------------------
# Persistence: magic, u32 dim, u32 V, u32 subword-row count, u8 flags,
# vocab entries (u32 byte length, UTF-8 bytes, u64 frequency), input and
# output matrices as row-major little-endian float32, then the merge list
# (u32 count, two length-prefixed UTF-8 strings per merge; count 0 for the
# hashed n-gram variant).


def save_model(model: EmbeddingModel, path: str | Path) -> None:
    v = len(model.vocab)
    sub_rows = model.input_vectors.shape[0] - v
    flags = 1 if model.bpe is not None else 0
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIIB", model.dim, v, sub_rows, flags))
        for word, freq in model.vocab.words:
            data = word.encode("utf-8")
            fh.write(struct.pack("<I", len(data)))
            fh.write(data)
            fh.write(struct.pack("<Q", freq))
        fh.write(np.ascontiguousarray(model.input_vectors, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(model.output_vectors, dtype="<f4").tobytes())
        merges = model.bpe.merges if model.bpe is not None else []
        fh.write(struct.pack("<I", len(merges)))
        for a, b in merges:
            for part in (a, b):
                data = part.encode("utf-8")
                fh.write(struct.pack("<I", len(data)))
                fh.write(data)


def _read_exact(fh, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise EmbeddingError("truncated embedding model file")
    return data


def load_model(path: str | Path, n_min: int = 3, n_max: int = 6) -> EmbeddingModel:
    """Load a saved model.

    The file stores everything needed for inference except the n-gram bounds
    of the hashed variant (pass the ones used at training time; the pipeline
    records them in its config snapshot). Training-only settings (window,
    epochs, ...) are not stored and come back as defaults.
    """
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise EmbeddingError(
                f"bad embedding model magic: expected {MAGIC!r}, found {magic!r}"
            )
        dim, v, sub_rows, flags = struct.unpack("<IIIB", _read_exact(fh, 13))
        words = []
        for _ in range(v):
            (length,) = struct.unpack("<I", _read_exact(fh, 4))
            word = _read_exact(fh, length).decode("utf-8")
            (freq,) = struct.unpack("<Q", _read_exact(fh, 8))
            words.append((word, freq))
        inp = np.frombuffer(
            _read_exact(fh, (v + sub_rows) * dim * 4), dtype="<f4"
        ).reshape(v + sub_rows, dim).copy()
        out = np.frombuffer(_read_exact(fh, v * dim * 4), dtype="<f4").reshape(v, dim).copy()
        (merge_count,) = struct.unpack("<I", _read_exact(fh, 4))
        merges = []
        for _ in range(merge_count):
            pair = []
            for _ in range(2):
                (length,) = struct.unpack("<I", _read_exact(fh, 4))
                pair.append(_read_exact(fh, length).decode("utf-8"))
            merges.append((pair[0], pair[1]))

    vocab = Vocabulary(
        words=words,
        index={w: i for i, (w, _) in enumerate(words)},
        min_count=min((f for _, f in words), default=1),
        total_tokens=sum(f for _, f in words),
    )
    is_bpe = bool(flags & 1)
    if is_bpe:
        symbols = sorted({ch for w, _ in words for ch in w})
        symbols.extend(a + b for a, b in merges)
        if len(symbols) != sub_rows:
            raise EmbeddingError(
                f"inconsistent BPE model: {sub_rows} subword rows but {len(symbols)} symbols"
            )
        bpe = BpeModel(merges=merges, symbols=symbols)
        sub = None
        bucket_count = EmbedConfig.bucket_count
    else:
        bpe = None
        sub = SubwordIndex(n_min=n_min, n_max=n_max, bucket_count=sub_rows)
        bucket_count = sub_rows
    config = EmbedConfig(dim=dim, n_min=n_min, n_max=n_max, bucket_count=bucket_count)
    return EmbeddingModel(
        config=config,
        vocab=vocab,
        subwords=sub,
        bpe=bpe,
        input_vectors=inp,
        output_vectors=out,
    )
