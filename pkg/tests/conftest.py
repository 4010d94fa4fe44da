"""Shared fixtures: synthetic dialect corpora with a known class structure."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

# Invented Arabizi-flavored lexicons. Each class has its own sentiment words;
# filler words are shared by all classes, so separation requires the class
# words, not document length or fillers.
POSITIVE_WORDS = [
    "behi", "mezyan", "momtez", "ajab", "farhan",
    "yaatik", "sa7a", "mabrouk", "hlow", "top",
]
NEGATIVE_WORDS = [
    "khayeb", "mouch", "ghali", "da3if", "mochkla",
    "t3ab", "kareh", "5ayeb", "makanch", "dommage",
]
NEUTRAL_WORDS = [
    "3adi", "mawjoud", "wa9t", "youm", "sa3a",
    "kifkif", "wasat", "nhar", "chwaya", "akahaw",
]
FILLER_WORDS = [
    "el", "fi", "w", "ya", "ana", "enti", "houwa", "lyoum",
    "barsha", "khedma", "serviste", "mta3", "kol", "3la", "ma3a",
]

CLASS_WORDS = {1: POSITIVE_WORDS, -1: NEGATIVE_WORDS, 0: NEUTRAL_WORDS}


def make_template_documents(n: int = 1500, weights=(8, 3, 1), seed: int = 0):
    """Label/text pairs with class mix positive:negative:neutral = weights."""
    rng = np.random.default_rng(seed)
    total = sum(weights)
    counts = {
        1: round(n * weights[0] / total),
        -1: round(n * weights[1] / total),
    }
    counts[0] = n - counts[1] - counts[-1]
    docs = []
    for label, count in counts.items():
        words = CLASS_WORDS[label]
        for _ in range(count):
            n_fill = int(rng.integers(3, 8))
            n_class = int(rng.integers(2, 5))
            tokens = [FILLER_WORDS[i] for i in rng.integers(0, len(FILLER_WORDS), n_fill)]
            tokens += [words[i] for i in rng.integers(0, len(words), n_class)]
            perm = rng.permutation(len(tokens))
            docs.append((label, " ".join(tokens[i] for i in perm)))
    order = rng.permutation(len(docs))
    return [docs[i] for i in order]


def write_template_corpus(
    path: Path, n: int = 1500, weights=(8, 3, 1), seed: int = 0
) -> Path:
    docs = make_template_documents(n=n, weights=weights, seed=seed)
    path.write_text(
        "".join(f"{label}\t{text}\n" for label, text in docs), encoding="utf-8"
    )
    return path


@pytest.fixture
def small_corpus_path(tmp_path):
    """120 docs, mildly imbalanced; fast enough for CLI round-trips."""
    return write_template_corpus(tmp_path / "small.tsv", n=120, weights=(3, 2, 1), seed=11)


@pytest.fixture
def template_corpus_path(tmp_path):
    """The desk-scale 8:3:1 corpus used by end-to-end checks."""
    return write_template_corpus(tmp_path / "template.tsv", n=1500, weights=(8, 3, 1), seed=5)
