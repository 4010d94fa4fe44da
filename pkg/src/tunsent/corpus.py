"""Loading, cleaning and tokenizing labeled dialect text.

Datasets are UTF-8 TSV files, one ``label<TAB>text`` record per line, with
labels -1 (negative), 0 (neutral) and 1 (positive). Text is expected to be
social-media style Latin-script dialect (Arabizi), where the digits
2, 3, 5, 7, 8, 9 act as letters and must survive cleaning.
"""

from __future__ import annotations

import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

LABELS = (-1, 0, 1)

_LABEL_LITERALS = {"-1": -1, "0": 0, "1": 1}

# Symbol/emoji codepoint ranges stripped by clean_text, frozen so cleaning is
# reproducible across implementations.
_EMOJI_RANGES = ((0x1F300, 0x1FAFF), (0x2600, 0x27BF), (0xFE0F, 0xFE0F))

_URL_RE = re.compile(r"(?:https?://|www\.)\S*")


class DatasetError(ValueError):
    """Malformed dataset file (bad label, bad encoding, bad record shape)."""


class EmptyDatasetError(DatasetError):
    """Dataset file contained zero records."""


@dataclass(frozen=True)
class LabeledDocument:
    text: str
    label: int


@dataclass(frozen=True)
class TokenizedDocument:
    tokens: tuple[str, ...]
    label: int


@dataclass
class LabeledCorpus:
    documents: list[LabeledDocument]
    source_path: str = ""

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)


@dataclass
class ClassDistribution:
    counts: dict[int, int]
    proportions: dict[int, float]


def parse_label(literal: str, lineno: int | None = None) -> int:
    if literal not in _LABEL_LITERALS:
        where = f" at line {lineno}" if lineno is not None else ""
        raise DatasetError(f"invalid label {literal!r}{where}: expected -1, 0 or 1")
    return _LABEL_LITERALS[literal]


def load_dataset(path: str | Path, format: str = "tsv") -> LabeledCorpus:
    """Read a ``label<TAB>text`` TSV file into a LabeledCorpus.

    Blank lines are skipped; line order is preserved. Raises DatasetError with
    the offending line number for malformed labels, missing tabs, empty text
    or invalid UTF-8, and EmptyDatasetError when no records remain.
    """
    if format != "tsv":
        raise ValueError(f"unsupported dataset format: {format!r}")
    raw = Path(path).read_bytes()
    try:
        content = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DatasetError(f"{path}: not valid UTF-8 ({exc})") from None

    documents = []
    for lineno, line in enumerate(content.split("\n"), start=1):
        line = line.removesuffix("\r")
        if not line.strip():
            continue
        label_literal, sep, text = line.partition("\t")
        if not sep:
            raise DatasetError(f"line {lineno}: expected label<TAB>text")
        label = parse_label(label_literal, lineno)
        if not text:
            raise DatasetError(f"line {lineno}: empty text")
        documents.append(LabeledDocument(text=text, label=label))
    if not documents:
        raise EmptyDatasetError(f"{path}: no records")
    return LabeledCorpus(documents=documents, source_path=str(path))


def _is_stripped(ch: str) -> bool:
    cat = unicodedata.category(ch)
    if cat.startswith("P") or cat in ("So", "Sk", "Sm"):
        return True
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _EMOJI_RANGES)


def clean_text(raw: str) -> str:
    """Lowercase and strip URLs, emoji/symbols and punctuation.

    URLs (http://, https://, www. up to the next whitespace) are removed;
    punctuation (Unicode P*) and symbols (So/Sk/Sm plus the frozen emoji
    ranges) are replaced by spaces so they never glue neighbouring words
    together; whitespace collapses to single spaces and the result is trimmed.
    """
    text = _URL_RE.sub(" ", raw.lower())
    text = "".join(" " if _is_stripped(ch) else ch for ch in text)
    return " ".join(text.split())


def tokenize(cleaned: str) -> list[str]:
    """Split into maximal runs of alphanumeric codepoints, lowercased.

    Arabizi digits are ordinary letters here and stay inside tokens.
    """
    tokens = []
    current: list[str] = []
    for ch in cleaned.lower():
        if ch.isalnum():
            current.append(ch)
        elif current:
            tokens.append("".join(current))
            current = []
    if current:
        tokens.append("".join(current))
    return tokens


def remove_stopwords(tokens: list[str], stoplist: set[str]) -> list[str]:
    if not stoplist:
        return list(tokens)
    return [t for t in tokens if t not in stoplist]


def stem(token: str, rules: list[str], min_stem_length: int = 3) -> str:
    """Strip known suffixes, longest match first, until none applies.

    A rule only fires when the remaining stem keeps at least
    ``min_stem_length`` characters, so output is never empty and short tokens
    pass through unchanged. Repeated stripping makes the function idempotent.
    """
    if not rules:
        return token
    suffixes = sorted(set(rules), key=lambda s: (-len(s), s))
    current = token
    while True:
        for suffix in suffixes:
            if (
                suffix
                and current.endswith(suffix)
                and len(current) - len(suffix) >= min_stem_length
            ):
                current = current[: -len(suffix)]
                break
        else:
            return current


def load_wordlist(path: str | Path) -> list[str]:
    """Read a one-entry-per-line UTF-8 list; ``#`` lines are comments.

    Used for both stopword lists and stemmer suffix rules. Entries are
    lowercased.
    """
    entries = []
    for line in Path(path).read_text("utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            entries.append(line.lower())
    return entries


def class_histogram(corpus: LabeledCorpus) -> ClassDistribution:
    """Exact per-class counts and proportions over the corpus."""
    if len(corpus) == 0:
        raise EmptyDatasetError("cannot build a class histogram of an empty corpus")
    counter = Counter(doc.label for doc in corpus)
    n = len(corpus)
    counts = {label: counter.get(label, 0) for label in LABELS}
    proportions = {label: counts[label] / n for label in LABELS}
    return ClassDistribution(counts=counts, proportions=proportions)


@dataclass
class Preprocessor:
    """clean -> tokenize -> stopwords -> stem, applied per document.

    Stopword removal runs only when a stoplist is given; stemming only when
    enabled and rules are given. Pure and deterministic.
    """

    stopwords: set[str] = field(default_factory=set)
    stem_rules: list[str] = field(default_factory=list)
    stemming: bool = False
    min_stem_length: int = 3

    def tokens(self, raw_text: str) -> list[str]:
        toks = tokenize(clean_text(raw_text))
        if self.stopwords:
            toks = remove_stopwords(toks, self.stopwords)
        if self.stemming and self.stem_rules:
            toks = [stem(t, self.stem_rules, self.min_stem_length) for t in toks]
        return toks

    def document(self, doc: LabeledDocument) -> TokenizedDocument:
        return TokenizedDocument(tokens=tuple(self.tokens(doc.text)), label=doc.label)

    def corpus(self, corpus: LabeledCorpus) -> list[TokenizedDocument]:
        return [self.document(doc) for doc in corpus]
