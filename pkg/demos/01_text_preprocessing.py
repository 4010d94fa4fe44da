"""Cleaning and tokenizing Latin-script dialect text.

Social-media messages in Arabizi mix Latin letters with digits standing in
for Arabic phonemes (3ajbetni, 9ahwa, sa7a). Cleaning has to drop URLs,
emoji and punctuation without touching those digits. Run:

    python3 demos/01_text_preprocessing.py
"""

from tunsent.corpus import (
    LabeledCorpus,
    LabeledDocument,
    Preprocessor,
    class_histogram,
    clean_text,
    stem,
    tokenize,
)

messages = [
    "Behi barsha!!! \U0001F44D http://t.co/x",
    "3ajbetni 9ahwa mta3 el coin :-)",
    "Makanch behi... khedma 5ayba w serviste batee2",
    "WWW.SPAM.TN ya3tik sa7a",
]

print("=== cleaning ===")
for raw in messages:
    print(f"{raw!r:60} -> {clean_text(raw)!r}")

print("\n=== tokenizing ===")
for raw in messages:
    print(tokenize(clean_text(raw)))

# Stopword removal and stemming are optional stages. There is no canonical
# stoplist or stemmer for the dialect, so both are data: plain word lists
# and suffix rules you supply yourself.
print("\n=== stopwords + suffix stemming ===")
pre = Preprocessor(stopwords={"el", "w", "ya"}, stem_rules=["etha", "ha", "et"], stemming=True)
for raw in messages:
    print(pre.tokens(raw))

print("\nstemming is longest-suffix-first and idempotent:")
for token in ("khedmetha", "khedmet", "el"):
    print(f"  {token} -> {stem(token, ['etha', 'ha', 'et'])}")

# Class balance is the first thing to inspect on a new dataset.
print("\n=== class distribution ===")
docs = [LabeledDocument(text=m, label=label) for m, label in
        zip(messages * 3, [1, 1, -1, 0, 1, 1, -1, 1, 1, 1, -1, 0])]
dist = class_histogram(LabeledCorpus(documents=docs))
for label in (-1, 0, 1):
    bar = "#" * round(30 * dist.proportions[label])
    print(f"  {label:>2}: {dist.counts[label]:3d}  {dist.proportions[label]:.3f}  {bar}")
