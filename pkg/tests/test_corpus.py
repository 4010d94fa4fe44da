import unicodedata

import pytest
from hypothesis import given
from hypothesis import strategies as st

from tunsent import corpus
from tunsent.corpus import (
    DatasetError,
    EmptyDatasetError,
    Preprocessor,
    class_histogram,
    clean_text,
    load_dataset,
    load_wordlist,
    remove_stopwords,
    stem,
    tokenize,
)

from conftest import write_template_corpus


def write(tmp_path, content, name="data.tsv"):
    path = tmp_path / name
    path.write_bytes(content if isinstance(content, bytes) else content.encode("utf-8"))
    return path


class TestLoadDataset:
    def test_preserves_order_and_labels(self, tmp_path):
        path = write(tmp_path, "1\tbehi barsha\n-1\tmch behi\n")
        data = load_dataset(path)
        assert len(data) == 2
        assert [d.label for d in data] == [1, -1]
        assert [d.text for d in data] == ["behi barsha", "mch behi"]

    def test_label_outside_range_names_line(self, tmp_path):
        path = write(tmp_path, "2\tok\n")
        with pytest.raises(DatasetError, match="line 1"):
            load_dataset(path)

    def test_empty_file(self, tmp_path):
        with pytest.raises(EmptyDatasetError):
            load_dataset(write(tmp_path, ""))

    def test_blank_lines_skipped(self, tmp_path):
        path = write(tmp_path, "1\tok\n\n   \n0\tmeh\n")
        assert [d.label for d in load_dataset(path)] == [1, 0]

    def test_crlf_accepted(self, tmp_path):
        path = write(tmp_path, "1\tok\r\n-1\tnope\r\n")
        data = load_dataset(path)
        assert [d.text for d in data] == ["ok", "nope"]

    def test_missing_tab(self, tmp_path):
        with pytest.raises(DatasetError, match="label<TAB>text"):
            load_dataset(write(tmp_path, "1 no tab here\n"))

    def test_empty_raw_text_rejected(self, tmp_path):
        with pytest.raises(DatasetError, match="empty text"):
            load_dataset(write(tmp_path, "1\t\n"))

    def test_invalid_utf8(self, tmp_path):
        with pytest.raises(DatasetError, match="UTF-8"):
            load_dataset(write(tmp_path, b"1\t\xff\xfe broken\n"))


class TestCleanText:
    def test_url_emoji_punctuation_removed(self):
        assert clean_text("Behi barsha!!! \U0001F44D http://t.co/x") == "behi barsha"

    def test_arabizi_digits_preserved(self):
        assert clean_text("3ajbetni 9ahwa") == "3ajbetni 9ahwa"

    def test_empty(self):
        assert clean_text("") == ""

    def test_https_and_www(self):
        assert clean_text("ara https://x.y/z w www.site.tn/page behi") == "ara w behi"

    def test_punctuation_becomes_boundary(self):
        assert clean_text("behi,khayeb") == "behi khayeb"

    @given(st.text(max_size=200))
    def test_no_forbidden_codepoints_or_urls(self, raw):
        cleaned = clean_text(raw)
        for ch in cleaned:
            cat = unicodedata.category(ch)
            assert not cat.startswith("P")
            assert cat not in ("So", "Sk", "Sm")
        for needle in ("http://", "https://", "www."):
            assert needle not in cleaned

    @given(st.text(max_size=200))
    def test_idempotent(self, raw):
        once = clean_text(raw)
        assert clean_text(once) == once


class TestTokenize:
    def test_splits_on_non_alphanumerics(self):
        assert tokenize("lebnen mte3i tayyeb, mais el khedma makanch tayba") == [
            "lebnen", "mte3i", "tayyeb", "mais", "el", "khedma", "makanch", "tayba",
        ]

    def test_single_token(self):
        assert tokenize("hlib") == ["hlib"]

    def test_empty(self):
        assert tokenize("") == []

    @given(st.text(max_size=200))
    def test_tokens_are_alphanumeric_and_nonempty(self, raw):
        for tok in tokenize(raw):
            assert tok
            assert all(ch.isalnum() for ch in tok)

    @given(st.text(max_size=200))
    def test_join_round_trip(self, raw):
        tokens = tokenize(raw)
        assert tokenize(" ".join(tokens)) == tokens


class TestStopwordsAndStem:
    def test_filtering_keeps_order(self):
        assert remove_stopwords(["el", "khedma", "tayyba"], {"el"}) == ["khedma", "tayyba"]

    def test_empty_stoplist_is_identity(self):
        assert remove_stopwords(["a", "b"], set()) == ["a", "b"]

    def test_all_removed(self):
        assert remove_stopwords(["el", "el"], {"el"}) == []

    def test_suffix_rule(self):
        assert stem("khedmetha", ["ha"]) == "khedmet"

    def test_short_token_guard(self):
        assert stem("el", ["ha", "l"]) == "el"

    def test_no_matching_rule(self):
        assert stem("barsha", ["it"]) == "barsha"

    def test_longest_rule_wins(self):
        assert stem("khedmetha", ["a", "ha"]) == "khedmet"

    @given(st.text(alphabet="abcdehlmt", min_size=1, max_size=12))
    def test_idempotent_and_prefix_preserving(self, token):
        rules = ["ha", "et", "a"]
        once = stem(token, rules)
        assert stem(once, rules) == once
        assert token.startswith(once)
        assert once

    def test_wordlist_loader(self, tmp_path):
        path = tmp_path / "stop.txt"
        path.write_text("# comment\nEl\n\nw\n", encoding="utf-8")
        assert load_wordlist(path) == ["el", "w"]


class TestClassHistogram:
    def _corpus(self, labels):
        docs = [corpus.LabeledDocument(text="x", label=lab) for lab in labels]
        return corpus.LabeledCorpus(documents=docs)

    def test_counts_and_proportions(self):
        dist = class_histogram(self._corpus([1, 1, 1, 0, -1]))
        assert dist.counts == {1: 3, 0: 1, -1: 1}
        assert dist.proportions == {1: 0.6, 0: 0.2, -1: 0.2}

    def test_all_positive(self):
        dist = class_histogram(self._corpus([1, 1]))
        assert dist.proportions == {1: 1.0, 0: 0.0, -1: 0.0}

    def test_empty_corpus_rejected(self):
        with pytest.raises(EmptyDatasetError):
            class_histogram(corpus.LabeledCorpus(documents=[]))

    def test_proportions_sum_to_one(self, small_corpus_path):
        dist = class_histogram(load_dataset(small_corpus_path))
        assert abs(sum(dist.proportions.values()) - 1.0) < 1e-9
        assert sum(dist.counts.values()) == len(load_dataset(small_corpus_path))

    def test_template_corpus_ordering(self, tmp_path):
        # imbalanced social-media-style data: positive > negative > neutral
        path = write_template_corpus(tmp_path / "t.tsv", n=600, weights=(8, 3, 1), seed=2)
        dist = class_histogram(load_dataset(path))
        assert dist.counts[1] > dist.counts[-1] > dist.counts[0]


class TestPreprocessor:
    def test_deterministic_pipeline(self):
        pre = Preprocessor(stopwords={"el"}, stem_rules=["tha"], stemming=True)
        raw = "El khedmetha BARSHA!!! http://x.y 3ajbetni"
        assert pre.tokens(raw) == pre.tokens(raw)
        assert pre.tokens(raw) == ["khedme", "barsha", "3ajbetni"]

    def test_stemming_off_by_default(self):
        pre = Preprocessor(stem_rules=["ha"])
        assert pre.tokens("khedmetha") == ["khedmetha"]

    def test_corpus_mapping_keeps_labels(self, small_corpus_path):
        data = load_dataset(small_corpus_path)
        docs = Preprocessor().corpus(data)
        assert [d.label for d in docs] == [d.label for d in data]
