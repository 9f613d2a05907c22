import logging

import pytest
from hypothesis import given, strategies as st

from conftest import conllu_row, sentences
from xlpos.corpus_io import (
    UPOS, ConllParseError, ParallelPair, TaggedSentence, TagSet, Token, UnknownTagError,
    Vocabulary, build_vocabulary, parse_conllu, parse_plain, write_conllu, write_plain,
)


def test_tagset_is_the_17_upos_tags_in_order():
    assert len(UPOS) == 17
    assert UPOS.tags[0] == "ADJ" and UPOS.tags[-1] == "X"
    assert "NULL" not in UPOS


def test_tagset_bijection():
    for i in range(len(UPOS)):
        assert UPOS.index(UPOS.symbol(i)) == i


def test_tagset_rejects_duplicates_and_null():
    with pytest.raises(ValueError):
        TagSet(("A", "A"))
    with pytest.raises(ValueError):
        TagSet(("A", "NULL"))


def test_token_form_must_be_nonempty_without_whitespace():
    with pytest.raises(ValueError):
        Token("")
    with pytest.raises(ValueError):
        Token("a b")


def test_sentence_needs_a_token():
    with pytest.raises(ValueError):
        TaggedSentence([])


def test_parallel_pair_requires_tagged_source():
    src = TaggedSentence.from_lists(["a"], [None])
    with pytest.raises(ValueError):
        ParallelPair(src, TaggedSentence.from_lists(["x"]), "p0")


def test_parse_two_verb_sentence():
    text = conllu_row(1, "Fomos", "VERB") + conllu_row(2, "informados", "VERB") + "\n"
    (sent,) = parse_conllu(text)
    assert sent.forms == ["Fomos", "informados"]
    assert sent.tags == [UPOS.index("VERB")] * 2


def test_parse_pron_token():
    (sent,) = parse_conllu(conllu_row(1, "kas", "PRON"))
    assert sent.forms == ["kas"]
    assert sent.tags == [UPOS.index("PRON")]


def test_parse_empty_input():
    assert parse_conllu("") == []


def test_parse_skips_ranges_and_empty_nodes_and_keeps_sent_id():
    text = ("# sent_id = s1\n# text = do it\n"
            + "1-2\tdo\t_\t_\t_\t_\t_\t_\t_\t_\n"
            + conllu_row(1, "de", "ADP") + conllu_row(2, "o", "DET")
            + "2.1\tx\t_\tX\t_\t_\t_\t_\t_\t_\n\n")
    (sent,) = parse_conllu(text)
    assert sent.sent_id == "s1"
    assert sent.forms == ["de", "o"]


def test_parse_accepts_crlf():
    text = conllu_row(1, "a", "DET").replace("\n", "\r\n") + "\r\n"
    (sent,) = parse_conllu(text)
    assert sent.tags == [UPOS.index("DET")]


def test_parse_reports_bad_column_count_with_line_number():
    text = conllu_row(1, "a", "DET") + "2\tb\tNOUN\n"
    with pytest.raises(ConllParseError) as err:
        parse_conllu(text)
    assert err.value.lineno == 2
    assert "line 2" in str(err.value)


def test_parse_names_unknown_tag():
    with pytest.raises(UnknownTagError) as err:
        parse_conllu(conllu_row(1, "a", "NOUNISH"))
    assert err.value.symbol == "NOUNISH"
    assert "NOUNISH" in str(err.value)


def test_underscore_reads_as_null_and_writes_back():
    sent = TaggedSentence.from_lists(["a", "b"], [UPOS.index("NOUN"), None])
    text = write_conllu([sent])
    rows = [line.split("\t") for line in text.splitlines() if line]
    assert rows[1][3] == "_"
    assert parse_conllu(text)[0].tags == sent.tags


def test_write_nothing():
    assert write_conllu([]) == ""


@given(st.lists(sentences(), max_size=5))
def test_conllu_round_trip(sents):
    back = parse_conllu(write_conllu(sents))
    assert [s.forms for s in back] == [s.forms for s in sents]
    assert [s.tags for s in back] == [s.tags for s in sents]


def test_parse_plain_lengths():
    out = parse_plain("a b\nc\n")
    assert [len(s) for s in out] == [2, 1]
    assert all(t is None for s in out for t in s.tags)


def test_parse_plain_empty():
    assert parse_plain("") == []


def test_parse_plain_splits_on_any_whitespace():
    (s,) = parse_plain("a  b\t c\n")
    assert s.forms == ["a", "b", "c"]


def test_parse_plain_counts_blank_lines(caplog):
    with caplog.at_level(logging.WARNING):
        out = parse_plain("a\n\n  \nb\n")
    assert len(out) == 2
    assert "2 blank" in caplog.text


@given(st.lists(sentences(tagged=False), max_size=5))
def test_plain_round_trip(sents):
    assert [s.forms for s in parse_plain(write_plain(sents))] == [s.forms for s in sents]


def _corpus(*lines):
    return parse_plain("\n".join(lines) + "\n")


def test_vocabulary_min_count():
    v = build_vocabulary(_corpus("a a b"), min_count=2)
    assert "a" in v and "b" not in v
    assert v.lookup("b") == Vocabulary.UNK


def test_vocabulary_of_empty_corpus_has_only_reserved_slots():
    v = build_vocabulary([], min_count=1)
    assert len(v) == Vocabulary.RESERVED
    assert v.lookup("anything") == Vocabulary.UNK


def test_vocabulary_frequency_then_lexicographic_order():
    v = build_vocabulary(_corpus("b a c c"))
    assert v.forms() == ["c", "a", "b"]
    assert v.lookup("a") < v.lookup("b")
    assert v.lookup("c") == Vocabulary.RESERVED


def test_vocabulary_rejects_min_count_zero():
    with pytest.raises(ValueError):
        build_vocabulary([], min_count=0)


def test_vocabulary_reserved_slots_never_collide():
    v = build_vocabulary(_corpus("x y z"))
    assert Vocabulary.PAD not in v.index.values()
    assert Vocabulary.UNK not in v.index.values()


@given(st.lists(sentences(tagged=False), max_size=6), st.integers(1, 3))
def test_vocabulary_serialization_is_stable(sents, min_count):
    v = build_vocabulary(sents, min_count)
    text = v.to_text()
    back = Vocabulary.from_text(text)
    assert back.index == v.index
    assert back.to_text() == text
    assert build_vocabulary(list(reversed(sents)), min_count).to_text() == text


def test_vocabulary_file_format():
    v = build_vocabulary(_corpus("a a b"))
    assert v.to_text() == "a\t2\t2\nb\t3\t1\n"
