import numpy as np
import pytest

from xlpos.corpus_io import UPOS
from xlpos.multisource import calibrate
from xlpos.synth import (
    Lexicon, SynthSpec, SynthSpecError, generate, generate_multisource, make_rendering_group,
    make_rendering_groups, tag_suffix,
)


def test_noiseless_gold_alignment_is_identity():
    pairs, gold, tgt = generate(SynthSpec(seed=1, num_sentences=50))
    for p, a, t in zip(pairs, gold, tgt):
        assert set(a.links) == {(j, j) for j in range(len(p.target))}
        assert p.source.tags == t.tags


def test_same_seed_same_corpus():
    spec = SynthSpec(seed=9, num_sentences=40, swap_prob=0.3, drop_prob=0.2)
    a, b = generate(spec), generate(spec)
    assert [p.target.forms for p in a[0]] == [p.target.forms for p in b[0]]
    assert [g.links for g in a[1]] == [g.links for g in b[1]]
    c = generate(SynthSpec(seed=10, num_sentences=40, swap_prob=0.3, drop_prob=0.2))
    assert [p.target.forms for p in a[0]] != [p.target.forms for p in c[0]]


def test_prefix_slices_regenerate_identically():
    short = generate(SynthSpec(seed=2, num_sentences=10))[2]
    long = generate(SynthSpec(seed=2, num_sentences=30))[2]
    assert [s.forms for s in short] == [s.forms for s in long[:10]]


def test_drop_rate_is_binomial():
    pairs, gold, _ = generate(SynthSpec(seed=3, num_sentences=1250, drop_prob=0.1))
    tokens = sum(len(p.target) for p in pairs)
    unaligned = tokens - sum(len(a) for a in gold)
    expected = 0.1 * tokens
    assert abs(unaligned - expected) <= 3 * np.sqrt(tokens * 0.1 * 0.9)


def test_gold_links_join_lexicon_pairs():
    spec = SynthSpec(seed=4, num_sentences=100, swap_prob=0.3, drop_prob=0.2, ambiguity=2, tgt_vocab_size=1000)
    lex = Lexicon(spec)
    pairs, gold, tgt = generate(spec)
    for p, a, t in zip(pairs, gold, tgt):
        for (i, j) in a.links:
            s = int(p.source.forms[i][1:])
            tag = int(lex.word_tag[s])
            assert p.target.forms[j] in {lex.target_form(int(x), tag) for x in lex.targets[s]}
            assert p.source.tags[i] == t.tags[j]


def test_suffix_codes_the_tag():
    _, _, tgt = generate(SynthSpec(seed=5, num_sentences=30))
    for s in tgt:
        for form, tag in zip(s.forms, s.tags):
            assert form.endswith(tag_suffix(tag))
    assert len({tag_suffix(t) for t in range(len(UPOS))}) == len(UPOS)


def test_spec_validation():
    with pytest.raises(SynthSpecError):
        SynthSpec(tgt_vocab_size=100, src_vocab_size=200).validate()
    with pytest.raises(SynthSpecError):
        SynthSpec(drop_prob=1.5).validate()
    with pytest.raises(SynthSpecError):
        SynthSpec(tag_weights={"NOUNX": 1.0}).validate()
    with pytest.raises(SynthSpecError):
        generate(SynthSpec(src_vocab_size=5, tgt_vocab_size=5, max_len=6))


def test_every_weighted_tag_gets_words():
    lex = Lexicon(SynthSpec(seed=0, src_vocab_size=20, tgt_vocab_size=20, max_len=10))
    present = {UPOS.symbol(int(t)) for t in lex.word_tag}
    assert present == set(SynthSpec().tag_weights)


def test_rendering_group_without_disagreement_calibrates_to_gold():
    spec = SynthSpec(seed=6)
    for k in range(20):
        g, gold = make_rendering_group(spec, 4, 0.0, index=k)
        assert calibrate(g, 0).sentence.tags == gold.tags


def test_rendering_group_of_one_is_left_alone():
    g, _ = make_rendering_group(SynthSpec(seed=6), 1, 0.3, index=3)
    assert calibrate(g, 0).sentence.tags == g.renderings[0].sentence.tags


def test_rendering_group_errors():
    with pytest.raises(ValueError):
        make_rendering_group(SynthSpec(), 0, 0.1)
    with pytest.raises(ValueError):
        make_rendering_group(SynthSpec(), 2, 1.5)


def test_rendering_groups_are_deterministic():
    spec = SynthSpec(seed=7, num_sentences=5, swap_prob=0.2, drop_prob=0.1)
    a = make_rendering_groups(spec, 3, 0.2, variation=0.3)
    b = make_rendering_groups(spec, 3, 0.2, variation=0.3)
    for (ga, _), (gb, _) in zip(a, b):
        assert [r.sentence.tags for r in ga.renderings] == [r.sentence.tags for r in gb.renderings]
        assert [r.sentence.forms for r in ga.renderings] == [r.sentence.forms for r in gb.renderings]


def test_multisource_corpus_layout():
    spec = SynthSpec(seed=8, num_sentences=30, swap_prob=0.2, drop_prob=0.1)
    c = generate_multisource(spec, ["en", "de"], disagreement=0.1, num_test=10)
    assert len(c.pairs["en"]) == len(c.pairs["de"]) == len(c.gold_targets) == 30
    assert len(c.test) == 10
    gid, refs = c.manifest[4]
    assert refs == [("en", 5), ("de", 5)]
    assert c.pairs["en"][4].pair_id == f"en-{gid}"
    assert c.pairs["en"][0].source.forms[0].startswith("een")
    for lang in ("en", "de"):
        for p, gold_t, a in zip(c.pairs[lang], c.gold_targets, c.gold_alignments[lang]):
            assert sorted(p.target.forms) == sorted(gold_t.forms)
            assert all(i < len(p.source) and j < len(p.target) for i, j in a.links)
