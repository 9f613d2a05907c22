"""Synthetic parallel corpora with known alignments and tags.

Every sentence is drawn from its own generator seeded with (seed, index), so
corpora are reproducible and any slice can be regenerated independently.

Form conventions: source words look like ``e{lang}{id}`` (``e12`` for the
single-source case), target words ``w{id}`` followed by a tag-specific suffix
when ``suffix_coded`` is on (``w17qk``), and rendering-specific paraphrases
``v{k}w{id}...``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from string import ascii_lowercase

import numpy as np

from .aligner import Alignment
from .corpus_io import UPOS, ParallelPair, TaggedSentence, TagSet
from .projector import ProjectedSentence
from .multisource import RenderingGroup


class SynthSpecError(ValueError):
    pass


# a skewed but broad tag distribution loosely shaped like running text
DEFAULT_TAG_WEIGHTS = {
    "NOUN": 0.24, "VERB": 0.14, "ADP": 0.11, "DET": 0.10, "ADJ": 0.08, "PRON": 0.07,
    "ADV": 0.05, "PUNCT": 0.05, "AUX": 0.04, "CCONJ": 0.03, "PROPN": 0.03, "NUM": 0.02,
    "PART": 0.02, "SCONJ": 0.02,
}


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    src_vocab_size: int = 500
    tgt_vocab_size: int = 500
    tag_weights: dict = field(default_factory=lambda: dict(DEFAULT_TAG_WEIGHTS))
    ambiguity: int = 1          # target forms per source word (1 = bijective lexicon)
    swap_prob: float = 0.0      # chance of swapping each adjacent target pair
    drop_prob: float = 0.0      # chance a target token loses its source word
    num_sentences: int = 1000
    min_len: int = 4
    max_len: int = 12
    suffix_coded: bool = True

    def validate(self, tagset: TagSet = UPOS):
        for name in ("swap_prob", "drop_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise SynthSpecError(f"{name} must lie in [0, 1]")
        if self.ambiguity < 1:
            raise SynthSpecError("ambiguity must be >= 1")
        if self.tgt_vocab_size < self.src_vocab_size * self.ambiguity:
            raise SynthSpecError(
                f"target vocabulary ({self.tgt_vocab_size}) smaller than lexicon "
                f"({self.src_vocab_size} x {self.ambiguity})")
        if not 1 <= self.min_len <= self.max_len:
            raise SynthSpecError("need 1 <= min_len <= max_len")
        if self.max_len > self.src_vocab_size:
            raise SynthSpecError("sentences sample words without replacement; max_len > vocabulary")
        if self.num_sentences < 0:
            raise SynthSpecError("num_sentences must be >= 0")
        for tag, w in self.tag_weights.items():
            if tag not in tagset:
                raise SynthSpecError(f"unknown tag {tag!r}")
            if w < 0:
                raise SynthSpecError("tag weights must be non-negative")


def tag_suffix(tag: int) -> str:
    """Two-letter suffix identifying a tag index (unique for < 676 tags)."""
    return "q" + ascii_lowercase[tag % 26] if tag < 26 else ascii_lowercase[tag // 26] + ascii_lowercase[tag % 26]


class Lexicon:
    """Tag-preserving source -> target word map shared by every sentence."""

    def __init__(self, spec: SynthSpec, tagset: TagSet = UPOS):
        spec.validate(tagset)
        self.spec = spec
        self.tagset = tagset
        rng = np.random.default_rng([spec.seed, 0xC0FFEE])
        tags = [tagset.index(t) for t in spec.tag_weights]
        weights = np.array([spec.tag_weights[t] for t in spec.tag_weights], dtype=float)
        weights /= weights.sum()
        # every tag with weight gets a share of the vocabulary (at least one word)
        self.word_tag = np.array(tags)[rng.choice(len(tags), size=spec.src_vocab_size, p=weights)]
        weighted = [t for t, w in zip(tags, weights) if w > 0][: spec.src_vocab_size]
        self.word_tag[: len(weighted)] = weighted
        perm = rng.permutation(spec.tgt_vocab_size)
        # source word s translates to target ids perm[s*k : s*k+k]
        self.targets = perm[: spec.src_vocab_size * spec.ambiguity].reshape(spec.src_vocab_size, spec.ambiguity)

    def source_form(self, s: int, lang: str = "") -> str:
        return f"e{lang}{s}"

    def target_form(self, t: int, tag: int) -> str:
        return f"w{t}" + (tag_suffix(tag) if self.spec.suffix_coded else "")


def _sentence_rng(seed: int, stream: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream, index])


def _underlying(lex: Lexicon, rng: np.random.Generator):
    """Draw source word ids and their target realizations for one sentence."""
    spec = lex.spec
    n = int(rng.integers(spec.min_len, spec.max_len + 1))
    words = rng.choice(spec.src_vocab_size, size=n, replace=False)
    choice = rng.integers(0, spec.ambiguity, size=n)
    tags = lex.word_tag[words]
    targets = lex.targets[words, choice]
    return words, tags, targets


def _permute(rng: np.random.Generator, n: int, swap_prob: float) -> list[int]:
    """Target order as a list of underlying positions after local swaps."""
    order = list(range(n))
    j = 0
    while j < n - 1:
        if swap_prob > 0 and rng.random() < swap_prob:
            order[j], order[j + 1] = order[j + 1], order[j]
            j += 2
        else:
            j += 1
    return order


def generate(spec: SynthSpec, tagset: TagSet = UPOS, lang: str = "",
             pair_prefix: str = "p") -> tuple[list[ParallelPair], list[Alignment], list[TaggedSentence]]:
    """Parallel pairs, their gold alignments, and gold-tagged target sentences.

    Target tokens whose source word was dropped have no gold link.
    """
    lex = Lexicon(spec, tagset)
    pairs, gold_aligns, gold_tgts = [], [], []
    width = max(1, len(str(max(spec.num_sentences - 1, 0))))
    for k in range(spec.num_sentences):
        rng = _sentence_rng(spec.seed, 1, k)
        words, tags, targets = _underlying(lex, rng)
        n = len(words)
        keep = rng.random(n) >= spec.drop_prob
        if not keep.any():
            keep[int(rng.integers(n))] = True
        order = _permute(rng, n, spec.swap_prob)
        src_pos = np.cumsum(keep) - 1  # underlying position -> source index
        pid = f"{pair_prefix}{k:0{width}d}"
        src = TaggedSentence.from_lists(
            [lex.source_form(int(w), lang) for w, kp in zip(words, keep) if kp],
            [int(t) for t, kp in zip(tags, keep) if kp], pid)
        tgt_forms = [lex.target_form(int(targets[u]), int(tags[u])) for u in order]
        tgt_tags = [int(tags[u]) for u in order]
        links = {(int(src_pos[u]), j): 1.0 for j, u in enumerate(order) if keep[u]}
        pairs.append(ParallelPair(src, TaggedSentence.from_lists(tgt_forms, sent_id=pid), pid))
        gold_aligns.append(Alignment(pid, links, "gold"))
        gold_tgts.append(TaggedSentence.from_lists(tgt_forms, tgt_tags, pid))
    return pairs, gold_aligns, gold_tgts


def _corrupt(rng: np.random.Generator, tag: int, n_tags: int) -> int:
    other = int(rng.integers(n_tags - 1))
    return other + 1 if other >= tag else other


def make_rendering_group(spec: SynthSpec, K: int, disagreement: float, index: int = 0,
                         tagset: TagSet = UPOS, variation: float = 0.0,
                         lexicon: Lexicon | None = None) -> tuple[RenderingGroup, TaggedSentence]:
    """K projected renderings of one underlying target sentence.

    Rendering 0's token sequence is the gold sentence; the others may replace
    a token by a rendering-specific paraphrase (``variation``) and apply their
    own local swaps. Each projected tag is independently NULL with
    ``spec.drop_prob`` and otherwise corrupted to a different tag with
    probability ``disagreement``.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if not 0.0 <= disagreement <= 1.0 or not 0.0 <= variation <= 1.0:
        raise ValueError("probabilities must lie in [0, 1]")
    lex = lexicon or Lexicon(spec, tagset)
    rng = _sentence_rng(spec.seed, 2, index)
    words, tags, targets = _underlying(lex, rng)
    n = len(words)
    gid = f"g{index}"
    gold_forms = [lex.target_form(int(targets[u]), int(tags[u])) for u in range(n)]
    gold = TaggedSentence.from_lists(gold_forms, [int(t) for t in tags], gid)
    renderings = []
    for r in range(K):
        order = list(range(n)) if r == 0 else _permute(rng, n, spec.swap_prob)
        forms, proj = [], []
        for u in order:
            form = gold_forms[u]
            if r > 0 and variation > 0 and rng.random() < variation:
                form = f"v{r}{form}"
            tag = int(tags[u])
            if rng.random() < spec.drop_prob:
                tag = None
            elif rng.random() < disagreement:
                tag = _corrupt(rng, tag, len(tagset))
            forms.append(form)
            proj.append(tag)
        renderings.append(ProjectedSentence(
            gid, TaggedSentence.from_lists(forms, proj, gid), 1.0, f"s{r}"))
    return RenderingGroup(gid, renderings, [f"s{r}" for r in range(K)]), gold


def make_rendering_groups(spec: SynthSpec, K: int, disagreement: float, tagset: TagSet = UPOS,
                          variation: float = 0.0):
    """``spec.num_sentences`` independent groups sharing one lexicon."""
    lex = Lexicon(spec, tagset)
    return [make_rendering_group(spec, K, disagreement, k, tagset, variation, lex)
            for k in range(spec.num_sentences)]


@dataclass
class MultiSourceCorpus:
    languages: list[str]
    pairs: dict[str, list[ParallelPair]]
    gold_alignments: dict[str, list[Alignment]]
    gold_targets: list[TaggedSentence]          # underlying sentences, one per group
    manifest: list[tuple[str, list[tuple[str, int]]]]  # group_id -> [(lang, sentence number)]
    test: list[TaggedSentence]


def generate_multisource(spec: SynthSpec, languages: list[str], disagreement: float = 0.0,
                         variation: float = 0.0, num_test: int = 200,
                         tagset: TagSet = UPOS) -> MultiSourceCorpus:
    """Mutually parallel source corpora in several languages translated into
    one target language, plus a held-out gold target test set.

    Each language has its own source vocabulary (``e{lang}{id}``) and its own
    rendering of every underlying sentence: local swaps, dropped source words
    and paraphrased target forms vary per language. Source-side tags are
    corrupted with probability ``disagreement`` to stand in for source tagger
    errors and language divergence.
    """
    lex = Lexicon(spec, tagset)
    width = max(1, len(str(max(spec.num_sentences - 1, 0))))
    pairs = {lang: [] for lang in languages}
    golds = {lang: [] for lang in languages}
    gold_targets, manifest = [], []
    for k in range(spec.num_sentences):
        rng = _sentence_rng(spec.seed, 3, k)
        words, tags, targets = _underlying(lex, rng)
        n = len(words)
        gid = f"g{k:0{width}d}"
        gold_forms = [lex.target_form(int(targets[u]), int(tags[u])) for u in range(n)]
        gold_targets.append(TaggedSentence.from_lists(gold_forms, [int(t) for t in tags], gid))
        entries = []
        for lang in languages:
            keep = rng.random(n) >= spec.drop_prob
            if not keep.any():
                keep[int(rng.integers(n))] = True
            order = _permute(rng, n, spec.swap_prob)
            src_pos = np.cumsum(keep) - 1
            src_tags = [int(t) if rng.random() >= disagreement else _corrupt(rng, int(t), len(tagset))
                        for t in tags]
            pid = f"{lang}-{gid}"
            src = TaggedSentence.from_lists(
                [lex.source_form(int(w), lang) for w, kp in zip(words, keep) if kp],
                [t for t, kp in zip(src_tags, keep) if kp], pid)
            tgt_forms = []
            for u in order:
                form = gold_forms[u]
                if variation > 0 and rng.random() < variation:
                    form = f"v{lang}{form}"
                tgt_forms.append(form)
            links = {(int(src_pos[u]), j): 1.0 for j, u in enumerate(order) if keep[u]}
            pairs[lang].append(ParallelPair(src, TaggedSentence.from_lists(tgt_forms, sent_id=pid), pid))
            golds[lang].append(Alignment(pid, links, "gold"))
            entries.append((lang, k + 1))
        manifest.append((gid, entries))
    test_spec = replace(spec, num_sentences=num_test)
    test = []
    for k in range(num_test):
        rng = _sentence_rng(test_spec.seed, 4, k)
        words, tags, targets = _underlying(lex, rng)
        forms = [lex.target_form(int(targets[u]), int(tags[u])) for u in range(len(words))]
        test.append(TaggedSentence.from_lists(forms, [int(t) for t in tags], f"t{k}"))
    return MultiSourceCorpus(list(languages), pairs, golds, gold_targets, manifest, test)
