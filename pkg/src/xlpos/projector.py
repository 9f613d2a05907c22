"""Tag projection across alignment links, type constraints and sentence selection."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .corpus_io import UPOS, ParallelPair, TaggedSentence, TagSet, parse_conllu, write_conllu


@dataclass
class ProjectedSentence:
    pair_id: str
    sentence: TaggedSentence
    avg_link_prob: float = 0.0
    source_language: str = ""

    def __post_init__(self):
        if not 0.0 <= self.avg_link_prob <= 1.0:
            raise ValueError(f"avg_link_prob {self.avg_link_prob} outside [0, 1]")

    @property
    def coverage(self) -> float:
        tags = self.sentence.tags
        return sum(t is not None for t in tags) / len(tags)

    def with_tags(self, tags) -> "ProjectedSentence":
        return ProjectedSentence(self.pair_id, self.sentence.with_tags(tags),
                                 self.avg_link_prob, self.source_language)


def project_tokens(pair: ParallelPair, alignment, source_language: str = "") -> ProjectedSentence:
    """Copy each source tag to its linked target token.

    A target token linked to several source tokens takes the tag of the most
    probable link (smaller source index on ties); unlinked tokens stay NULL.
    """
    src_tags = pair.source.tags
    best: dict[int, tuple[float, int]] = {}
    for (i, j), p in alignment.links.items():
        if i >= len(src_tags) or j >= len(pair.target):
            raise IndexError(f"pair {pair.pair_id}: link {i}-{j} out of bounds")
        cur = best.get(j)
        if cur is None or p > cur[0] or (p == cur[0] and i < cur[1]):
            best[j] = (p, i)
    tags = [None] * len(pair.target)
    for j, (_, i) in best.items():
        tags[j] = src_tags[i]
    used = [p for p, _ in best.values()]
    avg = float(np.mean(used)) if used else 0.0
    sent = TaggedSentence.from_lists(pair.target.forms, tags, pair.pair_id)
    return ProjectedSentence(pair.pair_id, sent, min(avg, 1.0), source_language)


class TypeDictionary:
    """Per-form counts of projected tags and the tags they license."""

    def __init__(self, n_tags: int, min_relative_freq: float = 0.2):
        if not 0.0 < min_relative_freq <= 1.0:
            raise ValueError("min_relative_freq must lie in (0, 1]")
        self.n_tags = n_tags
        self.min_relative_freq = min_relative_freq
        self.counts: dict[str, np.ndarray] = {}

    def add(self, form: str, tag: int, n: int = 1):
        row = self.counts.get(form)
        if row is None:
            row = self.counts[form] = np.zeros(self.n_tags, dtype=np.int64)
        row[tag] += n

    def merge(self, other: "TypeDictionary"):
        for form, row in other.counts.items():
            mine = self.counts.get(form)
            if mine is None:
                self.counts[form] = row.copy()
            else:
                mine += row

    def allowed(self, form: str) -> frozenset[int]:
        row = self.counts.get(form)
        if row is None or row.sum() == 0:
            return frozenset(range(self.n_tags))
        rel = row / row.sum()
        return frozenset(int(t) for t in np.flatnonzero(rel >= self.min_relative_freq))


def _count(corpus: Sequence[ProjectedSentence], n_tags: int, min_rel: float) -> TypeDictionary:
    d = TypeDictionary(n_tags, min_rel)
    for ps in corpus:
        for tok in ps.sentence:
            if tok.tag is not None:
                d.add(tok.form, tok.tag)
    return d


def build_type_dictionary(corpus: Sequence[ProjectedSentence], min_relative_freq: float = 0.2,
                          n_tags: int = len(UPOS), threads: int = 1) -> TypeDictionary:
    result = TypeDictionary(n_tags, min_relative_freq)
    if threads > 1 and len(corpus) > 1:
        chunk = -(-len(corpus) // threads)
        parts = [corpus[k:k + chunk] for k in range(0, len(corpus), chunk)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for d in pool.map(lambda c: _count(c, n_tags, min_relative_freq), parts):
                result.merge(d)
    else:
        result.merge(_count(corpus, n_tags, min_relative_freq))
    return result


def apply_type_constraints(s: ProjectedSentence, d: TypeDictionary) -> ProjectedSentence:
    """Keep licensed tags, repair to a form's only licensed tag, else NULL."""
    tags = []
    for tok in s.sentence:
        tag = tok.tag
        if tag is not None:
            allowed = d.allowed(tok.form)
            if tag not in allowed:
                tag = next(iter(allowed)) if len(allowed) == 1 else None
        tags.append(tag)
    return s.with_tags(tags)


def select_training_sentences(corpus: Iterable[ProjectedSentence], min_coverage: float = 0.75,
                              top_k: int | None = None) -> list[ProjectedSentence]:
    """Sentences with enough coverage, most confident alignments first."""
    if not 0.0 <= min_coverage <= 1.0:
        raise ValueError("min_coverage must lie in [0, 1]")
    if top_k is not None and top_k < 1:
        raise ValueError("top_k must be >= 1")
    kept = [s for s in corpus if s.coverage >= min_coverage]
    kept.sort(key=lambda s: (-s.avg_link_prob, s.pair_id))
    return kept if top_k is None else kept[:top_k]


def project_corpus(pairs: Sequence[ParallelPair], alignments, source_language: str = "",
                   min_relative_freq: float = 0.2, n_tags: int = len(UPOS),
                   threads: int = 1) -> list[ProjectedSentence]:
    """Token projection followed by type constraints built from the same corpus."""
    if len(pairs) != len(alignments):
        raise ValueError(f"{len(pairs)} pairs but {len(alignments)} alignments")
    for p, a in zip(pairs, alignments):
        if p.pair_id != a.pair_id:
            raise ValueError(f"alignment {a.pair_id!r} does not belong to pair {p.pair_id!r}")
    job = lambda pa: project_tokens(pa[0], pa[1], source_language)  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            projected = list(pool.map(job, zip(pairs, alignments)))
    else:
        projected = [job(pa) for pa in zip(pairs, alignments)]
    d = build_type_dictionary(projected, min_relative_freq, n_tags, threads)
    return [apply_type_constraints(s, d) for s in projected]


def write_projected(corpus: Sequence[ProjectedSentence], tagset: TagSet = UPOS) -> tuple[str, str]:
    """CoNLL-U text and the sidecar ``pair_id, coverage, avg_link_prob, language`` table."""
    sents = []
    meta = []
    for s in corpus:
        sents.append(TaggedSentence(s.sentence.tokens, s.pair_id))
        meta.append(f"{s.pair_id}\t{s.coverage:.6g}\t{s.avg_link_prob:.6g}\t{s.source_language}\n")
    return write_conllu(sents, tagset), "".join(meta)


def read_projected(conllu_text: str, meta_text: str, tagset: TagSet = UPOS) -> list[ProjectedSentence]:
    sents = parse_conllu(conllu_text, tagset)
    rows = [line.split("\t") for line in meta_text.splitlines() if line]
    if len(rows) != len(sents):
        raise ValueError(f"{len(sents)} sentences but {len(rows)} metadata rows")
    out = []
    for sent, row in zip(sents, rows):
        if len(row) != 4:
            raise ValueError(f"bad metadata row {row!r}")
        pair_id, _cov, avg, lang = row
        if sent.sent_id is not None and sent.sent_id != pair_id:
            raise ValueError(f"metadata for {pair_id!r} does not match sentence {sent.sent_id!r}")
        out.append(ProjectedSentence(pair_id, sent, float(avg), lang))
    return out
