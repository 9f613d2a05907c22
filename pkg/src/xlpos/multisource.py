"""Majority-vote calibration over renderings projected from parallel sources.

Renderings of the same underlying sentence (one per source language) differ
in wording, but share many surface forms. Every tagged occurrence of a shared
form casts one vote for its tag; the chosen rendering is retagged with the
winners.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus_io import UPOS


@dataclass
class RenderingGroup:
    group_id: str
    renderings: list  # ProjectedSentence, one per source language
    source_languages: list[str]

    def __post_init__(self):
        if not self.renderings:
            raise ValueError(f"group {self.group_id}: needs at least one rendering")
        if len(self.renderings) != len(self.source_languages):
            raise ValueError(f"group {self.group_id}: renderings and languages differ in number")


def find_overlapping_words(group: RenderingGroup) -> set[str]:
    """Forms (exact, case-sensitive) present in at least two renderings."""
    seen: dict[str, int] = {}
    for r in group.renderings:
        for form in set(r.sentence.forms):
            seen[form] = seen.get(form, 0) + 1
    return {f for f, n in seen.items() if n >= 2}


def vote(group: RenderingGroup, n_tags: int = len(UPOS)) -> dict[str, np.ndarray]:
    """Tag vote counts per form; NULL occurrences do not vote."""
    tally: dict[str, np.ndarray] = {}
    for r in group.renderings:
        for tok in r.sentence:
            row = tally.get(tok.form)
            if row is None:
                row = tally[tok.form] = np.zeros(n_tags, dtype=np.int64)
            if tok.tag is not None:
                row[tok.tag] += 1
    return tally


def _winner(votes: np.ndarray, own: int | None) -> int:
    tied = np.flatnonzero(votes == votes.max())
    if own is not None and own in tied:
        return own
    return int(tied[0])


def calibrate(group: RenderingGroup, best: int, n_tags: int = len(UPOS)):
    """Retag overlapping words of rendering ``best`` with their vote winners.

    On a tie the rendering's own tag is kept if it is among the leaders,
    otherwise the smallest tag index wins. NULL tokens of an overlapping
    form with any votes become tagged.
    """
    if not 0 <= best < len(group.renderings):
        raise IndexError(f"group {group.group_id}: no rendering {best}")
    target = group.renderings[best]
    overlap = find_overlapping_words(group)
    if not overlap:
        return target
    tally = vote(group, n_tags)
    tags = []
    for tok in target.sentence:
        tag = tok.tag
        if tok.form in overlap and tally[tok.form].any():
            tag = _winner(tally[tok.form], tok.tag)
        tags.append(tag)
    return target.with_tags(tags)


def corpus_stats(corpora: Mapping[str, Sequence]) -> dict[str, tuple[float, float]]:
    """Per language: (mean coverage, mean avg_link_prob) over its projected corpus."""
    stats = {}
    for lang, corpus in corpora.items():
        if corpus:
            stats[lang] = (float(np.mean([s.coverage for s in corpus])),
                           float(np.mean([s.avg_link_prob for s in corpus])))
        else:
            stats[lang] = (0.0, 0.0)
    return stats


def select_best_rendering(group: RenderingGroup, stats: Mapping[str, tuple[float, float]]) -> int:
    """Index of the language with the highest coverage x link probability.

    The score is corpus-level, so the choice is the same for every group that
    contains the same languages. Ties go to the earlier language.
    """
    scores = []
    for lang in group.source_languages:
        cov, prob = stats.get(lang, (0.0, 0.0))
        scores.append(cov * prob)
    return int(np.argmax(scores))


def read_manifest(text: str) -> list[tuple[str, list[tuple[str, int]]]]:
    """Parse ``group_id<TAB>file:n<TAB>...`` lines; n is the 1-based sentence number."""
    groups = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        gid, *refs = line.split("\t")
        entries = []
        for ref in refs:
            path, sep, n = ref.rpartition(":")
            if not sep or not n.isdigit() or int(n) < 1:
                raise ValueError(f"manifest line {lineno}: bad reference {ref!r}")
            entries.append((path, int(n)))
        if not entries:
            raise ValueError(f"manifest line {lineno}: group {gid!r} has no renderings")
        groups.append((gid, entries))
    return groups


def write_manifest(groups: Sequence[tuple[str, Sequence[tuple[str, int]]]]) -> str:
    return "".join(gid + "".join(f"\t{p}:{n}" for p, n in refs) + "\n" for gid, refs in groups)


def load_groups(manifest: Sequence[tuple[str, Sequence[tuple[str, int]]]],
                corpora: Mapping[str, Sequence]) -> list[RenderingGroup]:
    """Resolve manifest references against already-loaded projected corpora.

    ``corpora`` is keyed by the reference's file name as written in the manifest.
    """
    groups = []
    for gid, refs in manifest:
        renderings, langs = [], []
        for path, n in refs:
            corpus = corpora.get(path)
            if corpus is None:
                corpus = corpora.get(Path(path).name)
            if corpus is None:
                raise KeyError(f"group {gid}: unknown rendering file {path!r}")
            if n > len(corpus):
                raise IndexError(f"group {gid}: {path} has no sentence {n}")
            r = corpus[n - 1]
            renderings.append(r)
            langs.append(r.source_language)
        groups.append(RenderingGroup(gid, renderings, langs))
    return groups
