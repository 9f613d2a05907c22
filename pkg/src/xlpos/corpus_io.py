"""Corpus readers/writers, the tag inventory and vocabularies.

Tags are carried as integer indices into a :class:`TagSet`; ``None`` marks a
NULL (unprojected) tag everywhere in the package.
"""
from __future__ import annotations

import io
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

log = logging.getLogger(__name__)

UPOS_TAGS = (
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM",
    "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X",
)
NULL = "NULL"


class ConllParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class UnknownTagError(ValueError):
    def __init__(self, symbol: str, lineno: int | None = None):
        where = f" (line {lineno})" if lineno is not None else ""
        super().__init__(f"unknown tag {symbol!r}{where}")
        self.symbol = symbol


@dataclass(frozen=True)
class TagSet:
    tags: tuple[str, ...] = UPOS_TAGS
    null_marker: str = NULL

    def __post_init__(self):
        if len(set(self.tags)) != len(self.tags):
            raise ValueError("duplicate tags in tag set")
        if self.null_marker in self.tags:
            raise ValueError(f"{self.null_marker!r} is reserved and cannot be a tag")
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tags)})

    def __len__(self):
        return len(self.tags)

    def __iter__(self):
        return iter(self.tags)

    def __contains__(self, symbol):
        return symbol in self._index

    def index(self, symbol: str) -> int:
        try:
            return self._index[symbol]
        except KeyError:
            raise UnknownTagError(symbol) from None

    def symbol(self, i: int | None) -> str:
        if i is None:
            return self.null_marker
        return self.tags[i]


UPOS = TagSet()


@dataclass
class Token:
    form: str
    tag: int | None = None

    def __post_init__(self):
        if not self.form or any(ch.isspace() for ch in self.form):
            raise ValueError(f"invalid token form {self.form!r}")


@dataclass
class TaggedSentence:
    tokens: list[Token]
    sent_id: str | None = None

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("a sentence needs at least one token")

    def __len__(self):
        return len(self.tokens)

    def __iter__(self) -> Iterator[Token]:
        return iter(self.tokens)

    @property
    def forms(self) -> list[str]:
        return [t.form for t in self.tokens]

    @property
    def tags(self) -> list[int | None]:
        return [t.tag for t in self.tokens]

    @classmethod
    def from_lists(cls, forms: Sequence[str], tags: Sequence[int | None] | None = None,
                   sent_id: str | None = None) -> "TaggedSentence":
        if tags is None:
            tags = [None] * len(forms)
        if len(tags) != len(forms):
            raise ValueError("forms and tags differ in length")
        return cls([Token(f, t) for f, t in zip(forms, tags)], sent_id)

    def with_tags(self, tags: Sequence[int | None]) -> "TaggedSentence":
        return TaggedSentence.from_lists(self.forms, tags, self.sent_id)


@dataclass
class ParallelPair:
    source: TaggedSentence
    target: TaggedSentence
    pair_id: str

    def __post_init__(self):
        if any(t is None for t in self.source.tags):
            raise ValueError(f"pair {self.pair_id}: source side must be fully tagged")


def _lines(text) -> Iterator[str]:
    if isinstance(text, str):
        text = io.StringIO(text)
    for line in text:
        yield line.rstrip("\n").rstrip("\r")


def parse_conllu(text, tagset: TagSet = UPOS) -> list[TaggedSentence]:
    """Read CoNLL-U into sentences of (FORM, UPOS).

    Multiword-token ranges and empty nodes are skipped. ``_`` in the UPOS
    column reads back as a NULL tag. ``# sent_id = ...`` is kept on the sentence.
    """
    sentences = []
    tokens: list[Token] = []
    sent_id = None

    def flush():
        nonlocal tokens, sent_id
        if tokens:
            sentences.append(TaggedSentence(tokens, sent_id))
        tokens, sent_id = [], None

    for lineno, line in enumerate(_lines(text), start=1):
        if not line.strip():
            flush()
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].partition("=")
            if sep and key.strip() == "sent_id":
                sent_id = value.strip()
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ConllParseError(lineno, f"expected 10 columns, got {len(cols)}")
        if "-" in cols[0] or "." in cols[0]:
            continue
        upos = cols[3]
        if upos == "_":
            tag = None
        elif upos in tagset:
            tag = tagset.index(upos)
        else:
            raise UnknownTagError(upos, lineno)
        try:
            tokens.append(Token(cols[1], tag))
        except ValueError as exc:
            raise ConllParseError(lineno, str(exc)) from None
    flush()
    return sentences


def parse_plain(text) -> list[TaggedSentence]:
    """One pre-tokenized sentence per line; blank lines are skipped."""
    sentences = []
    blank = 0
    for line in _lines(text):
        forms = line.split()
        if not forms:
            blank += 1
            continue
        sentences.append(TaggedSentence.from_lists(forms))
    if blank:
        log.warning("skipped %d blank line(s)", blank)
    return sentences


def write_conllu(sentences: Iterable[TaggedSentence], tagset: TagSet = UPOS) -> str:
    out = []
    for sent in sentences:
        if sent.sent_id is not None:
            out.append(f"# sent_id = {sent.sent_id}\n")
        for i, tok in enumerate(sent.tokens, start=1):
            upos = "_" if tok.tag is None else tagset.symbol(tok.tag)
            out.append(f"{i}\t{tok.form}\t_\t{upos}\t_\t_\t_\t_\t_\t_\n")
        out.append("\n")
    return "".join(out)


def write_plain(sentences: Iterable[TaggedSentence]) -> str:
    return "".join(" ".join(s.forms) + "\n" for s in sentences)


@dataclass
class Vocabulary:
    """Dense form -> index map with reserved PAD (0) and UNK (1) slots."""

    index: dict[str, int] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)

    PAD = 0
    UNK = 1
    RESERVED = 2

    def __len__(self):
        return self.RESERVED + len(self.index)

    def __contains__(self, form):
        return form in self.index

    def lookup(self, form: str) -> int:
        return self.index.get(form, self.UNK)

    def forms(self) -> list[str]:
        return sorted(self.index, key=self.index.__getitem__)

    @classmethod
    def from_counts(cls, counts: Counter | dict, min_count: int = 1) -> "Vocabulary":
        if min_count < 1:
            raise ValueError("min_count must be >= 1")
        kept = [(f, c) for f, c in counts.items() if c >= min_count]
        kept.sort(key=lambda fc: (-fc[1], fc[0]))
        vocab = cls()
        for i, (form, count) in enumerate(kept, start=cls.RESERVED):
            vocab.index[form] = i
            vocab.counts[form] = count
        return vocab

    def to_text(self) -> str:
        return "".join(f"{f}\t{self.index[f]}\t{self.counts.get(f, 0)}\n" for f in self.forms())

    @classmethod
    def from_text(cls, text: str) -> "Vocabulary":
        vocab = cls()
        for lineno, line in enumerate(_lines(text), start=1):
            if not line:
                continue
            try:
                form, idx, count = line.split("\t")
                vocab.index[form] = int(idx)
                vocab.counts[form] = int(count)
            except ValueError:
                raise ConllParseError(lineno, "expected form<TAB>index<TAB>count") from None
        expected = set(range(cls.RESERVED, len(vocab)))
        if set(vocab.index.values()) != expected:
            raise ValueError("vocabulary indices are not dense")
        return vocab


def build_vocabulary(sentences: Iterable[TaggedSentence], min_count: int = 1,
                     lowercase: bool = False) -> Vocabulary:
    """Index every form seen at least ``min_count`` times.

    Order is descending frequency, ties broken lexicographically.
    """
    counts = Counter()
    for sent in sentences:
        for form in sent.forms:
            counts[form.lower() if lowercase else form] += 1
    return Vocabulary.from_counts(counts, min_count)
