"""IBM Model 1 (optionally Model 2) word alignment with link posteriors.

EM runs over a flat "cell" layout: every (sentence, generating position incl.
NULL, generated position) triple is one cell pointing at a translation-table
entry and a column (one generated token).  An E-step is then three bincounts.
Expected counts are accumulated per fixed-size sentence block and summed in
block order, so the result does not depend on how many threads ran the blocks.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .corpus_io import ParallelPair

NULL_WORD = "<NULL>"
# probability used for unseen (e, f) entries and for a link missing from one direction
FLOOR = 1e-9
FORWARD, BACKWARD, SYMMETRIZED = "forward", "backward", "symmetrized"
SYMMETRIZATIONS = ("intersection", "union", "grow_diag_final")
BLOCK_SIZE = 4096


class AlignmentError(ValueError):
    pass


def _sides(pair: ParallelPair, direction: str) -> tuple[list[str], list[str]]:
    """(generating forms, generated forms) for a pair in the given direction."""
    if direction == FORWARD:
        return pair.source.forms, pair.target.forms
    if direction == BACKWARD:
        return pair.target.forms, pair.source.forms
    raise ValueError(f"unknown direction {direction!r}")


@dataclass
class TranslationTable:
    """Lexical probabilities t(f|e); e index 0 is the NULL word.

    ``distortion`` is only set by IBM Model 2 and maps (i, j, l, m) to
    a(i|j,l,m) with i = 0 for NULL and 1..l for real positions.
    """

    direction: str
    e_vocab: list[str]
    f_vocab: list[str]
    e_idx: np.ndarray
    f_idx: np.ndarray
    prob: np.ndarray
    distortion: dict[tuple[int, int, int, int], float] | None = None
    log_likelihood: list[float] = field(default_factory=list)

    def __post_init__(self):
        self._e_map = {w: i for i, w in enumerate(self.e_vocab)}
        self._f_map = {w: i for i, w in enumerate(self.f_vocab)}
        self._lookup = {(int(e), int(f)): float(p)
                        for e, f, p in zip(self.e_idx, self.f_idx, self.prob)}

    def __len__(self):
        return len(self.prob)

    def t(self, f: str, e: str | None) -> float:
        """t(f|e); ``e=None`` is the NULL word. Unknown pairs get FLOOR."""
        ei = 0 if e is None else self._e_map.get(e)
        fi = self._f_map.get(f)
        if ei is None or fi is None:
            return FLOOR
        return self._lookup.get((ei, fi), FLOOR)

    def row_sums(self) -> np.ndarray:
        return np.bincount(self.e_idx, weights=self.prob, minlength=len(self.e_vocab))

    @classmethod
    def from_dict(cls, entries: dict[tuple[str | None, str], float],
                  direction: str = FORWARD) -> "TranslationTable":
        """Build a table from {(e_form or None for NULL, f_form): prob}."""
        e_vocab = [NULL_WORD] + sorted({e for e, _ in entries if e is not None})
        f_vocab = sorted({f for _, f in entries})
        e_map = {w: i for i, w in enumerate(e_vocab)}
        f_map = {w: i for i, w in enumerate(f_vocab)}
        keys = sorted(entries, key=lambda k: (0 if k[0] is None else e_map[k[0]], f_map[k[1]]))
        return cls(
            direction, e_vocab, f_vocab,
            np.array([0 if e is None else e_map[e] for e, _ in keys], dtype=np.int64),
            np.array([f_map[f] for _, f in keys], dtype=np.int64),
            np.array([entries[k] for k in keys], dtype=np.float64),
        )

    def to_text(self) -> str:
        return "".join(
            f"{self.e_vocab[e]}\t{self.f_vocab[f]}\t{p:.6g}\n"
            for e, f, p in zip(self.e_idx, self.f_idx, self.prob)
        )

    @classmethod
    def from_text(cls, text: str, direction: str = FORWARD) -> "TranslationTable":
        entries = {}
        for line in text.splitlines():
            if not line:
                continue
            e, f, p = line.split("\t")
            entries[(None if e == NULL_WORD else e, f)] = float(p)
        return cls.from_dict(entries, direction)


class _Cells:
    """Flattened E-step layout for a corpus in one direction."""

    def __init__(self, pairs: Sequence[ParallelPair], direction: str, with_distortion: bool):
        e_map = {NULL_WORD: 0}
        f_map: dict[str, int] = {}
        codes, cols, dist_keys = [], [], []
        self.block_cells = [0]  # cell offset at each block boundary
        self.block_cols = [0]
        self.lengths = []  # (l, m) per sentence
        ncols = 0
        ncells = 0
        encoded = []
        for pair in pairs:
            e_forms, f_forms = _sides(pair, direction)
            e_ids = [0] + [e_map.setdefault(w, len(e_map)) for w in e_forms]
            f_ids = [f_map.setdefault(w, len(f_map)) for w in f_forms]
            encoded.append((np.array(e_ids, dtype=np.int64), np.array(f_ids, dtype=np.int64)))
        self.n_e, self.n_f = len(e_map), len(f_map)
        for s, (e_ids, f_ids) in enumerate(encoded):
            l1, m = len(e_ids), len(f_ids)
            codes.append((e_ids[:, None] * self.n_f + f_ids[None, :]).ravel())
            cols.append(np.tile(np.arange(ncols, ncols + m), l1))
            if with_distortion:
                ii = np.repeat(np.arange(l1), m)
                jj = np.tile(np.arange(m), l1)
                dist_keys.append(np.stack([ii, jj, np.full_like(ii, l1 - 1), np.full_like(ii, m)], axis=1))
            self.lengths.append((l1 - 1, m))
            ncols += m
            ncells += l1 * m
            if (s + 1) % BLOCK_SIZE == 0:
                self.block_cells.append(ncells)
                self.block_cols.append(ncols)
        if self.block_cells[-1] != ncells:
            self.block_cells.append(ncells)
            self.block_cols.append(ncols)
        self.ncols = ncols
        self.e_vocab = sorted(e_map, key=e_map.__getitem__)
        self.f_vocab = sorted(f_map, key=f_map.__getitem__)
        entry_codes, self.cell_entry = np.unique(np.concatenate(codes), return_inverse=True)
        self.entry_e = entry_codes // self.n_f
        self.entry_f = entry_codes % self.n_f
        self.cell_col = np.concatenate(cols)
        # log(l+1) per column, IBM1's uniform alignment term
        self.col_log_norm = np.concatenate(
            [np.full(m, math.log(l + 1)) for l, m in self.lengths])
        if with_distortion:
            keys = np.concatenate(dist_keys)
            self.dist_keys, self.cell_dist = np.unique(keys, axis=0, return_inverse=True)
            self.cell_dist = self.cell_dist.ravel()
            # distortion parameters are normalized per (j, l, m) group
            _, self.dist_group = np.unique(self.dist_keys[:, 1:], axis=0, return_inverse=True)
            self.dist_group = self.dist_group.ravel()

    @property
    def n_entries(self):
        return len(self.entry_e)


def _e_step(cells: _Cells, t: np.ndarray, a: np.ndarray | None, threads: int):
    """Expected counts and the corpus log-likelihood under (t, a)."""
    n_blocks = len(cells.block_cells) - 1

    def run(b):
        lo, hi = cells.block_cells[b], cells.block_cells[b + 1]
        c_lo, c_hi = cells.block_cols[b], cells.block_cols[b + 1]
        entry = cells.cell_entry[lo:hi]
        col = cells.cell_col[lo:hi] - c_lo
        w = t[entry]
        if a is not None:
            w = w * a[cells.cell_dist[lo:hi]]
        colsum = np.bincount(col, weights=w, minlength=c_hi - c_lo)
        post = w / colsum[col]
        t_counts = np.bincount(entry, weights=post, minlength=cells.n_entries)
        a_counts = None
        if a is not None:
            a_counts = np.bincount(cells.cell_dist[lo:hi], weights=post, minlength=len(a))
        ll = float(np.sum(np.log(colsum)))
        if a is None:
            ll -= float(np.sum(cells.col_log_norm[c_lo:c_hi]))
        return t_counts, a_counts, ll

    if threads > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, range(n_blocks)))
    else:
        parts = [run(b) for b in range(n_blocks)]
    t_counts = parts[0][0].copy()
    a_counts = None if a is None else parts[0][1].copy()
    ll = parts[0][2]
    for tc, ac, l in parts[1:]:
        t_counts += tc
        if a is not None:
            a_counts += ac
        ll += l
    return t_counts, a_counts, ll


def _normalize(counts: np.ndarray, groups: np.ndarray, n_groups: int) -> np.ndarray:
    totals = np.bincount(groups, weights=counts, minlength=n_groups)
    return counts / totals[groups]


def train_ibm1(pairs: Sequence[ParallelPair], iterations: int = 5, direction: str = FORWARD,
               threads: int = 1) -> TranslationTable:
    """EM for IBM Model 1 with a NULL word on the generating side.

    ``direction="forward"`` learns t(target|source); ``"backward"`` the reverse.
    ``table.log_likelihood`` holds the corpus log-likelihood of the initial
    parameters and after each iteration (length iterations + 1).
    """
    return _train(pairs, iterations, direction, threads, model=1)


def train_ibm2(pairs: Sequence[ParallelPair], iterations: int = 5, direction: str = FORWARD,
               threads: int = 1, ibm1_iterations: int = 5) -> TranslationTable:
    """IBM Model 2: IBM1 initialization followed by EM with a(i|j,l,m)."""
    return _train(pairs, iterations, direction, threads, model=2, ibm1_iterations=ibm1_iterations)


def _train(pairs, iterations, direction, threads, model, ibm1_iterations=0):
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if not pairs:
        raise AlignmentError("cannot train on an empty corpus")
    if direction not in (FORWARD, BACKWARD):
        raise ValueError(f"unknown direction {direction!r}")
    cells = _Cells(pairs, direction, with_distortion=model == 2)
    n_e = cells.n_e
    # uniform over co-occurring f for each e
    t = 1.0 / np.bincount(cells.entry_e, minlength=n_e)[cells.entry_e]
    history = []
    a = None
    if model == 2:
        for _ in range(ibm1_iterations):
            counts, _, ll = _e_step(cells, t, None, threads)
            t = _normalize(counts, cells.entry_e, n_e)
        # uniform a(i|j,l,m) = 1/(l+1)
        a = 1.0 / (cells.dist_keys[:, 2] + 1.0)
    n_groups = None if a is None else int(cells.dist_group.max()) + 1
    for _ in range(iterations):
        counts, a_counts, ll = _e_step(cells, t, a, threads)
        history.append(ll)
        t = _normalize(counts, cells.entry_e, n_e)
        if a is not None:
            a = _normalize(a_counts, cells.dist_group, n_groups)
    history.append(_e_step(cells, t, a, threads)[2])

    distortion = None
    if a is not None:
        distortion = {tuple(int(x) for x in key): float(p) for key, p in zip(cells.dist_keys, a)}
    return TranslationTable(direction, cells.e_vocab, cells.f_vocab, cells.entry_e,
                            cells.entry_f, t, distortion, history)


class AlignmentLink(NamedTuple):
    src: int
    tgt: int
    prob: float


@dataclass
class Alignment:
    """Links of one pair, keyed by (source index, target index)."""

    pair_id: str
    links: dict[tuple[int, int], float] = field(default_factory=dict)
    direction: str = FORWARD

    def __post_init__(self):
        for (i, j), p in self.links.items():
            if i < 0 or j < 0 or not 0.0 <= p <= 1.0:
                raise AlignmentError(f"pair {self.pair_id}: bad link {i}-{j}:{p}")

    def __len__(self):
        return len(self.links)

    def __iter__(self) -> Iterator[AlignmentLink]:
        for (i, j) in sorted(self.links):
            yield AlignmentLink(i, j, self.links[i, j])

    def keys(self) -> set[tuple[int, int]]:
        return set(self.links)


def posterior_matrix(table: TranslationTable, gen_forms: Sequence[str],
                     obs_forms: Sequence[str]) -> np.ndarray:
    """p(a_j = i | f, e) with row 0 for NULL, shape (l+1, m)."""
    l, m = len(gen_forms), len(obs_forms)
    gens = [None] + list(gen_forms)
    w = np.array([[table.t(f, e) for f in obs_forms] for e in gens], dtype=np.float64)
    if table.distortion is not None:
        d = table.distortion
        uniform = 1.0 / (l + 1)
        w *= np.array([[d.get((i, j, l, m), uniform) for j in range(m)] for i in range(l + 1)])
    return w / w.sum(axis=0, keepdims=True)


def posterior_align(table: TranslationTable, pair: ParallelPair) -> Alignment:
    """Most probable generator for every generated token.

    Equal posteriors resolve to the smaller source position, and a real word
    beats NULL on a tie. Tokens whose best generator is NULL stay unaligned.
    """
    gen_forms, obs_forms = _sides(pair, table.direction)
    post = posterior_matrix(table, gen_forms, obs_forms)
    links = {}
    for j in range(len(obs_forms)):
        i = int(np.argmax(post[1:, j]))
        p = float(post[i + 1, j])
        if post[0, j] > p:
            continue
        key = (i, j) if table.direction == FORWARD else (j, i)
        links[key] = min(p, 1.0)
    return Alignment(pair.pair_id, links, table.direction)


_NEIGHBORS = ((-1, 0), (0, -1), (1, 0), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1))


def _grow_diag_final(fwd: set, bwd: set) -> set:
    union = fwd | bwd
    result = fwd & bwd
    src_aligned = {i for i, _ in result}
    tgt_aligned = {j for _, j in result}

    def add(i, j):
        result.add((i, j))
        src_aligned.add(i)
        tgt_aligned.add(j)

    added = True
    while added:
        added = False
        for i, j in sorted(result):
            for di, dj in _NEIGHBORS:
                cand = (i + di, j + dj)
                if cand in union and cand not in result and (
                        cand[0] not in src_aligned or cand[1] not in tgt_aligned):
                    add(*cand)
                    added = True
    for directional in (fwd, bwd):
        for i, j in sorted(directional):
            if (i, j) not in result and (i not in src_aligned or j not in tgt_aligned):
                add(i, j)
    return result


def symmetrize(fwd: Alignment, bwd: Alignment, method: str = "intersection") -> Alignment:
    """Combine directional alignments; a link's probability is the geometric
    mean of its two directional posteriors, FLOOR standing in for a missing one."""
    if fwd.pair_id != bwd.pair_id:
        raise AlignmentError(f"pair mismatch: {fwd.pair_id!r} vs {bwd.pair_id!r}")
    f_keys, b_keys = fwd.keys(), bwd.keys()
    if method == "intersection":
        keys = f_keys & b_keys
    elif method == "union":
        keys = f_keys | b_keys
    elif method == "grow_diag_final":
        keys = _grow_diag_final(f_keys, b_keys)
    else:
        raise ValueError(f"unknown symmetrization {method!r}")
    links = {k: math.sqrt(fwd.links.get(k, FLOOR) * bwd.links.get(k, FLOOR)) for k in keys}
    return Alignment(fwd.pair_id, links, SYMMETRIZED)


def filter_links(alignment: Alignment, alpha: float) -> Alignment:
    """Keep links whose probability is at least ``alpha``."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    kept = {k: p for k, p in alignment.links.items() if p >= alpha}
    return Alignment(alignment.pair_id, kept, alignment.direction)


def align_corpus(pairs: Sequence[ParallelPair], iterations: int = 5, alpha: float = 0.1,
                 method: str = "intersection", model: int = 1, threads: int = 1,
                 filter_before_symmetrize: bool = False):
    """Train both directions, align, symmetrize and α-filter every pair.

    Returns (alignments, forward table, backward table).
    """
    trainer = train_ibm1 if model == 1 else train_ibm2
    t_fwd = trainer(pairs, iterations, FORWARD, threads=threads)
    t_bwd = trainer(pairs, iterations, BACKWARD, threads=threads)
    result = []
    for pair in pairs:
        fwd = posterior_align(t_fwd, pair)
        bwd = posterior_align(t_bwd, pair)
        if filter_before_symmetrize:
            fwd, bwd = filter_links(fwd, alpha), filter_links(bwd, alpha)
        result.append(filter_links(symmetrize(fwd, bwd, method), alpha))
    return result, t_fwd, t_bwd


def format_alignment(alignment: Alignment) -> str:
    return " ".join(f"{l.src}-{l.tgt}:{l.prob:.6g}" for l in alignment)


def write_alignments(alignments: Iterable[Alignment]) -> str:
    """Pharaoh lines extended with posteriors: ``i-j:p`` per link."""
    return "".join(format_alignment(a) + "\n" for a in alignments)


def parse_alignment_line(line: str, pair_id: str, direction: str = SYMMETRIZED) -> Alignment:
    links = {}
    for item in line.split():
        try:
            ij, _, p = item.partition(":")
            i, j = ij.split("-")
            key = (int(i), int(j))
            prob = float(p) if p else 1.0
        except ValueError:
            raise AlignmentError(f"pair {pair_id}: malformed link {item!r}") from None
        if key in links:
            raise AlignmentError(f"pair {pair_id}: duplicate link {item!r}")
        links[key] = prob
    return Alignment(pair_id, links, direction)


def parse_alignments(text: str, pair_ids: Sequence[str], direction: str = SYMMETRIZED) -> list[Alignment]:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if len(lines) != len(pair_ids):
        raise AlignmentError(f"{len(lines)} alignment lines for {len(pair_ids)} pairs")
    return [parse_alignment_line(line, pid, direction) for line, pid in zip(lines, pair_ids)]
