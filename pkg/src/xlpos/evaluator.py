"""Tagging accuracy, per-tag and multi-category views, projection density
statistics and Pearson correlation."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats

from .corpus_io import UPOS, TaggedSentence, TagSet, Vocabulary


class EvaluationError(ValueError):
    pass


class TagScores(NamedTuple):
    precision: float
    recall: float
    f1: float
    support: int
    accuracy: float  # recall over gold occurrences


class MulticatCell(NamedTuple):
    accuracy: float | None  # None: no such multi-category forms in the gold data
    support: int


@dataclass
class EvalReport:
    token_accuracy: float
    macro_f1: float
    per_tag: dict[str, TagScores]
    token_count: int
    oov_rate: float | None = None
    multicat: dict = field(default_factory=dict)
    confusion: np.ndarray | None = None


def _check_aligned(pred: Sequence[TaggedSentence], gold: Sequence[TaggedSentence]):
    if not pred or not gold:
        raise EvaluationError("nothing to evaluate")
    if len(pred) != len(gold):
        raise EvaluationError(f"{len(pred)} predicted vs {len(gold)} gold sentences")
    for k, (p, g) in enumerate(zip(pred, gold)):
        if len(p) != len(g):
            name = g.sent_id if g.sent_id is not None else k
            raise EvaluationError(f"sentence {name}: {len(p)} predicted vs {len(g)} gold tokens")


def score(pred: Sequence[TaggedSentence], gold: Sequence[TaggedSentence],
          exclude_punct: bool = False, tagset: TagSet = UPOS,
          vocab: Vocabulary | None = None) -> EvalReport:
    """Token accuracy, macro-F1 over tags with gold support, per-tag scores.

    Gold tokens without a tag are ignored; so is PUNCT when ``exclude_punct``.
    ``oov_rate`` is reported only when the training vocabulary is given (its
    forms are matched lowercased, as the tagger looks them up).
    """
    _check_aligned(pred, gold)
    K = len(tagset)
    punct = tagset.index("PUNCT") if exclude_punct and "PUNCT" in tagset else None
    confusion = np.zeros((K, K), dtype=np.int64)  # gold x predicted
    null_pred = np.zeros(K, dtype=np.int64)
    oov = 0
    for p, g in zip(pred, gold):
        for pt, gt in zip(p.tokens, g.tokens):
            if gt.tag is None or gt.tag == punct:
                continue
            if pt.tag is None:
                null_pred[gt.tag] += 1
            else:
                confusion[gt.tag, pt.tag] += 1
            if vocab is not None and gt.form.lower() not in vocab:
                oov += 1
    support = confusion.sum(axis=1) + null_pred
    total = int(support.sum())
    if total == 0:
        raise EvaluationError("no scorable gold tokens")
    correct = np.diag(confusion)
    predicted = confusion.sum(axis=0)
    per_tag = {}
    f1s = []
    for t, sym in enumerate(tagset.tags):
        prec = correct[t] / predicted[t] if predicted[t] else 0.0
        rec = correct[t] / support[t] if support[t] else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        per_tag[sym] = TagScores(float(prec), float(rec), float(f1), int(support[t]), float(rec))
        if support[t]:
            f1s.append(f1)
    return EvalReport(
        token_accuracy=float(correct.sum() / total),
        macro_f1=float(np.mean(f1s)),
        per_tag=per_tag,
        token_count=total,
        oov_rate=None if vocab is None else oov / total,
        confusion=confusion,
    )


DEFAULT_PAIRS = (("VERB", "NOUN"), ("VERB", "ADJ"), ("NOUN", "ADJ"))


def multicat_accuracy(pred: Sequence[TaggedSentence], gold: Sequence[TaggedSentence],
                      pairs=DEFAULT_PAIRS, tagset: TagSet = UPOS) -> dict:
    """Accuracy on forms that carry several gold tags.

    For a pair (T1, T2) the forms are those seen in gold with both tags, and
    every gold occurrence of such a form counts. ``"All"`` covers forms with
    two or more distinct gold tags. A pair with no such forms maps to
    ``MulticatCell(None, 0)``.
    """
    _check_aligned(pred, gold)
    gold_tags = defaultdict(set)
    for g in gold:
        for tok in g.tokens:
            if tok.tag is not None:
                gold_tags[tok.form].add(tok.tag)

    def accuracy(forms):
        hit = n = 0
        for p, g in zip(pred, gold):
            for pt, gt in zip(p.tokens, g.tokens):
                if gt.tag is not None and gt.form in forms:
                    n += 1
                    hit += pt.tag == gt.tag
        return MulticatCell(hit / n if n else None, n)

    result = {}
    for a, b in pairs:
        ia, ib = tagset.index(a), tagset.index(b)
        forms = {f for f, tags in gold_tags.items() if ia in tags and ib in tags}
        result[(a, b)] = accuracy(forms)
    result["All"] = accuracy({f for f, tags in gold_tags.items() if len(tags) >= 2})
    return result


def density_stats(before: Sequence, after: Sequence) -> tuple[float, float]:
    """Relative change in number of training sentences and in mean coverage."""
    if not before:
        raise EvaluationError("the 'before' corpus is empty")
    d_before = float(np.mean([s.coverage for s in before]))
    d_after = float(np.mean([s.coverage for s in after])) if after else 0.0
    d_examples = (len(after) - len(before)) / len(before)
    d_density = (d_after - d_before) / d_before if d_before else 0.0
    return d_examples, d_density


def pearson(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float]:
    """Pearson r and its two-sided p-value from Student's t with n-2 dof."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise EvaluationError("xs and ys must be equal-length sequences")
    n = len(x)
    if n < 3:
        raise EvaluationError("need at least 3 points")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise EvaluationError("zero variance")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        return r, 0.0
    t = r * math.sqrt((n - 2) / (1 - r * r))
    return r, float(2 * stats.t.sf(abs(t), n - 2))


def format_report(report: EvalReport, tagset: TagSet = UPOS) -> str:
    """Human-readable summary with the per-tag table in tag-set order."""
    lines = [
        f"tokens        {report.token_count}",
        f"accuracy      {report.token_accuracy:.4f}",
        f"macro_f1      {report.macro_f1:.4f}",
    ]
    if report.oov_rate is not None:
        lines.append(f"oov_rate      {report.oov_rate:.4f}")
    lines.append("")
    lines.append(f"{'tag':<8}{'prec':>8}{'recall':>8}{'f1':>8}{'support':>9}")
    for sym in tagset.tags:
        s = report.per_tag[sym]
        lines.append(f"{sym:<8}{s.precision:>8.4f}{s.recall:>8.4f}{s.f1:>8.4f}{s.support:>9d}")
    if report.multicat:
        lines.append("")
        lines.append(f"{'multi-category':<16}{'accuracy':>10}{'support':>9}")
        for key, cell in report.multicat.items():
            name = key if isinstance(key, str) else "&".join(k.lower() for k in key)
            acc = "-" if cell.accuracy is None else f"{cell.accuracy:.4f}"
            lines.append(f"{name:<16}{acc:>10}{cell.support:>9d}")
    return "\n".join(lines) + "\n"


def report_to_keyvalue(report: EvalReport, tagset: TagSet = UPOS) -> str:
    """Machine-readable ``key=value`` lines."""
    out = [
        f"token_count={report.token_count}",
        f"token_accuracy={report.token_accuracy:.6f}",
        f"macro_f1={report.macro_f1:.6f}",
    ]
    if report.oov_rate is not None:
        out.append(f"oov_rate={report.oov_rate:.6f}")
    for sym in tagset.tags:
        s = report.per_tag[sym]
        out += [f"tag.{sym}.precision={s.precision:.6f}", f"tag.{sym}.recall={s.recall:.6f}",
                f"tag.{sym}.f1={s.f1:.6f}", f"tag.{sym}.support={s.support}"]
    for key, cell in report.multicat.items():
        name = key if isinstance(key, str) else "&".join(key)
        acc = "absent" if cell.accuracy is None else f"{cell.accuracy:.6f}"
        out += [f"multicat.{name}.accuracy={acc}", f"multicat.{name}.support={cell.support}"]
    return "\n".join(out) + "\n"
