"""The ten end-to-end acceptance checks.

Each test appends a PASS/FAIL line to ``conftest.ACCEPTANCE`` (shown in the
terminal summary) and prints it. Expensive runs are cached so that the
determinism check can compare a fresh rerun against the first run.
"""
import functools
import math
import tempfile
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from conftest import ACCEPTANCE
from xlpos import aligner, cli, evaluator, multisource, projector, tagger
from xlpos.corpus_io import UPOS, TaggedSentence, parse_conllu, write_conllu
from xlpos.synth import SynthSpec, generate, make_rendering_groups

WORK = Path(tempfile.mkdtemp(prefix="xlpos-acceptance-"))


@contextmanager
def criterion(n, title):
    notes = []
    try:
        yield notes
    except BaseException:
        line = f"[FAIL] criterion {n}: {title}" + (f" ({'; '.join(notes)})" if notes else "")
        ACCEPTANCE.append(line)
        print(line)
        raise
    line = f"[PASS] criterion {n}: {title}" + (f" ({'; '.join(notes)})" if notes else "")
    ACCEPTANCE.append(line)
    print(line)


# -- 1: EM ------------------------------------------------------------------

def run_em(threads=1):
    pairs, gold, _ = generate(SynthSpec(seed=11, num_sentences=5000, src_vocab_size=500,
                                        tgt_vocab_size=500))
    start = time.perf_counter()
    table = aligner.train_ibm1(pairs, 10, threads=threads)
    aligns = [aligner.posterior_align(table, p) for p in pairs]
    elapsed = time.perf_counter() - start
    hit = sum(len(a.keys() & g.keys()) for a, g in zip(aligns, gold))
    total = sum(len(g) for g in gold)
    artifacts = {"table": table.to_text(), "alignments": aligner.write_alignments(aligns),
                 "ll": repr(table.log_likelihood)}
    return dict(recovery=hit / total, ll=table.log_likelihood, seconds=elapsed), artifacts


@functools.lru_cache(maxsize=None)
def first_em():
    return run_em()


def test_1_em_recovers_gold_links():
    with criterion(1, "IBM1 EM on 5k bijective pairs") as notes:
        m, _ = first_em()
        notes += [f"recovery {m['recovery']:.4f}", f"{m['seconds']:.1f}s"]
        ll = m["ll"]
        assert len(ll) == 11
        assert all(b >= a - 1e-9 for a, b in zip(ll, ll[1:])), "log-likelihood decreased"
        assert m["recovery"] >= 0.99
        assert m["seconds"] < 60


# -- 2: projection oracle -----------------------------------------------------

def run_projection(threads=1):
    out = {}
    artifacts = {}
    for drop in (0.0, 0.1):
        pairs, gold_al, gold = generate(SynthSpec(seed=12, num_sentences=2000, drop_prob=drop,
                                                  swap_prob=0.2))
        corpus = projector.project_corpus(pairs, gold_al, "src", threads=threads)
        aligned_ok = aligned = null_ok = 0
        tokens = 0
        for s, g, a in zip(corpus, gold, gold_al):
            linked = {j for _, j in a.links}
            for j, (pt, gt) in enumerate(zip(s.sentence.tags, g.tags)):
                tokens += 1
                if j in linked:
                    aligned += 1
                    aligned_ok += pt == gt
                else:
                    null_ok += pt is None
        nulls = sum(t is None for s in corpus for t in s.sentence.tags)
        out[drop] = dict(aligned=aligned, aligned_ok=aligned_ok, unaligned=tokens - aligned,
                         null_ok=null_ok, nulls=nulls)
        artifacts[drop] = projector.write_projected(corpus)
    return out, artifacts


@functools.lru_cache(maxsize=None)
def first_projection():
    return run_projection()


def test_2_projection_oracle():
    with criterion(2, "projection through gold alignments") as notes:
        res, _ = first_projection()
        clean, dropped = res[0.0], res[0.1]
        notes += [f"clean {clean['aligned_ok']}/{clean['aligned']}",
                  f"drop=0.1: {dropped['unaligned']} unaligned, {dropped['nulls']} NULL"]
        for r in (clean, dropped):
            assert r["aligned_ok"] == r["aligned"]
            assert r["null_ok"] == r["unaligned"] == r["nulls"]
        assert clean["unaligned"] == 0 and dropped["unaligned"] > 0


# -- 3: α filter --------------------------------------------------------------

def test_3_alpha_filter():
    with criterion(3, "alignment confidence filter") as notes:
        a = aligner.Alignment("p", {(0, 0): 0.05, (1, 1): 0.9, (2, 2): 0.1, (3, 3): 0.5, (4, 4): 1.0})
        assert aligner.filter_links(a, 0.1).links == {(1, 1): 0.9, (2, 2): 0.1, (3, 3): 0.5, (4, 4): 1.0}
        alphas = (0.0, 0.1, 0.5, 1.0)
        kept = []
        for alpha in alphas:
            once = aligner.filter_links(a, alpha)
            assert aligner.filter_links(once, alpha).links == once.links
            assert set(once.links) == {k for k, p in a.links.items() if p >= alpha}
            kept.append(set(once.links))
        assert all(hi <= lo for lo, hi in zip(kept, kept[1:]))
        assert kept[0] == set(a.links)
        notes.append("kept " + "/".join(str(len(k)) for k in kept) + " links at α=" + ",".join(map(str, alphas)))


# -- 4: voting ------------------------------------------------------------------

def run_voting():
    spec = SynthSpec(seed=14, num_sentences=1400)
    groups = make_rendering_groups(spec, 5, 0.2)
    calibrated_err = single_err = n = 0
    texts = []
    for g, gold in groups:
        out = multisource.calibrate(g, 0)
        overlap = multisource.find_overlapping_words(g)
        for tok_in, tok_out, gt in zip(g.renderings[0].sentence, out.sentence, gold.tags):
            if tok_in.form in overlap:
                n += 1
                single_err += tok_in.tag != gt
                calibrated_err += tok_out.tag != gt
        texts.append(out.sentence)
        if n >= 10000:
            break
    clean = make_rendering_groups(SynthSpec(seed=15, num_sentences=300), 5, 0.0)
    clean_exact = all(multisource.calibrate(g, 0).sentence.tags == gold.tags for g, gold in clean)
    single = make_rendering_groups(SynthSpec(seed=16, num_sentences=300), 1, 0.2)
    identity = all(multisource.calibrate(g, 0).sentence.tags == g.renderings[0].sentence.tags
                   for g, _ in single)
    metrics = dict(n=n, calibrated=calibrated_err / n, single=single_err / n,
                   clean_exact=clean_exact, identity=identity)
    return metrics, {"calibrated": write_conllu(texts)}


@functools.lru_cache(maxsize=None)
def first_voting():
    return run_voting()


def test_4_voting_calibration():
    with criterion(4, "majority-vote calibration, K=5, disagreement 0.2") as notes:
        m, _ = first_voting()
        notes += [f"{m['n']} overlapping tokens", f"calibrated error {m['calibrated']:.4f}",
                  f"single-rendering error {m['single']:.4f}"]
        assert m["n"] >= 10000
        assert m["calibrated"] < m["single"]
        assert m["clean_exact"], "disagreement 0 did not reproduce gold"
        assert m["identity"], "K=1 changed a rendering"


# -- 5: gradients --------------------------------------------------------------

def run_gradients():
    results = []
    null_zero = True
    for draw in range(10):
        rng = np.random.default_rng(100 + draw)
        sents = generate(SynthSpec(seed=200 + draw, num_sentences=20, src_vocab_size=50,
                                   tgt_vocab_size=50, min_len=2, max_len=9))[2]
        cfg = tagger.TaggerConfig(word_embedding_size=6, affix_embedding_size=5, hidden_nodes=8,
                                  dropout_rate=0.0, dtype="float64", word_min_count=1, seed=draw)
        model = tagger.build_model(sents, cfg)
        for k in model.params:
            model.params[k] *= 1.0 + 2.0 * rng.random()
        sent = sents[int(rng.integers(len(sents)))]
        tags = [None if rng.random() < 0.3 else t for t in sent.tags]
        tags[int(rng.integers(len(tags)))] = sent.tags[0]
        feats = model.featurize(sent)
        worst, blocks = tagger.gradient_check(model, feats, tags, 1e-5, per_block=20, seed=draw,
                                              return_blocks=True)
        results.append((worst, blocks))
        scores, _ = tagger.forward(model, feats)
        _, d = tagger.masked_loss(scores, tags)
        null_rows = [j for j, t in enumerate(tags) if t is None]
        null_zero &= not d[null_rows].any()
        _, g_null = tagger.loss_and_grads(model, [feats], [[None] * len(feats)], train_mode=False)
        for g in g_null.values():
            null_zero &= not np.any(g if isinstance(g, np.ndarray) else g.values)
    return dict(results=results, null_zero=null_zero), {"errors": repr([w for w, _ in results])}


@functools.lru_cache(maxsize=None)
def first_gradients():
    return run_gradients()


def test_5_gradient_check():
    with criterion(5, "analytic vs finite-difference gradients") as notes:
        m, _ = first_gradients()
        worst = max(w for w, _ in m["results"])
        notes += [f"{len(m['results'])} draws", f"max relative error {worst:.2e}"]
        for _, blocks in m["results"]:
            assert set(blocks) == set(tagger.BLOCKS)
        assert len(m["results"]) >= 10
        assert worst < 1e-4
        assert m["null_zero"], "a NULL position produced a gradient"


# -- 6: learnability -------------------------------------------------------------

def run_learnability():
    _, _, sents = generate(SynthSpec(seed=16, num_sentences=5500))
    train_set, held_out = sents[:5000], sents[5000:]
    start = time.perf_counter()
    model, history = tagger.fit(train_set, tagger.TaggerConfig(seed=6))
    elapsed = time.perf_counter() - start
    model.check_finite()

    def acc(data):
        return evaluator.score(tagger.tag_sentences(model, data), data).token_accuracy

    path = WORK / f"learn-{time.monotonic_ns()}.bin"
    tagger.save_model(model, path)
    metrics = dict(train=acc(train_set), held_out=acc(held_out), seconds=elapsed, history=history)
    return metrics, {"model": path.read_bytes(), "history": repr(history)}


@functools.lru_cache(maxsize=None)
def first_learnability():
    return run_learnability()


def test_6_tagger_learnability():
    with criterion(6, "suffix-coded corpus, 5k sentences, default hyperparameters") as notes:
        m, _ = first_learnability()
        notes += [f"train {m['train']:.4f}", f"held-out {m['held_out']:.4f}", f"{m['seconds']:.0f}s"]
        assert all(math.isfinite(x) for x in m["history"])
        assert m["train"] >= 0.99
        assert m["held_out"] >= 0.95
        assert m["seconds"] < 300


# -- 7 / 8: CLI pipelines ---------------------------------------------------------

def _cfg(path: Path, values: dict) -> str:
    path.write_text("".join(f"{k}={v}\n" for k, v in values.items()))
    return str(path)


def _files(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file() and p.name != "run.json"}


def _accuracy(out: Path, data: Path) -> float:
    pred = parse_conllu((out / "tag" / "pred.conllu").read_text())
    gold = parse_conllu((data / "test.conllu").read_text())
    return evaluator.score(pred, gold).token_accuracy


def run_noiseless(tag, threads=1):
    root = WORK / f"noiseless-{tag}"
    root.mkdir()
    cfg = _cfg(root / "run.cfg", {
        "data.dir": root / "data", "run.out_dir": root / "out", "run.threads": threads,
        "run.seed": 7, "synth.languages": "en,es", "synth.num_sentences": 1000,
        "synth.num_test": 200})
    codes = (cli.main(["synth", "--config", cfg]), cli.main(["pipeline", "--config", cfg]))
    files = {**{f"data/{k}": v for k, v in _files(root / "data").items()},
             **{f"out/{k}": v for k, v in _files(root / "out").items()}}
    return dict(codes=codes, accuracy=_accuracy(root / "out", root / "data")), files


@functools.lru_cache(maxsize=None)
def first_noiseless():
    return run_noiseless("first")


def test_7_noiseless_pipeline():
    with criterion(7, "synth (no noise) then pipeline") as notes:
        m, _ = first_noiseless()
        notes.append(f"accuracy {m['accuracy']:.6f}")
        assert m["codes"] == (0, 0)
        assert m["accuracy"] == 1.0


def _tag_accuracy(sentences, gold_by_group):
    ok = n = 0
    for s in sentences:
        gold = gold_by_group[s.sent_id.split("-", 1)[-1]]
        for form, tag in zip(s.forms, s.tags):
            if tag is not None:
                n += 1
                ok += tag == gold.get(form)
    return ok / n


def run_noisy(tag):
    root = WORK / f"noisy-{tag}"
    root.mkdir()
    base = {"data.dir": root / "data", "run.seed": 8, "synth.languages": "en,es,fr,de",
            "synth.num_sentences": 1000, "synth.num_test": 200, "synth.swap_prob": 0.1,
            "synth.drop_prob": 0.1, "synth.disagreement": 0.15}
    multi = _cfg(root / "multi.cfg", {**base, "run.out_dir": root / "multi"})
    single = _cfg(root / "single.cfg", {**base, "run.out_dir": root / "single",
                                        "calibrate.enabled": "false"})
    codes = (cli.main(["synth", "--config", multi]), cli.main(["pipeline", "--config", multi]),
             cli.main(["pipeline", "--config", single]))
    gold = {s.sent_id: dict(zip(s.forms, s.tags))
            for s in parse_conllu((root / "data" / "train.gold.conllu").read_text())}
    train_multi = parse_conllu((root / "multi" / "calibrate" / "selected.conllu").read_text())
    single_lang = (root / "multi" / "calibrate" / "density.tsv").read_text().split("\n")[0].split("\t")[1]
    train_single = parse_conllu((root / "multi" / "project" / f"{single_lang}.selected.conllu").read_text())
    metrics = dict(codes=codes, multi=_accuracy(root / "multi", root / "data"),
                   single=_accuracy(root / "single", root / "data"),
                   train_tags_multi=_tag_accuracy(train_multi, gold),
                   train_tags_single=_tag_accuracy(train_single, gold))
    files = {}
    for sub in ("data", "multi", "single"):
        files.update({f"{sub}/{k}": v for k, v in _files(root / sub).items()})
    return metrics, files


@functools.lru_cache(maxsize=None)
def first_noisy():
    return run_noisy("first")


def test_8_noisy_pipeline_multi_source_not_worse():
    with criterion(8, "noisy pipeline, multi-source vs single-source") as notes:
        m, _ = first_noisy()
        notes += [f"multi {m['multi']:.4f}", f"single {m['single']:.4f}",
                  f"training-tag precision multi {m['train_tags_multi']:.4f} "
                  f"vs single {m['train_tags_single']:.4f}"]
        assert m["codes"] == (0, 0, 0)
        assert m["multi"] >= m["single"]


# -- 9: evaluator ------------------------------------------------------------------

ACCURACY_SINGLE = {  # target: (En, Es, Fr, De) sources
    "Af": (87.4, 80.8, 86.7, 89.5), "Eu": (72.2, 81.3, 71.4, 72.5), "Fi": (80.7, 73.7, 74.9, 72.0),
    "Id": (87.1, 83.4, 82.9, 79.9), "Lt": (77.8, 75.3, 73.8, 73.1), "Pt": (88.3, 92.0, 91.5, 88.0),
    "Tr": (65.2, 66.0, 60.0, 67.2),
}
BLEU_SRC_TGT = {
    "Af": (41.5, 17.7, 21.0, 32.6), "Eu": (5.6, 12.7, 4.6, 6.8), "Fi": (10.5, 7.8, 6.1, 9.4),
    "Id": (34.3, 23.3, 17.2, 13.5), "Lt": (11.1, 10.1, 9.5, 10.4), "Pt": (41.5, 61.3, 37.8, 21.8),
    "Tr": (5.8, 7.1, 5.0, 6.2),
}
BLEU_TGT_SRC = {
    "Af": (44.0, 9.6, 11.6, 25.2), "Eu": (8.2, 15.6, 4.7, 4.8), "Fi": (17.4, 9.7, 3.4, 9.8),
    "Id": (36.0, 20.7, 14.6, 10.6), "Lt": (18.0, 14.5, 12.6, 11.1), "Pt": (47.3, 61.5, 38.5, 18.7),
    "Tr": (9.0, 7.5, 5.4, 5.5),
}
REPORTED_R = 0.8339


def _flat(table):
    return [v for lang in sorted(table) for v in table[lang]]


def test_9_evaluator_fidelity():
    with criterion(9, "evaluator and correlation utility") as notes:
        T = {t: UPOS.index(t) for t in UPOS}
        forms = list("abcdefghij")
        gold = TaggedSentence.from_lists(forms, [T[t] for t in (
            "NOUN", "NOUN", "NOUN", "NOUN", "VERB", "VERB", "VERB", "ADJ", "ADJ", "DET")])
        pred = TaggedSentence.from_lists(forms, [T[t] for t in (
            "NOUN", "NOUN", "NOUN", "VERB", "VERB", "VERB", "NOUN", "ADJ", "NOUN", "DET")])
        r = evaluator.score([pred], [gold])
        # NOUN: 3 of 4 found, 5 predicted; VERB: 2 of 3, 3 predicted; ADJ: 1 of 2, 1 predicted
        assert r.token_accuracy == 7 / 10
        assert (r.per_tag["NOUN"].recall, r.per_tag["VERB"].recall, r.per_tag["ADJ"].recall,
                r.per_tag["DET"].recall) == (3 / 4, 2 / 3, 1 / 2, 1.0)
        f1 = (2 * (3 / 5) * (3 / 4) / (3 / 5 + 3 / 4), 2 / 3, 2 * 1 * 0.5 / 1.5, 1.0)
        assert math.isclose(r.macro_f1, sum(f1) / 4, rel_tol=0, abs_tol=1e-15)
        assert evaluator.pearson((1, 2, 3), (3, 2, 1))[0] == -1.0
        acc = _flat(ACCURACY_SINGLE)
        assert len(acc) == 28
        for name, bleu in (("src->tgt", BLEU_SRC_TGT), ("tgt->src", BLEU_TGT_SRC)):
            rho, p = evaluator.pearson(_flat(bleu), acc)
            assert -1.0 <= rho <= 1.0 and 0.0 <= p <= 1.0
            notes.append(f"BLEU {name} vs accuracy r={rho:.4f} p={p:.2e}")
        notes.append(f"reference value {REPORTED_R} not asserted")


# -- 10: determinism ------------------------------------------------------------------

def _same(a: dict, b: dict) -> list:
    return sorted(k for k in a.keys() | b.keys() if a.get(k) != b.get(k))


def test_10_determinism():
    with criterion(10, "identical reruns, threads=1 vs threads=4") as notes:
        diffs = {}
        diffs["1"] = _same(first_em()[1], run_em(threads=4)[1])
        diffs["2"] = _same(first_projection()[1], run_projection(threads=4)[1])
        diffs["4"] = _same(first_voting()[1], run_voting()[1])
        diffs["5"] = _same(first_gradients()[1], run_gradients()[1])
        diffs["6"] = _same(first_learnability()[1], run_learnability()[1])
        diffs["7"] = _same(first_noiseless()[1], run_noiseless("again", threads=4)[1])
        diffs["8"] = _same(first_noisy()[1], run_noisy("again")[1])
        notes.append("compared criteria " + ",".join(diffs) + " (3 and 9 are pure arithmetic)")
        bad = {k: v for k, v in diffs.items() if v}
        assert not bad, f"outputs differ: {bad}"
