"""Command-line driver: ``xlpos <command> --config FILE [--section.key value ...]``.

Commands: synth, align, project, calibrate, train, tag, eval, pipeline.

Every command reads a flat ``section.key=value`` config, lets ``--key value``
flags override it, and writes its outputs under ``run.out_dir/<stage>/``
together with a ``run.json`` record (config snapshot, input digests, library
versions, wall time). Apart from ``run.json`` every output is a pure function
of config and inputs.

Data layout (``data.dir``): ``{lang}.src.conllu`` tagged source sentences,
``{lang}.tgt.txt`` target sentences line-parallel to them, an optional group
manifest and a gold ``test.conllu``.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np
import scipy

from . import aligner, evaluator, multisource, projector, synth, tagger
from .corpus_io import ParallelPair, parse_conllu, parse_plain, write_conllu, write_plain

log = logging.getLogger("xlpos")

EXIT_CONFIG, EXIT_IO, EXIT_STAGE = 2, 3, 4


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, msg: str):
        super().__init__(f"{stage}: {msg}")
        self.stage = stage


def _tagger_defaults():
    return {f"tagger.{f.name}": f.default for f in fields(tagger.TaggerConfig)}


DEFAULTS = {
    "run.out_dir": "run",
    "run.seed": 0,
    "run.threads": 1,
    "data.dir": "data",
    "data.languages": "",           # comma separated; empty = every *.src.conllu in data.dir
    "data.manifest": "manifest.tsv",
    "data.test": "test.conllu",
    "aligner.iterations": 5,
    "aligner.alpha": 0.1,
    "aligner.model": "ibm1",
    "aligner.symmetrization": "intersection",
    "aligner.filter_before_symmetrize": False,
    "projector.min_relative_freq": 0.2,
    "projector.min_coverage": 0.75,
    "projector.top_k": 0,           # 0 = keep every sentence that passes
    "calibrate.enabled": True,
    "train.source": "auto",         # language for single-source training; auto = best by stats
    "train.input": "",              # explicit training CoNLL-U; overrides the stage outputs
    "tag.input": "",                # defaults to data.test
    "eval.pred": "",                # defaults to the tag stage output
    "eval.gold": "",                # defaults to data.test
    "eval.exclude_punct": False,
    "synth.languages": "en,es,fr,de",
    "synth.num_sentences": 2000,
    "synth.num_test": 200,
    "synth.src_vocab_size": 500,
    "synth.tgt_vocab_size": 500,
    "synth.min_len": 4,
    "synth.max_len": 12,
    "synth.ambiguity": 1,
    "synth.swap_prob": 0.0,
    "synth.drop_prob": 0.0,
    "synth.disagreement": 0.0,
    "synth.variation": 0.0,
    **_tagger_defaults(),
}
DEFAULTS.pop("tagger.seed")  # the tagger seed follows run.seed


def _convert(key: str, raw, default):
    if not isinstance(raw, str):
        return raw
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {type(default).__name__}") from None
    return raw.strip()


class RunConfig:
    """Typed flat settings with every module default; unknown keys are rejected."""

    def __init__(self, values: dict | None = None):
        self.values = dict(DEFAULTS)
        for key, raw in (values or {}).items():
            self.set(key, raw)

    def set(self, key: str, raw):
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        self.values[key] = _convert(key, raw, DEFAULTS[key])

    def __getitem__(self, key):
        return self.values[key]

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        cfg = cls()
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"config line {lineno}: expected key=value")
            cfg.set(key.strip(), value.strip())
        return cfg

    def to_text(self) -> str:
        return "".join(f"{k}={_fmt(v)}\n" for k, v in sorted(self.values.items()))

    def validate(self) -> "RunConfig":
        v = self.values
        checks = [
            (0.0 <= v["aligner.alpha"] <= 1.0, "aligner.alpha must lie in [0, 1]"),
            (v["aligner.iterations"] >= 1, "aligner.iterations must be >= 1"),
            (v["aligner.model"] in ("ibm1", "ibm2"), "aligner.model must be ibm1 or ibm2"),
            (v["aligner.symmetrization"] in aligner.SYMMETRIZATIONS,
             f"aligner.symmetrization must be one of {', '.join(aligner.SYMMETRIZATIONS)}"),
            (0.0 < v["projector.min_relative_freq"] <= 1.0,
             "projector.min_relative_freq must lie in (0, 1]"),
            (0.0 <= v["projector.min_coverage"] <= 1.0, "projector.min_coverage must lie in [0, 1]"),
            (v["projector.top_k"] >= 0, "projector.top_k must be >= 0"),
            (v["run.threads"] >= 1, "run.threads must be >= 1"),
            (0.0 <= v["synth.disagreement"] <= 1.0, "synth.disagreement must lie in [0, 1]"),
            (0.0 <= v["synth.variation"] <= 1.0, "synth.variation must lie in [0, 1]"),
            (v["synth.num_test"] >= 0, "synth.num_test must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        try:
            self.tagger_config().validate()
            self.synth_spec().validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def tagger_config(self) -> tagger.TaggerConfig:
        kw = {k.split(".", 1)[1]: v for k, v in self.values.items() if k.startswith("tagger.")}
        return tagger.TaggerConfig(seed=self["run.seed"], **kw)

    def synth_spec(self) -> synth.SynthSpec:
        names = ("num_sentences", "src_vocab_size", "tgt_vocab_size", "min_len", "max_len",
                 "ambiguity", "swap_prob", "drop_prob")
        return synth.SynthSpec(seed=self["run.seed"], **{n: self[f"synth.{n}"] for n in names})

    def languages(self) -> list[str]:
        listed = [x.strip() for x in self["data.languages"].split(",") if x.strip()]
        if listed:
            return listed
        found = sorted(p.name[:-len(".src.conllu")] for p in Path(self["data.dir"]).glob("*.src.conllu"))
        if not found:
            raise FileNotFoundError(f"no *.src.conllu files in {self['data.dir']}")
        return found

    def out(self, *parts) -> Path:
        return Path(self["run.out_dir"]).joinpath(*parts)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


class Run:
    """Bookkeeping for one stage: input digests and the run.json record."""

    def __init__(self, stage: str, cfg: RunConfig):
        self.stage = stage
        self.cfg = cfg
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []
        self.started = time.perf_counter()
        self.dir = cfg.out(stage)
        self.dir.mkdir(parents=True, exist_ok=True)

    def read(self, path) -> str:
        data = Path(path).read_bytes()
        self.inputs[str(path)] = hashlib.sha256(data).hexdigest()
        return data.decode("utf-8")

    def write(self, name: str, text: str) -> Path:
        path = self.dir / name
        path.write_text(text, encoding="utf-8", newline="\n")
        self.outputs.append(name)
        return path

    def finish(self, extra: dict | None = None):
        record = {
            "stage": self.stage,
            "config": self.cfg.values,
            "inputs": self.inputs,
            "outputs": sorted(self.outputs),
            "versions": {"xlpos": _version(), "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__},
            "wall_time_s": round(time.perf_counter() - self.started, 3),
        }
        if extra:
            record.update(extra)
        (self.dir / "run.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


def _version() -> str:
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:
        return "unknown"


def _load_pairs(run: Run, lang: str) -> list[ParallelPair]:
    d = Path(run.cfg["data.dir"])
    src = parse_conllu(run.read(d / f"{lang}.src.conllu"))
    tgt = parse_plain(run.read(d / f"{lang}.tgt.txt"))
    if len(src) != len(tgt):
        raise StageError(run.stage, f"{lang}: {len(src)} source vs {len(tgt)} target sentences")
    pairs = []
    for n, (s, t) in enumerate(zip(src, tgt), start=1):
        pid = s.sent_id if s.sent_id is not None else f"{lang}-{n}"
        if any(tag is None for tag in s.tags):
            raise StageError(run.stage, f"{lang}: source sentence {pid} is not fully tagged")
        pairs.append(ParallelPair(s, t, pid))
    return pairs


def _read_projected(run: Run, stem: Path):
    return projector.read_projected(run.read(f"{stem}.conllu"), run.read(f"{stem}.meta.tsv"))


def _write_projected(run: Run, name: str, corpus):
    conllu, meta = projector.write_projected(corpus)
    run.write(f"{name}.conllu", conllu)
    run.write(f"{name}.meta.tsv", meta)


# -- stages -----------------------------------------------------------------

def cmd_synth(cfg: RunConfig):
    """Synthetic multi-source corpus with gold alignments, manifest and test set."""
    run = Run("synth", cfg)
    langs = [x.strip() for x in cfg["synth.languages"].split(",") if x.strip()]
    if not langs:
        raise ConfigError("synth.languages is empty")
    corpus = synth.generate_multisource(cfg.synth_spec(), langs, cfg["synth.disagreement"],
                                        cfg["synth.variation"], cfg["synth.num_test"])
    out = Path(cfg["data.dir"])
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name, text):
        (out / name).write_text(text, encoding="utf-8", newline="\n")
        written.append(name)

    for lang in langs:
        pairs = corpus.pairs[lang]
        put(f"{lang}.src.conllu", write_conllu([p.source for p in pairs]))
        put(f"{lang}.tgt.txt", write_plain([p.target for p in pairs]))
        put(f"{lang}.gold.align", aligner.write_alignments(corpus.gold_alignments[lang]))
    manifest = [(gid, [(f"{lang}.conllu", n) for lang, n in refs]) for gid, refs in corpus.manifest]
    put(Path(cfg["data.manifest"]).name, multisource.write_manifest(manifest))
    put("train.gold.conllu", write_conllu(corpus.gold_targets))
    put(Path(cfg["data.test"]).name, write_conllu(corpus.test))
    run.finish({"data_files": written})


def cmd_align(cfg: RunConfig):
    run = Run("align", cfg)
    model = 1 if cfg["aligner.model"] == "ibm1" else 2
    summary = {}
    for lang in cfg.languages():
        pairs = _load_pairs(run, lang)
        try:
            aligns, t_fwd, t_bwd = aligner.align_corpus(
                pairs, cfg["aligner.iterations"], cfg["aligner.alpha"],
                cfg["aligner.symmetrization"], model, cfg["run.threads"],
                cfg["aligner.filter_before_symmetrize"])
        except aligner.AlignmentError as exc:
            raise StageError("align", f"{lang}: {exc}") from None
        run.write(f"{lang}.align", aligner.write_alignments(aligns))
        run.write(f"{lang}.fwd.ttable", t_fwd.to_text())
        run.write(f"{lang}.bwd.ttable", t_bwd.to_text())
        summary[lang] = {"links": sum(len(a.links) for a in aligns),
                         "log_likelihood_fwd": t_fwd.log_likelihood,
                         "log_likelihood_bwd": t_bwd.log_likelihood}
    run.finish({"summary": summary})


def cmd_project(cfg: RunConfig):
    run = Run("project", cfg)
    top_k = cfg["projector.top_k"] or None
    summary = {}
    for lang in cfg.languages():
        pairs = _load_pairs(run, lang)
        try:
            aligns = aligner.parse_alignments(run.read(cfg.out("align", f"{lang}.align")),
                                              [p.pair_id for p in pairs])
            corpus = projector.project_corpus(pairs, aligns, lang, cfg["projector.min_relative_freq"],
                                              threads=cfg["run.threads"])
        except (aligner.AlignmentError, IndexError, ValueError) as exc:
            raise StageError("project", f"{lang}: {exc}") from None
        selected = projector.select_training_sentences(corpus, cfg["projector.min_coverage"], top_k)
        _write_projected(run, lang, corpus)
        _write_projected(run, f"{lang}.selected", selected)
        summary[lang] = {"sentences": len(corpus), "selected": len(selected)}
    run.finish({"summary": summary})


def _projected_corpora(run: Run, langs):
    return {lang: _read_projected(run, run.cfg.out("project", lang)) for lang in langs}


def cmd_calibrate(cfg: RunConfig):
    """Vote over each manifest group and keep the best-scoring language's rendering."""
    run = Run("calibrate", cfg)
    langs = cfg.languages()
    corpora = _projected_corpora(run, langs)
    stats = multisource.corpus_stats(corpora)
    manifest_path = Path(cfg["data.dir"]) / cfg["data.manifest"]
    try:
        manifest = multisource.read_manifest(run.read(manifest_path))
        groups = multisource.load_groups(manifest, {f"{lang}.conllu": c for lang, c in corpora.items()})
    except (ValueError, KeyError, IndexError) as exc:
        raise StageError("calibrate", str(exc).strip("'\"")) from None
    calibrated = []
    for g in groups:
        best = multisource.select_best_rendering(g, stats)
        calibrated.append(multisource.calibrate(g, best))
    top_k = cfg["projector.top_k"] or None
    selected = projector.select_training_sentences(calibrated, cfg["projector.min_coverage"], top_k)
    best_lang = _best_language(stats, langs)
    before = projector.select_training_sentences(corpora[best_lang], cfg["projector.min_coverage"], top_k)
    try:
        d_examples, d_density = evaluator.density_stats(before, selected)
    except evaluator.EvaluationError as exc:
        raise StageError("calibrate", f"density statistics: {exc}") from None
    _write_projected(run, "calibrated", calibrated)
    _write_projected(run, "selected", selected)
    run.write("density.tsv", f"baseline_language\t{best_lang}\n"
                             f"examples_before\t{len(before)}\nexamples_after\t{len(selected)}\n"
                             f"relative_examples\t{d_examples:.6f}\nrelative_density\t{d_density:.6f}\n")
    run.finish()


def _best_language(stats, langs) -> str:
    scores = [stats[lang][0] * stats[lang][1] for lang in langs]
    return langs[int(np.argmax(scores))]


def _training_sentences(run: Run):
    cfg = run.cfg
    if cfg["train.input"]:
        return parse_conllu(run.read(cfg["train.input"]))
    if cfg["calibrate.enabled"]:
        corpus = _read_projected(run, cfg.out("calibrate", "selected"))
    else:
        langs = cfg.languages()
        lang = cfg["train.source"]
        if lang == "auto":
            lang = _best_language(multisource.corpus_stats(_projected_corpora(run, langs)), langs)
        elif lang not in langs:
            raise ConfigError(f"train.source {lang!r} is not among the data languages")
        corpus = _read_projected(run, cfg.out("project", f"{lang}.selected"))
    return [s.sentence for s in corpus]


def cmd_train(cfg: RunConfig):
    run = Run("train", cfg)
    sentences = _training_sentences(run)
    sentences = [s for s in sentences if any(t is not None for t in s.tags)]
    if not sentences:
        raise StageError("train", "no training sentence carries a tag")
    try:
        model, history = tagger.fit(sentences, cfg.tagger_config())
    except (tagger.TrainingError, ValueError) as exc:
        raise StageError("train", str(exc)) from None
    tagger.save_model(model, run.dir / "model.bin")
    run.outputs.append("model.bin")
    run.write("loss.tsv", "".join(f"{e}\t{loss!r}\n" for e, loss in enumerate(history)))
    run.finish({"training_sentences": len(sentences)})


def _read_sentences(run: Run, path):
    text = run.read(path)
    return parse_conllu(text) if str(path).endswith(".conllu") else parse_plain(text)


def cmd_tag(cfg: RunConfig):
    run = Run("tag", cfg)
    src = cfg["tag.input"] or str(Path(cfg["data.dir"]) / cfg["data.test"])
    sentences = _read_sentences(run, src)
    model_path = cfg.out("train", "model.bin")
    run.inputs[str(model_path)] = hashlib.sha256(model_path.read_bytes()).hexdigest()
    try:
        model = tagger.load_model(model_path)
    except tagger.ModelFormatError as exc:
        raise StageError("tag", str(exc)) from None
    run.write("pred.conllu", write_conllu(tagger.tag_sentences(model, sentences)))
    run.finish()


def cmd_eval(cfg: RunConfig):
    run = Run("eval", cfg)
    pred = parse_conllu(run.read(cfg["eval.pred"] or cfg.out("tag", "pred.conllu")))
    gold = parse_conllu(run.read(cfg["eval.gold"] or Path(cfg["data.dir"]) / cfg["data.test"]))
    try:
        report = evaluator.score(pred, gold, cfg["eval.exclude_punct"])
        report.multicat = evaluator.multicat_accuracy(pred, gold)
    except evaluator.EvaluationError as exc:
        raise StageError("eval", str(exc)) from None
    run.write("report.txt", evaluator.format_report(report))
    run.write("report.kv", evaluator.report_to_keyvalue(report))
    run.finish({"token_accuracy": report.token_accuracy})
    return report


def cmd_pipeline(cfg: RunConfig):
    cmd_align(cfg)
    cmd_project(cfg)
    if cfg["calibrate.enabled"]:
        cmd_calibrate(cfg)
    cmd_train(cfg)
    cmd_tag(cfg)
    report = cmd_eval(cfg)
    run = Run("pipeline", cfg)
    run.finish({"token_accuracy": report.token_accuracy})
    return report


COMMANDS = {
    "synth": cmd_synth, "align": cmd_align, "project": cmd_project, "calibrate": cmd_calibrate,
    "train": cmd_train, "tag": cmd_tag, "eval": cmd_eval, "pipeline": cmd_pipeline,
}


def build_config(config_path: str | None, overrides: list[str]) -> RunConfig:
    cfg = RunConfig.from_text(Path(config_path).read_text(encoding="utf-8")) if config_path else RunConfig()
    k = 0
    while k < len(overrides):
        flag = overrides[k]
        if not flag.startswith("--") or len(flag) == 2:
            raise ConfigError(f"unexpected argument {flag!r}")
        key, eq, value = flag[2:].partition("=")
        if not eq:
            if k + 1 >= len(overrides):
                raise ConfigError(f"{flag} needs a value")
            k += 1
            value = overrides[k]
        cfg.set(key, value)
        k += 1
    return cfg.validate()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="xlpos", description=__doc__.split("\n\n")[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="flat section.key=value file")
    parser.add_argument("-v", "--verbose", action="store_true")
    args, rest = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    stage = args.command
    try:
        cfg = build_config(args.config, rest)
        COMMANDS[stage](cfg)
    except ConfigError as exc:
        print(f"xlpos {stage}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"xlpos {stage}: stage {exc}", file=sys.stderr)
        return EXIT_STAGE
    except OSError as exc:
        print(f"xlpos {stage}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:  # malformed input files surface here (parse errors etc.)
        print(f"xlpos {stage}: stage {stage}: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
