"""The whole pipeline through the command-line driver.

Equivalent shell session:

    xlpos synth --config demo.cfg
    xlpos pipeline --config demo.cfg
    xlpos pipeline --config demo.cfg --calibrate.enabled false --run.out_dir single
"""
import tempfile
from pathlib import Path

from xlpos.cli import main

work = Path(tempfile.mkdtemp(prefix="xlpos-demo-"))
cfg = work / "demo.cfg"
cfg.write_text(f"""\
data.dir={work / 'data'}
run.out_dir={work / 'multi'}
synth.languages=en,es,fr
synth.num_sentences=400
synth.num_test=100
synth.swap_prob=0.1
synth.drop_prob=0.1
synth.disagreement=0.15
tagger.epochs=5
""")
assert main(["synth", "--config", str(cfg)]) == 0
assert main(["pipeline", "--config", str(cfg)]) == 0
assert main(["pipeline", "--config", str(cfg), "--calibrate.enabled", "false",
             "--run.out_dir", str(work / "single")]) == 0

print("files written under", work)
print((work / "multi" / "calibrate" / "density.tsv").read_text())
for name in ("multi", "single"):
    kv = dict(line.split("=", 1) for line in (work / name / "eval" / "report.kv").read_text().splitlines())
    print(f"{name:6s} accuracy {kv['token_accuracy']}  macro-F1 {kv['macro_f1']}")

# a bad key is a config error (exit code 2)
print("exit code for an unknown key:", main(["align", "--config", str(cfg), "--aligner.alfa", "0.2"]))
