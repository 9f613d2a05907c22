"""Training the BiLSTM tagger on partially tagged sentences.

NULL-tagged tokens stay in the input but are masked out of the loss. The
gradient check compares backprop with central differences in float64.
"""
import tempfile
from pathlib import Path

import numpy as np

from xlpos.corpus_io import UPOS
from xlpos.synth import SynthSpec, generate
from xlpos.tagger import (
    TaggerConfig, build_model, fit, gradient_check, load_model, masked_loss, save_model,
    tag_sentences,
)

# uniform scores: the loss is ln(17) and the NULL row is ignored entirely
loss, d = masked_loss(np.zeros((2, len(UPOS))), [UPOS.index("NOUN"), None])
print(f"loss {loss:.4f} (ln 17 = {np.log(17):.4f}); NULL row gradient all zero: {not d[1].any()}")

_, _, sents = generate(SynthSpec(seed=5, num_sentences=1200))
rng = np.random.default_rng(0)
# hide a quarter of the tags, as an incomplete projection would
partial = [s.with_tags([None if rng.random() < 0.25 else t for t in s.tags]) for s in sents[:1000]]
held_out = sents[1000:]

small = TaggerConfig(word_embedding_size=8, affix_embedding_size=8, hidden_nodes=12,
                     dropout_rate=0.0, dtype="float64", word_min_count=1)
model = build_model(partial[:50], small)
worst, blocks = gradient_check(model, model.featurize(partial[0]), partial[0].tags, return_blocks=True)
print("\ngradient check, max relative error per block:")
for name, err in blocks.items():
    print(f"  {name:10s} {err:.1e}")

# full-size model, fewer epochs to keep the demo short
cfg = TaggerConfig(epochs=4, seed=1)
model, history = fit(partial, cfg, callback=lambda e, l: print(f"epoch {e}: loss {l:.4f}"))
pred = tag_sentences(model, held_out)
correct = sum(p == g for ps, gs in zip(pred, held_out) for p, g in zip(ps.tags, gs.tags))
total = sum(len(s) for s in held_out)
print(f"held-out accuracy {correct / total:.4f}")

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "tagger.bin"
    save_model(model, path)
    again = load_model(path)
    same = [s.tags for s in tag_sentences(again, held_out)] == [s.tags for s in pred]
    print(f"model file {path.stat().st_size} bytes; reloaded model agrees: {same}")
