"""Projecting source tags onto the target side.

Tags flow across alignment links; a type dictionary built from the projected
corpus then vetoes or repairs rare tags, and a coverage filter picks the
training sentences.
"""
from xlpos.aligner import align_corpus
from xlpos.corpus_io import UPOS
from xlpos.evaluator import score
from xlpos.projector import (
    apply_type_constraints, build_type_dictionary, project_tokens, select_training_sentences,
)
from xlpos.synth import SynthSpec, generate

pairs, gold_al, gold = generate(SynthSpec(seed=3, num_sentences=1500, swap_prob=0.1, drop_prob=0.1))
aligns, _, _ = align_corpus(pairs, iterations=5, alpha=0.1)

raw = [project_tokens(p, a, "en") for p, a in zip(pairs, aligns)]
s = raw[0]
print("projected:", " ".join(f"{f}/{UPOS.symbol(t)}" for f, t in zip(s.sentence.forms, s.sentence.tags)))
print(f"coverage {s.coverage:.2f}, mean link probability {s.avg_link_prob:.2f}")

d = build_type_dictionary(raw, min_relative_freq=0.2)
form = s.sentence.forms[0]
print(f"\ncounts for {form}:", {UPOS.symbol(int(t)): int(c) for t, c in enumerate(d.counts[form]) if c})
print("allowed:", sorted(UPOS.symbol(t) for t in d.allowed(form)))

constrained = [apply_type_constraints(x, d) for x in raw]


def projected_precision(corpus):
    ok = n = 0
    for x, g in zip(corpus, gold):
        for t, gt in zip(x.sentence.tags, g.tags):
            if t is not None:
                n += 1
                ok += t == gt
    return ok / n


print(f"\nprojected-tag precision: raw {projected_precision(raw):.4f}, "
      f"constrained {projected_precision(constrained):.4f}")

for min_cov in (0.5, 0.75, 0.9):
    sel = select_training_sentences(constrained, min_coverage=min_cov)
    print(f"min coverage {min_cov}: {len(sel)} of {len(constrained)} sentences kept")

sel = select_training_sentences(constrained, 0.75, top_k=5)
print("\nmost confident:", [(x.pair_id, round(x.avg_link_prob, 3)) for x in sel])

# scoring the projected tags as if they were predictions (NULL counts as wrong)
print(f"token accuracy of the projection itself: "
      f"{score([x.sentence for x in constrained], gold).token_accuracy:.4f}")
