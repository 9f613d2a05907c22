"""Word alignment on a synthetic parallel corpus.

Train IBM Model 1 both ways, look at the translation table and the
log-likelihood curve, then symmetrize and threshold the link posteriors.
"""
from xlpos.aligner import (
    align_corpus, filter_links, posterior_align, symmetrize, train_ibm1, train_ibm2,
)
from xlpos.synth import SynthSpec, generate

# 800 pairs with a few local swaps and some untranslated words
spec = SynthSpec(seed=1, num_sentences=800, src_vocab_size=120, tgt_vocab_size=120,
                 swap_prob=0.1, drop_prob=0.1)
pairs, gold, _ = generate(spec)
p = pairs[0]
print("source:", " ".join(p.source.forms))
print("target:", " ".join(p.target.forms))

fwd = train_ibm1(pairs, iterations=8, direction="forward")
bwd = train_ibm1(pairs, iterations=8, direction="backward")
print("\nlog-likelihood per iteration:")
for k, ll in enumerate(fwd.log_likelihood):
    print(f"  {k:2d}  {ll:12.2f}")

# the most probable translation of the first source word
e = p.source.forms[0]
best = max(set(p.target.forms), key=lambda f: fwd.t(f, e))
print(f"\nt({best}|{e}) = {fwd.t(best, e):.4f}")

a_f = posterior_align(fwd, p)
a_b = posterior_align(bwd, p)
for method in ("intersection", "grow_diag_final", "union"):
    s = symmetrize(a_f, a_b, method)
    print(f"{method:16s}", " ".join(f"{i}-{j}:{q:.2f}" for i, j, q in s))
print("gold            ", " ".join(f"{i}-{j}" for i, j in sorted(gold[0].links)))

# raising the threshold only ever removes links
s = symmetrize(a_f, a_b, "union")
for alpha in (0.0, 0.1, 0.5, 0.9):
    print(f"alpha={alpha}: {len(filter_links(s, alpha))} links")

# whole corpus in one call, then precision/recall against gold
aligns, _, _ = align_corpus(pairs, iterations=8, alpha=0.1)
found = sum(len(a) for a in aligns)
right = sum(len(a.keys() & g.keys()) for a, g in zip(aligns, gold))
total = sum(len(g) for g in gold)
print(f"\nIBM1: precision {right / found:.3f}  recall {right / total:.3f}")

# Model 2 adds a position prior on top of IBM1
t2 = train_ibm2(pairs, iterations=4, ibm1_iterations=5)
print("IBM2 final log-likelihood:", round(t2.log_likelihood[-1], 2))
