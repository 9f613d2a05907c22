"""Calibrating tags by voting across renderings from several sources.

Renderings of one sentence produced from different source languages share
many words. Every tagged occurrence of a shared word votes, and the winner
replaces the tag in the chosen rendering.
"""
from xlpos.corpus_io import UPOS, TaggedSentence
from xlpos.multisource import RenderingGroup, calibrate, find_overlapping_words, vote
from xlpos.projector import ProjectedSentence
from xlpos.synth import SynthSpec, make_rendering_groups

T = UPOS.index


def rendering(text, tags, lang):
    forms = text.split()
    return ProjectedSentence("g1", TaggedSentence.from_lists(forms, tags, "g1"), 0.9, lang)


# four Portuguese renderings of one sentence; only the tags of "que" matter here
texts = {
    "en": "Fomos informados de que havia que ter um estudo usando exatamente a mesma metodologia .",
    "de": "Uns foram informados , deveriam haver uma pesquisa que precisas de usar a mesma metodologia .",
    "fr": "Assim , que só uma pesquisa que utiliza exatamente a mesma metodologia .",
    "es": "Ele nos disse que devia haver um estudo que utilizasse exatamente a mesma metodologia .",
}
que_tag = {"en": "PRON", "de": "SCONJ", "fr": "SCONJ", "es": "SCONJ"}
renderings = []
for lang, text in texts.items():
    tags = [T(que_tag[lang]) if w == "que" else None for w in text.split()]
    renderings.append(rendering(text, tags, lang))
group = RenderingGroup("g1", renderings, list(texts))

print("overlapping:", sorted(find_overlapping_words(group)))
tally = vote(group)["que"]
print("votes for 'que':", {UPOS.symbol(t): int(n) for t, n in enumerate(tally) if n})
out = calibrate(group, best=0)
print("'que' in the English-sourced rendering is now",
      {UPOS.symbol(t) for f, t in zip(out.sentence.forms, out.sentence.tags) if f == "que"})
print(f"coverage {renderings[0].coverage:.2f} -> {out.coverage:.2f}")

# how much voting helps as sources disagree more
print("\nK=5 renderings, error on shared words:")
for dis in (0.1, 0.2, 0.3, 0.4):
    groups = make_rendering_groups(SynthSpec(seed=4, num_sentences=400), 5, dis)
    single = voted = n = 0
    for g, gold in groups:
        c = calibrate(g, 0)
        for t0, t1, gt in zip(g.renderings[0].sentence.tags, c.sentence.tags, gold.tags):
            n += 1
            single += t0 != gt
            voted += t1 != gt
    print(f"  disagreement {dis:.1f}: single {single / n:.3f}  voted {voted / n:.3f}")
