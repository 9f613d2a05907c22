"""Scoring a tagger and the correlation utility.

Reports accuracy, macro-F1, per-tag recall and accuracy on words with
several gold tags, then correlates translation quality with tagging
accuracy over 28 language pairs.
"""
from xlpos.corpus_io import UPOS, TaggedSentence
from xlpos.evaluator import format_report, multicat_accuracy, pearson, score

T = UPOS.index
gold = [TaggedSentence.from_lists("we run the run fast".split(),
                                  [T("PRON"), T("VERB"), T("DET"), T("NOUN"), T("ADV")]),
        TaggedSentence.from_lists("a fast run".split(), [T("DET"), T("ADJ"), T("NOUN")])]
pred = [TaggedSentence.from_lists("we run the run fast".split(),
                                  [T("PRON"), T("VERB"), T("DET"), T("VERB"), T("ADJ")]),
        TaggedSentence.from_lists("a fast run".split(), [T("DET"), T("ADJ"), T("NOUN")])]
report = score(pred, gold)
report.multicat = multicat_accuracy(pred, gold)
print(format_report(report))

# per-pair tagging accuracy (En, Es, Fr, De sources) and translation BLEU
accuracy = {
    "Af": (87.4, 80.8, 86.7, 89.5), "Eu": (72.2, 81.3, 71.4, 72.5), "Fi": (80.7, 73.7, 74.9, 72.0),
    "Id": (87.1, 83.4, 82.9, 79.9), "Lt": (77.8, 75.3, 73.8, 73.1), "Pt": (88.3, 92.0, 91.5, 88.0),
    "Tr": (65.2, 66.0, 60.0, 67.2),
}
bleu = {
    "Af": (41.5, 17.7, 21.0, 32.6), "Eu": (5.6, 12.7, 4.6, 6.8), "Fi": (10.5, 7.8, 6.1, 9.4),
    "Id": (34.3, 23.3, 17.2, 13.5), "Lt": (11.1, 10.1, 9.5, 10.4), "Pt": (41.5, 61.3, 37.8, 21.8),
    "Tr": (5.8, 7.1, 5.0, 6.2),
}
xs = [v for k in sorted(bleu) for v in bleu[k]]
ys = [v for k in sorted(accuracy) for v in accuracy[k]]
r, p = pearson(xs, ys)
print(f"BLEU vs tagging accuracy over {len(xs)} pairs: r = {r:.4f}, p = {p:.1e}")
