import string

from hypothesis import strategies as st

from xlpos.corpus_io import UPOS, TaggedSentence

forms = st.text(alphabet=string.ascii_letters + "áéíóúçãõ-'", min_size=1, max_size=8)
tags = st.one_of(st.none(), st.integers(0, len(UPOS) - 1))


@st.composite
def sentences(draw, min_size=1, max_size=8, tagged=None):
    n = draw(st.integers(min_size, max_size))
    fs = draw(st.lists(forms, min_size=n, max_size=n))
    if tagged is True:
        ts = draw(st.lists(st.integers(0, len(UPOS) - 1), min_size=n, max_size=n))
    elif tagged is False:
        ts = [None] * n
    else:
        ts = draw(st.lists(tags, min_size=n, max_size=n))
    return TaggedSentence.from_lists(fs, ts)


def conllu_row(i, form, upos):
    return f"{i}\t{form}\t_\t{upos}\t_\t_\t_\t_\t_\t_\n"


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
