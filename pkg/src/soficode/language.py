"""The finite language of a presentation: exact counting, lexicographic
rank/unrank, follower sets, word periods, and synchronizing words.

The workhorse is a deterministic word automaton obtained by the subset
construction seeded from the full vertex set of the compiled graph.  A word is
admissible exactly when it is readable from the initial state, so counting and
ranking reduce to path DP in that automaton, with exact integer arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from .presentations import (
    Presentation,
    PresentationError,
    Word,
    compile_to_graph,
)


class LanguageError(ValueError):
    """Inadmissible word or out-of-range index."""


class WordDfa:
    """Deterministic acceptor of the factor language of a presentation.

    States are subsets of graph vertices; state 0 is the full vertex set.
    Every state is accepting; a word is admissible iff it can be read from
    state 0 without dying.
    """

    def __init__(self, p: Presentation, reverse: bool = False):
        self.alphabet = p.alphabet
        g = compile_to_graph(p)
        n_sym = len(p.alphabet)
        vidx = {v: i for i, v in enumerate(g.vertices)}
        # per (vertex, symbol): target vertex set
        moves = [[[] for _ in range(n_sym)] for _ in g.vertices]
        for e in g.edges:
            s, t = (vidx[e.trg], vidx[e.src]) if reverse else (vidx[e.src], vidx[e.trg])
            moves[s][p.alphabet.index(e.label)].append(t)

        start = frozenset(range(len(g.vertices)))
        states = [start]
        index = {start: 0}
        delta = []
        queue = [start]
        while queue:
            cur = queue.pop(0)
            row = {}
            for a in range(n_sym):
                nxt = frozenset(t for v in cur for t in moves[v][a])
                if not nxt:
                    continue
                if nxt not in index:
                    index[nxt] = len(states)
                    states.append(nxt)
                    queue.append(nxt)
                row[a] = index[nxt]
            delta.append(row)

        self.states = states
        self.delta = delta
        self._counts = [[1] for _ in states]  # counts[s][r] = completions of length r

    # -- transitions ------------------------------------------------------

    def step(self, state, sym_idx):
        return self.delta[state].get(sym_idx)

    def read(self, symbols, state=0):
        """State after reading symbols, or None if the run dies."""
        for s in symbols:
            state = self.delta[state].get(self.alphabet.index(s))
            if state is None:
                return None
        return state

    def admissible(self, symbols) -> bool:
        return self.read(symbols) is not None

    # -- counting and ranking ---------------------------------------------

    def _grow(self, n):
        have = len(self._counts[0])
        for r in range(have, n + 1):
            for s in range(len(self.states)):
                total = 0
                for t in self.delta[s].values():
                    total += self._counts[t][r - 1]
                self._counts[s].append(total)

    def count(self, n, state=0) -> int:
        if n < 0:
            raise LanguageError("length must be nonnegative")
        self._grow(n)
        return self._counts[state][n]

    def rank(self, symbols, state=0) -> int:
        """Position of the word in lexicographic order over same-length words."""
        n = len(symbols)
        self._grow(n)
        r = 0
        for pos, s in enumerate(symbols):
            a = self.alphabet.index(s)
            rem = n - pos - 1
            for b, t in sorted(self.delta[state].items()):
                if b < a:
                    r += self._counts[t][rem]
            state = self.delta[state].get(a)
            if state is None:
                raise LanguageError(f"word is not admissible at position {pos}")
        return r

    def unrank(self, n, i, state=0) -> tuple:
        if n < 0:
            raise LanguageError("length must be nonnegative")
        self._grow(n)
        if not 0 <= i < self._counts[state][n]:
            raise LanguageError(f"rank {i} out of range for length {n}")
        out = []
        for pos in range(n):
            rem = n - pos - 1
            for a, t in sorted(self.delta[state].items()):
                c = self._counts[t][rem]
                if i < c:
                    out.append(self.alphabet.symbols[a])
                    state = t
                    break
                i -= c
        return tuple(out)

    def words(self, n, state=0):
        """All admissible length-n continuations from state, lexicographically."""
        if n == 0:
            yield ()
            return
        for a, t in sorted(self.delta[state].items()):
            sym = self.alphabet.symbols[a]
            for rest in self.words(n - 1, t):
                yield (sym,) + rest


@lru_cache(maxsize=None)
def word_dfa(p: Presentation) -> WordDfa:
    return WordDfa(p)


@lru_cache(maxsize=None)
def reversed_word_dfa(p: Presentation) -> WordDfa:
    return WordDfa(p, reverse=True)


@dataclass(frozen=True)
class LanguageIndex:
    """Rank/unrank tables for the admissible words of one length."""

    presentation: Presentation
    n: int

    @property
    def dfa(self) -> WordDfa:
        return word_dfa(self.presentation)

    @property
    def count(self) -> int:
        return self.dfa.count(self.n)


def count_words(p: Presentation, n: int) -> int:
    """Exact number of admissible words of length n (without multiplicity)."""
    if n < 0:
        raise LanguageError("length must be nonnegative")
    return word_dfa(p).count(n)


def rank_word(idx: LanguageIndex, w: Word) -> int:
    if len(w) != idx.n:
        raise LanguageError(f"expected a word of length {idx.n}, got {len(w)}")
    return idx.dfa.rank(w.symbols)


def unrank_word(idx: LanguageIndex, i: int) -> Word:
    return Word(idx.dfa.unrank(idx.n, i))


# ---------------------------------------------------------------------------
# word periods

@dataclass(frozen=True)
class PeriodVerdict:
    """Least period in [1, half] of a window of even length, if any."""

    word: tuple
    period: int  # 0 means non-periodic

    @property
    def periodic(self) -> bool:
        return self.period > 0


def word_period(w, ell: int) -> PeriodVerdict:
    """Least Q in [1, ell] with w[i] == w[i+Q] everywhere, for |w| == 2*ell."""
    symbols = w.symbols if isinstance(w, Word) else tuple(w)
    if len(symbols) != 2 * ell:
        raise LanguageError(f"expected a window of length {2 * ell}, got {len(symbols)}")
    for q in range(1, ell + 1):
        if symbols[q:] == symbols[:-q]:
            return PeriodVerdict(symbols, q)
    return PeriodVerdict(symbols, 0)


# ---------------------------------------------------------------------------
# follower sets and synchronizing words

def follower_words(p: Presentation, a: Word, m: int) -> set:
    """All length-m words u such that a.u is admissible."""
    dfa = word_dfa(p)
    state = dfa.read(a.symbols)
    if state is None:
        raise LanguageError("word is not admissible")
    return {Word(u) for u in dfa.words(m, state)}


def predecessor_words(p: Presentation, a: Word, m: int) -> set:
    """All length-m words u such that u.a is admissible."""
    dfa = reversed_word_dfa(p)
    state = dfa.read(tuple(reversed(a.symbols)))
    if state is None:
        raise LanguageError("word is not admissible")
    return {Word(tuple(reversed(u))) for u in dfa.words(m, state)}


def is_synchronizing(p: Presentation, c: Word, cover=None) -> bool:
    """True iff reading c from every cover vertex that accepts it lands on a
    single vertex.  On the minimal right-resolving presentation this is the
    two-sided extension property, checked finitely.
    """
    from .fischer import build_fischer_cover  # deferred: fischer builds on us

    if cover is None:
        cover = build_fischer_cover(p)
    if not word_dfa(p).admissible(c.symbols):
        raise LanguageError("word is not admissible")
    image = cover.image(c.symbols)
    return len(image) == 1
