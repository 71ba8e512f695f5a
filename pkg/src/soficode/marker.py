"""Marker paths, connector tables, pattern-avoiding path indexing, and the
payload injections.

Everything here works at the edge level of a cover: the marker is a path, the
avoided pattern is an edge sequence, and connectors are edge paths of one
uniform length.  Labels only matter for the synchronizing-label flag of the
marker; the codec anchors on that label and then reasons about edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .presentations import Edge, PresentationError, Word
from .language import LanguageError, word_dfa
from .fischer import FischerCover


class MarkerSearchError(PresentationError):
    """No marker path with the required properties within the search bound."""


class ConnectorSearchError(PresentationError):
    """No straddle-safe connector table within the length bound."""


class FeasibilityError(PresentationError):
    """No block length satisfies all counting certificates within the bound."""


# ---------------------------------------------------------------------------
# marker path

@dataclass(frozen=True)
class MarkerPath:
    """A cover path none of whose proper prefixes is a suffix (edge level)
    and whose label word focuses the cover onto one vertex."""

    edges: tuple
    label: tuple
    prefix_suffix_free: bool
    synchronizing_label: bool
    case: int

    @property
    def L(self) -> int:
        return len(self.edges)

    @property
    def src(self) -> str:
        return self.edges[0].src

    @property
    def trg(self) -> str:
        return self.edges[-1].trg

    @property
    def valid(self) -> bool:
        return self.prefix_suffix_free and self.synchronizing_label


def _prefix_suffix_free(edges) -> bool:
    for t in range(1, len(edges)):
        if edges[:t] == edges[-t:]:
            return False
    return True


def _make_candidate(cover: FischerCover, edges, case) -> MarkerPath:
    label = tuple(e.label for e in edges)
    return MarkerPath(
        tuple(edges),
        label,
        _prefix_suffix_free(tuple(edges)),
        len(cover.image(label)) == 1,
        case,
    )


def _paths_between(cover: FischerCover, u, w, length):
    """All u -> w paths of the exact length, in canonical edge order."""
    if length == 0:
        if u == w:
            yield ()
        return
    # reach[r] = vertices that can reach w in exactly r steps
    reach = [set() for _ in range(length + 1)]
    reach[0].add(w)
    for r in range(1, length + 1):
        for e in cover.ordered_edges():
            if e.trg in reach[r - 1]:
                reach[r].add(e.src)
    if u not in reach[length]:
        return

    def rec(v, prefix):
        rem = length - len(prefix)
        if rem == 0:
            yield prefix
            return
        for e in cover.out_edges(v):
            if e.trg in reach[rem - 1]:
                yield from rec(e.trg, prefix + (e,))

    yield from rec(u, ())


def marker_candidates(cover: FischerCover, max_length: int = 64):
    """Marker candidates in order of increasing length.

    With a repeatable loop available (a loop edge with a distinct edge
    entering its vertex), candidates take the shape b . loop^{len(b)} where b
    starts at the entering edge, ends entering-then-loop, and carries a
    focusing label.  Otherwise candidates are built from an edge with two
    distinct followers, repeated blocks of the branch path.
    """
    edges = cover.ordered_edges()
    loops = [e for e in edges if e.src == e.trg]
    case1 = []
    for alpha in loops:
        for beta in edges:
            if beta != alpha and beta.trg == alpha.src:
                case1.append((alpha, beta))

    dfa = word_dfa(cover.source) if cover.source is not None else None

    def focusing(path_edges) -> bool:
        return len(cover.image(tuple(e.label for e in path_edges))) == 1

    if case1:
        # b of length m yields a of length 2m
        for m in range(2, max_length // 2 + 1):
            for alpha, beta in case1:
                if m == 2:
                    bs = [(beta, alpha)] if beta.trg == alpha.src else []
                else:
                    bs = [
                        (beta,) + mid + (beta, alpha)
                        for mid in _paths_between(cover, beta.trg, beta.src, m - 3)
                    ]
                for b in bs:
                    if not focusing(b):
                        continue
                    a = b + (alpha,) * len(b)
                    yield _make_candidate(cover, a, 1)
        return

    # no usable loop: branch off an edge with two distinct followers
    for alpha in edges:
        followers = [e for e in cover.out_edges(alpha.trg) if e != alpha]
        if len(followers) < 2:
            continue
        for total in range(2, max_length + 1):
            for beta in followers:
                for b in _paths_between(cover, alpha.trg, alpha.src, total - 1):
                    if not b or b[0] != beta:
                        continue
                    unit = (alpha,) + b
                    reps = 1
                    while len(unit) * reps <= max_length:
                        yield _make_candidate(cover, unit * reps, 2)
                        reps += 1


def build_marker(cover: FischerCover, min_length: int = 0, max_length: int = 64) -> MarkerPath:
    """First marker candidate with both flags, of length at least min_length."""
    if len(cover.edges) < 2:
        raise MarkerSearchError("degenerate cover: fewer than two edges")
    for cand in marker_candidates(cover, max_length=max_length):
        if cand.valid and cand.L >= min_length:
            return cand
    raise MarkerSearchError(
        f"no valid marker path of length in [{min_length}, {max_length}]"
    )


# ---------------------------------------------------------------------------
# connectors

@dataclass(frozen=True)
class ConnectorTable:
    """One path of uniform length K per ordered vertex pair, chosen so that no
    occurrence of the marker can straddle a connector boundary:

    - the connector never contains the marker,
    - no suffix of it equals a proper prefix of the marker,
    - no prefix of it equals a proper suffix of the marker,
    - it is not an internal factor of the marker.
    """

    K: int
    table: dict

    def get(self, u, w) -> tuple:
        return self.table[(u, w)]


def _kmp_failure(pattern):
    fail = [0] * len(pattern)
    k = 0
    for i in range(1, len(pattern)):
        while k and pattern[i] != pattern[k]:
            k = fail[k - 1]
        if pattern[i] == pattern[k]:
            k += 1
        fail[i] = k
    return fail


def _kmp_step(pattern, fail, state, item):
    while state and (state == len(pattern) or pattern[state] != item):
        state = fail[state - 1]
    if pattern[state] == item:
        state += 1
    return state


def connector_conditions(path, marker: MarkerPath) -> bool:
    """The four straddle-exclusion conditions for one connector path."""
    a = marker.edges
    L = len(a)
    K = len(path)
    # no marker inside
    for i in range(K - L + 1):
        if path[i : i + L] == a:
            return False
    bound = min(K, L - 1)
    for t in range(1, bound + 1):
        if path[K - t :] == a[:t]:
            return False
        if path[:t] == a[L - t :]:
            return False
    if K < L:
        for i in range(1, L - K):
            if path == a[i : i + K]:
                return False
    return True


def _search_connector(cover: FischerCover, marker: MarkerPath, u, w, K):
    """A straddle-safe u -> w path of length K, or None.

    The suffix condition is equivalent to ending the walk in match state 0 of
    the marker pattern, so it goes into a layered feasibility table over
    (vertex, match-state) pairs; the prefix condition only constrains the
    first L-1 steps and is pruned directly; the internal-factor condition
    excludes at most L-K-1 complete paths and is checked on arrival.
    """
    a = marker.edges
    L = len(a)
    fail = _kmp_failure(a)

    moves = {}
    for v in cover.vertices:
        for q in range(L):
            row = []
            for e in cover.out_edges(v):
                q2 = _kmp_step(a, fail, q, e)
                if q2 < L:
                    row.append((e, (e.trg, q2)))
            moves[(v, q)] = row

    feasible = [set() for _ in range(K + 1)]
    feasible[0].add((w, 0))
    for r in range(1, K + 1):
        layer = feasible[r]
        prev = feasible[r - 1]
        for state, row in moves.items():
            if any(t in prev for _, t in row):
                layer.add(state)
    if (u, 0) not in feasible[K]:
        return None

    bound = min(K, L - 1)

    def rec(state, prefix, alive):
        # alive: suffix lengths t (> len(prefix)) of the marker that the
        # prefix still tracks; reaching depth t alive means the prefix would
        # equal the length-t marker suffix, which is forbidden.
        depth = len(prefix)
        if depth == K:
            return prefix if connector_conditions(prefix, marker) else None
        for e, nxt in moves[state]:
            if nxt not in feasible[K - depth - 1]:
                continue
            hit = False
            alive2 = []
            for t in alive:
                if a[L - t + depth] == e:
                    if t == depth + 1:
                        hit = True
                        break
                    alive2.append(t)
            if hit:
                continue
            res = rec(nxt, prefix + (e,), alive2 if depth + 1 < bound else ())
            if res is not None:
                return res
        return None

    return rec((u, 0), (), list(range(1, bound + 1)))


def build_connectors(cover: FischerCover, marker: MarkerPath,
                     k_max: int = None) -> ConnectorTable:
    """Search increasing K until every ordered vertex pair has a straddle-safe
    connector of that exact length."""
    n = len(cover.vertices)
    if k_max is None:
        k_max = 4 * marker.L + 4 * n + 16
    first_fail = None
    for K in range(1, k_max + 1):
        table = {}
        ok = True
        for u in cover.vertices:
            for w in cover.vertices:
                path = _search_connector(cover, marker, u, w, K)
                if path is None:
                    ok = False
                    first_fail = (K, u, w)
                    break
                table[(u, w)] = path
            if not ok:
                break
        if ok:
            return ConnectorTable(K, table)
    raise ConnectorSearchError(
        f"no uniform straddle-safe connector length up to {k_max}; "
        f"last failure at K={first_fail[0]} for pair {first_fail[1]}->{first_fail[2]}"
    )


# ---------------------------------------------------------------------------
# paths avoiding the marker

class AvoidanceIndex:
    """Counting, ranking and unranking of cover paths that never traverse the
    marker path.

    States pair a cover vertex with the match progress of the marker pattern;
    paths are ordered first by start vertex, then edge by edge in alphabet
    order.
    """

    def __init__(self, cover: FischerCover, marker: MarkerPath):
        self.cover = cover
        self.marker = marker
        a = marker.edges
        self._fail = _kmp_failure(a)
        self._L = len(a)
        nv = len(cover.vertices)
        self._vidx = {v: i for i, v in enumerate(cover.vertices)}
        # transition over product states (vertex, kmp), skipping full matches
        self._out = {}
        for v in cover.vertices:
            for q in range(self._L):
                moves = []
                for e in cover.out_edges(v):
                    q2 = _kmp_step(a, self._fail, q, e)
                    if q2 == self._L:
                        continue
                    moves.append((e, (e.trg, q2)))
                self._out[(v, q)] = moves
        self._counts = {s: [1] for s in self._out}

    def _grow(self, n):
        have = len(next(iter(self._counts.values())))
        for r in range(have, n + 1):
            for s, moves in self._out.items():
                self._counts[s].append(sum(self._counts[t][r - 1] for _, t in moves))

    def count(self, n: int) -> int:
        if n < 0:
            raise LanguageError("length must be nonnegative")
        if n == 0:
            return 1
        self._grow(n)
        return sum(self._counts[(v, 0)][n] for v in self.cover.vertices)

    def rank(self, path) -> int:
        n = len(path)
        if n == 0:
            return 0
        self._grow(n)
        start = path[0].src
        r = 0
        for v in self.cover.vertices:
            if v == start:
                break
            r += self._counts[(v, 0)][n]
        state = (start, 0)
        for pos, edge in enumerate(path):
            rem = n - pos - 1
            moves = self._out[state]
            nxt = None
            for e, t in moves:
                if e == edge:
                    nxt = t
                    break
                r += self._counts[t][rem]
            if nxt is None:
                raise LanguageError(f"path traverses the marker at position {pos}")
            state = nxt
        return r

    def unrank(self, n: int, i: int) -> tuple:
        if n < 0 or i < 0:
            raise LanguageError("bad unrank arguments")
        if n == 0:
            if i == 0:
                return ()
            raise LanguageError("rank out of range")
        self._grow(n)
        state = None
        for v in self.cover.vertices:
            c = self._counts[(v, 0)][n]
            if i < c:
                state = (v, 0)
                break
            i -= c
        if state is None:
            raise LanguageError("rank out of range")
        out = []
        for pos in range(n):
            rem = n - pos - 1
            for e, t in self._out[state]:
                c = self._counts[t][rem]
                if i < c:
                    out.append(e)
                    state = t
                    break
                i -= c
            else:
                raise AssertionError("count tables inconsistent")
        return tuple(out)

    def paths(self, n: int, state=None):
        """All avoiding paths of length n in rank order (for small n)."""
        if state is None:
            for v in self.cover.vertices:
                yield from self.paths(n, (v, 0))
            return
        if n == 0:
            yield ()
            return
        for e, t in self._out[state]:
            for rest in self.paths(n - 1, t):
                yield (e,) + rest


def avoidance_count(idx: AvoidanceIndex, n: int) -> int:
    return idx.count(n)


def avoid_rank(idx: AvoidanceIndex, path) -> int:
    return idx.rank(tuple(path))


def avoid_unrank(idx: AvoidanceIndex, n: int, i: int) -> tuple:
    return idx.unrank(n, i)


# ---------------------------------------------------------------------------
# block length selection and payload injections

@dataclass
class BlockLengthChoice:
    """The chosen window scale with its counting certificates.

    pay(l) = l - L - 2K is the payload length inside a block of length l; the
    certificates state that the source language of every length l in
    [ell, 4*ell] fits injectively into the avoiding paths of length pay(l).
    """

    ell: int
    L: int
    K: int
    certificates: list
    x_dfa: object = field(repr=False, default=None)
    avoidance: AvoidanceIndex = field(repr=False, default=None)

    @property
    def overhead(self) -> int:
        return self.L + 2 * self.K

    def pay(self, l: int) -> int:
        return l - self.overhead


def select_block_length(x, cover: FischerCover, marker: MarkerPath,
                        connectors: ConnectorTable, ell_max: int = 2000) -> BlockLengthChoice:
    """Least ell > 2(L+K) whose whole certificate range [ell, 4*ell] holds."""
    L, K = marker.L, connectors.K
    overhead = L + 2 * K
    dfa = word_dfa(x)
    avoid = AvoidanceIndex(cover, marker)
    start = 2 * (L + K) + 1
    for ell in range(start, ell_max + 1):
        ok = True
        for l in range(ell, 4 * ell + 1):
            if dfa.count(l) > avoid.count(l - overhead):
                ok = False
                break
        if ok:
            certs = [
                {"l": l, "lang": dfa.count(l), "avoid": avoid.count(l - overhead)}
                for l in range(ell, 4 * ell + 1)
            ]
            return BlockLengthChoice(ell, L, K, certs, dfa, avoid)
    big = 6 * overhead + 64
    rate_x = (dfa.count(big).bit_length() - 1) / big
    rate_d = (avoid.count(big).bit_length() - 1) / big
    raise FeasibilityError(
        f"no feasible block length up to {ell_max}: source growth "
        f"~2^{rate_x:.4f} per symbol vs avoiding-path growth ~2^{rate_d:.4f}"
    )


def xi_encode(choice: BlockLengthChoice, l: int, w: Word) -> tuple:
    """Injective map from admissible length-l words into avoiding paths of
    length pay(l), by rank transport."""
    if not choice.ell <= l <= 4 * choice.ell:
        raise LanguageError(f"block length {l} outside [{choice.ell}, {4 * choice.ell}]")
    symbols = w.symbols if isinstance(w, Word) else tuple(w)
    if len(symbols) != l:
        raise LanguageError(f"expected a word of length {l}")
    r = choice.x_dfa.rank(symbols)
    return choice.avoidance.unrank(choice.pay(l), r)


def xi_decode(choice: BlockLengthChoice, l: int, path) -> Word:
    if not choice.ell <= l <= 4 * choice.ell:
        raise LanguageError(f"block length {l} outside [{choice.ell}, {4 * choice.ell}]")
    path = tuple(path)
    if len(path) != choice.pay(l):
        raise LanguageError(f"expected a payload of length {choice.pay(l)}")
    r = choice.avoidance.rank(path)
    if r >= choice.x_dfa.count(l):
        raise LanguageError("path is outside the payload image")
    return Word(choice.x_dfa.unrank(l, r))
