"""The embedding engine: marker placement, periodic-orbit matching, the
sliding-window encoder and decoder, and end-to-end verification.

Coordinates are absolute integers throughout.  A marker at position i owns
the output block over (i, i+l] where l is the distance to the next marker:
short gaps (l <= 3*ell) are coded as

    marker . connector . payload(gap word) . connector

and long gaps switch into the image of the locally periodic stretch after a
head block of length ell+1, leaving it through one connector right before
the next marker.  The head payload carries ell+1 symbols: the stretch only
certifies coordinates from i+ell+2 onward, so the head must cover through
i+ell+1.
"""

from __future__ import annotations

import bisect
import json
import logging
import random
from dataclasses import dataclass, field

from .presentations import (
    Edge,
    Presentation,
    PresentationError,
    Report,
    Word,
    parse_presentation,
    presentation_to_dict,
    _word_from_json,
    _word_to_json,
)
from .language import LanguageError, word_dfa, word_period
from .fischer import (
    FischerCover,
    build_fischer_cover,
    cover_from_dict,
    cover_to_dict,
    map_cycle_lengths,
    compose_step,
    _trim_automaton,
)
from .invariants import embeddability_precondition
from .marker import (
    AvoidanceIndex,
    BlockLengthChoice,
    ConnectorSearchError,
    ConnectorTable,
    FeasibilityError,
    MarkerPath,
    MarkerSearchError,
    build_connectors,
    marker_candidates,
    select_block_length,
    xi_decode,
    xi_encode,
)

log = logging.getLogger("soficode")


class CodecError(PresentationError):
    """Inconsistent encoder state (violated spacing or coverage law)."""


class WindowError(CodecError):
    """The supplied coordinates do not leave enough margin; widen the window."""


class MatchError(CodecError):
    """Not enough eligible target orbits at some period."""

    def __init__(self, message, n=None, needed=None, available=None):
        super().__init__(message)
        self.n = n
        self.needed = needed
        self.available = available


class ParseError(CodecError):
    """The word is not in the image language (no consistent parse)."""


class BuildError(PresentationError):
    """A build stage failed; the stage name is attached."""

    def __init__(self, stage, message, report=None):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.report = report


# ---------------------------------------------------------------------------
# marker placement

@dataclass(frozen=True)
class MarkerSetParams:
    """Window scale for marker placement: windows have length 2*ell and the
    blocking radius is ell."""

    ell: int


@dataclass
class MarkerScan:
    """Greedy marker decisions over one coordinate range.

    selected holds every chosen position; positions is the stable subset, and
    provisional the rest.  A verdict is stable when no unseen context could
    change it: its whole dependency chain (higher-priority neighbours within
    the blocking radius) lies inside the scanned range.
    """

    ell: int
    cand_lo: int
    cand_hi: int
    selected: list
    _stable: dict
    _period: dict

    @property
    def positions(self) -> list:
        return [p for p in self.selected if self._stable.get(p, False)]

    @property
    def provisional(self) -> list:
        return [p for p in self.selected if not self._stable.get(p, False)]

    def verdict_stable(self, p) -> bool:
        if not self.cand_lo <= p <= self.cand_hi:
            return False
        if self._period[p] > 0:
            return True  # periodic windows are never selected, seen in full
        return self._stable.get(p, False)

    def all_stable(self, lo, hi) -> bool:
        return all(self.verdict_stable(p) for p in range(lo, hi + 1))

    def stable_selected_in(self, lo, hi) -> list:
        return [p for p in self.positions if lo <= p <= hi]


def _compact_text(symbols, alphabet) -> str:
    return "".join(chr(48 + alphabet.index(s)) for s in symbols)


def marker_positions(x: Word, params: MarkerSetParams, alphabet=None) -> MarkerScan:
    """Greedy marker set of a finite window.

    Positions are processed by the lexicographic rank of their window word;
    a position is selected iff its window is non-periodic and no previously
    selected position lies within the blocking radius.  Two equal windows
    within the radius would force a short period, so they cannot occur.
    """
    ell = params.ell
    if len(x) < 2 * ell:
        raise WindowError(f"window shorter than {2 * ell}")
    if alphabet is None:
        raise ValueError("marker_positions needs the alphabet for ordering")
    s = x.start
    txt = _compact_text(x.symbols, alphabet)
    cand_lo, cand_hi = s - 1, x.end - 2 * ell

    period = {}
    for p in range(cand_lo, cand_hi + 1):
        off = p + 1 - s
        win = txt[off : off + 2 * ell]
        q = 0
        for cand in range(1, ell + 1):
            if win[cand:] == win[:-cand]:
                q = cand
                break
        period[p] = q

    nonper = [p for p in range(cand_lo, cand_hi + 1) if period[p] == 0]
    order = sorted(nonper, key=lambda p: (txt[p + 1 - s : p + 1 - s + 2 * ell], p))
    rank = {p: k for k, p in enumerate(order)}

    selected_sorted = []
    chosen = set()
    for p in order:
        i = bisect.bisect_left(selected_sorted, p - ell)
        blocked = False
        while i < len(selected_sorted) and selected_sorted[i] <= p + ell:
            q = selected_sorted[i]
            if txt[q + 1 - s : q + 1 - s + 2 * ell] == txt[p + 1 - s : p + 1 - s + 2 * ell]:
                raise AssertionError(
                    f"equal non-periodic windows at distance {abs(p - q)} <= ell"
                )
            blocked = True
            break
        if not blocked:
            bisect.insort(selected_sorted, p)
            chosen.add(p)

    stable = {}
    for p in order:  # rank order: dependencies are already resolved
        ok = True
        for q in range(p - ell, p + ell + 1):
            if q == p:
                continue
            if q < cand_lo or q > cand_hi:
                ok = False
                break
            if period[q] == 0 and rank[q] < rank[p] and not stable[q]:
                ok = False
                break
        stable[p] = ok

    return MarkerScan(ell, cand_lo, cand_hi, selected_sorted, stable, period)


# ---------------------------------------------------------------------------
# local periodic structure

@dataclass(frozen=True)
class PeriodicWord:
    """A least-period word anchored at an absolute coordinate: the point it
    generates has value word[(m - anchor) mod n] at coordinate m."""

    word: tuple
    anchor: int

    @property
    def n(self) -> int:
        return len(self.word)

    def value_at(self, m) -> str:
        return self.word[(m - self.anchor) % self.n]


def local_periodic_point(x: Word, i: int, ell: int) -> PeriodicWord:
    """Least-period word generating the window over (i, i+2*ell]."""
    win = x.window(i + 1, i + 2 * ell)
    verdict = word_period(win, ell)
    if not verdict.periodic:
        raise CodecError(f"window at {i} is not periodic")
    q = verdict.period
    root = win[:q]
    for d in range(1, q):  # reduce to the least period of the root itself
        if q % d == 0 and root == root[:d] * (q // d):
            root = root[:d]
            break
    return PeriodicWord(root, i + 1)


def _min_rotation_index(seq):
    best, besti = tuple(seq), 0
    for i in range(1, len(seq)):
        rot = tuple(seq[i:]) + tuple(seq[:i])
        if rot < best:
            best, besti = rot, i
    return best, besti


def _is_primitive(seq) -> bool:
    n = len(seq)
    for d in range(1, n):
        if n % d == 0 and tuple(seq) == tuple(seq[:d]) * (n // d):
            return False
    return True


# ---------------------------------------------------------------------------
# orbit matching

@dataclass
class _OrbitEntry:
    word: tuple          # canonical source word (least period n)
    cycle: tuple         # anchored image cycle, edge at coordinate m is cycle[(m-1) mod n]
    label: tuple         # cycle labels, least period n
    transient: bool


class OrbitMatch:
    """Injective, shift-equivariant assignment of cover cycles to the
    periodic words that can appear in long marker-free stretches.

    Tables are materialized per period, in ascending order, so the greedy
    matching is deterministic.  Newly matched cycles are rejected when their
    bi-infinite label stream shares a factor of length >= rmin with an
    already matched cycle: stretches are inverted from windows of that
    length, so sharing would make decoding ambiguous.
    """

    def __init__(self, x: Presentation, cover: FischerCover, marker: MarkerPath,
                 ell: int, rmin: int):
        self.x = x
        self.cover = cover
        self.marker = marker
        self.ell = ell
        self.rmin = rmin
        self.x_dfa = word_dfa(x)
        kept, rows = _trim_automaton(self.x_dfa.delta)
        self._x_states = len(kept)
        self._x_rows = rows
        self._cover_rows = cover.delta_table()
        self._tables = {}      # n -> {canonical word: _OrbitEntry}
        self._by_cycle = {}    # n -> {canonical edge rotation: _OrbitEntry}
        self._by_label = {}    # n -> {canonical label rotation: _OrbitEntry}
        self._matched = []     # all matched entries, for conflict checks

    # -- enumeration helpers ------------------------------------------------

    def _cyclic_x_words(self, n):
        """(word, has_cycle) for every admissible word of length n whose
        induced map survives."""
        syms = self.x.alphabet.symbols
        rows = self._x_rows
        ident = tuple(range(self._x_states))
        out = []

        def rec(prefix, m):
            if len(prefix) == n:
                out.append((prefix, bool(map_cycle_lengths(m))))
                return
            for a in range(len(syms)):
                m2 = compose_step(m, rows, a)
                if m2 is not None:
                    rec(prefix + (syms[a],), m2)

        rec((), ident)
        return out

    def _transient_ok(self, w) -> bool:
        reps = (3 * self.ell) // len(w) + 2
        return self.x_dfa.admissible(w * reps)

    def _cyclic_y_labels(self, n):
        syms = self.cover.alphabet.symbols
        rows = self._cover_rows
        ident = tuple(range(len(self.cover.vertices)))
        out = []

        def rec(prefix, m):
            if len(prefix) == n:
                if map_cycle_lengths(m):
                    out.append(prefix)
                return
            for a in range(len(syms)):
                m2 = compose_step(m, rows, a)
                if m2 is not None:
                    rec(prefix + (syms[a],), m2)

        rec((), ident)
        return out

    def _label_conflict(self, label) -> bool:
        """Does label's bi-infinite stream share an rmin-factor with a matched
        cycle's stream?  Only pairs with n + d near rmin can collide."""
        n = len(label)
        for entry in self._matched:
            d = len(entry.label)
            if n + d <= self.rmin:
                continue
            other = entry.label
            span = self.rmin
            for shift in range(d):
                if all(label[k % n] == other[(k + shift) % d] for k in range(span)):
                    return True
        return False

    def _designated_lift(self, u):
        """An anchored, marker-free, conflict-free cover cycle labelled u, or
        None.  Rotations and start vertices are tried in canonical order."""
        n = len(u)
        L = self.marker.L
        for r in range(n):
            u_r = u[r:] + u[:r]
            for v in self.cover.vertices:
                if self.cover.transition(v, u_r) != v:
                    continue
                path = []
                cur = v
                for sym in u_r:
                    e = self.cover.edge(cur, sym)
                    path.append(e)
                    cur = e.trg
                anchored = [None] * n
                for k, e in enumerate(path):
                    anchored[(r + k) % n] = e
                anchored = tuple(anchored)
                reps = anchored * (2 + L // n + 1)
                if any(reps[i : i + L] == self.marker.edges
                       for i in range(len(reps) - L + 1)):
                    continue
                if self._label_conflict(u):
                    return None  # conflicts depend on u only, no other lift helps
                return anchored
        return None

    # -- table construction --------------------------------------------------

    def ensure(self, n):
        if n in self._tables:
            return
        for d in range(1, n):
            self.ensure(d)

        true_words = []
        transient_words = []
        for w, cyc in self._cyclic_x_words(n):
            if not _is_primitive(w) or _min_rotation_index(w)[0] != w:
                continue
            if cyc:
                true_words.append(w)
            elif self._transient_ok(w):
                transient_words.append(w)
        domain = sorted(true_words) + sorted(transient_words)

        eligible = []
        for u in sorted(self._cyclic_y_labels(n)):
            if not _is_primitive(u) or _min_rotation_index(u)[0] != u:
                continue
            cycle = self._designated_lift(u)
            if cycle is not None:
                eligible.append((u, cycle))
            if len(eligible) == len(domain):
                break
        if len(domain) > len(eligible):
            raise MatchError(
                f"period {n}: {len(domain)} source orbits but only "
                f"{len(eligible)} eligible target orbits",
                n=n, needed=len(domain), available=len(eligible),
            )

        table = {}
        by_cycle = {}
        by_label = {}
        for i, w in enumerate(domain):
            u, cycle = eligible[i]
            entry = _OrbitEntry(w, cycle, u, w not in true_words)
            table[w] = entry
            by_cycle[_min_rotation_index(cycle)[0]] = entry
            by_label[_min_rotation_index(u)[0]] = entry
            self._matched.append(entry)
        self._tables[n] = table
        self._by_cycle[n] = by_cycle
        self._by_label[n] = by_label

    def entries(self, n):
        self.ensure(n)
        return self._tables[n]

    # -- forward map ----------------------------------------------------------

    def _resolve(self, pw: PeriodicWord) -> tuple:
        """(entry, delta) with image edge at m = cycle[(m - 1 - delta) mod n]."""
        n = pw.n
        self.ensure(n)
        canon, r = _min_rotation_index(pw.word)
        entry = self._tables[n].get(canon)
        if entry is None:
            raise MatchError(f"no image for period-{n} word {pw.word!r}", n=n)
        delta = (pw.anchor + r - 1) % n
        return entry, delta

    def image_edge(self, pw: PeriodicWord, m: int) -> Edge:
        entry, delta = self._resolve(pw)
        return entry.cycle[(m - 1 - delta) % pw.n]

    def image_point_window(self, pw: PeriodicWord, lo: int, hi: int) -> list:
        entry, delta = self._resolve(pw)
        n = pw.n
        return [entry.cycle[(m - 1 - delta) % n] for m in range(lo, hi + 1)]

    # -- inverse maps ----------------------------------------------------------

    def _invert(self, seq, start_coord, lookup_by, item_of_entry):
        """Shared inversion: find the unique matched cycle reproducing seq."""
        R = len(seq)
        for d in range(1, self.ell + 1):
            if d > R:
                break
            if any(seq[k] != seq[k - d] for k in range(d, R)):
                continue
            cyc = tuple(seq[:d])
            canon, _ = _min_rotation_index(cyc)
            self.ensure(d)
            entry = lookup_by[d].get(canon)
            if entry is None:
                continue
            ref = item_of_entry(entry)
            rho = None
            for i in range(d):
                if tuple(ref[i:]) + tuple(ref[:i]) == cyc:
                    rho = i
                    break
            if rho is None:
                continue
            # seq[0] sits at coordinate start_coord = ref[(start_coord-1-delta) mod d]
            delta = (start_coord - 1 - rho) % d
            return entry, delta
        raise ParseError("periodic stretch matches no assigned orbit image")

    def invert_cycle_edges(self, edges, start_coord) -> PeriodicWord:
        entry, delta = self._invert(edges, start_coord, self._by_cycle,
                                    lambda e: e.cycle)
        return PeriodicWord(entry.word, delta + 1)

    def invert_cycle_labels(self, labels, start_coord) -> PeriodicWord:
        entry, delta = self._invert(labels, start_coord, self._by_label,
                                    lambda e: e.label)
        return PeriodicWord(entry.word, delta + 1)


def match_periodic_orbits(x: Presentation, cover: FischerCover, ell: int,
                          marker: MarkerPath = None, rmin: int = None,
                          materialize_up_to: int = None) -> OrbitMatch:
    """Build the orbit assignment; periods up to materialize_up_to (default 8)
    are materialized eagerly so count failures surface immediately."""
    if marker is None:
        raise ValueError("match_periodic_orbits needs the marker path")
    om = OrbitMatch(x, cover, marker, ell, rmin if rmin is not None else 2 * ell)
    for n in range(1, min(ell, materialize_up_to or 8) + 1):
        om.ensure(n)
    return om


# ---------------------------------------------------------------------------
# the embedding code

@dataclass
class EmbeddingCode:
    """Everything the sliding-window encoder and decoder need.

    window is the encoder margin; the decoder needs window + 4*ell on each
    side because it must see whole marker blocks around its output range.
    """

    x: Presentation
    cover: FischerCover
    marker: MarkerPath
    connectors: ConnectorTable
    choice: BlockLengthChoice
    orbit_match: OrbitMatch
    window: int
    certificates: dict

    @property
    def ell(self) -> int:
        return self.choice.ell

    @property
    def params(self) -> MarkerSetParams:
        return MarkerSetParams(self.choice.ell)

    @property
    def decode_margin(self) -> int:
        return self.window + 4 * self.choice.ell

    @property
    def anchor_vertex(self) -> str:
        (v,) = self.cover.image(self.marker.label)
        return v

    def left_resolving(self) -> bool:
        return self.cover.graph.left_resolving_witness() is None


def _kit_search(y_cover: FischerCover, x: Presentation, marker_max_length=64,
                ell_max=2000):
    """Iterate marker candidates until one admits straddle-safe connectors and
    a feasible block length; longer candidates thin out the avoided set, so
    this loop is also the marker-pumping fallback."""
    last_error = None
    for cand in marker_candidates(y_cover, max_length=marker_max_length):
        if not cand.valid:
            continue
        try:
            conn = build_connectors(y_cover, cand)
        except ConnectorSearchError as exc:
            last_error = exc
            continue
        try:
            choice = select_block_length(x, y_cover, cand, conn, ell_max=ell_max)
        except FeasibilityError as exc:
            last_error = exc
            continue
        return cand, conn, choice
    raise BuildError("marker", f"marker search exhausted: {last_error}")


def _calibrate_margin(x: Presentation, params: MarkerSetParams, seed: int) -> int:
    """Measured stabilization distance of marker verdicts on sample windows."""
    ell = params.ell
    dfa = word_dfa(x)
    rng = random.Random(seed)
    length = 14 * ell
    total = dfa.count(length)
    worst = 0
    for _ in range(12):
        w = Word(dfa.unrank(length, rng.randrange(total)))
        scan = marker_positions(w, params, alphabet=x.alphabet)
        for p in range(scan.cand_lo, scan.cand_hi + 1):
            if not scan.verdict_stable(p):
                margin = min(p - scan.cand_lo, scan.cand_hi - p) + 1
                worst = max(worst, margin)
    return worst


def build_embedding(x: Presentation, y: Presentation, seed: int = 0,
                    marker_max_length: int = 64, ell_max: int = 2000,
                    materialize_up_to: int = 8) -> EmbeddingCode:
    """Assemble a complete embedding code for x into y, stage by stage.

    Raises BuildError with the failing stage attached; the embeddability
    precondition is evaluated at the chosen block scale.
    """
    try:
        cover = build_fischer_cover(y)
    except PresentationError as exc:
        raise BuildError("cover", str(exc)) from exc

    marker, conn, choice = _kit_search(y_cover=cover, x=x,
                                       marker_max_length=marker_max_length,
                                       ell_max=ell_max)
    ell = choice.ell

    pre = embeddability_precondition(x, y, N=ell)
    if not pre.passed:
        failed = [c.name for c in pre.checks if not c.passed]
        raise BuildError("precondition", f"failed checks: {failed}", report=pre)

    try:
        om = match_periodic_orbits(x, cover, ell, marker=marker,
                                   rmin=2 * ell - conn.K,
                                   materialize_up_to=materialize_up_to)
    except MatchError as exc:
        raise BuildError("orbit-match", str(exc)) from exc

    measured = _calibrate_margin(x, MarkerSetParams(ell), seed)
    window = max(measured, 3 * ell + 2) + 3 * ell + marker.L + 2 * conn.K

    certificates = {
        "range": [ell, 4 * ell],
        "entries": choice.certificates,
        "measured_margin": measured,
    }
    return EmbeddingCode(x, cover, marker, conn, choice, om, window, certificates)


# ---------------------------------------------------------------------------
# encoder

def _encode_assemble(code: EmbeddingCode, x: Word, lo: int, hi: int):
    """Assemble the image path over [lo, hi]; returns (edges, markers)."""
    ell = code.ell
    L, K = code.marker.L, code.connectors.K
    marker, conn, om, choice = code.marker, code.connectors, code.orbit_match, code.choice

    if x.start > lo - code.window or x.end < hi + code.window:
        raise WindowError(
            f"need x over [{lo - code.window}, {hi + code.window}], "
            f"got [{x.start}, {x.end}]"
        )
    scan = marker_positions(x, code.params, alphabet=code.x.alphabet)
    rq_lo, rq_hi = lo - 3 * ell - 1, hi + 3 * ell + 1
    if not (scan.cand_lo <= rq_lo and rq_hi <= scan.cand_hi):
        raise WindowError("window does not cover the marker decision range")
    if not scan.all_stable(rq_lo, rq_hi):
        raise WindowError("unstable marker decision within margin; widen the window")
    M = scan.stable_selected_in(rq_lo, rq_hi)

    edges = [None] * (hi - lo + 1)

    def emit(c, e):
        if lo <= c <= hi:
            if edges[c - lo] is not None:
                raise CodecError(f"coordinate {c} assigned twice")
            edges[c - lo] = e

    def emit_run(c0, seq):
        # seq occupies (c0, c0 + len(seq)]
        for k, e in enumerate(seq):
            emit(c0 + 1 + k, e)

    def emit_stretch(pw, c_from, c_to):
        for m in range(max(c_from, lo), min(c_to, hi) + 1):
            emit(m, om.image_edge(pw, m))

    def check_agreement(pw, c_from, c_to):
        c_to = min(c_to, x.end)
        for m in range(c_from, c_to + 1):
            if x.at(m) != pw.value_at(m):
                raise CodecError(
                    f"periodic stretch broken at {m}: marker-free gap is not "
                    f"locally periodic"
                )

    def head_block(i):
        """Long-gap head over (i, i+ell+1]; returns the stretch word."""
        pw = local_periodic_point(x, i + ell + 1, ell)
        if i + ell + 1 >= lo:  # head visible: emit it
            payload_word = Word(x.window(i + 1, i + ell + 1), origin=i + 1)
            P = xi_encode(choice, ell + 1, payload_word)
            emit_run(i, marker.edges)
            emit_run(i + L, conn.get(marker.trg, P[0].src))
            emit_run(i + L + K, P)
            emit_run(i + ell + 1 - K,
                     conn.get(P[-1].trg, om.image_edge(pw, i + ell + 2).src))
        return pw

    if not M:
        pw = local_periodic_point(x, lo - 1, ell)
        check_agreement(pw, lo, hi)
        emit_stretch(pw, lo, hi)
    else:
        first = M[0]
        if first >= lo:
            pw = local_periodic_point(x, first - ell - 1, ell)
            check_agreement(pw, max(lo, first - 2 * ell), first)
            emit_stretch(pw, lo, first - K)
            exit_conn = conn.get(om.image_edge(pw, first - K).trg, marker.src)
            emit_run(first - K, exit_conn)
        for idx, i in enumerate(M):
            j = M[idx + 1] if idx + 1 < len(M) else None
            if j is not None:
                l = j - i
                if l <= ell:
                    raise CodecError(f"marker separation violated: gap {l} <= {ell}")
                if j < lo or i > hi:
                    continue
                if l <= 3 * ell:
                    gap = Word(x.window(i + 1, i + l), origin=i + 1)
                    P = xi_encode(choice, l, gap)
                    emit_run(i, marker.edges)
                    emit_run(i + L, conn.get(marker.trg, P[0].src))
                    emit_run(i + L + K, P)
                    emit_run(i + l - K, conn.get(P[-1].trg, marker.src))
                else:
                    pw = head_block(i)
                    check_agreement(pw, i + ell + 2, min(j, x.end))
                    emit_stretch(pw, i + ell + 2, j - K)
                    exit_conn = conn.get(om.image_edge(pw, j - K).trg, marker.src)
                    emit_run(j - K, exit_conn)
            else:
                if i > hi:
                    continue
                pw = head_block(i)
                check_agreement(pw, i + ell + 2, hi)
                emit_stretch(pw, i + ell + 2, hi)

    for k, e in enumerate(edges):
        if e is None:
            raise CodecError(f"coordinate {lo + k} left unassigned")
        if k and edges[k - 1].trg != e.src:
            raise CodecError(f"assembled path breaks before {lo + k}")
    return edges, M


def encode_point(code: EmbeddingCode, x: Word, lo: int = None, hi: int = None) -> Word:
    """Labels of the image path over [lo, hi] (defaults: the supplied word
    minus the encoder margin on each side)."""
    if lo is None:
        lo = x.start + code.window
    if hi is None:
        hi = x.end - code.window
    if lo > hi:
        raise WindowError("empty output range after margins")
    edges, _ = _encode_assemble(code, x, lo, hi)
    return Word(tuple(e.label for e in edges), lo)


# ---------------------------------------------------------------------------
# decoder

def _find_label_occurrences(y: Word, label) -> list:
    L = len(label)
    out = []
    for p in range(y.start - 1, y.end - L + 1):
        if y.window(p + 1, p + L) == label:
            out.append(p)
    return out


def _reconstruct_path(code: EmbeddingCode, y: Word, anchor_pos: int) -> dict:
    """Edges at every coordinate of y, anchored at a marker-label occurrence.

    The label focuses the cover onto one vertex; determinism extends the path
    to the right, and distinct in-edge labels (the left-resolving property)
    extend it to the left.
    """
    cover = code.cover
    path = {}
    cur = code.anchor_vertex
    for c in range(anchor_pos + code.marker.L + 1, y.end + 1):
        sym = y.at(c)
        t = cover.step(cur, sym)
        if t is None:
            raise ParseError(f"no transition on {sym!r} at coordinate {c}")
        path[c] = Edge(cur, t, sym)
        cur = t

    ins = {}
    for e in cover.edges:
        ins.setdefault((e.trg, e.label), []).append(e)
    cur = code.anchor_vertex
    for c in range(anchor_pos + code.marker.L, y.start, -1):
        sym = y.at(c)
        cands = ins.get((cur, sym), [])
        if len(cands) != 1:
            raise ParseError(
                f"cannot extend the path leftward at {c}: "
                f"{len(cands)} in-edges labelled {sym!r}"
            )
        path[c] = cands[0]
        cur = cands[0].src
    return path


def _decode_assemble(code: EmbeddingCode, y: Word, lo: int, hi: int):
    ell = code.ell
    L, K = code.marker.L, code.connectors.K
    om, choice = code.orbit_match, code.choice
    margin = code.decode_margin
    if y.start > lo - margin or y.end < hi + margin:
        raise WindowError(
            f"need y over [{lo - margin}, {hi + margin}], got [{y.start}, {y.end}]"
        )

    occurrences = _find_label_occurrences(y, code.marker.label)
    path = {}
    if occurrences:
        if not code.left_resolving():
            raise ParseError(
                "decoding a marker stream requires a left-resolving cover"
            )
        path = _reconstruct_path(code, y, occurrences[0])

    designated = []
    if path:
        a = code.marker.edges
        for p in range(y.start, y.end - L + 1):
            if all(path.get(p + 1 + k) == a[k] for k in range(L)):
                designated.append(p)

    rq_lo, rq_hi = lo - 3 * ell - 1, hi + 3 * ell + 1
    M = [p for p in designated if rq_lo <= p <= rq_hi]

    values = [None] * (hi - lo + 1)

    def put(c, sym):
        if lo <= c <= hi:
            if values[c - lo] is not None:
                raise ParseError(f"coordinate {c} decoded twice")
            values[c - lo] = sym

    def put_word(c0, symbols):
        # symbols occupy (c0, c0 + len]
        for k, sym in enumerate(symbols):
            put(c0 + 1 + k, sym)

    def put_stretch(pw, c_from, c_to):
        for m in range(max(c_from, lo), min(c_to, hi) + 1):
            put(m, pw.value_at(m))

    rmin = 2 * ell - K

    def invert_piece(c_from, c_to):
        """Stretch word from the image edges over [c_from, c_to]."""
        if all(c in path for c in range(c_from, c_to + 1)):
            seq = [path[c] for c in range(c_from, c_to + 1)]
            return om.invert_cycle_edges(seq, c_from)
        seq = list(y.window(c_from, c_to))
        return om.invert_cycle_labels(seq, c_from)

    def payload_edges(c_from, c_to):
        try:
            return tuple(path[c] for c in range(c_from, c_to + 1))
        except KeyError:
            raise ParseError("payload region not covered by the reconstructed path")

    if not M:
        pw = invert_piece(lo - rmin, lo - 1)
        put_stretch(pw, lo, hi)
    else:
        first = M[0]
        if first >= lo:
            pw = invert_piece(first - 2 * ell + 1, first - K)
            put_stretch(pw, lo, first)
        for idx, i in enumerate(M):
            j = M[idx + 1] if idx + 1 < len(M) else None
            if j is not None:
                l = j - i
                if l <= ell:
                    raise ParseError(f"designated markers too close: gap {l}")
                if j < lo or i > hi:
                    continue
                if l <= 3 * ell:
                    P = payload_edges(i + L + K + 1, i + l - K)
                    gap = xi_decode(choice, l, P)
                    put_word(i, gap.symbols)
                else:
                    P = payload_edges(i + L + K + 1, i + ell + 1 - K)
                    head = xi_decode(choice, ell + 1, P)
                    put_word(i, head.symbols)
                    pw = invert_piece(i + ell + 2, j - K)
                    put_stretch(pw, i + ell + 2, j)
            else:
                if i > hi:
                    continue
                P = payload_edges(i + L + K + 1, i + ell + 1 - K)
                head = xi_decode(choice, ell + 1, P)
                put_word(i, head.symbols)
                if hi > i + ell + 1:
                    pw = invert_piece(i + ell + 2, i + ell + 1 + rmin)
                    put_stretch(pw, i + ell + 2, hi)

    for k, v in enumerate(values):
        if v is None:
            raise ParseError(f"coordinate {lo + k} left undecoded")
    return values, M


def decode_point(code: EmbeddingCode, y: Word, lo: int = None, hi: int = None) -> Word:
    """Invert the encoder over [lo, hi] (defaults: the supplied word minus the
    decoder margin on each side)."""
    if lo is None:
        lo = y.start + code.decode_margin
    if hi is None:
        hi = y.end - code.decode_margin
    if lo > hi:
        raise WindowError("empty output range after margins")
    values, _ = _decode_assemble(code, y, lo, hi)
    return Word(tuple(values), lo)


# ---------------------------------------------------------------------------
# verification

def _periodic_words(om: OrbitMatch, n: int) -> list:
    """All words w of length n with a bi-infinite repetition in the source."""
    return [w for w, cyc in om._cyclic_x_words(n) if cyc]


def _tile_word(w, lo, hi, phase_origin=1) -> Word:
    """The periodic point of w restricted to [lo, hi], with w anchored so that
    coordinate phase_origin carries w[0]."""
    n = len(w)
    symbols = tuple(w[(c - phase_origin) % n] for c in range(lo, hi + 1))
    return Word(symbols, lo)


def verify_embedding(code: EmbeddingCode, periods: int = 8, samples: int = 1000,
                     seed: int = 0, equivariance_samples: int = 200,
                     core: int = 40) -> Report:
    """End-to-end verdicts: (a) image admissibility, (b) injectivity and
    least-period preservation on periodic points, (c) round-trip identity,
    (d) shift equivariance, (e) marker occurrences exactly at the designated
    positions.  All verdicts are zero tolerance."""
    rep = Report(meta={"periods": periods, "samples": samples, "seed": seed})
    ell = code.ell
    om = code.orbit_match
    W, Wd = code.window, code.decode_margin
    L = code.marker.L
    y_pres = Presentation("labeled-sofic", code.cover.alphabet, code.cover.graph)
    y_dfa = word_dfa(y_pres)
    x_dfa = word_dfa(code.x)
    rng = random.Random(seed)

    # periodic points of period <= periods
    inj_witness = None
    lsp_witness = None
    per_roundtrip_witness = None
    seen_images = {}
    margin = W + Wd
    n_points = 0
    for n in range(1, periods + 1):
        for w in _periodic_words(om, n):
            n_points += 1
            root = w
            for d in range(1, n):
                if n % d == 0 and w == w[:d] * (n // d):
                    root = w[:d]
                    break
            d = len(root)
            pw = PeriodicWord(root, 1)
            E = om.image_point_window(pw, 1, n)
            least = next(
                q for q in range(1, n + 1)
                if all(E[k] == E[(k + q) % n] for k in range(n))
            )
            if n <= ell and least != d:
                lsp_witness = lsp_witness or {
                    "word": list(w), "expected_period": d, "image_period": least}
            key = (d, tuple(E[:d]))
            if key in seen_images and seen_images[key] != w:
                inj_witness = inj_witness or {
                    "first": list(seen_images[key]), "second": list(w)}
            seen_images.setdefault(key, w)

            xw = _tile_word(w, 1 - margin, n + margin)
            yw = encode_point(code, xw, 1 - Wd, n + Wd)
            direct = tuple(e.label for e in E)
            if tuple(yw.window(1, n)) != direct:
                per_roundtrip_witness = per_roundtrip_witness or {
                    "word": list(w), "reason": "windowed encode differs from orbit image"}
            back = decode_point(code, yw, 1, n)
            if back.symbols != tuple(xw.window(1, n)):
                per_roundtrip_witness = per_roundtrip_witness or {
                    "word": list(w), "reason": "round trip mismatch"}

    rep.meta["periodic_points"] = n_points
    rep.add("periodic_injectivity", inj_witness is None, witness=inj_witness)
    rep.add("least_period_preserved", lsp_witness is None, witness=lsp_witness)

    # sampled windows
    total_len = core + 2 * margin
    count_total = x_dfa.count(total_len)
    adm_witness = None
    rt_witness = None
    eq_witness = None
    place_witness = None
    for k in range(samples):
        xw = Word(x_dfa.unrank(total_len, rng.randrange(count_total)), 1 - margin)
        enc_lo, enc_hi = 1 - Wd, core + Wd
        edges, markers = _encode_assemble(code, xw, enc_lo, enc_hi)
        yw = Word(tuple(e.label for e in edges), enc_lo)

        if adm_witness is None and not y_dfa.admissible(yw.symbols):
            adm_witness = {"sample": k}

        back = decode_point(code, yw, 1, core)
        if rt_witness is None and back.symbols != tuple(xw.window(1, core)):
            rt_witness = {"sample": k}

        if place_witness is None:
            found = [
                enc_lo - 1 + p
                for p in range(len(edges) - L + 1)
                if tuple(edges[p : p + L]) == code.marker.edges
            ]
            expected = [m for m in markers if enc_lo - 1 <= m <= enc_hi - L]
            if found != expected:
                place_witness = {"sample": k, "found": found, "expected": expected}

        if k < equivariance_samples and eq_witness is None:
            y2 = encode_point(code, xw.shifted(1), enc_lo - 1, enc_hi - 1)
            if y2.symbols != yw.symbols:
                eq_witness = {"sample": k}

    rep.add("image_admissible", adm_witness is None, witness=adm_witness)
    rep.add("round_trip", rt_witness is None and per_roundtrip_witness is None,
            witness=rt_witness or per_roundtrip_witness)
    rep.add("shift_equivariant", eq_witness is None, witness=eq_witness)
    rep.add("marker_placement", place_witness is None, witness=place_witness)
    return rep


# ---------------------------------------------------------------------------
# serialization

def _edge_to_json(e: Edge):
    return [e.src, e.trg, e.label]


def _edge_from_json(item) -> Edge:
    return Edge(item[0], item[1], item[2])


def code_to_dict(code: EmbeddingCode) -> dict:
    om_entries = []
    for n in sorted(code.orbit_match._tables):
        for w, entry in sorted(code.orbit_match._tables[n].items()):
            om_entries.append({
                "n": n,
                "from": _word_to_json(w, code.x.alphabet),
                "to": [_edge_to_json(e) for e in entry.cycle],
                "phase": 0,
            })
    return {
        "x": presentation_to_dict(code.x),
        "cover": cover_to_dict(code.cover),
        "marker": {
            "edges": [_edge_to_json(e) for e in code.marker.edges],
            "label": _word_to_json(code.marker.label, code.cover.alphabet),
            "L": code.marker.L,
        },
        "connectors": {
            "K": code.connectors.K,
            "table": {
                f"{u}|{w}": [_edge_to_json(e) for e in path]
                for (u, w), path in sorted(code.connectors.table.items())
            },
        },
        "ell": code.ell,
        "orbit_match": om_entries,
        "window": code.window,
        "certificates": code.certificates,
    }


def code_from_dict(doc: dict) -> EmbeddingCode:
    """Rebuild a code from its JSON form, re-verifying the certificates."""
    x = parse_presentation(json.dumps(doc["x"]))
    cover = cover_from_dict(doc["cover"])
    cover = FischerCover(cover.alphabet, cover.vertices, cover.edges,
                         cover.back_map, source=Presentation(
                             "labeled-sofic", cover.alphabet, cover.graph))

    m_edges = tuple(_edge_from_json(e) for e in doc["marker"]["edges"])
    label = tuple(e.label for e in m_edges)
    psf = all(m_edges[:t] != m_edges[-t:] for t in range(1, len(m_edges)))
    marker = MarkerPath(m_edges, label, psf, len(cover.image(label)) == 1, 0)
    if not marker.valid:
        raise PresentationError("stored marker path fails its invariants")

    table = {}
    for key, path in doc["connectors"]["table"].items():
        u, w = key.split("|")
        table[(u, w)] = tuple(_edge_from_json(e) for e in path)
    connectors = ConnectorTable(doc["connectors"]["K"], table)

    ell = doc["ell"]
    x_dfa = word_dfa(x)
    avoidance = AvoidanceIndex(cover, marker)
    overhead = marker.L + 2 * connectors.K
    for entry in doc["certificates"]["entries"]:
        l = entry["l"]
        if (x_dfa.count(l) != entry["lang"]
                or avoidance.count(l - overhead) != entry["avoid"]
                or x_dfa.count(l) > avoidance.count(l - overhead)):
            raise PresentationError(f"certificate at l={l} does not re-verify")
    choice = BlockLengthChoice(ell, marker.L, connectors.K,
                               doc["certificates"]["entries"], x_dfa, avoidance)
    om = OrbitMatch(x, cover, marker, ell, 2 * ell - connectors.K)
    return EmbeddingCode(x, cover, marker, connectors, choice, om,
                         doc["window"], doc["certificates"])


def save_code(code: EmbeddingCode, path: str):
    with open(path, "w") as fh:
        json.dump(code_to_dict(code), fh, sort_keys=True, indent=1)


def load_code(path: str) -> EmbeddingCode:
    with open(path) as fh:
        return code_from_dict(json.load(fh))
