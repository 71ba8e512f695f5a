"""Minimal right-resolving presentations of irreducible sofic shifts.

The construction: determinize the compiled graph by the subset construction
seeded from the full vertex set, trim, merge follower-equivalent states by
partition refinement, then cut down to the strongly connected part reachable
from the image of a synchronizing word.  Each cover vertex is tagged with a
synchronizing word that focuses onto it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

from .presentations import (
    Alphabet,
    Edge,
    LabeledGraph,
    Presentation,
    PresentationError,
    Report,
    ReducibleError,
    Word,
    compile_to_graph,
    is_strongly_connected,
    strongly_connected_components,
    _word_from_json,
    _word_to_json,
)
from .language import WordDfa, word_dfa


class CoverError(PresentationError):
    """The cover construction cannot proceed on this input."""


@dataclass(frozen=True)
class FischerCover:
    """A right-resolving, follower-separated, strongly connected presentation.

    delta maps (vertex, symbol) to the unique target vertex; back_map gives a
    synchronizing word whose image is exactly that vertex.
    """

    alphabet: Alphabet
    vertices: tuple
    edges: tuple
    back_map: dict
    source: Presentation = field(compare=False, default=None)

    def __post_init__(self):
        delta = {}
        for e in self.edges:
            key = (e.src, e.label)
            if key in delta:
                raise CoverError(f"not right-resolving at {key}")
            delta[key] = e.trg
        object.__setattr__(self, "_delta", delta)
        object.__setattr__(self, "_vidx", {v: i for i, v in enumerate(self.vertices)})

    def __hash__(self):
        return hash((self.alphabet, self.vertices, self.edges))

    @property
    def graph(self) -> LabeledGraph:
        return LabeledGraph(self.vertices, self.edges)

    def step(self, v, symbol):
        return self._delta.get((v, symbol))

    def transition(self, v, symbols):
        """Iterated transition along a word; None once any step is undefined."""
        for s in symbols:
            if v is None:
                return None
            v = self._delta.get((v, s))
        return v

    def edge(self, v, symbol) -> Edge:
        t = self._delta.get((v, symbol))
        if t is None:
            raise KeyError((v, symbol))
        return Edge(v, t, symbol)

    def out_edges(self, v) -> list:
        """Out-edges in alphabet order (the canonical edge order)."""
        out = []
        for s in self.alphabet.symbols:
            t = self._delta.get((v, s))
            if t is not None:
                out.append(Edge(v, t, s))
        return out

    def ordered_edges(self) -> tuple:
        """All edges ordered by (vertex position, alphabet position)."""
        return tuple(e for v in self.vertices for e in self.out_edges(v))

    def image(self, symbols) -> frozenset:
        """Set of endpoints of the word read from every vertex that accepts it."""
        out = set()
        for v in self.vertices:
            t = self.transition(v, symbols)
            if t is not None:
                out.add(t)
        return frozenset(out)

    def path_labels(self, edges) -> tuple:
        return tuple(e.label for e in edges)

    def is_path(self, edges) -> bool:
        return all(edges[i].trg == edges[i + 1].src for i in range(len(edges) - 1))

    def adjacency(self):
        from .presentations import adjacency_matrix

        return adjacency_matrix(self.graph)

    def delta_table(self):
        """Transitions as (state index, symbol index) -> state index."""
        table = [dict() for _ in self.vertices]
        for (v, s), t in self._delta.items():
            table[self._vidx[v]][self.alphabet.index(s)] = self._vidx[t]
        return table


def cover_transition(cover: FischerCover, v, w) -> str | None:
    symbols = w.symbols if isinstance(w, Word) else tuple(w)
    return cover.transition(v, symbols)


# ---------------------------------------------------------------------------
# construction

def _trim_automaton(delta):
    """Drop states with no outgoing or no incoming transition, iteratively.

    Returns (kept state list in original order, renumbered delta rows).
    """
    n = len(delta)
    alive = set(range(n))
    changed = True
    while changed:
        changed = False
        has_out = {s: False for s in alive}
        has_in = {s: False for s in alive}
        for s in alive:
            for t in delta[s].values():
                if t in alive:
                    has_out[s] = True
                    has_in[t] = True
        for s in list(alive):
            if not has_out[s] or not has_in[s]:
                alive.remove(s)
                changed = True
    kept = sorted(alive)
    renum = {s: i for i, s in enumerate(kept)}
    new_delta = []
    for s in kept:
        new_delta.append({a: renum[t] for a, t in delta[s].items() if t in alive})
    return kept, new_delta


def _refine_followers(delta):
    """Partition states by follower-language equality (Moore refinement with
    an implicit dead state).  Returns the class id per state."""
    n = len(delta)
    cls = [0] * n
    while True:
        sig = {}
        new_cls = [0] * n
        for s in range(n):
            key = (cls[s], tuple(sorted((a, cls[t]) for a, t in delta[s].items())))
            if key not in sig:
                sig[key] = len(sig)
            new_cls[s] = sig[key]
        if new_cls == cls:
            return cls
        cls = new_cls


def _collapse_word(delta, n_states):
    """A word whose image over all states is a single state, by repeated
    shortest pair collapses.  Returns (word as symbol-index tuple, final state)."""
    current = set(range(n_states))
    word = []
    while len(current) > 1:
        it = iter(sorted(current))
        p = next(it)
        q = next(it)
        seg = _pair_collapse(delta, p, q)
        if seg is None:
            raise CoverError("presentation admits no synchronizing word")
        word.extend(seg)
        nxt = set()
        for s in current:
            for a in seg:
                s = delta[s].get(a)
                if s is None:
                    break
            if s is not None:
                nxt.add(s)
        if not nxt:
            raise CoverError("synchronizing search killed every state")
        current = nxt
    return tuple(word), next(iter(current))


def _pair_collapse(delta, p, q):
    """Shortest symbol sequence after which p and q agree or one dies."""
    start = frozenset((p, q))
    seen = {start}
    queue = [(start, ())]
    while queue:
        pair, w = queue.pop(0)
        a_list = sorted(set().union(*(delta[s].keys() for s in pair)))
        for a in a_list:
            nxt = {delta[s][a] for s in pair if a in delta[s]}
            if not nxt:
                continue
            if len(nxt) == 1:
                return w + (a,)
            key = frozenset(nxt)
            if key not in seen:
                seen.add(key)
                queue.append((key, w + (a,)))
    return None


@lru_cache(maxsize=None)
def build_fischer_cover(p: Presentation) -> FischerCover:
    """The minimal right-resolving presentation of the shift presented by p.

    Requires the trimmed input graph to be strongly connected; reducible
    presentations are rejected with their condensation attached.
    """
    g = compile_to_graph(p)
    comps = strongly_connected_components(g)
    if len(comps) != 1:
        raise ReducibleError(
            f"presentation is reducible ({len(comps)} strongly connected components)",
            comps,
        )

    dfa = word_dfa(p)
    kept, delta = _trim_automaton(dfa.delta)
    if not kept:
        raise CoverError("empty language")

    cls = _refine_followers(delta)
    n_cls = max(cls) + 1
    rep = {}
    for s, c in enumerate(cls):
        rep.setdefault(c, s)
    qdelta = []
    for c in range(n_cls):
        row = {a: cls[t] for a, t in delta[rep[c]].items()}
        qdelta.append(row)
    for s, c in enumerate(cls):  # quotient must be consistent
        assert {a: cls[t] for a, t in delta[s].items()} == qdelta[c], "refinement unstable"

    sync, root = _collapse_word(qdelta, n_cls)

    # reachable closure from the synchronized state, BFS in alphabet order
    order = [root]
    pos = {root: 0}
    words = {root: sync}
    i = 0
    while i < len(order):
        s = order[i]
        i += 1
        for a, t in sorted(qdelta[s].items()):
            if t not in pos:
                pos[t] = len(order)
                order.append(t)
                words[t] = words[s] + (a,)

    names = [f"s{k}" for k in range(len(order))]
    name_of = {s: names[k] for k, s in enumerate(order)}
    alphabet = p.alphabet
    edges = []
    for k, s in enumerate(order):
        for a, t in sorted(qdelta[s].items()):
            edges.append(Edge(names[k], name_of[t], alphabet.symbols[a]))
    back_map = {
        name_of[s]: tuple(alphabet.symbols[a] for a in words[s]) for s in order
    }
    cover = FischerCover(alphabet, tuple(names), tuple(edges), back_map, source=p)
    assert is_strongly_connected(cover.graph), "cover core must be strongly connected"
    return cover


# ---------------------------------------------------------------------------
# structural verdicts

def _graph_period(g: LabeledGraph) -> int:
    """gcd of cycle lengths of a strongly connected graph."""
    from math import gcd

    level = {g.vertices[0]: 0}
    queue = [g.vertices[0]]
    succ = {v: [] for v in g.vertices}
    for e in g.edges:
        succ[e.src].append(e.trg)
    while queue:
        v = queue.pop(0)
        for w in succ[v]:
            if w not in level:
                level[w] = level[v] + 1
                queue.append(w)
    period = 0
    for e in g.edges:
        period = gcd(period, level[e.src] + 1 - level[e.trg])
    return abs(period)


def _separation_witnesses(cover: FischerCover):
    """For each vertex pair, a shortest word admissible from exactly one side.

    Returns (max depth, {pair: word}); a pair with no separating word means
    the cover is not follower-separated (witnessed by that pair).
    """
    delta = cover.delta_table()
    n = len(cover.vertices)
    out = {}
    merged = None
    for i in range(n):
        for j in range(i + 1, n):
            w = _separating_word(delta, i, j, len(cover.alphabet))
            if w is None:
                merged = (cover.vertices[i], cover.vertices[j])
            else:
                out[(cover.vertices[i], cover.vertices[j])] = tuple(
                    cover.alphabet.symbols[a] for a in w
                )
    depth = max((len(w) for w in out.values()), default=0)
    return depth, out, merged


def _separating_word(delta, p, q, n_sym):
    seen = {(p, q)}
    queue = [((p, q), ())]
    while queue:
        (x, y), w = queue.pop(0)
        for a in range(n_sym):
            nx, ny = delta[x].get(a), delta[y].get(a)
            if (nx is None) != (ny is None):
                return w + (a,)
            if nx is None:
                continue
            if (nx, ny) not in seen:
                seen.add((nx, ny))
                queue.append(((nx, ny), w + (a,)))
    return None


def _left_closing_verdict(cover: FischerCover):
    """Pair-graph test: is there a vertex with two distinct equally-labeled
    incoming edges whose source pair supports an infinite equal-label
    backward walk?  Essential graphs make diagonal pairs always extendable."""
    ins = {}
    for e in cover.edges:
        ins.setdefault(e.trg, []).append(e)

    pairs = set()
    for v in cover.vertices:
        for w in cover.vertices:
            pairs.add(frozenset((v, w)))

    def preds(pair):
        vs = sorted(pair)
        v, w = (vs[0], vs[0]) if len(vs) == 1 else (vs[0], vs[1])
        out = set()
        for ev in ins.get(v, []):
            for ew in ins.get(w, []):
                if ev.label == ew.label:
                    out.add(frozenset((ev.src, ew.src)))
        return out

    # greatest fixpoint: pairs with an infinite backward continuation
    inf = set(pairs)
    changed = True
    while changed:
        changed = False
        for pair in list(inf):
            if not (preds(pair) & inf):
                inf.remove(pair)
                changed = True

    for v in cover.vertices:
        by_label = {}
        for e in ins.get(v, []):
            by_label.setdefault(e.label, []).append(e)
        for lab, es in sorted(by_label.items()):
            if len(es) < 2:
                continue
            for i in range(len(es)):
                for j in range(i + 1, len(es)):
                    pair = frozenset((es[i].src, es[j].src))
                    if pair in inf:
                        return {
                            "vertex": v,
                            "label": lab,
                            "sources": sorted([es[i].src, es[j].src]),
                        }
    return None


def structural_report(cover: FischerCover) -> Report:
    """Right/left resolving, follower separation, connectivity, aperiodicity,
    and left-closing, each with a concrete witness when false."""
    rep = Report(meta={"vertices": len(cover.vertices), "edges": len(cover.edges)})
    g = cover.graph

    rep.add("right_resolving", g.right_resolving_witness() is None,
            witness=g.right_resolving_witness())

    lw = g.left_resolving_witness()
    rep.add("left_resolving", lw is None, witness=lw)

    depth, seps, merged = _separation_witnesses(cover)
    rep.add("follower_separated", merged is None,
            witness={"equivalent_pair": merged} if merged else {"separation_depth": depth})

    comps = strongly_connected_components(g)
    rep.add("strongly_connected", len(comps) == 1,
            witness=None if len(comps) == 1 else comps)

    period = _graph_period(g)
    rep.add("aperiodic", period == 1, witness={"period": period})

    lc = _left_closing_verdict(cover)
    rep.add("left_closing", lc is None, witness=lc)
    return rep


# ---------------------------------------------------------------------------
# partial-map dynamics (shared with the periodic census)

def compose_step(m, delta, a):
    """Extend the partial self-map m by one symbol; None if every track dies."""
    out = tuple(-1 if v < 0 else delta[v].get(a, -1) for v in m)
    if all(v < 0 for v in out):
        return None
    return out


def map_cycle_lengths(m) -> frozenset:
    """Cycle lengths of the functional graph of a partial self-map."""
    n = len(m)
    color = [0] * n  # 0 unseen, 1 on path, 2 done
    lengths = set()
    for s in range(n):
        if color[s]:
            continue
        path = []
        v = s
        while v >= 0 and color[v] == 0:
            color[v] = 1
            path.append(v)
            v = m[v]
        if v >= 0 and color[v] == 1:
            lengths.add(len(path) - path.index(v))
        for u in path:
            color[u] = 2
    return frozenset(lengths)


def map_spectrum(delta, n_states, max_n):
    """For each length n <= max_n, the counts of words grouped by the partial
    self-map they induce.  Returns a list indexed by n of {map: count}."""
    n_sym_keys = sorted({a for row in delta for a in row})
    ident = tuple(range(n_states))
    levels = [{ident: 1}]
    for _ in range(max_n):
        cur = levels[-1]
        nxt = {}
        for m, cnt in cur.items():
            for a in n_sym_keys:
                m2 = compose_step(m, delta, a)
                if m2 is not None:
                    nxt[m2] = nxt.get(m2, 0) + cnt
        levels.append(nxt)
    return levels


def _mobius(n: int) -> int:
    result = 1
    d = 2
    while d * d <= n:
        if n % d == 0:
            n //= d
            if n % d == 0:
                return 0
            result = -result
        d += 1
    if n > 1:
        result = -result
    return result


def _divisors(n: int) -> list:
    return [d for d in range(1, n + 1) if n % d == 0]


# ---------------------------------------------------------------------------
# periodic lift hypothesis

def _enumerate_cyclic_words(cover: FischerCover, n: int):
    """All label words w of length n with a bi-infinite repetition in the
    shift, yielded with the induced partial map."""
    delta = cover.delta_table()
    nv = len(cover.vertices)
    ident = tuple(range(nv))
    syms = cover.alphabet.symbols

    def rec(prefix, m):
        if len(prefix) == n:
            if map_cycle_lengths(m):
                yield prefix, m
            return
        for a in range(len(syms)):
            m2 = compose_step(m, delta, a)
            if m2 is not None:
                yield from rec(prefix + (syms[a],), m2)

    yield from rec((), ident)


def _is_primitive(w) -> bool:
    n = len(w)
    for d in _divisors(n)[:-1]:
        if w == w[:d] * (n // d):
            return False
    return True


def _min_rotation(w):
    return min(tuple(w[i:]) + tuple(w[:i]) for i in range(len(w)))


def lift_hypothesis_check(cover: FischerCover, N: int, enumerate_limit: int = 12) -> Report:
    """For every point of least period n <= N, does some cover cycle of length
    n carry its label word?

    Small n are checked by enumeration with explicit witnesses; larger n fall
    back to an exact counting argument (fixed-point counts of the induced
    partial maps, corrected down to primitive words).
    """
    rep = Report(meta={"max_period": N})
    for n in range(1, N + 1):
        if n <= enumerate_limit:
            rep.checks.append(_lift_check_enumerate(cover, n))
        else:
            rep.checks.append(_lift_check_count(cover, n))
    return rep


def _lift_check_enumerate(cover: FischerCover, n: int):
    from .presentations import Check

    seen_orbits = set()
    failures = []
    witness_sample = None
    for w, m in _enumerate_cyclic_words(cover, n):
        if not _is_primitive(w):
            continue
        canon = _min_rotation(w)
        if canon in seen_orbits:
            continue
        seen_orbits.add(canon)
        ok = None
        for i, v in enumerate(m):
            if v == i:
                ok = (cover.vertices[i], w)
                break
        if ok is None:
            failures.append("".join(w) if all(len(s) == 1 for s in w) else list(w))
        elif witness_sample is None:
            witness_sample = {"vertex": ok[0], "word": _word_to_json(ok[1], cover.alphabet)}
    witness = {"orbits": len(seen_orbits), "method": "enumerate"}
    if failures:
        witness["unliftable"] = failures[:5]
    elif witness_sample:
        witness["sample"] = witness_sample
    return Check(f"lift_n={n}", not failures, witness=witness)


def _lift_check_count(cover: FischerCover, n: int):
    from .presentations import Check

    delta = cover.delta_table()
    nv = len(cover.vertices)
    levels = map_spectrum(delta, nv, n)

    def H(d, k):
        """Words u of length d whose map has a cycle length dividing k."""
        total = 0
        for m, cnt in levels[d].items():
            if any(k % c == 0 for c in map_cycle_lengths(m)):
                total += cnt
        return total

    def A(d):
        """Words u of length d whose map has any cycle."""
        total = 0
        for m, cnt in levels[d].items():
            if map_cycle_lengths(m):
                total += cnt
        return total

    g_cache = {}

    def G(d, k):
        """Primitive words u of length d with a cycle length dividing k."""
        key = (d, k)
        if key not in g_cache:
            total = H(d, k)
            for dp in _divisors(d)[:-1]:
                total -= G(dp, k * (d // dp))
            g_cache[key] = total
        return g_cache[key]

    primitive_total = sum(_mobius(n // d) * A(d) for d in _divisors(n))
    primitive_lift = G(n, 1)
    passed = primitive_lift == primitive_total
    return Check(
        f"lift_n={n}",
        passed,
        witness={
            "method": "count",
            "primitive_words": primitive_total,
            "with_least_period_lift": primitive_lift,
        },
    )


# ---------------------------------------------------------------------------
# serialization

def cover_to_dict(cover: FischerCover) -> dict:
    doc = {
        "alphabet": list(cover.alphabet.symbols),
        "kind": "labeled-sofic",
        "vertices": list(cover.vertices),
        "edges": [{"src": e.src, "trg": e.trg, "label": e.label} for e in cover.edges],
        "back_map": {
            v: _word_to_json(w, cover.alphabet) for v, w in cover.back_map.items()
        },
    }
    return doc


def cover_from_dict(doc: dict) -> FischerCover:
    alphabet = Alphabet(tuple(doc["alphabet"]))
    edges = tuple(Edge(e["src"], e["trg"], e["label"]) for e in doc["edges"])
    back_map = {
        v: _word_from_json(w, alphabet) for v, w in doc["back_map"].items()
    }
    return FischerCover(alphabet, tuple(doc["vertices"]), edges, back_map)
