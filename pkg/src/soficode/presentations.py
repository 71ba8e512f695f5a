"""Input objects for shift spaces: alphabets, words, labeled directed graphs,
and the three presentation kinds (edge shift, labeled sofic graph, forbidden
word list), together with their JSON wire format.

Everything here is a plain value object; operations are pure functions.  All
enumeration order downstream (ranking, catalogs, greedy constructions) is
derived from the declaration order of the alphabet, so parsing is the single
place where order is fixed.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

log = logging.getLogger("soficode")

KINDS = ("edge-shift", "labeled-sofic", "forbidden")


class PresentationError(ValueError):
    """Malformed or inconsistent presentation data."""


class ReducibleError(PresentationError):
    """A strongly-connected presentation was required; carries the condensation."""

    def __init__(self, message, components):
        super().__init__(message)
        self.components = components


# ---------------------------------------------------------------------------
# reports

@dataclass(frozen=True)
class Check:
    """One named verdict with an optional witness (JSON-serializable)."""

    name: str
    passed: bool
    witness: object = None
    detail: str = ""

    def to_dict(self):
        d = {"name": self.name, "passed": self.passed}
        if self.witness is not None:
            d["witness"] = self.witness
        if self.detail:
            d["detail"] = self.detail
        return d


@dataclass
class Report:
    """A bundle of checks plus free-form metadata; passes iff every check does."""

    checks: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, passed, witness=None, detail=""):
        self.checks.append(Check(name, bool(passed), witness, detail))

    def check(self, name) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self):
        return {
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
            "meta": self.meta,
        }


# ---------------------------------------------------------------------------
# alphabets and words

@dataclass(frozen=True)
class Alphabet:
    """An ordered finite set of distinct symbol tokens.

    The declared order is total and fixed; every lexicographic construction
    in the library refers to it.
    """

    symbols: tuple

    def __post_init__(self):
        if not self.symbols:
            raise PresentationError("alphabet must be nonempty")
        if len(set(self.symbols)) != len(self.symbols):
            raise PresentationError("alphabet has duplicate symbols")
        if not all(isinstance(s, str) and s for s in self.symbols):
            raise PresentationError("alphabet symbols must be nonempty strings")
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.symbols)})

    def __len__(self):
        return len(self.symbols)

    def __contains__(self, sym):
        return sym in self._index

    def index(self, sym) -> int:
        try:
            return self._index[sym]
        except KeyError:
            raise PresentationError(f"symbol {sym!r} not in alphabet") from None

    def word(self, data, origin=1) -> "Word":
        """Build a Word from a string (single-char symbols only) or a sequence
        of tokens, validating membership."""
        if isinstance(data, str):
            syms = tuple(data)
        else:
            syms = tuple(data)
        for s in syms:
            if s not in self._index:
                raise PresentationError(f"symbol {s!r} not in alphabet")
        return Word(syms, origin)


@dataclass(frozen=True)
class Word:
    """A finite block of symbols with an absolute coordinate for its first entry."""

    symbols: tuple
    origin: int = 1

    def __len__(self):
        return len(self.symbols)

    @property
    def start(self) -> int:
        return self.origin

    @property
    def end(self) -> int:
        """Coordinate of the last symbol (inclusive)."""
        return self.origin + len(self.symbols) - 1

    def at(self, coord: int) -> str:
        if not self.origin <= coord <= self.end:
            raise IndexError(f"coordinate {coord} outside [{self.origin}, {self.end}]")
        return self.symbols[coord - self.origin]

    def window(self, lo: int, hi: int) -> tuple:
        """Symbols over the inclusive coordinate range [lo, hi]."""
        if lo > hi:
            return ()
        if lo < self.origin or hi > self.end:
            raise IndexError(f"range [{lo}, {hi}] outside [{self.origin}, {self.end}]")
        return self.symbols[lo - self.origin : hi - self.origin + 1]

    def shifted(self, k: int) -> "Word":
        """Same symbols with the origin moved left by k (the image under the
        k-fold left shift)."""
        return Word(self.symbols, self.origin - k)

    def text(self) -> str:
        return " ".join(self.symbols)


# ---------------------------------------------------------------------------
# labeled graphs

class Edge(NamedTuple):
    src: str
    trg: str
    label: str


@dataclass(frozen=True)
class LabeledGraph:
    """A finite directed graph with labeled edges.

    Vertex order and edge order are the declaration order; both are preserved
    through trimming so constructions stay deterministic.
    """

    vertices: tuple
    edges: tuple

    def __post_init__(self):
        vset = set(self.vertices)
        if len(vset) != len(self.vertices):
            raise PresentationError("duplicate vertex names")
        for e in self.edges:
            if e.src not in vset or e.trg not in vset:
                raise PresentationError(f"edge {e} references undeclared vertex")
        if len(set(self.edges)) != len(self.edges):
            raise PresentationError("duplicate edge (same src, trg and label)")

    def out_edges(self, v) -> list:
        return [e for e in self.edges if e.src == v]

    def in_edges(self, v) -> list:
        return [e for e in self.edges if e.trg == v]

    def is_right_resolving(self) -> bool:
        return self.right_resolving_witness() is None

    def right_resolving_witness(self):
        """None if out-edge labels are distinct per vertex, else a witness
        (vertex, label)."""
        seen = set()
        for e in self.edges:
            key = (e.src, e.label)
            if key in seen:
                return {"vertex": e.src, "label": e.label}
            seen.add(key)
        return None

    def left_resolving_witness(self):
        """None if in-edge labels are distinct per vertex, else a witness
        (vertex, label, sources)."""
        seen = {}
        for e in self.edges:
            key = (e.trg, e.label)
            seen.setdefault(key, []).append(e.src)
        for (v, lab), srcs in seen.items():
            if len(srcs) > 1:
                return {"vertex": v, "label": lab, "sources": sorted(srcs)}
        return None


def trim_essential(g: LabeledGraph):
    """Remove vertices that do not lie on a bi-infinite path.

    Returns (trimmed graph, removed vertex list).  Idempotent.
    """
    alive = set(g.vertices)
    changed = True
    while changed:
        changed = False
        outs = {v: 0 for v in alive}
        ins = {v: 0 for v in alive}
        for e in g.edges:
            if e.src in alive and e.trg in alive:
                outs[e.src] += 1
                ins[e.trg] += 1
        for v in list(alive):
            if outs[v] == 0 or ins[v] == 0:
                alive.remove(v)
                changed = True
    removed = [v for v in g.vertices if v not in alive]
    if not removed:
        return g, []
    kept = tuple(v for v in g.vertices if v in alive)
    edges = tuple(e for e in g.edges if e.src in alive and e.trg in alive)
    return LabeledGraph(kept, edges), removed


def strongly_connected_components(g: LabeledGraph) -> list:
    """SCCs in a deterministic order (Tarjan, iterative)."""
    index = {}
    low = {}
    on_stack = set()
    stack = []
    result = []
    counter = [0]

    succ = {v: [] for v in g.vertices}
    for e in g.edges:
        succ[e.src].append(e.trg)

    for root in g.vertices:
        if root in index:
            continue
        work = [(root, iter(succ[root]))]
        index[root] = low[root] = counter[0]
        counter[0] += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter[0]
                    counter[0] += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(succ[w])))
                    advanced = True
                    break
                elif w in on_stack:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                pv = work[-1][0]
                low[pv] = min(low[pv], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.remove(w)
                    comp.append(w)
                    if w == v:
                        break
                result.append(sorted(comp))
    return result


def is_strongly_connected(g: LabeledGraph) -> bool:
    return len(g.vertices) > 0 and len(strongly_connected_components(g)) == 1


# ---------------------------------------------------------------------------
# presentations

@dataclass(frozen=True)
class Presentation:
    """A finite presentation of a subshift.

    kind "edge-shift":    points are bi-infinite edge sequences; the alphabet
                          is exactly the set of edge labels, one per edge.
    kind "labeled-sofic": points are label sequences of bi-infinite paths.
    kind "forbidden":     the SFT of all bi-infinite sequences avoiding every
                          listed word.
    """

    kind: str
    alphabet: Alphabet
    graph: LabeledGraph = None
    forbidden: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PresentationError(f"unknown kind {self.kind!r}")
        if self.kind in ("edge-shift", "labeled-sofic"):
            if self.graph is None:
                raise PresentationError(f"kind {self.kind!r} requires a graph")
            for e in self.graph.edges:
                if e.label not in self.alphabet:
                    raise PresentationError(f"edge label {e.label!r} not in alphabet")
            if self.kind == "edge-shift":
                labels = [e.label for e in self.graph.edges]
                if len(set(labels)) != len(labels):
                    raise PresentationError("edge-shift edges must carry distinct labels")
                if set(labels) != set(self.alphabet.symbols):
                    raise PresentationError("edge-shift alphabet must equal the set of edge labels")
        else:
            if self.graph is not None:
                raise PresentationError("forbidden kind takes no graph")
            for w in self.forbidden:
                if not w:
                    raise PresentationError("forbidden words must be nonempty")
                for s in w:
                    if s not in self.alphabet:
                        raise PresentationError(f"forbidden word symbol {s!r} not in alphabet")

    def word(self, data, origin=1) -> Word:
        return self.alphabet.word(data, origin)


def _block_name(symbols) -> str:
    return ",".join(symbols)


def compile_to_graph(p: Presentation) -> LabeledGraph:
    """The labeled graph presenting p's shift, with stranded parts trimmed.

    Graph kinds pass through (trimmed).  Forbidden-word SFTs are compiled to
    the graph on admissible (m-1)-blocks, where m is the longest forbidden
    word, so every downstream algorithm sees one uniform input shape.
    """
    if p.graph is not None:
        g, removed = trim_essential(p.graph)
        if removed:
            log.warning("trimmed stranded vertices: %s", removed)
        if not g.vertices:
            raise PresentationError("presentation has no bi-infinite path (empty shift)")
        return g

    forb = {tuple(w) for w in p.forbidden}
    m = max((len(w) for w in forb), default=1)
    blen = m - 1
    syms = p.alphabet.symbols

    def admissible(block) -> bool:
        for k in range(len(block)):
            for j in range(k + 1, len(block) + 1):
                if block[k:j] in forb:
                    return False
        return True

    # all admissible blocks of length blen, in lexicographic (alphabet) order
    blocks = [()]
    for _ in range(blen):
        blocks = [b + (s,) for b in blocks for s in syms if admissible(b + (s,))]
    if not blocks:
        raise PresentationError("forbidden words leave no admissible block")

    vertices = tuple(_block_name(b) for b in blocks)
    by_name = dict(zip(vertices, blocks))
    edges = []
    for name in vertices:
        b = by_name[name]
        for s in syms:
            ext = b + (s,)
            if not admissible(ext):
                continue
            nxt = ext[1:] if blen else ()
            nxt_name = _block_name(nxt)
            if nxt_name in by_name:
                edges.append(Edge(name, nxt_name, s))
    g = LabeledGraph(vertices, tuple(edges))
    g, removed = trim_essential(g)
    if removed:
        log.debug("trimmed %d transient blocks", len(removed))
    if not g.vertices:
        raise PresentationError("forbidden words leave an empty shift")
    return g


# ---------------------------------------------------------------------------
# JSON format

def _word_to_json(symbols, alphabet: Alphabet):
    if all(len(s) == 1 for s in alphabet.symbols):
        return "".join(symbols)
    return list(symbols)


def _word_from_json(data, alphabet: Alphabet):
    if isinstance(data, str):
        if not all(len(s) == 1 for s in alphabet.symbols):
            raise PresentationError(
                "word strings are only allowed when every symbol is a single character"
            )
        return tuple(data)
    if isinstance(data, list):
        return tuple(data)
    raise PresentationError(f"expected a word (string or list), got {type(data).__name__}")


def parse_presentation(text: str) -> Presentation:
    """Parse the JSON presentation document.  Unknown fields are rejected."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PresentationError(f"malformed JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise PresentationError("document must be a JSON object")

    kind = doc.get("kind")
    if kind not in KINDS:
        raise PresentationError(f"kind must be one of {KINDS}, got {kind!r}")
    allowed = {"alphabet", "kind"}
    allowed |= {"forbidden"} if kind == "forbidden" else {"vertices", "edges"}
    unknown = set(doc) - allowed
    if unknown:
        raise PresentationError(f"unknown fields: {sorted(unknown)}")

    if "alphabet" not in doc or not isinstance(doc["alphabet"], list):
        raise PresentationError("missing or invalid 'alphabet'")
    alphabet = Alphabet(tuple(doc["alphabet"]))

    if kind == "forbidden":
        if "forbidden" not in doc or not isinstance(doc["forbidden"], list):
            raise PresentationError("forbidden kind requires a 'forbidden' list")
        forb = tuple(_word_from_json(w, alphabet) for w in doc["forbidden"])
        return Presentation(kind, alphabet, None, forb)

    for fld in ("vertices", "edges"):
        if fld not in doc or not isinstance(doc[fld], list):
            raise PresentationError(f"graph kind requires a '{fld}' list")
    vertices = tuple(doc["vertices"])
    edges = []
    for ed in doc["edges"]:
        if not isinstance(ed, dict) or set(ed) != {"src", "trg", "label"}:
            raise PresentationError(f"bad edge object: {ed!r}")
        edges.append(Edge(ed["src"], ed["trg"], ed["label"]))
    graph = LabeledGraph(vertices, tuple(edges))
    return Presentation(kind, alphabet, graph, ())


def presentation_to_dict(p: Presentation) -> dict:
    doc = {"alphabet": list(p.alphabet.symbols), "kind": p.kind}
    if p.kind == "forbidden":
        doc["forbidden"] = [_word_to_json(w, p.alphabet) for w in p.forbidden]
    else:
        doc["vertices"] = list(p.graph.vertices)
        doc["edges"] = [{"src": e.src, "trg": e.trg, "label": e.label} for e in p.graph.edges]
    return doc


def serialize_presentation(p: Presentation) -> str:
    return json.dumps(presentation_to_dict(p), sort_keys=True, indent=2)


# ---------------------------------------------------------------------------
# validation and adjacency

def validate(p: Presentation) -> Report:
    """Structural verdicts for a presentation; diagnostics are data, not errors."""
    rep = Report(meta={"kind": p.kind})
    if p.graph is not None:
        trimmed, removed = trim_essential(p.graph)
        rep.add("essential", not removed,
                witness=removed or None,
                detail="every vertex lies on a bi-infinite path")
        rep.add("nonempty", bool(trimmed.vertices),
                detail="the presented subshift has at least one point")
        wit = p.graph.right_resolving_witness()
        rep.add("right_resolving", wit is None, witness=wit)
    else:
        try:
            compile_to_graph(p)
            nonempty = True
        except PresentationError:
            nonempty = False
        rep.add("essential", True, detail="forbidden-word presentations compile to a trimmed graph")
        rep.add("nonempty", nonempty)
        rep.add("right_resolving", True, detail="block graphs are right-resolving by construction")
    return rep


def adjacency_matrix(g: LabeledGraph) -> np.ndarray:
    """Integer matrix whose (u, v) entry counts edges u -> v, in vertex order."""
    idx = {v: i for i, v in enumerate(g.vertices)}
    mat = np.zeros((len(g.vertices), len(g.vertices)), dtype=np.int64)
    for e in g.edges:
        mat[idx[e.src], idx[e.trg]] += 1
    return mat
