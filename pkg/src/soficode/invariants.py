"""Periodic-point counts, topological entropy, and the embeddability
precondition report.

Counts are exact integers.  Entropy is the natural log of the Perron
eigenvalue of a right-resolving presentation, computed by power iteration
with a period-folding fallback for irreducible but imprimitive matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .presentations import (
    Presentation,
    PresentationError,
    ReducibleError,
    Report,
    adjacency_matrix,
    compile_to_graph,
    is_strongly_connected,
    strongly_connected_components,
)
from .language import word_dfa, count_words
from .fischer import (
    build_fischer_cover,
    lift_hypothesis_check,
    map_cycle_lengths,
    map_spectrum,
    structural_report,
    _divisors,
    _graph_period,
    _mobius,
    _trim_automaton,
)


@dataclass(frozen=True)
class PeriodicCensus:
    """card P_n (points fixed by the n-fold shift) and least-period orbit
    counts, for n = 1..N."""

    counts: dict
    orbit_counts: dict

    def points(self, n: int) -> int:
        return self.counts[n]

    def orbits(self, n: int) -> int:
        return self.orbit_counts[n]


@dataclass(frozen=True)
class EntropyEstimate:
    value: float
    residual: float
    iterations: int


def _int_matmul(a, b):
    n = len(a)
    return [
        [sum(a[i][k] * b[k][j] for k in range(n)) for j in range(n)]
        for i in range(n)
    ]


def _int_matpow_traces(mat, N):
    """trace(mat^n) for n = 1..N with exact integer arithmetic."""
    traces = {}
    cur = mat
    for n in range(1, N + 1):
        traces[n] = sum(cur[i][i] for i in range(len(mat)))
        if n < N:
            cur = _int_matmul(cur, mat)
    return traces


@lru_cache(maxsize=None)
def _census_automaton(p: Presentation):
    """Trimmed deterministic presentation used to decide w^inf membership."""
    dfa = word_dfa(p)
    kept, delta = _trim_automaton(dfa.delta)
    return len(kept), tuple(tuple(sorted(row.items())) for row in delta)


def _delta_rows(frozen):
    return [dict(row) for row in frozen]


def periodic_census(p: Presentation, N: int) -> PeriodicCensus:
    """Exact card P_n for n <= N.

    Edge shifts count via traces of adjacency powers; sofic and SFT kinds
    count label words whose repeated reading stabilizes on a cycle of the
    deterministic presentation.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    if p.kind == "edge-shift":
        g = compile_to_graph(p)
        idx = {v: i for i, v in enumerate(g.vertices)}
        mat = [[0] * len(g.vertices) for _ in g.vertices]
        for e in g.edges:
            mat[idx[e.src]][idx[e.trg]] += 1
        counts = _int_matpow_traces(mat, N)
    else:
        n_states, frozen = _census_automaton(p)
        delta = _delta_rows(frozen)
        levels = map_spectrum(delta, n_states, N)
        counts = {}
        for n in range(1, N + 1):
            counts[n] = sum(
                cnt for m, cnt in levels[n].items() if map_cycle_lengths(m)
            )
    orbit_counts = {}
    for n in range(1, N + 1):
        q = sum(_mobius(n // d) * counts[d] for d in _divisors(n))
        if q % n != 0 or q < 0:
            raise AssertionError(f"inconsistent periodic counts at n={n}")
        orbit_counts[n] = q // n
    return PeriodicCensus(counts, orbit_counts)


def cover_cycle_census(cover, N: int) -> dict:
    """trace of the cover adjacency powers: periodic path counts upstairs."""
    idx = {v: i for i, v in enumerate(cover.vertices)}
    mat = [[0] * len(cover.vertices) for _ in cover.vertices]
    for e in cover.edges:
        mat[idx[e.src]][idx[e.trg]] += 1
    return _int_matpow_traces(mat, N)


# ---------------------------------------------------------------------------
# entropy

def _power_iterate(mat: np.ndarray, tol: float, max_iter: int = 200000):
    n = mat.shape[0]
    if n == 1:
        lam = float(mat[0, 0])
        return lam, 0.0, 1
    v = np.ones(n)
    lam = 1.0
    for it in range(1, max_iter + 1):
        w = mat @ v
        norm = np.linalg.norm(w, np.inf)
        if norm == 0:
            raise PresentationError("matrix is nilpotent; no growth to estimate")
        w = w / norm
        lam = float((w @ (mat @ w)) / (w @ w))
        residual = float(np.linalg.norm(mat @ w - lam * w, np.inf))
        v = w
        if residual < tol * max(1.0, lam):
            return lam, residual, it
    return lam, residual, max_iter


def _cyclic_class(g, period):
    """Vertices at BFS distance 0 mod period from the first vertex."""
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
    return [v for v in g.vertices if level[v] % period == 0]


def entropy(p: Presentation, tol: float = 1e-12) -> EntropyEstimate:
    """log of the Perron eigenvalue of a right-resolving presentation of p.

    Labeled-sofic inputs go through their minimal cover first, so label
    multiplicity never inflates the count.
    """
    if p.kind == "labeled-sofic":
        g = build_fischer_cover(p).graph
    else:
        g = compile_to_graph(p)
        if not is_strongly_connected(g):
            raise ReducibleError(
                "entropy requires an irreducible presentation",
                strongly_connected_components(g),
            )
    mat = adjacency_matrix(g).astype(float)
    period = _graph_period(g)
    if period <= 1:
        lam, residual, iters = _power_iterate(mat, tol)
        value = math.log(lam)
    else:
        cls = _cyclic_class(g, period)
        idx = {v: i for i, v in enumerate(g.vertices)}
        sel = [idx[v] for v in cls]
        folded = np.linalg.matrix_power(mat, period)[np.ix_(sel, sel)]
        lam, residual, iters = _power_iterate(folded, tol)
        value = math.log(lam) / period
    return EntropyEstimate(max(value, 0.0), residual, iters)


# ---------------------------------------------------------------------------
# embeddability precondition

def embeddability_precondition(x: Presentation, y: Presentation, N: int) -> Report:
    """Everything that must hold before attempting to embed x into y:
    strict entropy gap, pointwise periodic-count domination up to N, and the
    structural requirements on y's cover (irreducible, aperiodic,
    left-resolving, with least-period lifts up to N).

    The left-closing verdict is attached for diagnosis but does not gate.
    """
    rep = Report(meta={"max_period": N})

    try:
        cover_y = build_fischer_cover(y)
        rep.add("y_irreducible", True)
    except ReducibleError as exc:
        rep.add("y_irreducible", False, witness=exc.components)
        return rep

    hx = entropy(x)
    hy = entropy(y)
    rep.meta["entropy_x"] = hx.value
    rep.meta["entropy_y"] = hy.value
    rep.add(
        "entropy_strict",
        hx.value < hy.value - 1e-12,
        witness={"h_x": hx.value, "h_y": hy.value, "margin": hy.value - hx.value},
    )

    cx = periodic_census(x, N)
    cy = periodic_census(y, N)
    bad = [
        {"n": n, "card_P_x": cx.counts[n], "card_P_y": cy.counts[n]}
        for n in range(1, N + 1)
        if cx.counts[n] > cy.counts[n]
    ]
    rep.meta["census_x"] = {str(n): cx.counts[n] for n in range(1, N + 1)}
    rep.meta["census_y"] = {str(n): cy.counts[n] for n in range(1, N + 1)}
    rep.add("periodic_counts", not bad, witness=bad or None)

    struct = structural_report(cover_y)
    rep.meta["y_cover_structure"] = struct.to_dict()
    rep.add("y_aperiodic", struct.check("aperiodic").passed,
            witness=struct.check("aperiodic").witness)
    rep.add("y_left_resolving", struct.check("left_resolving").passed,
            witness=struct.check("left_resolving").witness)

    lift = lift_hypothesis_check(cover_y, N)
    rep.meta["y_lift"] = lift.to_dict()
    rep.add("y_lift_hypothesis", lift.passed)
    return rep
