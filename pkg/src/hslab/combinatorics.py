"""Exact combinatorics of cluster expansions.

Set partitions, moment/cumulant transforms, connected-graph truncated
functions, the Penrose tree map with its escape edges, and labeled-tree
counting.  Everything here is exact integer / rational arithmetic; no
floating point enters any identity.

Vertices and ground-set elements are labeled 1..n throughout.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb, factorial

__all__ = [
    "Partition",
    "LabeledTree",
    "ConnectionRelation",
    "MomentFamily",
    "enumerate_partitions",
    "partitions_of",
    "moments_to_cumulants",
    "cumulants_to_moments",
    "combinatorial_identity_sums",
    "enumerate_trees",
    "count_trees_with_degrees",
    "connected_graphs",
    "count_connected_graphs",
    "truncated_function",
    "tree_inequality_bound",
    "penrose_map",
    "penrose_escape_edges",
    "selftest",
]

MAX_PARTITION_N = 12
MAX_GRAPH_N = 7


def _norm_edge(i, j):
    if i == j:
        raise ValueError(f"self-loop ({i},{j})")
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class Partition:
    """A set partition of {1..n} into disjoint nonempty blocks."""

    n: int
    blocks: tuple[frozenset, ...]

    def __post_init__(self):
        seen = set()
        for b in self.blocks:
            if not b:
                raise ValueError("empty block")
            if b & seen:
                raise ValueError("overlapping blocks")
            seen |= b
        if seen != set(range(1, self.n + 1)):
            raise ValueError("blocks do not cover {1..n}")

    def __len__(self):
        return len(self.blocks)


@dataclass(frozen=True)
class LabeledTree:
    """A minimally connected graph on n labeled vertices (n-1 edges)."""

    n: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        edges = tuple(sorted(_norm_edge(*e) for e in self.edges))
        object.__setattr__(self, "edges", edges)
        if len(set(edges)) != len(edges):
            raise ValueError("duplicate edge")
        if self.n >= 1 and len(edges) != self.n - 1:
            raise ValueError(f"a tree on {self.n} vertices needs {self.n - 1} edges")
        if not _is_connected(self.n, edges):
            raise ValueError("edges do not connect all vertices")

    def degrees(self):
        d = [0] * (self.n + 1)
        for i, j in self.edges:
            d[i] += 1
            d[j] += 1
        return tuple(d[1:])


@dataclass(frozen=True)
class ConnectionRelation:
    """A symmetric irreflexive relation on {1..n}, i.e. a simple graph."""

    n: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        edges = frozenset(_norm_edge(*e) for e in self.edges)
        object.__setattr__(self, "edges", edges)
        for i, j in edges:
            if not (1 <= i <= self.n and 1 <= j <= self.n):
                raise ValueError(f"edge ({i},{j}) outside 1..{self.n}")

    @classmethod
    def complete(cls, n):
        return cls(n, frozenset(itertools.combinations(range(1, n + 1), 2)))

    def connected(self, i, j):
        return _norm_edge(i, j) in self.edges

    def is_connected_graph(self):
        return _is_connected(self.n, self.edges)


def _is_connected(n, edges):
    if n <= 1:
        return True
    adj = {v: set() for v in range(1, n + 1)}
    for i, j in edges:
        adj[i].add(j)
        adj[j].add(i)
    seen = {1}
    stack = [1]
    while stack:
        for w in adj[stack.pop()]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == n


# ---------------------------------------------------------------------------
# partitions


def partitions_of(elements):
    """Yield all set partitions of `elements` as tuples of frozensets.

    Canonical order: generated by placing elements in increasing order into
    existing blocks (by block creation order) or a fresh block, which gives
    the lexicographic order of restricted-growth strings.
    """
    elems = sorted(elements)
    if not elems:
        return

    def rec(idx, blocks):
        if idx == len(elems):
            yield tuple(frozenset(b) for b in blocks)
            return
        x = elems[idx]
        for b in blocks:
            b.append(x)
            yield from rec(idx + 1, blocks)
            b.pop()
        blocks.append([x])
        yield from rec(idx + 1, blocks)
        blocks.pop()

    yield from rec(0, [])


def enumerate_partitions(n, s=None):
    """All partitions of {1..n}; restricted to exactly s blocks if s is given."""
    if not (1 <= n <= MAX_PARTITION_N):
        raise ValueError(f"n={n} outside supported range 1..{MAX_PARTITION_N}")
    if s is not None and not (1 <= s <= n):
        raise ValueError(f"s={s} outside 1..{n}")
    out = []
    for blocks in partitions_of(range(1, n + 1)):
        if s is None or len(blocks) == s:
            out.append(Partition(n, blocks))
    return out


# ---------------------------------------------------------------------------
# moment <-> cumulant transforms


class MomentFamily:
    """Exact rational values G(S) on every nonempty subset S of {1..n}."""

    def __init__(self, n, values):
        self.n = n
        self.values = {}
        for key, val in values.items():
            self.values[frozenset(key)] = Fraction(val)
        expected = 2**n - 1
        if len(self.values) != expected or frozenset() in self.values:
            raise ValueError(f"need values on all {expected} nonempty subsets of {{1..{n}}}")
        for S in self.values:
            if not S <= set(range(1, n + 1)):
                raise ValueError(f"subset {set(S)} outside ground set")

    @classmethod
    def from_function(cls, n, fn):
        vals = {}
        for r in range(1, n + 1):
            for S in itertools.combinations(range(1, n + 1), r):
                vals[frozenset(S)] = Fraction(fn(frozenset(S)))
        return cls(n, vals)

    @classmethod
    def product(cls, weights):
        """Independent case: G(S) = prod_{i in S} a_i for weights a_1..a_n."""
        a = {i + 1: Fraction(w) for i, w in enumerate(weights)}

        def fn(S):
            out = Fraction(1)
            for i in S:
                out *= a[i]
            return out

        return cls.from_function(len(weights), fn)

    def __call__(self, S):
        return self.values[frozenset(S)]

    def __eq__(self, other):
        return isinstance(other, MomentFamily) and self.n == other.n and self.values == other.values


def _partition_sum(values, S, coeff):
    """sum over partitions sigma of S of coeff(|sigma|) * prod_B values[B]."""
    total = Fraction(0)
    for blocks in partitions_of(S):
        term = coeff(len(blocks))
        for b in blocks:
            term *= values[b]
        total += term
    return total


def moments_to_cumulants(G):
    """Cumulant transform: g(S) = sum_sigma (-1)^(s-1) (s-1)! prod G(block)."""
    out = {}
    for S in G.values:
        out[S] = _partition_sum(G.values, S, lambda s: Fraction((-1) ** (s - 1) * factorial(s - 1)))
    return MomentFamily(G.n, out)


def cumulants_to_moments(g):
    """Inverse transform: G(S) = sum over partitions sigma of S of prod g(block)."""
    out = {}
    for S in g.values:
        out[S] = _partition_sum(g.values, S, lambda s: Fraction(1))
    return MomentFamily(g.n, out)


def combinatorial_identity_sums(n):
    """The two alternating partition sums that vanish for every n >= 2.

    Returns (sum_sigma (-1)^|sigma| (|sigma|-1)!,
             sum_sigma (-1)^|sigma| prod_B (|B|-1)!) over all partitions
    sigma of {1..n}, as exact rationals.
    """
    if not (2 <= n <= 10):
        raise ValueError(f"n={n} outside supported range 2..10")
    first = Fraction(0)
    second = Fraction(0)
    for blocks in partitions_of(range(1, n + 1)):
        k = len(blocks)
        sign = (-1) ** k
        first += sign * factorial(k - 1)
        prod = 1
        for b in blocks:
            prod *= factorial(len(b) - 1)
        second += sign * prod
    return first, second


# ---------------------------------------------------------------------------
# labeled trees


def enumerate_trees(n):
    """All labeled trees on {1..n}, via Prufer sequences; |result| = n^(n-2)."""
    if not (2 <= n <= 8):
        raise ValueError(f"n={n} outside supported range 2..8")
    if n == 2:
        return [LabeledTree(2, ((1, 2),))]
    trees = []
    for seq in itertools.product(range(1, n + 1), repeat=n - 2):
        trees.append(_tree_from_prufer(n, seq))
    return trees


def _tree_from_prufer(n, seq):
    deg = [1] * (n + 1)
    for v in seq:
        deg[v] += 1
    avail = [v for v in range(1, n + 1) if deg[v] == 1]
    heapq.heapify(avail)
    edges = []
    for v in seq:
        leaf = heapq.heappop(avail)
        edges.append(_norm_edge(leaf, v))
        deg[v] -= 1
        if deg[v] == 1:
            heapq.heappush(avail, v)
    u, w = heapq.heappop(avail), heapq.heappop(avail)
    edges.append(_norm_edge(u, w))
    return LabeledTree(n, tuple(edges))


def count_trees_with_degrees(degrees):
    """Number of labeled trees with vertex i having degree degrees[i-1].

    Equals (n-2)! / prod (d_i - 1)!.
    """
    n = len(degrees)
    if n < 2:
        raise ValueError("need at least 2 vertices")
    if any(d < 1 for d in degrees):
        raise ValueError("every tree vertex has degree >= 1")
    if sum(degrees) != 2 * (n - 1):
        raise ValueError(f"degree sum {sum(degrees)} != 2(n-1) = {2 * (n - 1)}")
    out = factorial(n - 2)
    for d in degrees:
        out //= factorial(d - 1)
    return out


# ---------------------------------------------------------------------------
# connected graphs, truncated functions, tree inequality


def connected_graphs(n):
    """All connected simple graphs on {1..n} as ConnectionRelations."""
    if not (1 <= n <= MAX_GRAPH_N):
        raise ValueError(f"n={n} outside supported range 1..{MAX_GRAPH_N}")
    all_pairs = list(itertools.combinations(range(1, n + 1), 2))
    out = []
    for r in range(len(all_pairs) + 1):
        for combo in itertools.combinations(all_pairs, r):
            if _is_connected(n, combo):
                out.append(ConnectionRelation(n, frozenset(combo)))
    return out


def count_connected_graphs(n):
    """|C_n| by the standard complement recursion on labeled graphs."""
    counts = {}
    for m in range(1, n + 1):
        total = 2 ** (m * (m - 1) // 2)
        disconnected = 0
        for k in range(1, m):
            disconnected += comb(m - 1, k - 1) * counts[k] * 2 ** ((m - k) * (m - k - 1) // 2)
        counts[m] = total - disconnected
    return counts[n]


def truncated_function(rel):
    """Cluster-truncated function of a connection relation.

    Sums (-1)^{#edges} over all subgraphs of `rel` that connect 1..n, which
    is the alternating connected-graph expansion of the disconnection
    indicator's cumulant.
    """
    n = rel.n
    if n > MAX_GRAPH_N:
        raise ValueError(f"n={n} beyond brute-force range {MAX_GRAPH_N}")
    if n == 1:
        return Fraction(1)
    edges = sorted(rel.edges)
    total = 0
    for r in range(n - 1, len(edges) + 1):
        for combo in itertools.combinations(edges, r):
            if _is_connected(n, combo):
                total += (-1) ** r
    return Fraction(total)


def tree_inequality_bound(rel):
    """Number of spanning trees using only edges of `rel` (the tree bound)."""
    n = rel.n
    if n > MAX_GRAPH_N:
        raise ValueError(f"n={n} beyond brute-force range {MAX_GRAPH_N}")
    if n == 1:
        return Fraction(1)
    count = 0
    for tree in enumerate_trees(n):
        if all(e in rel.edges for e in tree.edges):
            count += 1
    return Fraction(count)


def disconnection_family(rel):
    """MomentFamily S -> indicator that no two elements of S are related."""

    def fn(S):
        for i, j in itertools.combinations(sorted(S), 2):
            if rel.connected(i, j):
                return 0
        return 1

    return MomentFamily.from_function(rel.n, fn)


# ---------------------------------------------------------------------------
# Penrose partition scheme


def _penrose_generations(n, edges, root):
    """Breadth-first generations with the tie-breaking of the partition scheme.

    Each non-root vertex is attached to the earliest vertex (in the previous
    generation's ordering) adjacent to it; within a generation, vertices are
    ordered by (position of parent, vertex index).
    """
    adj = {v: set() for v in range(1, n + 1)}
    for i, j in edges:
        adj[i].add(j)
        adj[j].add(i)
    placed = {root}
    parent = {root: None}
    generations = [[root]]
    while len(placed) < n:
        prev = generations[-1]
        newcomers = []
        for pos, u in enumerate(prev):
            for w in sorted(adj[u]):
                if w not in placed:
                    placed.add(w)
                    parent[w] = u
                    newcomers.append((pos, w))
        if not newcomers:
            raise ValueError("graph is not connected")
        newcomers.sort()
        generations.append([w for _, w in newcomers])
    return generations, parent


def penrose_map(graph, root=1):
    """Deterministic map from a connected graph to one of its spanning trees."""
    n = graph.n
    if n > MAX_GRAPH_N:
        raise ValueError(f"n={n} beyond brute-force range {MAX_GRAPH_N}")
    if not graph.is_connected_graph():
        raise ValueError("penrose_map requires a connected graph")
    if n == 1:
        return LabeledTree(1, ())
    _, parent = _penrose_generations(n, graph.edges, root)
    edges = tuple(_norm_edge(v, p) for v, p in parent.items() if p is not None)
    return LabeledTree(n, edges)


def penrose_escape_edges(tree, root=1):
    """Edge set E'(T): the non-tree edges whose presence leaves the map fixed.

    These are edges within a generation, plus edges to a younger uncle
    (one generation up, positioned strictly after the actual parent).
    """
    n = tree.n
    generations, parent = _penrose_generations(n, tree.edges, root)
    depth = {}
    pos = {}
    for g, gen in enumerate(generations):
        for p, v in enumerate(gen):
            depth[v] = g
            pos[v] = p
    escape = set()
    for i, j in itertools.combinations(range(1, n + 1), 2):
        e = _norm_edge(i, j)
        if e in tree.edges:
            continue
        u, w = (i, j) if depth[i] <= depth[j] else (j, i)
        if depth[u] == depth[w]:
            escape.add(e)
        elif depth[w] == depth[u] + 1 and pos[parent[w]] < pos[u]:
            escape.add(e)
    return frozenset(escape)


# ---------------------------------------------------------------------------
# self-test table (backs the `combinatorics selftest` CLI subcommand)


def selftest(max_n=6):
    """Run the exact identity checks; returns rows (check, n, expected, got, pass)."""
    rows = []

    def add(check, n, expected, got):
        rows.append((check, n, str(expected), str(got), expected == got))

    for n in range(2, min(max_n, 7) + 1):
        add("cayley_count", n, n ** (n - 2), len(enumerate_trees(n)))
    for n in range(2, min(max_n, 7) + 1):
        total = 0
        for degs in itertools.product(range(1, n), repeat=n):
            if sum(degs) == 2 * (n - 1):
                total += count_trees_with_degrees(degs)
        add("degree_counts_sum", n, n ** (n - 2), total)
    for n in range(2, min(max_n, 10) + 1):
        s1, s2 = combinatorial_identity_sums(n)
        add("alternating_sum_1", n, Fraction(0), s1)
        add("alternating_sum_2", n, Fraction(0), s2)
    for n in range(1, min(max_n, 6) + 1):
        add("connected_graph_count", n, count_connected_graphs(n), len(connected_graphs(n)))
    for n in range(2, min(max_n, 5) + 1):
        fibers = {}
        graphs = connected_graphs(n)
        for g in graphs:
            fibers.setdefault(penrose_map(g), []).append(g)
        ok = len(graphs)
        got = 0
        for tree, members in fibers.items():
            esc = penrose_escape_edges(tree)
            expected_fiber = {frozenset(tree.edges) | frozenset(s) for r in range(len(esc) + 1) for s in itertools.combinations(esc, r)}
            if {g.edges for g in members} == expected_fiber:
                got += len(members)
        add("penrose_fiber_partition", n, ok, got)
    return rows
