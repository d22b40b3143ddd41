"""Choosing attribute permutations that maximize shared prefixes over a tree.

Each vertex of a tree carries an attribute set; an assignment picks one
permutation per vertex and earns, on every edge, f(length of the common
prefix of the two endpoint permutations) for a non-decreasing benefit
function f with f(0) = 0.  Finding a maximum-benefit assignment is NP-hard
on binary trees, but solvable exactly in O(n^3) on paths by dynamic
programming over path segments; for binary trees an odd/even edge split
gives an assignment within half of the optimum.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .orders import Attribute, SortOrder, canonical_permutation, lcp

BenefitFn = Callable[[int], float]

BRUTE_FORCE_LIMIT = 10_000_000


class PrefixSolverError(ValueError):
    pass


class NotAPathError(PrefixSolverError):
    pass


class NotABinaryTreeError(PrefixSolverError):
    pass


class InvalidAssignmentError(PrefixSolverError):
    pass


class TooLargeError(PrefixSolverError):
    pass


def identity_benefit(length: int) -> float:
    return float(length)


def table_benefit(values: Sequence[float]) -> BenefitFn:
    """Benefit function from a lookup table; the last entry extends to the right."""
    if not values or values[0] != 0:
        raise PrefixSolverError("benefit table must start with f(0)=0")

    def f(length: int) -> float:
        if length <= 0:
            return 0.0
        return float(values[min(length, len(values) - 1)])

    return f


@dataclass(frozen=True)
class PrefixInstance:
    """A tree of attribute sets with a shared benefit function.

    Vertices are indexed 0..n-1; edges must form a tree (connected, acyclic).
    For rooted interpretations (the tree approximation) vertex 0 is the root.
    """

    sets: tuple[frozenset, ...]
    edges: tuple[tuple[int, int], ...]
    benefit_fn: BenefitFn = identity_benefit

    def __post_init__(self) -> None:
        n = len(self.sets)
        if n == 0:
            raise PrefixSolverError("instance needs at least one vertex")
        if len(self.edges) != n - 1:
            raise PrefixSolverError("edge count must be n-1 for a tree")
        parent = list(range(n))

        def find(x: int) -> int:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for u, v in self.edges:
            if not (0 <= u < n and 0 <= v < n):
                raise PrefixSolverError(f"edge ({u},{v}) out of range")
            ru, rv = find(u), find(v)
            if ru == rv:
                raise PrefixSolverError(f"edge ({u},{v}) creates a cycle")
            parent[ru] = rv
        if self.benefit_fn(0) != 0:
            raise PrefixSolverError("benefit function must have f(0)=0")

    @property
    def n(self) -> int:
        return len(self.sets)

    def is_path(self) -> bool:
        """True when the edges are exactly {(i, i+1)} in vertex-index order."""
        expected = {(i, i + 1) for i in range(self.n - 1)}
        return {tuple(sorted(e)) for e in self.edges} == expected


@dataclass(frozen=True)
class Assignment:
    permutations: tuple[SortOrder, ...]
    benefit: float


def benefit(inst: PrefixInstance, asg: Assignment) -> float:
    """Recompute the benefit of an assignment from scratch."""
    if len(asg.permutations) != inst.n:
        raise InvalidAssignmentError("assignment must cover every vertex")
    for i, perm in enumerate(asg.permutations):
        if perm.attr_set != inst.sets[i]:
            raise InvalidAssignmentError(
                f"vertex {i}: permutation {perm} does not cover set "
                f"{sorted(str(a) for a in inst.sets[i])}"
            )
    return sum(
        inst.benefit_fn(len(lcp(asg.permutations[u], asg.permutations[v])))
        for u, v in inst.edges
    )


def solve_path(inst: PrefixInstance) -> Assignment:
    """Optimal permutations for a path, by segment dynamic programming.

    For a segment (i, j) the optimum equals the best split
    OPT(i,k) + OPT(k+1,j) plus f(#attributes common to all of i..j); the
    common attributes become a shared prefix of every permutation in the
    segment.  Ties pick the smallest split point, and shared prefixes use the
    canonical permutation, so reconstruction is unique.
    """
    if not inst.is_path():
        raise NotAPathError("vertices must form a path in index order")
    n = inst.n
    f = inst.benefit_fn

    # commons[i][j]: attributes shared by every vertex of segment (i, j)
    commons: list[list[frozenset]] = [[frozenset()] * n for _ in range(n)]
    for i in range(n):
        commons[i][i] = inst.sets[i]
        for j in range(i + 1, n):
            commons[i][j] = commons[i][j - 1] & inst.sets[j]

    best = [[0.0] * n for _ in range(n)]
    split = [[0] * n for _ in range(n)]
    for length in range(1, n):
        for i in range(n - length):
            j = i + length
            best_k, best_val = i, -math.inf
            for k in range(i, j):
                val = best[i][k] + best[k + 1][j]
                if val > best_val:
                    best_k, best_val = k, val
            best[i][j] = best_val + f(len(commons[i][j]))
            split[i][j] = best_k

    perms: list[list[Attribute]] = [[] for _ in range(n)]

    def reconstruct(i: int, j: int, removed: frozenset) -> None:
        shared = commons[i][j] - removed
        prefix = canonical_permutation(shared)
        for v in range(i, j + 1):
            perms[v].extend(prefix.attrs)
        if i == j:
            return
        k = split[i][j]
        reconstruct(i, k, removed | commons[i][j])
        reconstruct(k + 1, j, removed | commons[i][j])

    reconstruct(0, n - 1, frozenset())
    asg = Assignment(tuple(SortOrder(tuple(p)) for p in perms), best[0][n - 1])
    achieved = benefit(inst, asg)
    if not math.isclose(achieved, asg.benefit, rel_tol=1e-9, abs_tol=1e-9):
        raise AssertionError(
            f"reconstruction benefit {achieved} != DP benefit {asg.benefit}"
        )
    return asg


def _rooted(inst: PrefixInstance, root: int) -> tuple[list[int], list[list[int]]]:
    """Depths and children lists for the tree rooted at `root` (BFS order)."""
    n = inst.n
    adjacency: list[list[int]] = [[] for _ in range(n)]
    for u, v in inst.edges:
        adjacency[u].append(v)
        adjacency[v].append(u)
    depth = [-1] * n
    children: list[list[int]] = [[] for _ in range(n)]
    depth[root] = 0
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v in sorted(adjacency[u]):
            if depth[v] == -1:
                depth[v] = depth[u] + 1
                children[u].append(v)
                queue.append(v)
    return depth, children


def solve_tree_half_approx(inst: PrefixInstance, root: int = 0) -> Assignment:
    """Assignment with benefit at least half the optimum, for binary trees.

    Edges are split by the depth parity of their lower endpoint (the root has
    depth 0, which counts as even).  Each class decomposes into vertex-
    disjoint paths of at most three vertices (single edges and
    child-parent-child cherries), each solved exactly with solve_path; the
    class whose paths earn more in total wins (ties prefer the even class),
    and vertices the winning class leaves uncovered get the canonical
    permutation.
    """
    depth, children = _rooted(inst, root)
    if any(len(c) > 2 for c in children):
        raise NotABinaryTreeError("a vertex has more than two children")

    class_edges: dict[str, list[tuple[int, int]]] = {"odd": [], "even": []}
    for u, v in inst.edges:
        child = v if depth[v] > depth[u] else u
        class_edges["odd" if depth[child] % 2 == 1 else "even"].append(tuple(sorted((u, v))))

    def solve_class(edges: list[tuple[int, int]]) -> tuple[float, dict[int, SortOrder]]:
        # Components of the class are paths: walk each from an endpoint.
        neighbors: dict[int, list[int]] = {}
        for u, v in edges:
            neighbors.setdefault(u, []).append(v)
            neighbors.setdefault(v, []).append(u)
        total = 0.0
        chosen: dict[int, SortOrder] = {}
        seen: set[int] = set()
        for start in sorted(neighbors):
            if start in seen or len(neighbors[start]) != 1:
                continue
            path = [start]
            seen.add(start)
            while True:
                nxt = [w for w in neighbors[path[-1]] if w not in seen]
                if not nxt:
                    break
                path.append(nxt[0])
                seen.add(nxt[0])
            sub = PrefixInstance(
                tuple(inst.sets[v] for v in path),
                tuple((i, i + 1) for i in range(len(path) - 1)),
                inst.benefit_fn,
            )
            solved = solve_path(sub)
            total += solved.benefit
            for idx, v in enumerate(path):
                chosen[v] = solved.permutations[idx]
        return total, chosen

    odd_total, odd_perms = solve_class(class_edges["odd"])
    even_total, even_perms = solve_class(class_edges["even"])
    winner = odd_perms if odd_total > even_total else even_perms

    perms = tuple(
        winner.get(v, canonical_permutation(inst.sets[v])) for v in range(inst.n)
    )
    asg = Assignment(perms, 0.0)
    return Assignment(perms, benefit(inst, asg))


def brute_force(inst: PrefixInstance) -> Assignment:
    """Exhaustive maximum over all permutation tuples (test oracle).

    Guarded by the product of factorials; ties resolve to the
    lexicographically least permutation tuple because candidates are
    enumerated in lexicographic order and only strict improvements win.
    """
    size = 1
    for s in inst.sets:
        size *= math.factorial(len(s))
        if size > BRUTE_FORCE_LIMIT:
            raise TooLargeError(f"search space exceeds {BRUTE_FORCE_LIMIT}")

    per_vertex = [
        [SortOrder(p) for p in itertools.permutations(sorted(s, key=lambda a: a.sort_key))]
        for s in inst.sets
    ]
    best_perms: tuple[SortOrder, ...] | None = None
    best_val = -math.inf
    for combo in itertools.product(*per_vertex):
        val = sum(
            inst.benefit_fn(len(lcp(combo[u], combo[v]))) for u, v in inst.edges
        )
        if val > best_val:
            best_val = val
            best_perms = combo
    assert best_perms is not None
    return Assignment(best_perms, best_val)
