"""Regular-vine copula models: structure selection, fitting and sampling.

The structure is chosen greedily, tree by tree: tree 1 is a maximum spanning
tree over the columns weighted by |Kendall tau|, and each later tree is a
maximum spanning tree over the previous tree's edges (joinable only when they
share a node, which is the proximity condition), weighted by the |tau| of the
conditional pseudo-observations produced by the previous tree's fitted
h-functions. Ties break lexicographically on the conditioned pair so refits
are bit-for-bit reproducible.

Sampling inverts the Rosenblatt transform: variables are generated in an
order derived from the top of the vine, each one by pulling an independent
uniform back through the chain of conditional CDFs its edges define.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .copulas import (
    DEFAULT_FAMILIES,
    BivariateCopula,
    fit_pair_copula,
    kendall_tau,
)
from .dataset import ColumnSchema, DataTable
from .errors import DegenerateInputError, SchemaViolation
from .marginals import (
    KIND_CONTINUOUS,
    EmpiricalMarginal,
    fit_table_marginals,
    pseudo_observations,
)


@dataclass(eq=False)
class VineEdge:
    """One pair-copula edge: conditioned pair, conditioning set, fitted copula."""

    conditioned: tuple[int, int]
    cond_set: frozenset[int]
    copula: BivariateCopula | None = None
    tau: float = 0.0
    # graph endpoints in the previous tree: variable ids (tree 1) or edges
    children: tuple = ()

    @property
    def union(self) -> frozenset[int]:
        return self.cond_set | set(self.conditioned)

    def sort_key(self):
        return (self.conditioned, tuple(sorted(self.cond_set)))


@dataclass(frozen=True)
class VineStructure:
    """Nested trees of conditioned pairs and conditioning sets."""

    d: int
    trees: tuple[tuple[tuple[tuple[int, int], frozenset[int]], ...], ...]

    def validate(self) -> None:
        """Check tree sizes, tree-1 spanning, and the proximity condition."""
        if len(self.trees) != self.d - 1:
            raise SchemaViolation(f"expected {self.d - 1} trees, found {len(self.trees)}")
        for t, tree in enumerate(self.trees, start=1):
            if len(tree) != self.d - t:
                raise SchemaViolation(f"tree {t} must have {self.d - t} edges")
        # tree 1 spans all variables without cycles (n nodes, n-1 edges, connected)
        parent = list(range(self.d))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for (a, b), cond in self.trees[0]:
            if cond:
                raise SchemaViolation("tree 1 edges must have empty conditioning sets")
            ra, rb = find(a), find(b)
            if ra == rb:
                raise SchemaViolation("tree 1 contains a cycle")
            parent[ra] = rb
        if len({find(i) for i in range(self.d)}) != 1:
            raise SchemaViolation("tree 1 does not span all variables")
        # proximity: each deeper edge merges exactly two previous-tree edges
        for t in range(1, len(self.trees)):
            prev_unions = [set(pair) | set(cond) for pair, cond in self.trees[t - 1]]
            for pair, cond in self.trees[t]:
                union = set(pair) | set(cond)
                subsets = [u for u in prev_unions if u <= union]
                if len(subsets) != 2:
                    raise SchemaViolation(
                        f"edge {pair} | {sorted(cond)} violates the proximity condition"
                    )
                if subsets[0] | subsets[1] != union or subsets[0] & subsets[1] != set(cond):
                    raise SchemaViolation(
                        f"edge {pair} | {sorted(cond)} is not a valid merge of tree "
                        f"{t} edges"
                    )


@dataclass
class VineModel:
    """Fitted vine: structure plus pair copulas, optionally with marginals."""

    d: int
    trees: list[list[VineEdge]]
    column_names: tuple[str, ...] | None = None
    marginals: dict[str, EmpiricalMarginal] | None = None
    schema: tuple[ColumnSchema, ...] | None = None
    _plan: tuple = field(default=None, repr=False, compare=False)

    @property
    def structure(self) -> VineStructure:
        return VineStructure(
            d=self.d,
            trees=tuple(
                tuple((e.conditioned, e.cond_set) for e in tree) for tree in self.trees
            ),
        )

    @property
    def pair_copulas(self) -> list[BivariateCopula]:
        return [e.copula for tree in self.trees for e in tree]

    def to_json(self) -> str:
        doc = {
            "d": self.d,
            "trees": [
                [
                    {
                        "pair": list(e.conditioned),
                        "given": sorted(e.cond_set),
                        "tau": e.tau,
                        "copula": e.copula.to_dict(),
                    }
                    for e in tree
                ]
                for tree in self.trees
            ],
            "columns": list(self.column_names) if self.column_names else None,
            "marginals": (
                {name: m.to_dict() for name, m in self.marginals.items()}
                if self.marginals
                else None
            ),
            "schema": (
                [
                    {
                        "name": c.name,
                        "kind": c.kind,
                        "categories": list(c.categories),
                        "lower_bound": c.lower_bound,
                        "log_transform": c.log_transform,
                        "stage": c.stage,
                        "stage_order": c.stage_order,
                    }
                    for c in self.schema
                ]
                if self.schema
                else None
            ),
        }
        return json.dumps(doc, indent=2)

    @staticmethod
    def from_json(text: str) -> "VineModel":
        doc = json.loads(text)
        trees: list[list[VineEdge]] = []
        for tree_doc in doc["trees"]:
            tree = [
                VineEdge(
                    conditioned=tuple(e["pair"]),
                    cond_set=frozenset(e["given"]),
                    copula=BivariateCopula.from_dict(e["copula"]),
                    tau=float(e["tau"]),
                )
                for e in tree_doc
            ]
            trees.append(tree)
        _relink_children(trees)
        marginals = None
        if doc.get("marginals"):
            marginals = {
                name: EmpiricalMarginal.from_dict(m)
                for name, m in doc["marginals"].items()
            }
        schema = None
        if doc.get("schema"):
            schema = tuple(
                ColumnSchema(
                    name=c["name"],
                    kind=c["kind"],
                    categories=tuple(c["categories"]),
                    lower_bound=c["lower_bound"],
                    log_transform=c["log_transform"],
                    stage=c["stage"],
                    stage_order=c["stage_order"],
                )
                for c in doc["schema"]
            )
        return VineModel(
            d=int(doc["d"]),
            trees=trees,
            column_names=tuple(doc["columns"]) if doc.get("columns") else None,
            marginals=marginals,
            schema=schema,
        )


def _relink_children(trees: list[list[VineEdge]]) -> None:
    """Rebuild child references from conditioning sets after deserialization."""
    for edge in trees[0]:
        edge.children = edge.conditioned
    for t in range(1, len(trees)):
        for edge in trees[t]:
            union = edge.union
            kids = tuple(e for e in trees[t - 1] if e.union <= union)
            if len(kids) != 2:
                raise SchemaViolation("serialized vine violates the proximity condition")
            edge.children = kids


def _prim_mst(nodes, candidates):
    """Maximum spanning tree by Prim's algorithm with lexicographic tie-break.

    ``candidates`` maps an unordered node-index pair to (weight, tie_key,
    payload); higher weight wins, lower tie_key breaks ties.
    """
    n = len(nodes)
    in_tree = {0}
    chosen = []
    while len(in_tree) < n:
        best = None
        for (i, j), (weight, key, payload) in candidates.items():
            if (i in in_tree) != (j in in_tree):
                rank = (-weight, key)
                if best is None or rank < best[0]:
                    best = (rank, (i, j), payload)
        if best is None:
            raise DegenerateInputError("candidate graph is disconnected")
        chosen.append(best[2])
        in_tree.update(best[1])
    return chosen


def _edge_input(edge: VineEdge, var: int, arrays) -> np.ndarray:
    """Pseudo-observations F(var | union - var) stored while fitting ``edge``."""
    first, second = arrays[id(edge)]
    return first if var == edge.conditioned[0] else second


def _build_trees(grid: np.ndarray, families) -> list[list[VineEdge]]:
    n, d = grid.shape
    if d < 2:
        raise DegenerateInputError("a vine needs at least 2 columns")
    if n < 10:
        raise DegenerateInputError("vine fitting needs at least 10 rows")
    if np.any(grid <= 0.0) or np.any(grid >= 1.0):
        raise ValueError("grid values must lie strictly inside (0, 1)")

    arrays: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    trees: list[list[VineEdge]] = []

    # tree 1: maximum spanning tree over columns, weight |tau|
    candidates = {}
    for i in range(d):
        for j in range(i + 1, d):
            tau = kendall_tau(grid[:, i], grid[:, j])
            edge = VineEdge(conditioned=(i, j), cond_set=frozenset(), tau=tau,
                            children=(i, j))
            candidates[(i, j)] = (abs(tau), edge.sort_key(), edge)
    tree1 = sorted(_prim_mst(list(range(d)), candidates), key=VineEdge.sort_key)
    for edge in tree1:
        i, j = edge.conditioned
        edge.copula = fit_pair_copula(grid[:, i], grid[:, j], families)
        arrays[id(edge)] = (
            edge.copula.h1(grid[:, i], grid[:, j]),
            edge.copula.h2(grid[:, j], grid[:, i]),
        )
    trees.append(tree1)

    # deeper trees: nodes are previous edges, joinable when they share a node
    for level in range(2, d):
        prev = trees[-1]
        endpoint_sets = [set(map(id, e.children)) if level > 2 else set(e.children)
                         for e in prev]
        candidates = {}
        for a_idx in range(len(prev)):
            for b_idx in range(a_idx + 1, len(prev)):
                e1, e2 = prev[a_idx], prev[b_idx]
                if not (endpoint_sets[a_idx] & endpoint_sets[b_idx]):
                    continue
                union1, union2 = e1.union, e2.union
                if union1 == union2:
                    continue
                pair = tuple(sorted(union1 ^ union2))
                cond = frozenset(union1 & union2)
                x, y = pair
                src_x = e1 if x in union1 else e2
                src_y = e2 if src_x is e1 else e1
                arr_x = _edge_input(src_x, x, arrays)
                arr_y = _edge_input(src_y, y, arrays)
                tau = kendall_tau(arr_x, arr_y)
                edge = VineEdge(
                    conditioned=pair, cond_set=cond, tau=tau, children=(src_x, src_y)
                )
                candidates[(a_idx, b_idx)] = (
                    abs(tau),
                    edge.sort_key(),
                    (edge, arr_x, arr_y),
                )
        chosen = _prim_mst(prev, candidates)
        tree = []
        for edge, arr_x, arr_y in sorted(chosen, key=lambda c: c[0].sort_key()):
            edge.copula = fit_pair_copula(arr_x, arr_y, families)
            arrays[id(edge)] = (
                edge.copula.h1(arr_x, arr_y),
                edge.copula.h2(arr_y, arr_x),
            )
            tree.append(edge)
        trees.append(tree)
    return trees


def select_structure(grid: np.ndarray, families=DEFAULT_FAMILIES) -> VineStructure:
    """Greedy structure selection on a uniform grid (pair copulas discarded)."""
    trees = _build_trees(np.asarray(grid, dtype=np.float64), families)
    return VineModel(d=grid.shape[1], trees=trees).structure


def fit_vine(grid: np.ndarray, families=DEFAULT_FAMILIES) -> VineModel:
    """Fit structure and pair copulas to a uniform grid."""
    grid = np.asarray(grid, dtype=np.float64)
    trees = _build_trees(grid, families)
    return VineModel(d=grid.shape[1], trees=trees)


def fit_baseline_vine(
    table: DataTable,
    columns=None,
    families=DEFAULT_FAMILIES,
    seed: int = 0,
) -> VineModel:
    """Fit marginals plus vine to a table block (complete cases required)."""
    names = list(columns) if columns is not None else list(table.column_names)
    grid = pseudo_observations(table, names, seed)
    model = fit_vine(grid, families)
    model.column_names = tuple(names)
    model.marginals = fit_table_marginals(table, names)
    model.schema = tuple(table.column_schema(n) for n in names)
    return model


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def _sampling_plan(model: VineModel):
    """Variable order and per-variable inversion chains for the sampler.

    Working from the single top-tree edge downward, repeatedly peel off one
    conditioned variable together with its chain of edges (one per tree); the
    reversed peeling order, prefixed with the single unpeeled variable, is an
    order in which every variable's conditional CDF given its predecessors is
    reachable through fitted h-functions.
    """
    if model._plan is not None:
        return model._plan
    d = model.d
    remaining = [set(tree) for tree in model.trees]
    chains: dict[int, list[VineEdge]] = {}
    deletion: list[int] = []
    for level in range(d - 1, 0, -1):
        (top,) = remaining[level - 1]
        var = top.conditioned[0]
        cur = top
        chain = []
        for t in range(level, 0, -1):
            chain.append(cur)
            remaining[t - 1].remove(cur)
            if t > 1:
                c1, c2 = cur.children
                cur = c1 if var in c1.conditioned else c2
                assert var in cur.conditioned
        chains[var] = chain
        deletion.append(var)
    (first,) = set(range(d)) - set(deletion)
    order = [first] + deletion[::-1]

    index: dict[tuple[int, frozenset[int]], tuple[VineEdge, int]] = {}
    for tree in model.trees:
        for e in tree:
            a, b = e.conditioned
            index[(a, e.cond_set | {b})] = (e, 0)
            index[(b, e.cond_set | {a})] = (e, 1)

    model._plan = (order, chains, index)
    return model._plan


def _conditional(var, cond_set, u_cols, memo, index):
    if not cond_set:
        return u_cols[var]
    key = (var, cond_set)
    if key in memo:
        return memo[key]
    edge, side = index[key]
    a, b = edge.conditioned
    fa = _conditional(a, edge.cond_set, u_cols, memo, index)
    fb = _conditional(b, edge.cond_set, u_cols, memo, index)
    val = edge.copula.h1(fa, fb) if side == 0 else edge.copula.h2(fb, fa)
    memo[key] = val
    return val


def sample_vine(model: VineModel, n: int, seed: int) -> np.ndarray:
    """Draw n dependent uniform rows by inverse-Rosenblatt traversal."""
    if n < 1:
        raise ValueError("n must be at least 1")
    order, chains, index = _sampling_plan(model)
    rng = np.random.default_rng(seed)
    w = np.clip(rng.uniform(size=(n, model.d)), 1e-12, 1.0 - 1e-12)
    u_cols: dict[int, np.ndarray] = {order[0]: w[:, order[0]].copy()}
    memo: dict = {}
    for var in order[1:]:
        p = w[:, var]
        for edge in chains[var]:
            a, b = edge.conditioned
            partner = b if var == a else a
            cond_val = _conditional(partner, edge.cond_set, u_cols, memo, index)
            p = edge.copula.h1_inv(p, cond_val) if var == a else edge.copula.h2_inv(p, cond_val)
        u_cols[var] = p
    return np.column_stack([u_cols[j] for j in range(model.d)])


def generate_baseline(model: VineModel, n: int, seed: int) -> DataTable:
    """Sample the vine and map uniforms back through the fitted marginals."""
    if model.marginals is None or model.schema is None:
        raise ValueError("model was fitted without marginals; use fit_baseline_vine")
    grid = sample_vine(model, n, seed)
    columns = {}
    for j, name in enumerate(model.column_names):
        marginal = model.marginals[name]
        values = marginal.inverse(grid[:, j])
        if marginal.kind == KIND_CONTINUOUS:
            columns[name] = np.asarray(values, dtype=np.float64)
        else:
            columns[name] = np.asarray(values, dtype=np.int64)
    return DataTable(model.schema, columns)
