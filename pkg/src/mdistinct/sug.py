"""The adversary: sensitive-attribute update graphs (SUGs), pruning to the
feasible subgraph, exact path mass and per-version disclosure risks.

All arithmetic is exact (fractions.Fraction); risks come out as the golden
rationals with no tolerance.  Risk evaluation uses memoized forward/backward
masses, so path enumeration is only needed when paths themselves are wanted.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .errors import CapExceededError, InconsistentHistoryError, ValidationError
from .model import ExternalKnowledgeTable, PublishedRelease, TableSchema, region_contains
from .updates import UpdateModel

__all__ = [
    "SugNode",
    "Sug",
    "RiskReport",
    "build_sug",
    "prune",
    "enumerate_paths",
    "disclosure_risks",
    "risks_by_joint_oracle",
    "attack_release_sequence",
]

PATH_ENUMERATION_CAP = 10_000_000
JOINT_ORACLE_CAP = 1_000_000


@dataclass(frozen=True)
class SugNode:
    layer: int  # 1-based
    value: str
    weight: Fraction


@dataclass(frozen=True)
class Sug:
    """Layered weighted digraph; edges only between consecutive layers.

    out[i][u] lists (v, weight) successors of node u of layer i in layer
    i+1; node order within a layer is first appearance in the candidate
    multiset, which keeps reruns byte-identical.
    """

    layers: tuple[tuple[SugNode, ...], ...]
    out: tuple[tuple[tuple[tuple[int, Fraction], ...], ...], ...]

    @property
    def depth(self) -> int:
        return len(self.layers)

    def node_count(self) -> int:
        return sum(len(layer) for layer in self.layers)

    def edge_count(self) -> int:
        return sum(len(adj) for gap in self.out for adj in gap)

    def layer_values(self, i: int) -> tuple[str, ...]:
        """Values of layer i (1-based)."""
        return tuple(n.value for n in self.layers[i - 1])


def _collapse(values: Sequence[str]) -> tuple[list[str], list[Fraction]]:
    """Distinct values in first-appearance order with multiplicity shares."""
    order: list[str] = []
    counts: dict[str, int] = {}
    for v in values:
        if v not in counts:
            order.append(v)
        counts[v] = counts.get(v, 0) + 1
    total = len(values)
    return order, [Fraction(counts[v], total) for v in order]


def build_sug(candidates: Sequence[Sequence[str]],
              model: UpdateModel,
              priors: Sequence[Mapping[str, Fraction]] | None = None) -> Sug:
    """Build the SUG for one record's candidate sensitive sets.

    Duplicate values in a candidate multiset collapse to one node whose
    prior is the multiplicity share; explicit per-layer priors override.
    """
    if not candidates:
        raise ValidationError("empty candidate history")
    layers: list[tuple[SugNode, ...]] = []
    for i, cand in enumerate(candidates):
        if not cand:
            raise ValidationError(f"layer {i + 1}: empty candidate set")
        for v in cand:
            model.cus_of(v)  # raises on unknown values
        order, shares = _collapse(cand)
        if priors is not None:
            shares = [priors[i][v] for v in order]
        layers.append(tuple(SugNode(i + 1, v, w)
                            for v, w in zip(order, shares)))
    out: list[tuple[tuple[tuple[int, Fraction], ...], ...]] = []
    for i in range(len(layers) - 1):
        nxt = layers[i + 1]
        gap = []
        for node in layers[i]:
            adj = []
            for k, succ in enumerate(nxt):
                p = model.prob(node.value, succ.value)
                if p > 0:
                    adj.append((k, p))
            gap.append(tuple(adj))
        out.append(tuple(gap))
    return Sug(tuple(layers), tuple(out))


def prune(sug: Sug) -> Sug:
    """Iterated dead-end removal to a fixed point.

    First layer loses nodes with no successor, last layer nodes with no
    predecessor, interior nodes either; a layer running empty means the
    published history has no feasible explanation.
    """
    depth = sug.depth
    alive = [[True] * len(layer) for layer in sug.layers]
    if depth == 1:
        return sug

    def live_out(i: int, u: int) -> int:
        return sum(1 for v, _ in sug.out[i][u] if alive[i + 1][v])

    def live_in(i: int, v: int) -> int:
        return sum(1 for u in range(len(sug.layers[i - 1]))
                   if alive[i - 1][u]
                   and any(k == v for k, _ in sug.out[i - 1][u]))

    changed = True
    while changed:
        changed = False
        for i in range(depth):
            for u in range(len(sug.layers[i])):
                if not alive[i][u]:
                    continue
                dead = False
                if i < depth - 1 and live_out(i, u) == 0:
                    dead = True
                if i > 0 and live_in(i, u) == 0:
                    dead = True
                if dead:
                    alive[i][u] = False
                    changed = True
        for i, layer_alive in enumerate(alive):
            if not any(layer_alive):
                raise InconsistentHistoryError(
                    f"layer {i + 1} has no feasible node")

    keep: list[list[int]] = [[u for u, ok in enumerate(layer) if ok]
                             for layer in alive]
    remap = [{u: k for k, u in enumerate(layer)} for layer in keep]
    layers = tuple(tuple(sug.layers[i][u] for u in keep[i])
                   for i in range(depth))
    out = tuple(
        tuple(tuple((remap[i + 1][v], w) for v, w in sug.out[i][u]
                    if alive[i + 1][v])
              for u in keep[i])
        for i in range(depth - 1))
    return Sug(layers, out)


def _count_paths(fs: Sug) -> int:
    counts = [1] * len(fs.layers[-1])
    for i in range(fs.depth - 2, -1, -1):
        counts = [sum(counts[v] for v, _ in fs.out[i][u])
                  for u in range(len(fs.layers[i]))]
    return sum(counts)


def enumerate_paths(fs: Sug, cap: int = PATH_ENUMERATION_CAP,
                    ) -> list[tuple[tuple[str, ...], Fraction]]:
    """All first-to-last-layer paths with their exact weights.

    A path's weight is the product of every node weight and every edge
    weight along it.  Refuses to materialize more than `cap` paths.
    """
    total = _count_paths(fs)
    if total > cap:
        raise CapExceededError(f"path explosion: {total} paths exceed cap {cap}")
    paths: list[tuple[tuple[str, ...], Fraction]] = []
    depth = fs.depth

    def walk(i: int, u: int, values: list[str], weight: Fraction) -> None:
        node = fs.layers[i][u]
        values.append(node.value)
        weight *= node.weight
        if i == depth - 1:
            paths.append((tuple(values), weight))
        else:
            for v, w in fs.out[i][u]:
                walk(i + 1, v, values, weight * w)
        values.pop()

    for u in range(len(fs.layers[0])):
        walk(0, u, [], Fraction(1))
    return paths


@dataclass(frozen=True)
class RiskReport:
    record_id: str
    versions: tuple[int, ...]       # release index per layer
    risks: tuple[Fraction, ...]
    path_count: int
    consistent: bool                # every actual value had a surviving node

    @property
    def max_risk(self) -> Fraction:
        return max(self.risks)


def _masses(fs: Sug) -> tuple[list[list[Fraction]], list[list[Fraction]], Fraction]:
    """Forward/backward path mass per node and the total path mass."""
    depth = fs.depth
    fwd: list[list[Fraction]] = [[n.weight for n in fs.layers[0]]]
    for i in range(1, depth):
        prev = fwd[-1]
        cur = [Fraction(0)] * len(fs.layers[i])
        for u in range(len(fs.layers[i - 1])):
            base = prev[u]
            if base:
                for v, w in fs.out[i - 1][u]:
                    cur[v] += base * w
        fwd.append([c * n.weight for c, n in zip(cur, fs.layers[i])])
    bwd: list[list[Fraction]] = [[] for _ in range(depth)]
    bwd[depth - 1] = [Fraction(1)] * len(fs.layers[depth - 1])
    for i in range(depth - 2, -1, -1):
        nxt = bwd[i + 1]
        bwd[i] = [
            sum((w * fs.layers[i + 1][v].weight * nxt[v]
                 for v, w in fs.out[i][u]), Fraction(0))
            for u in range(len(fs.layers[i]))
        ]
    total = sum(fwd[depth - 1], Fraction(0))
    return fwd, bwd, total


def disclosure_risks(fs: Sug, actual: Sequence[str],
                     record_id: str = "",
                     versions: Sequence[int] | None = None) -> RiskReport:
    """Per-version risk: mass of feasible paths crossing the actual value's
    node over the total path mass."""
    if fs.depth == 0 or not fs.layers[0]:
        raise ValidationError("empty graph")
    if len(actual) != fs.depth:
        raise ValidationError("one actual value per layer required")
    fwd, bwd, total = _masses(fs)
    if total == 0:
        raise InconsistentHistoryError("no feasible path")
    risks: list[Fraction] = []
    consistent = True
    for i, value in enumerate(actual):
        idx = next((k for k, n in enumerate(fs.layers[i]) if n.value == value),
                   None)
        if idx is None:
            risks.append(Fraction(0))
            consistent = False
        else:
            risks.append(fwd[i][idx] * bwd[i][idx] / total)
    if versions is None:
        versions = range(1, fs.depth + 1)
    return RiskReport(record_id, tuple(versions), tuple(risks),
                      _count_paths(fs), consistent)


def risks_by_joint_oracle(candidates: Sequence[Sequence[str]],
                          model: UpdateModel,
                          actual: Sequence[str],
                          priors: Sequence[Mapping[str, Fraction]] | None = None,
                          cap: int = JOINT_ORACLE_CAP,
                          record_id: str = "",
                          versions: Sequence[int] | None = None) -> RiskReport:
    """Independent oracle: enumerate every joint value assignment outright.

    Must agree exactly with disclosure_risks(prune(build_sug(...))); kept
    as the cross-check for the graph computation.
    """
    layer_data = []
    size = 1
    for i, cand in enumerate(candidates):
        order, shares = _collapse(cand)
        if priors is not None:
            shares = [priors[i][v] for v in order]
        layer_data.append(list(zip(order, shares)))
        size *= len(order)
    if size > cap:
        raise CapExceededError(f"joint enumeration size {size} exceeds cap {cap}")
    total = Fraction(0)
    mass: list[dict[str, Fraction]] = [dict() for _ in layer_data]
    feasible = 0
    for combo in itertools.product(*layer_data):
        weight = Fraction(1)
        for (v, share) in combo:
            weight *= share
        for (a, _), (b, _) in zip(combo, combo[1:]):
            p = model.prob(a, b)
            if p == 0:
                weight = Fraction(0)
                break
            weight *= p
        if weight == 0:
            continue
        feasible += 1
        total += weight
        for i, (v, _) in enumerate(combo):
            mass[i][v] = mass[i].get(v, Fraction(0)) + weight
    if total == 0:
        raise InconsistentHistoryError("no feasible joint assignment")
    risks = []
    consistent = True
    for i, value in enumerate(actual):
        m = mass[i].get(value)
        if m is None:
            risks.append(Fraction(0))
            consistent = False
        else:
            risks.append(m / total)
    if versions is None:
        versions = range(1, len(candidates) + 1)
    return RiskReport(record_id, tuple(versions), tuple(risks), feasible,
                      consistent)


def attack_release_sequence(releases: Sequence[PublishedRelease],
                            et: Sequence[ExternalKnowledgeTable] | None,
                            model: UpdateModel,
                            histories: Mapping[str, Mapping[int, str]],
                            schema: TableSchema | None = None,
                            ) -> list[RiskReport]:
    """Replay the attack over a full release sequence.

    For each record id, its candidate sets are read off the groups that
    contain it (counterfeit members included - the adversary cannot tell),
    then build -> prune -> risks.  `histories` supplies the actual value per
    (id, release index); `et` enables the exact-QI integrity check.
    """
    ordered = sorted(releases, key=lambda r: r.release_index)
    et_by_index = {t.release_index: t for t in (et or ())}
    membership: dict[str, list[tuple[int, tuple[str, ...]]]] = {}
    for rel in ordered:
        for rid, group in sorted(rel.group_of().items()):
            if schema is not None and rel.release_index in et_by_index:
                rows = et_by_index[rel.release_index].rows
                if rid in rows and not region_contains(schema, group.region,
                                                       rows[rid]):
                    raise ValidationError(
                        f"release {rel.release_index}: record {rid!r} falls "
                        f"outside its group region")
            membership.setdefault(rid, []).append(
                (rel.release_index, group.values))
    reports: list[RiskReport] = []
    for rid in sorted(membership):
        appearances = membership[rid]
        versions = tuple(i for i, _ in appearances)
        candidates = [values for _, values in appearances]
        try:
            actual = [histories[rid][i] for i in versions]
        except KeyError:
            raise ValidationError(f"no actual sensitive value on file for "
                                  f"{rid!r} at one of releases {versions}")
        fs = prune(build_sug(candidates, model))
        reports.append(disclosure_risks(fs, actual, record_id=rid,
                                        versions=versions))
    return reports
