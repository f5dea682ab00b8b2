"""The update algebra: CUS maps, transition models, update-set signatures,
legality / implication / intersection tests between signatures."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .errors import ValidationError

__all__ = [
    "UpdateModel",
    "USS",
    "IntersectionPlan",
    "validate_update_model",
    "uss_of",
    "is_legal_update_instance",
    "implies",
    "intersect",
    "cus_disjointness",
]

# Exhaustive bijection search is exact up to this many signature entries;
# larger signatures fall back to feasibility-preserving greedy matching.
EXACT_BIJECTION_LIMIT = 8


@dataclass(frozen=True)
class UpdateModel:
    """Per-value candidate update sets and transition probabilities.

    cus(a) is the set of values a can become with non-zero probability; it
    need not contain a itself.  Probabilities are exact rationals.
    """

    sensitive_domain: tuple[str, ...]
    cus: Mapping[str, frozenset[str]]
    p_trans: Mapping[tuple[str, str], Fraction]

    @classmethod
    def uniform(cls, cus_map: Mapping[str, Iterable[str]],
                domain: Sequence[str] | None = None) -> "UpdateModel":
        """Uniform transition probabilities over each value's CUS."""
        cus = {a: frozenset(b) for a, b in cus_map.items()}
        if domain is None:
            domain = sorted(cus)
        p = {}
        for a, targets in cus.items():
            if not targets:
                raise ValidationError(f"cus({a!r}) is empty")
            share = Fraction(1, len(targets))
            for b in sorted(targets):
                p[(a, b)] = share
        return cls(tuple(domain), cus, p)

    @classmethod
    def from_classes(cls, classes: Sequence[Iterable[str]]) -> "UpdateModel":
        """Equivalence-class model: cus(x) = x's class, uniform inside it."""
        cus = {}
        domain = []
        for group in classes:
            members = list(group)
            domain.extend(members)
            for x in members:
                cus[x] = frozenset(members)
        return cls.uniform(cus, domain)

    def prob(self, a: str, b: str) -> Fraction:
        return self.p_trans.get((a, b), Fraction(0))

    def cus_of(self, value: str) -> frozenset[str]:
        try:
            return self.cus[value]
        except KeyError:
            raise ValidationError(f"value {value!r} outside the sensitive domain") from None


def validate_update_model(model: UpdateModel) -> list[str]:
    """Check every model invariant; returns a list of violations (empty = ok)."""
    problems: list[str] = []
    dom = set(model.sensitive_domain)
    for a in model.sensitive_domain:
        if a not in model.cus:
            problems.append(f"no cus defined for {a!r}")
    for a, targets in sorted(model.cus.items()):
        if not targets:
            problems.append(f"cus({a!r}) is empty")
            continue
        if not targets <= dom:
            problems.append(f"cus({a!r}) leaves the domain: "
                            f"{sorted(targets - dom)}")
        total = Fraction(0)
        for b in sorted(targets):
            p = model.prob(a, b)
            if p <= 0:
                problems.append(f"p_trans({a!r}, {b!r}) not strictly positive")
            total += p
        if total != 1:
            problems.append(f"p_trans({a!r}, .) sums to {total}, not 1")
        for b in sorted(targets):
            other = model.cus.get(b, frozenset())
            if not other <= targets:
                problems.append(f"closure violated at ({a!r}, {b!r}): "
                                f"cus({b!r}) has {sorted(other - targets)} "
                                f"outside cus({a!r})")
    for (a, b), p in sorted(model.p_trans.items()):
        if p > 0 and b not in model.cus.get(a, frozenset()):
            problems.append(f"p_trans({a!r}, {b!r}) > 0 outside cus({a!r})")
    return problems


def _entry_key(entry: frozenset[str]) -> tuple[str, ...]:
    return tuple(sorted(entry))


class USS:
    """An update-set signature: a canonicalized multiset of value sets."""

    __slots__ = ("entries", "_key")

    def __init__(self, entries: Iterable[Iterable[str]]):
        sets = [frozenset(e) for e in entries]
        sets.sort(key=_entry_key)
        self.entries: tuple[frozenset[str], ...] = tuple(sets)
        self._key = tuple(_entry_key(e) for e in self.entries)

    @property
    def key(self) -> tuple[tuple[str, ...], ...]:
        return self._key

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, USS) and self._key == other._key

    def __hash__(self) -> int:
        return hash(self._key)

    def __repr__(self) -> str:
        inner = ", ".join("{" + ",".join(k) + "}" for k in self._key)
        return f"USS[{inner}]"

    def covers(self, value: str) -> bool:
        return any(value in e for e in self.entries)


def uss_of(values: Sequence[str], model: UpdateModel) -> USS:
    return USS(model.cus_of(v) for v in values)


def is_legal_update_instance(values: Sequence[str], uss: USS) -> bool:
    """Size match + mutual covering: no value outside every entry, no entry
    missed by every value."""
    if len(values) != len(uss):
        return False
    vals = list(values)
    for v in vals:
        if not any(v in e for e in uss.entries):
            return False
    for e in uss.entries:
        if not any(v in e for v in vals):
            return False
    return True


def _perfect_matching(n: int, adj: Sequence[Sequence[int]]) -> list[int] | None:
    """Kuhn's algorithm; adj[i] lists right-nodes usable by left-node i.
    Returns match_left (left index -> right index) or None."""
    match_right: list[int] = [-1] * n

    def try_assign(i: int, seen: list[bool]) -> bool:
        for j in adj[i]:
            if not seen[j]:
                seen[j] = True
                if match_right[j] < 0 or try_assign(match_right[j], seen):
                    match_right[j] = i
                    return True
        return False

    for i in range(n):
        if not try_assign(i, [False] * n):
            return None
    match_left = [-1] * n
    for j, i in enumerate(match_right):
        match_left[i] = j
    return match_left


def implies(a: USS, b: USS) -> bool:
    """True iff some bijection pairs every entry of b with a superset entry
    of a.  Any one-per-entry draw from b is then legal for a as well."""
    if len(a) != len(b):
        return False
    n = len(a)
    adj = [[j for j, ae in enumerate(a.entries) if be <= ae]
           for be in b.entries]
    return _perfect_matching(n, adj) is not None


@dataclass(frozen=True)
class IntersectionPlan:
    """A maximal-score bijection between two signatures of equal size.

    pairing[i] = index into b for the i-th canonical entry of a; result is
    the signature of the pairwise intersections.
    """

    pairing: tuple[int, ...]
    result: USS
    score: Fraction


def _plan_score(a: USS, b: USS, pairing: Sequence[int]) -> Fraction:
    inter = 0
    union = 0
    for i, j in enumerate(pairing):
        x, y = a.entries[i], b.entries[j]
        inter += len(x & y)
        union += len(x | y)
    return Fraction(inter, union)


def _greedy_pairing(n: int, a: USS, b: USS,
                    adj: Sequence[Sequence[int]]) -> list[int]:
    """Max-overlap greedy that never strands the remaining entries: each
    choice is kept only if a perfect matching still exists on the rest."""
    taken = [False] * n
    pairing: list[int] = []
    for i in range(n):
        options = sorted((j for j in adj[i] if not taken[j]),
                         key=lambda j: (-len(a.entries[i] & b.entries[j]), j))
        for j in options:
            taken[j] = True
            rest_adj = [[k for k in adj[r] if not taken[k]]
                        for r in range(i + 1, n)]
            if not rest_adj or _perfect_matching_rect(rest_adj, n) is not None:
                pairing.append(j)
                break
            taken[j] = False
        else:  # pragma: no cover - adj came from a feasible matching
            raise AssertionError("greedy pairing lost feasibility")
    return pairing


def _perfect_matching_rect(adj: Sequence[Sequence[int]], width: int) -> list[int] | None:
    """Matching of all left nodes into right nodes indexed < width."""
    match_right = [-1] * width

    def try_assign(i: int, seen: list[bool]) -> bool:
        for j in adj[i]:
            if not seen[j]:
                seen[j] = True
                if match_right[j] < 0 or try_assign(match_right[j], seen):
                    match_right[j] = i
                    return True
        return False

    for i in range(len(adj)):
        if not try_assign(i, [False] * width):
            return None
    return match_right


def intersect(a: USS, b: USS) -> IntersectionPlan | None:
    """Best all-nonempty pairwise intersection of two signatures, or None.

    Score is aggregate overlap: sum |X∩Y| / sum |X∪Y| over the pairing.
    Exhaustive search up to EXACT_BIJECTION_LIMIT entries (first-found wins
    ties, i.e. lexicographic pairing order), greedy beyond.
    """
    if len(a) != len(b):
        return None
    n = len(a)
    if n == 0:
        return IntersectionPlan((), USS(()), Fraction(1))
    adj = [[j for j, be in enumerate(b.entries) if ae & be]
           for ae in a.entries]
    if _perfect_matching(n, adj) is None:
        return None

    if n <= EXACT_BIJECTION_LIMIT:
        best: tuple[Fraction, tuple[int, ...]] | None = None
        taken = [False] * n
        pairing: list[int] = []

        def dfs(i: int) -> None:
            nonlocal best
            if i == n:
                score = _plan_score(a, b, pairing)
                if best is None or score > best[0]:
                    best = (score, tuple(pairing))
                return
            for j in adj[i]:
                if not taken[j]:
                    taken[j] = True
                    pairing.append(j)
                    dfs(i + 1)
                    pairing.pop()
                    taken[j] = False

        dfs(0)
        assert best is not None
        score, chosen = best
    else:
        chosen = tuple(_greedy_pairing(n, a, b, adj))
        score = _plan_score(a, b, chosen)

    result = USS(a.entries[i] & b.entries[j] for i, j in enumerate(chosen))
    return IntersectionPlan(chosen, result, score)


def cus_disjointness(values: Sequence[str], model: UpdateModel) -> bool:
    """True iff the values' candidate update sets are pairwise disjoint."""
    sets = [model.cus_of(v) for v in values]
    for x, y in itertools.combinations(sets, 2):
        if x & y:
            return False
    return True
