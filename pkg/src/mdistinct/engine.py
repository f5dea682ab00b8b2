"""Three-phase m-Distinct publisher.

Phase 1 creates buckets keyed by update-set signatures (plus best pairwise
intersections), phase 2 greedily assigns records to bucket entries by a
counterfeit/generalization score, phase 3 recursively splits balanced
buckets into QI-groups with one record per entry and distinct sensitive
values.  First-timers with no usable bucket go through a static
Mondrian-style partitioner.  Everything is deterministic given the seed.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .errors import InfeasibilityError, ValidationError
from .model import (AttributeSchema, CounterfeitMember, PublishedRelease,
                    Record, TableSchema, generalize)
from .updates import USS, UpdateModel, implies, intersect, is_legal_update_instance, uss_of

__all__ = [
    "Bucket",
    "AssignmentScore",
    "EngineState",
    "PrevInfo",
    "phase1_create_buckets",
    "cnt_buc",
    "assignment_score",
    "phase2_assign",
    "balance_counterfeits",
    "split_score",
    "phase3_split",
    "static_partition",
    "publish",
    "verify_m_distinct",
]

# Explored partial selections per split candidate before giving up on the
# backtracking pick-out search.
BACKTRACK_CAP = 1_000_000


def _span_extent(attr: AttributeSchema, lo: int, hi: int) -> int:
    """Points covered by the generalization of an index span [lo, hi]."""
    if attr.kind == "numeric":
        return hi - lo + 1
    return attr.hierarchy.leafcount(attr.hierarchy.covering_node(lo, hi))


# ---------------------------------------------------------------------------
# buckets


@dataclass
class Bucket:
    """A signature bucket: one entry (record list) per CUS of the signature."""

    signature: USS
    origin: str  # "signature" | "intersection"
    entries: list[list[Record]] = field(init=False)
    counterfeits: list[int] = field(init=False)
    freq: Counter = field(init=False)
    _span: list[tuple[int, int] | None] = field(init=False)

    def __post_init__(self):
        self.entries = [[] for _ in self.signature.entries]
        self.counterfeits = [0] * len(self.signature.entries)
        self.freq = Counter()
        self._span = []

    @property
    def size(self) -> int:
        return sum(len(e) for e in self.entries)

    def covers(self, value: str) -> bool:
        return self.signature.covers(value)

    def eligible_entries(self, value: str) -> list[int]:
        return [i for i, cus in enumerate(self.signature.entries)
                if value in cus]

    def pairwise_disjoint(self) -> bool:
        sets = self.signature.entries
        for i in range(len(sets)):
            for j in range(i + 1, len(sets)):
                if sets[i] & sets[j]:
                    return False
        return True

    def delta(self) -> int:
        f_max = max(self.freq.values(), default=0)
        sizes = max((len(e) for e in self.entries), default=0)
        return max(f_max, sizes)

    def extent_product(self, schema: TableSchema) -> int:
        out = 1
        for attr, span in zip(schema.qi, self._span):
            lo, hi = span
            out *= _span_extent(attr, lo, hi)
        return out

    def extent_product_with(self, schema: TableSchema, rec: Record) -> int:
        out = 1
        for j, attr in enumerate(schema.qi):
            idx = attr.to_index(rec.qi[j])
            if self._span:
                lo, hi = self._span[j]
                lo, hi = min(lo, idx), max(hi, idx)
            else:
                lo = hi = idx
            out *= _span_extent(attr, lo, hi)
        return out

    def add(self, rec: Record, entry_index: int, schema: TableSchema) -> None:
        self.entries[entry_index].append(rec)
        self.freq[rec.sensitive] += 1
        idx = [attr.to_index(v) for attr, v in zip(schema.qi, rec.qi)]
        if not self._span:
            self._span = [(i, i) for i in idx]
        else:
            self._span = [(min(lo, i), max(hi, i))
                          for (lo, hi), i in zip(self._span, idx)]


def phase1_create_buckets(prev_signatures: Sequence[USS]) -> list[Bucket]:
    """One bucket per distinct signature in scan order, then best pairwise
    intersections appended (deduplicated, single pass - intersections of
    intersections are not generated)."""
    queue: list[USS] = []
    seen: set[USS] = set()
    for sig in prev_signatures:
        if sig not in seen:
            seen.add(sig)
            queue.append(sig)
    extra: list[USS] = []
    for i in range(len(queue)):
        for j in range(i + 1, len(queue)):
            plan = intersect(queue[i], queue[j])
            if plan is not None and plan.result not in seen:
                seen.add(plan.result)
                extra.append(plan.result)
    return ([Bucket(sig, "signature") for sig in queue]
            + [Bucket(sig, "intersection") for sig in extra])


# ---------------------------------------------------------------------------
# engine state


@dataclass(frozen=True)
class PrevInfo:
    value: str
    signature: USS
    release_index: int


@dataclass
class EngineState:
    m: int
    mode: str = "m_distinct"
    release_count: int = 0
    prev: dict[str, PrevInfo] = field(default_factory=dict)

    @property
    def star(self) -> bool:
        return self.mode == "m_distinct_star"


def _eligible_buckets(rec: Record, prev: PrevInfo | None,
                      buckets: Sequence[Bucket], star: bool,
                      implies_cache: dict[tuple, bool]) -> list[int]:
    out = []
    for b, bucket in enumerate(buckets):
        if not bucket.covers(rec.sensitive):
            continue
        if prev is not None:
            key = (prev.signature.key, b)
            ok = implies_cache.get(key)
            if ok is None:
                ok = implies(prev.signature, bucket.signature)
                implies_cache[key] = ok
            if not ok:
                continue
        elif star and not bucket.pairwise_disjoint():
            continue
        out.append(b)
    return out


def cnt_buc(rec: Record, buckets: Sequence[Bucket],
            prev: PrevInfo | None = None, star: bool = False) -> int:
    """Number of buckets the record can be assigned to."""
    return len(_eligible_buckets(rec, prev, buckets, star, {}))


# ---------------------------------------------------------------------------
# phase 2


@dataclass(frozen=True)
class AssignmentScore:
    epsilon: int        # +1: no counterfeit growth; -1: padding will grow
    lam: Fraction       # area after / area before, >= 1
    value: Fraction     # 1/lam or -lam

    @classmethod
    def build(cls, epsilon: int, lam: Fraction) -> "AssignmentScore":
        return cls(epsilon, lam, 1 / lam if epsilon == 1 else -lam)


def assignment_score(rec: Record, bucket: Bucket, entry_index: int,
                     schema: TableSchema) -> AssignmentScore:
    if rec.sensitive not in bucket.signature.entries[entry_index]:
        raise ValidationError("record's value not in the entry's CUS")
    if bucket.size == 0:
        # Nothing to conflict with and no area to grow.
        return AssignmentScore.build(1, Fraction(1))
    delta = bucket.delta()
    eps = 1
    if bucket.freq[rec.sensitive] == delta \
            or len(bucket.entries[entry_index]) == delta:
        eps = -1
    lam = Fraction(bucket.extent_product_with(schema, rec),
                   bucket.extent_product(schema))
    return AssignmentScore.build(eps, lam)


def phase2_assign(records: Sequence[Record],
                  prev_of: Mapping[str, PrevInfo],
                  buckets: Sequence[Bucket],
                  schema: TableSchema,
                  star: bool = False) -> list[Record]:
    """Assign records to bucket entries in increasing CNT_buc order.

    Returns the leftover pool (CNT_buc = 0, necessarily first-timers) for
    the static partitioner.  A returning record with no bucket means the
    microdata contradicts the update model, which is an input error.
    """
    implies_cache: dict[tuple, bool] = {}
    eligible: dict[str, list[int]] = {}
    pool: list[Record] = []
    assignable: list[tuple[int, str, Record]] = []
    for rec in records:
        prev = prev_of.get(rec.id)
        buckets_for = _eligible_buckets(rec, prev, buckets, star, implies_cache)
        if not buckets_for:
            if prev is not None:
                raise ValidationError(
                    f"returning record {rec.id!r} fits no bucket; its update "
                    f"{prev.value!r} -> {rec.sensitive!r} contradicts the model")
            pool.append(rec)
            continue
        eligible[rec.id] = buckets_for
        assignable.append((len(buckets_for), rec.id, rec))
    assignable.sort(key=lambda t: (t[0], t[1]))

    for _, _, rec in assignable:
        best_score: Fraction | None = None
        best: tuple[int, int] | None = None  # (bucket, entry)
        for b in eligible[rec.id]:
            bucket = buckets[b]
            buc_score: Fraction | None = None
            buc_entry: int | None = None
            for i in bucket.eligible_entries(rec.sensitive):
                s = assignment_score(rec, bucket, i, schema).value
                if buc_score is None or s > buc_score:
                    buc_score, buc_entry = s, i
                elif s == buc_score and (len(bucket.entries[i])
                                         < len(bucket.entries[buc_entry])):
                    buc_entry = i
            if buc_score is not None and (best_score is None
                                          or buc_score > best_score):
                best_score = buc_score
                best = (b, buc_entry)
        assert best is not None
        buckets[best[0]].add(rec, best[1], schema)
    return pool


def balance_counterfeits(bucket: Bucket) -> Bucket:
    """Pad every entry with counterfeit slots up to delta members."""
    delta = bucket.delta()
    bucket.counterfeits = [delta - len(e) for e in bucket.entries]
    return bucket


# ---------------------------------------------------------------------------
# phase 3


@dataclass(frozen=True)
class _Cell:
    entry: int
    seq: int                 # tie-breaker, creation order within the entry
    record: Record | None    # None: counterfeit slot


class _BTrack:
    __slots__ = ("left",)

    def __init__(self, budget: int):
        self.left = budget


def _cell_key(cell: _Cell, attr_pos: int, schema: TableSchema):
    if cell.record is None:
        return (1, cell.entry, cell.seq)
    attr = schema.qi[attr_pos]
    return (0, attr.to_index(cell.record.qi[attr_pos]), cell.record.id)


def _one_pick(avail: list[_Cell], k: int, budget: _BTrack) -> list[int] | None:
    """Pick one cell per entry with pairwise-distinct real values, preferring
    the queue head; backtracking, budget-counted.  Returns indices into
    avail, or None."""
    last_pos: dict[int, int] = {}
    for idx, cell in enumerate(avail):
        last_pos[cell.entry] = idx
    chosen: list[int] = []
    open_entries = set(range(k))
    used_values: set[str] = set()

    def feasible(idx: int) -> bool:
        # an entry is still reachable iff its last queue position is ahead
        return all(last_pos.get(e, -1) >= idx for e in open_entries)

    def dfs(start: int) -> bool:
        if not open_entries:
            return True
        if not feasible(start):
            return False
        for idx in range(start, len(avail)):
            cell = avail[idx]
            if cell.entry not in open_entries:
                continue
            value = None if cell.record is None else cell.record.sensitive
            if value is not None and value in used_values:
                continue
            if budget.left <= 0:
                return False
            budget.left -= 1
            chosen.append(idx)
            open_entries.discard(cell.entry)
            if value is not None:
                used_values.add(value)
            if dfs(idx + 1):
                return True
            chosen.pop()
            open_entries.add(cell.entry)
            if value is not None:
                used_values.discard(value)
        return False

    return list(chosen) if dfs(0) else None


class _Extents:
    """Per-attribute min/max of a shrinking real-record multiset, tracked in
    index space as run-length-encoded sorted columns with monotone pointers."""

    def __init__(self, schema: TableSchema, records: Iterable[Record]):
        self.schema = schema
        self.runs: list[list[tuple[int, int]]] = []  # per attr: (value, count)
        recs = list(records)
        for j, attr in enumerate(schema.qi):
            rle: list[tuple[int, int]] = []
            for v in sorted(attr.to_index(rec.qi[j]) for rec in recs):
                if rle and rle[-1][0] == v:
                    rle[-1] = (v, rle[-1][1] + 1)
                else:
                    rle.append((v, 1))
            self.runs.append(rle)
        self.removed: list[Counter] = [Counter() for _ in schema.qi]
        self.lo_ptr = [0] * len(schema.qi)
        self.hi_ptr = [len(r) - 1 for r in self.runs]

    def remove(self, rec: Record) -> None:
        for j, attr in enumerate(self.schema.qi):
            self.removed[j][attr.to_index(rec.qi[j])] += 1

    def span(self, j: int) -> tuple[int, int]:
        runs = self.runs[j]
        rem = self.removed[j]
        lo = self.lo_ptr[j]
        while lo < len(runs) and rem[runs[lo][0]] >= runs[lo][1]:
            lo += 1
        self.lo_ptr[j] = lo
        hi = self.hi_ptr[j]
        while hi >= 0 and rem[runs[hi][0]] >= runs[hi][1]:
            hi -= 1
        self.hi_ptr[j] = hi
        if lo > hi:
            raise InfeasibilityError("no real records left")
        return runs[lo][0], runs[hi][0]


def split_score(schema: TableSchema,
                parent_extents: Sequence[int],
                side_a: tuple[int, Sequence[tuple[int, int]]],
                side_b: tuple[int, Sequence[tuple[int, int]]]) -> Fraction:
    """sum over children of |child| * sum_j extent(child, j) / extent(parent, j),
    with |child| counting real records."""
    total = Fraction(0)
    for n, spans in (side_a, side_b):
        if n == 0:
            raise ValidationError("empty split child")
        part = Fraction(0)
        for j, attr in enumerate(schema.qi):
            lo, hi = spans[j]
            part += Fraction(_span_extent(attr, lo, hi), parent_extents[j])
        total += n * part
    return total


def _emit_group(cells: Sequence[_Cell], cus_list: Sequence[frozenset[str]],
                rng: random.Random) -> list[Record | CounterfeitMember]:
    used = {c.record.sensitive for c in cells if c.record is not None}
    out: list[Record | CounterfeitMember] = []
    for cell in cells:
        if cell.record is not None:
            out.append(cell.record)
        else:
            options = sorted(cus_list[cell.entry] - used)
            if not options:
                raise InfeasibilityError("counterfeit value exhaustion")
            value = rng.choice(options)
            used.add(value)
            out.append(CounterfeitMember(value))
    return out


def _fallback_decompose(cells_by_entry: list[list[_Cell]],
                        schema: TableSchema) -> list[list[_Cell]]:
    """Deterministic decomposition into delta one-per-entry groups with
    distinct real values: round-robin order repaired by bipartite
    edge-coloring (delta colors always suffice: column degree = delta and
    every value frequency <= delta), then a swap pass so no group is left
    all-counterfeit."""
    delta = len(cells_by_entry[0])
    k = len(cells_by_entry)
    # proper-coloring bookkeeping: per color, which columns/values are taken
    col_used: list[dict[int, _Cell]] = [dict() for _ in range(delta)]
    val_used: list[dict[str, _Cell]] = [dict() for _ in range(delta)]
    color_of: dict[tuple[int, int], int] = {}  # (entry, seq) -> color

    def ordered(entry: int) -> list[_Cell]:
        return sorted(cells_by_entry[entry],
                      key=lambda c: _cell_key(c, 0, schema))

    def insert(cell: _Cell) -> None:
        e, v = cell.entry, cell.record.sensitive
        free_e = [c for c in range(delta) if e not in col_used[c]]
        free_v = [c for c in range(delta) if v not in val_used[c]]
        common = set(free_e) & set(free_v)
        if common:
            c = min(common)
        else:
            a, b = free_e[0], free_v[0]
            # walk the a/b alternating path starting at value v (the path
            # can never loop back to column e, so swapping a<->b along it
            # frees color a at both endpoints)
            path: list[_Cell] = []
            at_value, node, want = True, v, a
            while True:
                nxt = (val_used[want].get(node) if at_value
                       else col_used[want].get(node))
                if nxt is None:
                    break
                path.append(nxt)
                node = nxt.entry if at_value else nxt.record.sensitive
                at_value = not at_value
                want = b if want == a else a
            flips = [(p, b if color_of[(p.entry, p.seq)] == a else a)
                     for p in path]
            for p, _ in flips:
                c_old = color_of[(p.entry, p.seq)]
                del col_used[c_old][p.entry]
                del val_used[c_old][p.record.sensitive]
            for p, c_new in flips:
                col_used[c_new][p.entry] = p
                val_used[c_new][p.record.sensitive] = p
                color_of[(p.entry, p.seq)] = c_new
            c = a
        col_used[c][e] = cell
        val_used[c][v] = cell
        color_of[(cell.entry, cell.seq)] = c

    for e in range(k):
        for cell in ordered(e):
            if cell.record is not None:
                insert(cell)
    # counterfeit slots take the leftover colors per column
    for e in range(k):
        free = sorted(set(range(delta)) - {color_of[(c.entry, c.seq)]
                                           for c in cells_by_entry[e]
                                           if (c.entry, c.seq) in color_of})
        it = iter(free)
        for cell in ordered(e):
            if cell.record is None:
                color_of[(cell.entry, cell.seq)] = next(it)
    groups: list[list[_Cell]] = [[None] * k for _ in range(delta)]
    for e in range(k):
        for cell in cells_by_entry[e]:
            groups[color_of[(cell.entry, cell.seq)]][e] = cell
    # no emitted group may be all-counterfeit: move a spare real in
    def reals(g: list[_Cell]) -> list[int]:
        return [i for i, c in enumerate(g) if c.record is not None]

    for gi, group in enumerate(groups):
        while not reals(group):
            donor = next(g for g in range(len(groups))
                         if len(reals(groups[g])) >= 2)
            for e in reals(groups[donor]):
                cell = groups[donor][e]
                v = cell.record.sensitive
                if all(c.record is None or c.record.sensitive != v
                       for c in group):
                    groups[donor][e], group[e] = group[e], cell
                    break
            else:  # pragma: no cover - a legal swap always exists
                raise AssertionError("stranded all-counterfeit group")
    return groups


def _coloring_ok(groups: list[list[_Cell]]) -> bool:
    for g in groups:
        vals = [c.record.sensitive for c in g if c.record is not None]
        if len(vals) != len(set(vals)):
            return False
    return True


def phase3_split(bucket: Bucket, schema: TableSchema, rng: random.Random,
                 backtrack_cap: int = BACKTRACK_CAP,
                 ) -> list[list[Record | CounterfeitMember]]:
    """Recursively bisect a balanced bucket into one-per-entry QI-groups.

    At each level, every QI attribute contributes one greedy pick-out
    sequence from its sorted queue; prefix sizes delta_A in 1..delta-1 form
    the candidate splits, children must stay balanced with F_max bounded by
    their entry size, and the minimum split_score wins.  delta = 1 emits the
    group, drawing counterfeit sensitive values from the entry's CUS.
    """
    cus_list = bucket.signature.entries
    cells_by_entry: list[list[_Cell]] = []
    for e, entry in enumerate(bucket.entries):
        cells = [_Cell(e, s, rec) for s, rec in enumerate(entry)]
        cells += [_Cell(e, len(entry) + s, None)
                  for s in range(bucket.counterfeits[e])]
        cells_by_entry.append(cells)
    sizes = {len(c) for c in cells_by_entry}
    if len(sizes) != 1:
        raise ValidationError("bucket not balanced")

    out: list[list[Record | CounterfeitMember]] = []

    def recurse(by_entry: list[list[_Cell]]) -> None:
        delta = len(by_entry[0])
        if delta == 1:
            out.append(_emit_group([cells[0] for cells in by_entry],
                                   cus_list, rng))
            return
        k = len(by_entry)
        all_cells = [c for cells in by_entry for c in cells]
        reals = [c.record for c in all_cells if c.record is not None]
        parent_extents = []
        for j, attr in enumerate(schema.qi):
            idx = [attr.to_index(r.qi[j]) for r in reals]
            parent_extents.append(_span_extent(attr, min(idx), max(idx)))
        total_freq = Counter(r.sensitive for r in reals)
        # candidate scores share the denominator prod(parent_extents), so
        # they compare exactly as integer numerators (split_score * denom)
        denom = 1
        for e in parent_extents:
            denom *= e
        cof = [denom // e for e in parent_extents]

        best = None  # (score, attr_pos, delta_a, picks)
        for attr_pos in range(len(schema.qi)):
            queue = sorted(all_cells, key=lambda c: _cell_key(c, attr_pos, schema))
            budget = _BTrack(backtrack_cap)
            picks: list[list[_Cell]] = []
            avail = queue
            while len(picks) < delta - 1:
                pick_idx = _one_pick(avail, k, budget)
                if pick_idx is None:
                    break
                pick = [avail[i] for i in pick_idx]
                pick.sort(key=lambda c: c.entry)
                picks.append(pick)
                taken = set(pick_idx)
                avail = [c for i, c in enumerate(avail) if i not in taken]
            if not picks:
                continue
            # sweep delta_a over pick prefixes, updating A/B stats as we go
            b_side = _Extents(schema, reals)
            a_freq: Counter = Counter()
            a_reals = 0
            a_spans: list[tuple[int, int] | None] = [None] * len(schema.qi)
            for delta_a in range(1, len(picks) + 1):
                for cell in picks[delta_a - 1]:
                    if cell.record is None:
                        continue
                    rec = cell.record
                    a_freq[rec.sensitive] += 1
                    a_reals += 1
                    b_side.remove(rec)
                    for j, attr in enumerate(schema.qi):
                        i = attr.to_index(rec.qi[j])
                        span = a_spans[j]
                        a_spans[j] = (i, i) if span is None else \
                            (min(span[0], i), max(span[1], i))
                if delta_a > delta - 1:
                    break
                b_reals = len(reals) - a_reals
                if a_reals == 0 or b_reals == 0:
                    continue
                delta_b = delta - delta_a
                if any(total_freq[v] - a_freq[v] > delta_b for v in total_freq):
                    continue
                # F_max(A) <= delta_a holds by construction (distinct per pick)
                a_num = b_num = 0
                for j, attr in enumerate(schema.qi):
                    lo, hi = a_spans[j]
                    a_num += _span_extent(attr, lo, hi) * cof[j]
                    lo, hi = b_side.span(j)
                    b_num += _span_extent(attr, lo, hi) * cof[j]
                score_num = a_reals * a_num + b_reals * b_num
                cand = (score_num, attr_pos, delta_a)
                if best is None or cand < (best[0], best[1], best[2]):
                    best = (score_num, attr_pos, delta_a, picks[:delta_a])
        if best is None:
            for group in _fallback_decompose(by_entry, schema):
                out.append(_emit_group(group, cus_list, rng))
            return
        _, _, delta_a, chosen = best
        picked = {(c.entry, c.seq) for pick in chosen for c in pick}
        child_a = [[c for pick in chosen for c in pick if c.entry == e]
                   for e in range(k)]
        child_b = [[c for c in by_entry[e] if (c.entry, c.seq) not in picked]
                   for e in range(k)]
        recurse(child_a)
        recurse(child_b)

    recurse(cells_by_entry)
    return out


# ---------------------------------------------------------------------------
# static partitioner for first-timers


def _color_key(rec: Record, model: UpdateModel, star: bool):
    if star:
        return tuple(sorted(model.cus_of(rec.sensitive)))
    return rec.sensitive


def _deal(records: list[Record], n_groups: int, model: UpdateModel,
          star: bool) -> list[list[Record]]:
    """Rarest-color-first cyclic deal; a color's records land in distinct
    groups because consecutive cursor slots never repeat within n_groups."""
    by_color: dict = {}
    for rec in records:
        by_color.setdefault(_color_key(rec, model, star), []).append(rec)
    groups: list[list[Record]] = [[] for _ in range(n_groups)]
    cursor = 0
    for color in sorted(by_color, key=lambda c: (len(by_color[c]), c)):
        for rec in sorted(by_color[color], key=lambda r: r.id):
            groups[cursor % n_groups].append(rec)
            cursor += 1
    return groups


def _pad_group(group: list[Record | CounterfeitMember], m: int,
               model: UpdateModel, star: bool, rng: random.Random,
               ) -> list[Record | CounterfeitMember]:
    def value_of(x):
        return x.sensitive

    while len(group) < m:
        used = {value_of(x) for x in group}
        if star:
            taken = [model.cus_of(value_of(x)) for x in group]
            options = sorted(v for v in model.sensitive_domain
                             if all(not (model.cus_of(v) & t) for t in taken))
        else:
            options = sorted(v for v in model.sensitive_domain if v not in used)
        if not options:
            raise InfeasibilityError(
                "sensitive domain too small to pad a group to m distinct "
                "values" + (" with disjoint CUS" if star else ""))
        group.append(CounterfeitMember(rng.choice(options)))
    return group


def static_partition(records: Sequence[Record], m: int, schema: TableSchema,
                     model: UpdateModel, rng: random.Random,
                     star: bool = False) -> list[list[Record | CounterfeitMember]]:
    """Partition history-free records into m-unique groups.

    Top-down: recursively apply the best eligible cut (multiples of m along
    each attribute's sorted order, minimum split_score), then deal each leaf
    rarest-value-first into floor(N/m) groups.  An ineligible root pool
    falls back to a counterfeit-padded deal.  In star mode the distinctness
    unit is the whole CUS, making group CUS's pairwise disjoint.
    """
    if not records:
        return []

    def eligible(recs: Sequence[Record]) -> bool:
        if len(recs) < m:
            return False
        freq = Counter(_color_key(r, model, star) for r in recs)
        return max(freq.values()) <= len(recs) // m

    out: list[list[Record | CounterfeitMember]] = []

    def check_star(group: Sequence[Record | CounterfeitMember]) -> None:
        # distinct CUS keys do not guarantee disjointness when one CUS nests
        # inside another, so verify before publishing
        sets = [model.cus_of(x.sensitive) for x in group]
        for i in range(len(sets)):
            for j in range(i + 1, len(sets)):
                if sets[i] & sets[j]:
                    raise InfeasibilityError(
                        "static partition cannot keep group CUS pairwise "
                        "disjoint under this update model")

    def emit_leaf(recs: list[Record]) -> None:
        for group in _deal(recs, max(len(recs) // m, 1), model, star):
            if star:
                check_star(group)
            out.append(list(group))

    def recurse(recs: list[Record]) -> None:
        n = len(recs)
        best = None  # (score, attr_pos, cut, ordered)
        for attr_pos, attr in enumerate(schema.qi):
            ordered = sorted(recs, key=lambda r: (attr.to_index(r.qi[attr_pos]),
                                                  r.id))
            # prefix/suffix spans for all attributes along this order
            spans_fwd: list[list[tuple[int, int]]] = []
            spans_bwd: list[list[tuple[int, int]]] = []
            cur: list[tuple[int, int] | None] = [None] * len(schema.qi)
            for rec in ordered:
                cur = [_grow(span, a.to_index(rec.qi[j]))
                       for j, (span, a) in enumerate(zip(cur, schema.qi))]
                spans_fwd.append(list(cur))
            cur = [None] * len(schema.qi)
            for rec in reversed(ordered):
                cur = [_grow(span, a.to_index(rec.qi[j]))
                       for j, (span, a) in enumerate(zip(cur, schema.qi))]
                spans_bwd.append(list(cur))
            spans_bwd.reverse()
            freq_fwd: Counter = Counter()
            fmax_fwd = []
            running = 0
            for rec in ordered:
                c = _color_key(rec, model, star)
                freq_fwd[c] += 1
                running = max(running, freq_fwd[c])
                fmax_fwd.append(running)
            freq_bwd: Counter = Counter()
            fmax_bwd = [0] * (n + 1)
            running = 0
            for i in range(n - 1, -1, -1):
                c = _color_key(ordered[i], model, star)
                freq_bwd[c] += 1
                running = max(running, freq_bwd[c])
                fmax_bwd[i] = running
            parent = [_span_extent(a, *spans_fwd[-1][j])
                      for j, a in enumerate(schema.qi)]
            for cut in range(m, n - m + 1, m):
                if fmax_fwd[cut - 1] > cut // m:
                    continue
                if fmax_bwd[cut] > (n - cut) // m:
                    continue
                score = split_score(schema, parent,
                                    (cut, spans_fwd[cut - 1]),
                                    (n - cut, spans_bwd[cut]))
                cand = (score, attr_pos, cut)
                if best is None or cand < (best[0], best[1], best[2]):
                    best = (score, attr_pos, cut, ordered)
        if best is None:
            emit_leaf(sorted(recs, key=lambda r: r.id))
            return
        _, _, cut, ordered = best
        recurse(ordered[:cut])
        recurse(ordered[cut:])

    pool = sorted(records, key=lambda r: r.id)
    if eligible(pool):
        recurse(pool)
        return out
    # not m-eligible: deal into max-frequency many groups, pad with counterfeits
    freq = Counter(_color_key(r, model, star) for r in pool)
    n_groups = max(max(freq.values(), default=1), 1)
    for group in _deal(pool, n_groups, model, star):
        if star:
            check_star(group)
        out.append(_pad_group(list(group), m, model, star, rng))
    return out


def _grow(span: tuple[int, int] | None, idx: int) -> tuple[int, int]:
    if span is None:
        return (idx, idx)
    return (min(span[0], idx), max(span[1], idx))


# ---------------------------------------------------------------------------
# publish / verify


def publish(records: Sequence[Record], state: EngineState,
            model: UpdateModel, schema: TableSchema, seed: int,
            ) -> tuple[PublishedRelease, EngineState]:
    """Run phases 1-3 and emit the next release, updating per-record state."""
    rng = random.Random(seed)
    ordered = sorted(records, key=lambda r: r.id)
    if len({r.id for r in ordered}) != len(ordered):
        raise ValidationError("duplicate record ids in one release")
    for rec in ordered:
        schema.validate_record(rec)
    returning = [r for r in ordered if r.id in state.prev]
    buckets = phase1_create_buckets([state.prev[r.id].signature
                                     for r in returning])
    pool = phase2_assign(ordered, state.prev, buckets, schema,
                         star=state.star)
    groups: list[list[Record | CounterfeitMember]] = []
    for bucket in buckets:
        if bucket.size == 0:
            continue  # over-generated candidate, nothing assigned
        balance_counterfeits(bucket)
        groups.extend(phase3_split(bucket, schema, rng))
    groups.extend(static_partition(pool, state.m, schema, model, rng,
                                   star=state.star))
    if not groups:
        raise ValidationError("nothing to publish")
    release_index = state.release_count + 1
    release = generalize(schema, release_index, groups)
    for group in release.groups:
        sig = uss_of(group.values, model)
        for member in group.members:
            if not member.counterfeit:
                state.prev[member.rid] = PrevInfo(member.sensitive, sig,
                                                  release_index)
    state.release_count = release_index
    return release, state


def verify_m_distinct(releases: Sequence[PublishedRelease],
                      model: UpdateModel, m: int,
                      star: bool = False) -> tuple[bool, list[str]]:
    """Check every release is m-unique and every record's candidate set is a
    legal update instance of its previous group's signature (star mode: CUS
    of first-appearance groups pairwise disjoint)."""
    violations: list[str] = []
    prev_sig: dict[str, USS] = {}
    seen: set[str] = set()
    for rel in sorted(releases, key=lambda r: r.release_index):
        for group in rel.groups:
            values = group.values
            if len(group.members) < m:
                violations.append(f"release {rel.release_index} group "
                                  f"{group.gid}: fewer than {m} members")
            if len(set(values)) != len(values):
                violations.append(f"release {rel.release_index} group "
                                  f"{group.gid}: duplicate sensitive values")
            first_timer = any(not mm.counterfeit and mm.rid not in seen
                              for mm in group.members)
            if star and first_timer:
                sets = [model.cus_of(v) for v in values]
                if any(sets[i] & sets[j]
                       for i in range(len(sets))
                       for j in range(i + 1, len(sets))):
                    violations.append(
                        f"release {rel.release_index} group {group.gid}: "
                        f"first-release CUS not pairwise disjoint")
            sig = uss_of(values, model)
            for member in group.members:
                if member.counterfeit:
                    continue
                old = prev_sig.get(member.rid)
                if old is not None and not is_legal_update_instance(values, old):
                    violations.append(
                        f"release {rel.release_index} group {group.gid}: "
                        f"candidate set not a legal update instance of "
                        f"{member.rid!r}'s previous signature")
            for member in group.members:
                if not member.counterfeit:
                    prev_sig[member.rid] = sig
                    seen.add(member.rid)
    return (not violations, violations)
