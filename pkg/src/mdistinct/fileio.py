"""CSV/JSON persistence and the synthetic evolving-population workload.

A history directory holds one republication sequence:

    meta.csv              key,value pairs (seed, m, mode)
    schema.json           the QI schema, written on the first publish
    release_<i>.csv       gid,id,<qi regions...>,sensitive,is_counterfeit
    counterfeits_<i>.csv  gid,count (non-zero groups only)
    microdata_<i>.csv     the raw snapshot behind release i (attack actuals)
    risks.csv             written by the attack command
    lock                  advisory lock, held while writing

Numeric region cells serialize as "lo..hi"; categorical cells as the
hierarchy node name.
"""

from __future__ import annotations

import csv
import json
import os
import random
from contextlib import contextmanager
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .engine import EngineState, PrevInfo
from .errors import ValidationError
from .evaluation import ExperimentConfig, RunReport
from .model import (AttributeSchema, ExternalKnowledgeTable, Hierarchy,
                    Member, PublishedRelease, QIGroup, Record, TableSchema)
from .sug import RiskReport
from .updates import UpdateModel, uss_of, validate_update_model

__all__ = [
    "load_microdata",
    "write_microdata",
    "infer_schema",
    "widen_schema",
    "load_update_model",
    "write_update_model",
    "HistoryStore",
    "load_external_tables",
    "write_risks",
    "write_csv",
    "load_experiment_config",
    "synthetic_schema",
    "initial_population",
    "apply_external_updates",
    "synthesize_internal_updates",
]


def write_csv(path: Path | str, rows: Iterable[Sequence[str]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerows(rows)


def _read_csv(path: Path | str) -> list[list[str]]:
    try:
        with open(path, newline="") as fh:
            return list(csv.reader(fh))
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from None


# ---------------------------------------------------------------------------
# microdata


def load_microdata(path: Path | str, schema: TableSchema) -> list[Record]:
    """Read id,<qi...>,<sensitive> rows; errors carry 1-based line numbers."""
    rows = _read_csv(path)
    if not rows:
        raise ValidationError(f"{path}: empty file")
    expected = ["id", *schema.qi_names, schema.sensitive_name]
    if rows[0] != expected:
        raise ValidationError(f"{path} line 1: header {rows[0]!r} does not "
                              f"match schema {expected!r}")
    out: list[Record] = []
    seen: set[str] = set()
    for lineno, row in enumerate(rows[1:], start=2):
        where = f"{path} line {lineno}: "
        if len(row) != len(expected):
            raise ValidationError(f"{where}expected {len(expected)} fields, "
                                  f"got {len(row)}")
        rid, *qi_raw, sensitive = row
        if rid in seen:
            raise ValidationError(f"{where}duplicate id {rid!r}")
        seen.add(rid)
        qi = []
        for attr, text in zip(schema.qi, qi_raw):
            if attr.kind == "numeric":
                try:
                    qi.append(int(text))
                except ValueError:
                    raise ValidationError(
                        f"{where}{attr.name}={text!r} is not an integer"
                    ) from None
            else:
                qi.append(text)
        rec = Record(rid, tuple(qi), sensitive)
        schema.validate_record(rec, where=where)
        out.append(rec)
    return out


def write_microdata(path: Path | str, schema: TableSchema,
                    records: Sequence[Record]) -> None:
    rows = [["id", *schema.qi_names, schema.sensitive_name]]
    for rec in sorted(records, key=lambda r: r.id):
        rows.append([rec.id, *[str(v) for v in rec.qi], rec.sensitive])
    write_csv(path, rows)


def widen_schema(stored: TableSchema, observed: TableSchema) -> TableSchema:
    """Grow `stored`'s numeric bounds to cover `observed` (same attributes,
    same kinds).  Returns `stored` itself when nothing needs to grow; new
    categorical values are an error, since published regions name nodes of
    the stored hierarchy."""
    if [(a.name, a.kind) for a in stored.qi] != \
            [(a.name, a.kind) for a in observed.qi]:
        raise ValidationError(
            f"microdata columns {[a.name for a in observed.qi]} do not match "
            f"the history schema {[a.name for a in stored.qi]}")
    changed = False
    attrs: list[AttributeSchema] = []
    for s, o in zip(stored.qi, observed.qi):
        if s.kind == "numeric" and (o.lo < s.lo or o.hi > s.hi):
            attrs.append(AttributeSchema.numeric(s.name, min(s.lo, o.lo),
                                                 max(s.hi, o.hi)))
            changed = True
            continue
        if s.kind == "categorical":
            unknown = set(o.hierarchy.leaves) - set(s.hierarchy.leaves)
            if unknown:
                raise ValidationError(
                    f"{s.name} has values {sorted(unknown)} missing from the "
                    f"history schema; extend schema.json by hand")
        attrs.append(s)
    if not changed:
        return stored
    return TableSchema(tuple(attrs), stored.sensitive_name,
                       stored.sensitive_domain)


def infer_schema(path: Path | str, model: UpdateModel) -> TableSchema:
    """Derive a QI schema from a microdata file: integer columns become
    numeric attributes with data-driven bounds, everything else becomes a
    flat categorical hierarchy over the observed values."""
    rows = _read_csv(path)
    if not rows or len(rows[0]) < 3:
        raise ValidationError(f"{path}: need at least id, one QI column and "
                              f"a sensitive column")
    header = rows[0]
    if header[0] != "id":
        raise ValidationError(f"{path} line 1: first column must be 'id'")
    body = rows[1:]
    if not body:
        raise ValidationError(f"{path}: no records")
    attrs: list[AttributeSchema] = []
    for j, name in enumerate(header[1:-1], start=1):
        col = [row[j] for row in body]
        try:
            ints = [int(v) for v in col]
        except ValueError:
            leaves = sorted(set(col))
            attrs.append(AttributeSchema.categorical(
                name, Hierarchy.flat(f"any_{name}", leaves)))
        else:
            attrs.append(AttributeSchema.numeric(name, min(ints), max(ints)))
    return TableSchema(tuple(attrs), header[-1],
                       tuple(sorted(model.sensitive_domain)))


# ---------------------------------------------------------------------------
# update model files: value,successor,probability


def load_update_model(path: Path | str,
                      domain: Sequence[str] | None = None) -> UpdateModel:
    """Read transition rows.  A blank probability means "uniform over this
    value's successors" and must then be blank on all of the value's rows.
    Probabilities parse as exact rationals: "1/3", "0.25" or "1"."""
    rows = _read_csv(path)
    if not rows or rows[0] != ["value", "successor", "probability"]:
        raise ValidationError(f"{path} line 1: header must be "
                              f"value,successor,probability")
    succ: dict[str, dict[str, Fraction | None]] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        where = f"{path} line {lineno}: "
        if len(row) != 3:
            raise ValidationError(f"{where}expected 3 fields, got {len(row)}")
        a, b, text = row
        if not a or not b:
            raise ValidationError(f"{where}blank value or successor")
        prob: Fraction | None = None
        if text.strip():
            try:
                prob = Fraction(text.strip())
            except (ValueError, ZeroDivisionError):
                raise ValidationError(
                    f"{where}bad probability {text!r}") from None
        entry = succ.setdefault(a, {})
        if b in entry:
            raise ValidationError(f"{where}duplicate transition {a!r}->{b!r}")
        entry[b] = prob
    cus: dict[str, frozenset[str]] = {}
    p_trans: dict[tuple[str, str], Fraction] = {}
    for a, targets in succ.items():
        blanks = [p is None for p in targets.values()]
        if any(blanks) and not all(blanks):
            raise ValidationError(
                f"{path}: value {a!r} mixes blank (uniform) and explicit "
                f"probabilities")
        cus[a] = frozenset(targets)
        if all(blanks):
            share = Fraction(1, len(targets))
            for b in targets:
                p_trans[(a, b)] = share
        else:
            for b, p in targets.items():
                p_trans[(a, b)] = p
    if domain is None:
        names = set(succ)
        for targets in succ.values():
            names.update(targets)
        domain = sorted(names)
    model = UpdateModel(tuple(domain), cus, p_trans)
    problems = validate_update_model(model)
    if problems:
        raise ValidationError(f"{path}: invalid update model:\n  "
                              + "\n  ".join(problems))
    return model


def write_update_model(path: Path | str, model: UpdateModel) -> None:
    rows = [["value", "successor", "probability"]]
    for a in sorted(model.cus):
        for b in sorted(model.cus[a]):
            p = model.prob(a, b)
            rows.append([a, b, f"{p.numerator}/{p.denominator}"])
    write_csv(path, rows)


# ---------------------------------------------------------------------------
# schema persistence


def _schema_to_json(schema: TableSchema) -> dict:
    def tree(h: Hierarchy, node: str):
        kids = h._children[node]
        return {k: tree(h, k) for k in kids} if kids else None

    qi = []
    for attr in schema.qi:
        if attr.kind == "numeric":
            qi.append({"name": attr.name, "kind": "numeric",
                       "lo": attr.lo, "hi": attr.hi})
        else:
            h = attr.hierarchy
            qi.append({"name": attr.name, "kind": "categorical",
                       "root": h.root, "tree": tree(h, h.root)})
    return {"qi": qi, "sensitive_name": schema.sensitive_name,
            "sensitive_domain": list(schema.sensitive_domain)}


def _schema_from_json(data: dict) -> TableSchema:
    attrs = []
    for entry in data["qi"]:
        if entry["kind"] == "numeric":
            attrs.append(AttributeSchema.numeric(entry["name"], entry["lo"],
                                                 entry["hi"]))
        else:
            attrs.append(AttributeSchema.categorical(
                entry["name"], Hierarchy(entry["root"], entry["tree"])))
    return TableSchema(tuple(attrs), data["sensitive_name"],
                       tuple(data["sensitive_domain"]))


# ---------------------------------------------------------------------------
# history directories


def _cell_to_text(attr: AttributeSchema, cell) -> str:
    if attr.kind == "numeric":
        lo, hi = cell
        return f"{lo}..{hi}"
    if ".." in cell:
        raise ValidationError(f"category name {cell!r} contains '..'")
    return cell


def _cell_from_text(attr: AttributeSchema, text: str):
    if attr.kind == "numeric":
        lo, _, hi = text.partition("..")
        try:
            return (int(lo), int(hi))
        except ValueError:
            raise ValidationError(f"bad numeric region {text!r}") from None
    if text not in attr.hierarchy:
        raise ValidationError(f"unknown {attr.name} node {text!r}")
    return text


class HistoryStore:
    """One directory holding a whole republication sequence."""

    def __init__(self, path: Path | str):
        self.path = Path(path)

    @contextmanager
    def lock(self):
        self.path.mkdir(parents=True, exist_ok=True)
        lockfile = self.path / "lock"
        try:
            fd = os.open(lockfile, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ValidationError(
                f"history {self.path} is locked; remove {lockfile} if no "
                f"other publish is running") from None
        try:
            os.write(fd, str(os.getpid()).encode())
            os.close(fd)
            yield self
        finally:
            lockfile.unlink(missing_ok=True)

    # --- meta / schema

    def write_meta(self, meta: Mapping[str, str]) -> None:
        rows = [["key", "value"]]
        rows += [[k, str(meta[k])] for k in sorted(meta)]
        write_csv(self.path / "meta.csv", rows)

    def read_meta(self) -> dict[str, str]:
        rows = _read_csv(self.path / "meta.csv")
        return {k: v for k, v in rows[1:]}

    def write_schema(self, schema: TableSchema) -> None:
        with open(self.path / "schema.json", "w") as fh:
            json.dump(_schema_to_json(schema), fh, indent=2)
            fh.write("\n")

    def read_schema(self) -> TableSchema:
        try:
            with open(self.path / "schema.json") as fh:
                return _schema_from_json(json.load(fh))
        except OSError as exc:
            raise ValidationError(f"no schema in history {self.path}: "
                                  f"{exc.strerror}") from None

    def has_schema(self) -> bool:
        return (self.path / "schema.json").exists()

    # --- releases

    def release_indices(self) -> list[int]:
        out = []
        for p in self.path.glob("release_*.csv"):
            try:
                out.append(int(p.stem.split("_")[1]))
            except (IndexError, ValueError):
                continue
        return sorted(out)

    def write_release(self, release: PublishedRelease,
                      schema: TableSchema) -> None:
        rows = [["gid", "id", *schema.qi_names, schema.sensitive_name,
                 "is_counterfeit"]]
        for group in release.groups:
            cells = [_cell_to_text(a, c)
                     for a, c in zip(schema.qi, group.region)]
            for member in group.members:
                rows.append([str(group.gid), member.rid, *cells,
                             member.sensitive,
                             "1" if member.counterfeit else "0"])
        write_csv(self.path / f"release_{release.release_index}.csv", rows)
        cf_rows = [["gid", "count"]]
        stats = release.counterfeit_stats
        cf_rows += [[str(g), str(stats[g])] for g in sorted(stats)]
        write_csv(self.path / f"counterfeits_{release.release_index}.csv",
                  cf_rows)

    def read_release(self, index: int,
                     schema: TableSchema) -> PublishedRelease:
        path = self.path / f"release_{index}.csv"
        rows = _read_csv(path)
        expected = ["gid", "id", *schema.qi_names, schema.sensitive_name,
                    "is_counterfeit"]
        if not rows or rows[0] != expected:
            raise ValidationError(f"{path} line 1: bad header")
        groups: dict[int, tuple] = {}
        order: list[int] = []
        for lineno, row in enumerate(rows[1:], start=2):
            where = f"{path} line {lineno}: "
            if len(row) != len(expected):
                raise ValidationError(f"{where}expected {len(expected)} "
                                      f"fields, got {len(row)}")
            gid_text, rid, *rest = row
            cells_text, sensitive, cf = rest[:-2], rest[-2], rest[-1]
            try:
                gid = int(gid_text)
            except ValueError:
                raise ValidationError(f"{where}bad gid {gid_text!r}") from None
            if cf not in ("0", "1"):
                raise ValidationError(f"{where}is_counterfeit must be 0 or 1")
            region = tuple(_cell_from_text(a, t)
                           for a, t in zip(schema.qi, cells_text))
            member = Member(rid, sensitive, cf == "1")
            if gid not in groups:
                groups[gid] = (region, [member])
                order.append(gid)
            else:
                if groups[gid][0] != region:
                    raise ValidationError(f"{where}group {gid} region differs "
                                          f"between rows")
                groups[gid][1].append(member)
        return PublishedRelease(index, tuple(
            QIGroup(g, groups[g][0], tuple(groups[g][1])) for g in order))

    def read_releases(self, schema: TableSchema) -> list[PublishedRelease]:
        return [self.read_release(i, schema) for i in self.release_indices()]

    # --- actual microdata snapshots (attack ground truth)

    def write_actuals(self, index: int, schema: TableSchema,
                      records: Sequence[Record]) -> None:
        write_microdata(self.path / f"microdata_{index}.csv", schema, records)

    def read_actuals(self, index: int, schema: TableSchema) -> list[Record]:
        return load_microdata(self.path / f"microdata_{index}.csv", schema)

    def histories(self, schema: TableSchema) -> dict[str, dict[int, str]]:
        out: dict[str, dict[int, str]] = {}
        for i in self.release_indices():
            path = self.path / f"microdata_{i}.csv"
            if not path.exists():
                continue
            for rec in load_microdata(path, schema):
                out.setdefault(rec.id, {})[i] = rec.sensitive
        return out

    def external_tables(self, schema: TableSchema) -> list[ExternalKnowledgeTable]:
        out = []
        for i in self.release_indices():
            path = self.path / f"microdata_{i}.csv"
            if not path.exists():
                continue
            rows = {rec.id: rec.qi for rec in load_microdata(path, schema)}
            out.append(ExternalKnowledgeTable(i, rows))
        return out

    # --- engine state replay

    def replay_state(self, model: UpdateModel, m: int,
                     mode: str) -> EngineState:
        """Rebuild per-record publish state from the stored releases."""
        schema = self.read_schema()
        state = EngineState(m=m, mode=mode)
        for i in self.release_indices():
            release = self.read_release(i, schema)
            for group in release.groups:
                sig = uss_of(group.values, model)
                for member in group.members:
                    if not member.counterfeit:
                        state.prev[member.rid] = PrevInfo(
                            member.sensitive, sig, i)
            state.release_count = i
        return state


def load_external_tables(directory: Path | str,
                         schema: TableSchema) -> list[ExternalKnowledgeTable]:
    """Read et_<i>.csv files (columns id,<qi...>) from a directory."""
    directory = Path(directory)
    out = []
    indices = []
    for p in directory.glob("et_*.csv"):
        try:
            indices.append(int(p.stem.split("_")[1]))
        except (IndexError, ValueError):
            continue
    for i in sorted(indices):
        path = directory / f"et_{i}.csv"
        rows = _read_csv(path)
        expected = ["id", *schema.qi_names]
        if not rows or rows[0] != expected:
            raise ValidationError(f"{path} line 1: header must be "
                                  f"{','.join(expected)}")
        table: dict[str, tuple] = {}
        for lineno, row in enumerate(rows[1:], start=2):
            if len(row) != len(expected):
                raise ValidationError(f"{path} line {lineno}: expected "
                                      f"{len(expected)} fields")
            rid, *qi_raw = row
            qi = []
            for attr, text in zip(schema.qi, qi_raw):
                if attr.kind == "numeric":
                    try:
                        qi.append(int(text))
                    except ValueError:
                        raise ValidationError(
                            f"{path} line {lineno}: {attr.name}={text!r} is "
                            f"not an integer") from None
                else:
                    qi.append(text)
            table[rid] = tuple(qi)
        out.append(ExternalKnowledgeTable(i, table))
    return out


def write_risks(path: Path | str, reports: Sequence[RiskReport]) -> None:
    rows = [["id", "version", "risk_num", "risk_den", "risk_decimal"]]
    for report in sorted(reports, key=lambda r: r.record_id):
        for version, risk in zip(report.versions, report.risks):
            rows.append([report.record_id, str(version),
                         str(risk.numerator), str(risk.denominator),
                         f"{float(risk):.12g}"])
    write_csv(path, rows)


# ---------------------------------------------------------------------------
# experiment configs


def load_experiment_config(path: Path | str) -> tuple[ExperimentConfig, Path]:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: bad JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: top level must be an object")
    out_dir = Path(data.pop("out_dir", Path(path).parent))
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ValidationError(f"{path}: unknown config keys "
                              f"{sorted(unknown)}")
    if "thetas" in data:
        data["thetas"] = tuple(float(t) for t in data["thetas"])
    try:
        config = ExperimentConfig(**data)
    except TypeError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    return config, out_dir


def write_report_files(out_dir: Path | str, report: RunReport) -> None:
    """report.csv (one row per release) + summary.csv are deterministic for
    a given config; wall-clock numbers go to timings.csv on the side."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(out_dir / "report.csv", report.to_rows())
    write_csv(out_dir / "summary.csv", report.summary_rows())
    write_csv(out_dir / "timings.csv", report.timing_rows())


# ---------------------------------------------------------------------------
# synthetic workload


MARITAL_TREE = {
    "unmarried": {"never_married": None, "separated": None,
                  "divorced": None, "widowed": None},
    "married": {"civil_marriage": None, "religious_marriage": None},
}
# progression order for the evolving population (index only ever increases)
MARITAL_ORDER = ("never_married", "civil_marriage", "religious_marriage",
                 "separated", "divorced", "widowed")
EDU_LEVELS = tuple(f"edu_{i:02d}" for i in range(1, 18))
EDU_TREE = {
    "primary": {v: None for v in EDU_LEVELS[:5]},
    "secondary": {v: None for v in EDU_LEVELS[5:11]},
    "higher": {v: None for v in EDU_LEVELS[11:]},
}
QI_DRIFT_CHANCE = 0.1
AGE_CAP = 100


def synthetic_schema(cus_size: int = 10, sensitive_size: int = 50,
                     ) -> tuple[TableSchema, UpdateModel]:
    """Census-style QI schema plus a block update model: occupations fall in
    consecutive classes of `cus_size`, uniform within the class."""
    if not 1 <= cus_size <= sensitive_size:
        raise ValidationError("need 1 <= cus_size <= sensitive_size")
    occupations = [f"occ_{i:02d}" for i in range(sensitive_size)]
    blocks = [occupations[i:i + cus_size]
              for i in range(0, sensitive_size, cus_size)]
    model = UpdateModel.from_classes(blocks)
    schema = TableSchema((
        AttributeSchema.numeric("age", 1, AGE_CAP),
        AttributeSchema.categorical("gender",
                                    Hierarchy.flat("any_gender",
                                                   ["female", "male"])),
        AttributeSchema.categorical("marital",
                                    Hierarchy("any_marital", MARITAL_TREE)),
        AttributeSchema.categorical("education",
                                    Hierarchy("any_education", EDU_TREE)),
    ), "occupation", tuple(occupations))
    return schema, model


def _new_record(rid: str, schema: TableSchema, rng: random.Random) -> Record:
    age = rng.randint(1, AGE_CAP)
    gender = rng.choice(["female", "male"])
    marital = rng.choice(MARITAL_ORDER)
    education = rng.choice(EDU_LEVELS)
    occupation = rng.choice(schema.sensitive_domain)
    return Record(rid, (age, gender, marital, education), occupation)


def initial_population(n: int, schema: TableSchema, model: UpdateModel,
                       rng: random.Random) -> tuple[list[Record], int]:
    records = [_new_record(f"r{i:06d}", schema, rng) for i in range(n)]
    return records, n


def _drift_qi(rec: Record, rng: random.Random) -> Record:
    age, gender, marital, education = rec.qi
    age = min(age + 1, AGE_CAP)
    if rng.random() < QI_DRIFT_CHANCE:
        i = MARITAL_ORDER.index(marital)
        if i + 1 < len(MARITAL_ORDER):
            marital = MARITAL_ORDER[i + 1]
    if rng.random() < QI_DRIFT_CHANCE:
        i = EDU_LEVELS.index(education)
        if i + 1 < len(EDU_LEVELS):
            education = EDU_LEVELS[i + 1]
    return Record(rec.id, (age, gender, marital, education), rec.sensitive)


def apply_external_updates(records: Sequence[Record], schema: TableSchema,
                           rng: random.Random, inserts: int, deletes: int,
                           next_id: int) -> tuple[list[Record], int]:
    """Membership churn for one census step: delete some ids (never to be
    reused), then insert fresh records with new ids."""
    ordered = sorted(records, key=lambda r: r.id)
    k = min(deletes, max(len(ordered) - 1, 0))
    doomed = set(rng.sample([r.id for r in ordered], k))
    survivors = [r for r in ordered if r.id not in doomed]
    fresh = []
    for _ in range(inserts):
        fresh.append(_new_record(f"r{next_id:06d}", schema, rng))
        next_id += 1
    return survivors + fresh, next_id


def synthesize_internal_updates(records: Sequence[Record],
                                schema: TableSchema, model: UpdateModel,
                                count: int, rng: random.Random,
                                ) -> list[Record]:
    """In-place attribute churn for one census step.

    Every record ages one year (capped) and has a small chance of advancing
    marital status and education one step along their fixed progressions;
    gender never changes.  Exactly `count` records (fewer only if the
    population is smaller) then redraw their sensitive value uniformly from
    its CUS, so the new value is always reachable under the update model.
    """
    ordered = [_drift_qi(r, rng) for r in sorted(records, key=lambda r: r.id)]
    chosen = set(rng.sample([r.id for r in ordered],
                            min(count, len(ordered))))
    out = []
    for rec in ordered:
        if rec.id in chosen:
            value = rng.choice(sorted(model.cus_of(rec.sensitive)))
            rec = Record(rec.id, rec.qi, value)
        out.append(rec)
    return out
