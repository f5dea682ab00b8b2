"""Command-line front end.

Exit codes: 0 success, 1 usage, 2 validation failure, 3 infeasible
(including inconsistent histories), 4 enumeration cap exceeded.
"""

from __future__ import annotations

import argparse
import sys
from fractions import Fraction
from pathlib import Path

from .baselines import (MInvarianceState, count_vulnerable,
                        publish_l_diversity, publish_m_invariance)
from .engine import EngineState, publish, verify_m_distinct
from .errors import (CapExceededError, InfeasibilityError, MDistinctError,
                     ValidationError)
from .evaluation import run_experiment
from .fileio import (HistoryStore, load_experiment_config,
                     load_external_tables, load_microdata, load_update_model,
                     infer_schema, widen_schema, write_report_files,
                     write_risks)
from .sug import attack_release_sequence

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3
EXIT_CAP = 4


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; we reserve 2 for validation."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mdistinct",
                     description="m-Distinct republication of dynamic "
                                 "microdata with sensitive-value updates")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("publish", help="publish the next release of a history")
    p.add_argument("--microdata", required=True, type=Path)
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--history", required=True, type=Path)
    p.add_argument("--m", required=True, type=int)
    p.add_argument("--star", action="store_true",
                   help="require disjoint CUS in first-appearance groups")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_publish)

    p = sub.add_parser("attack", help="compute disclosure risks for a history")
    p.add_argument("--history", required=True, type=Path)
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--et", type=Path, default=None,
                   help="directory of et_<i>.csv external-knowledge tables "
                        "(default: the stored microdata snapshots)")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("verify", help="check a history satisfies m-Distinct")
    p.add_argument("--history", required=True, type=Path)
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--m", required=True, type=int)
    p.add_argument("--star", action="store_true")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="run an end-to-end experiment")
    p.add_argument("--config", required=True, type=Path)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("baseline", help="publish with a comparison scheme")
    p.add_argument("--kind", required=True, choices=["ldiv", "minv"])
    p.add_argument("--microdata", required=True, type=Path)
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--history", required=True, type=Path)
    p.add_argument("--m", required=True, type=int)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_baseline)
    return parser


def _open_history(store: HistoryStore, args, mode: str,
                  model) -> tuple:
    """Schema + mode/m consistency for a publish-like command.

    Later snapshots may drift outside the first snapshot's numeric bounds,
    so the stored schema is widened (and rewritten) as needed; published
    regions use absolute coordinates and stay valid.
    """
    observed = infer_schema(args.microdata, model)
    if store.has_schema():
        schema = store.read_schema()
        meta = store.read_meta()
        if int(meta["m"]) != args.m or meta["mode"] != mode:
            raise ValidationError(
                f"history {store.path} was built with m={meta['m']} "
                f"mode={meta['mode']}; got m={args.m} mode={mode}")
        widened = widen_schema(schema, observed)
        if widened is not schema:
            store.write_schema(widened)
            schema = widened
    else:
        schema = observed
        store.write_schema(schema)
        store.write_meta({"seed": str(args.seed), "m": str(args.m),
                          "mode": mode})
    return schema


def cmd_publish(args) -> int:
    model = load_update_model(args.model)
    store = HistoryStore(args.history)
    mode = "m_distinct_star" if args.star else "m_distinct"
    with store.lock():
        schema = _open_history(store, args, mode, model)
        records = load_microdata(args.microdata, schema)
        state = store.replay_state(model, args.m, mode)
        release, state = publish(records, state, model, schema,
                                 seed=args.seed)
        store.write_release(release, schema)
        store.write_actuals(release.release_index, schema, records)
    counterfeits = sum(release.counterfeit_stats.values())
    print(f"release {release.release_index}: {len(release.groups)} groups, "
          f"{len(records)} records, {counterfeits} counterfeits")
    return EXIT_OK


def cmd_attack(args) -> int:
    model = load_update_model(args.model)
    store = HistoryStore(args.history)
    schema = store.read_schema()
    releases = store.read_releases(schema)
    if not releases:
        raise ValidationError(f"history {store.path} has no releases")
    histories = store.histories(schema)
    if args.et is not None:
        et = load_external_tables(args.et, schema)
    else:
        et = store.external_tables(schema)
    reports = attack_release_sequence(releases, et, model, histories, schema)
    write_risks(store.path / "risks.csv", reports)
    vulnerable = count_vulnerable(reports)
    worst = max((r.max_risk for r in reports), default=Fraction(0))
    print(f"{len(reports)} records attacked; max risk "
          f"{worst.numerator}/{worst.denominator}; {vulnerable} fully "
          f"disclosed record versions")
    return EXIT_OK


def cmd_verify(args) -> int:
    model = load_update_model(args.model)
    store = HistoryStore(args.history)
    schema = store.read_schema()
    releases = store.read_releases(schema)
    if not releases:
        raise ValidationError(f"history {store.path} has no releases")
    ok, violations = verify_m_distinct(releases, model, args.m,
                                       star=args.star)
    if ok:
        print(f"OK: {len(releases)} releases satisfy "
              f"{args.m}-distinct{'*' if args.star else ''}")
        return EXIT_OK
    for line in violations:
        print(line, file=sys.stderr)
    return EXIT_VALIDATION


def cmd_simulate(args) -> int:
    config, out_dir = load_experiment_config(args.config)
    report = run_experiment(config)
    write_report_files(out_dir, report)
    for theta in config.thetas:
        try:
            med = report.pooled_median(theta)
        except KeyError:
            print(f"theta={theta}: no queries evaluated")
            continue
        print(f"theta={theta}: median relative error {float(med):.4f}")
    print(f"verify {'passed' if report.verify_ok else 'FAILED'}; "
          f"{report.vulnerable} fully disclosed record versions; "
          f"report in {out_dir}")
    engine = config.publisher in ("m_distinct", "m_distinct_star")
    if not report.published or not engine:
        return EXIT_OK
    return EXIT_OK if report.verify_ok else EXIT_VALIDATION


def _replay_minv(store: HistoryStore, schema, m: int) -> MInvarianceState:
    state = MInvarianceState(m)
    meta = store.read_meta()
    state.invalidated_total = int(meta.get("invalidated_total", "0"))
    for i in store.release_indices():
        release = store.read_release(i, schema)
        for group in release.groups:
            valueset = frozenset(group.values)
            for member in group.members:
                if not member.counterfeit:
                    state.signatures[member.rid] = valueset
        state.release_count = i
    return state


def cmd_baseline(args) -> int:
    model = load_update_model(args.model)
    store = HistoryStore(args.history)
    mode = f"baseline_{args.kind}"
    with store.lock():
        schema = _open_history(store, args, mode, model)
        records = load_microdata(args.microdata, schema)
        if args.kind == "ldiv":
            index = (store.release_indices() or [0])[-1] + 1
            release = publish_l_diversity(records, args.m, schema, model,
                                          args.seed, release_index=index)
            invalidated: list[str] = []
            total = 0
        else:
            state = _replay_minv(store, schema, args.m)
            release, state, invalidated = publish_m_invariance(
                records, state, schema, model, args.seed)
            total = state.invalidated_total
            meta = store.read_meta()
            meta["invalidated_total"] = str(total)
            store.write_meta(meta)
        store.write_release(release, schema)
        store.write_actuals(release.release_index, schema, records)
    counterfeits = sum(release.counterfeit_stats.values())
    line = (f"release {release.release_index} ({args.kind}): "
            f"{len(release.groups)} groups, {counterfeits} counterfeits")
    if args.kind == "minv":
        line += (f", {len(invalidated)} invalidated this release "
                 f"({total} cumulative)")
    print(line)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CapExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except InfeasibilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except MDistinctError as exc:  # pragma: no cover - base-class safety net
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
