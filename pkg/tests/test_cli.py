import json
import shutil

import pytest

from mdistinct import cli
from mdistinct.cli import main
from mdistinct.errors import CapExceededError
from mdistinct.fileio import HistoryStore, write_csv


@pytest.fixture
def workdir(tmp_path, data_dir):
    shutil.copy(data_dir / "microdata_t1.csv", tmp_path / "t1.csv")
    shutil.copy(data_dir / "microdata_t2.csv", tmp_path / "t2.csv")
    shutil.copy(data_dir / "disease_transitions.csv", tmp_path / "model.csv")
    return tmp_path


def run(workdir, *argv):
    return main([str(a) for a in argv])


class TestPublishAttackVerify:
    def test_full_flow(self, workdir, capsys):
        hist = workdir / "hist"
        base = ["--model", workdir / "model.csv", "--history", hist]
        assert run(workdir, "publish", "--microdata", workdir / "t1.csv",
                   "--m", "2", "--seed", "3", *base) == 0
        assert "release 1: 3 groups, 6 records" in capsys.readouterr().out
        assert run(workdir, "publish", "--microdata", workdir / "t2.csv",
                   "--m", "2", "--seed", "3", *base) == 0
        assert "release 2" in capsys.readouterr().out

        assert run(workdir, "attack", *base) == 0
        out = capsys.readouterr().out
        assert "max risk 1/2" in out
        assert "0 fully disclosed" in out
        assert (hist / "risks.csv").exists()

        assert run(workdir, "verify", "--m", "2", *base) == 0
        assert "OK: 2 releases satisfy 2-distinct" in capsys.readouterr().out

    def test_attack_with_external_tables_dir(self, workdir, capsys):
        hist = workdir / "hist"
        base = ["--model", workdir / "model.csv", "--history", hist]
        run(workdir, "publish", "--microdata", workdir / "t1.csv",
            "--m", "2", "--seed", "3", *base)
        et_dir = workdir / "et"
        et_dir.mkdir()
        write_csv(et_dir / "et_1.csv",
                  [["id", "salary", "age"], ["Ken", "14", "20"],
                   ["Julia", "16", "23"]])
        assert run(workdir, "attack", "--et", et_dir, *base) == 0
        capsys.readouterr()
        # a claimed location outside the published group is an integrity error
        write_csv(et_dir / "et_1.csv",
                  [["id", "salary", "age"], ["Ken", "39", "39"]])
        assert run(workdir, "attack", "--et", et_dir, *base) == 2
        assert "error:" in capsys.readouterr().err


class TestVerifyFailure:
    def test_violations_go_to_stderr(self, workdir, disease_schema,
                                     release_one, release_two_naive,
                                     t1_records, t2_records, capsys):
        hist = workdir / "naive"
        store = HistoryStore(hist)
        store.path.mkdir()
        store.write_schema(disease_schema)
        store.write_meta({"m": "2", "mode": "m_distinct", "seed": "0"})
        store.write_release(release_one, disease_schema)
        store.write_release(release_two_naive, disease_schema)
        store.write_actuals(1, disease_schema, t1_records)
        store.write_actuals(2, disease_schema, t2_records)
        code = run(workdir, "verify", "--history", hist, "--model",
                   workdir / "model.csv", "--m", "2")
        captured = capsys.readouterr()
        assert code == 2
        assert captured.out == ""
        assert "legal update instance" in captured.err


class TestExitCodes:
    def test_usage_errors_exit_one(self, workdir):
        with pytest.raises(SystemExit) as exc:
            main(["publish", "--microdata", str(workdir / "t1.csv")])
        assert exc.value.code == 1
        with pytest.raises(SystemExit) as exc:
            main(["no-such-command"])
        assert exc.value.code == 1

    def test_missing_model_file_exits_two(self, workdir, capsys):
        code = run(workdir, "verify", "--history", workdir / "none",
                   "--model", workdir / "ghost.csv", "--m", "2")
        assert code == 2
        assert "cannot read" in capsys.readouterr().err

    def test_history_without_releases_exits_two(self, workdir, disease_schema,
                                                capsys):
        hist = workdir / "bare"
        store = HistoryStore(hist)
        store.path.mkdir()
        store.write_schema(disease_schema)
        code = run(workdir, "attack", "--history", hist, "--model",
                   workdir / "model.csv")
        assert code == 2
        assert "no releases" in capsys.readouterr().err

    def test_mismatched_parameters_exit_two(self, workdir, capsys):
        hist = workdir / "hist"
        base = ["--model", workdir / "model.csv", "--history", hist]
        run(workdir, "publish", "--microdata", workdir / "t1.csv",
            "--m", "2", *base)
        capsys.readouterr()
        code = run(workdir, "publish", "--microdata", workdir / "t2.csv",
                   "--m", "3", *base)
        assert code == 2
        assert "was built with m=2" in capsys.readouterr().err

    def test_locked_history_exits_two(self, workdir, capsys):
        hist = workdir / "hist"
        hist.mkdir()
        (hist / "lock").write_text("999")
        code = run(workdir, "publish", "--microdata", workdir / "t1.csv",
                   "--model", workdir / "model.csv", "--history", hist,
                   "--m", "2")
        assert code == 2
        assert "locked" in capsys.readouterr().err

    def test_infeasible_demand_exits_three(self, workdir, capsys):
        # only three pairwise-disjoint update scopes exist in this model,
        # so no group can hold four of them
        code = run(workdir, "publish", "--microdata", workdir / "t1.csv",
                   "--model", workdir / "model.csv", "--history",
                   workdir / "star", "--m", "4", "--star")
        assert code == 3
        assert "error:" in capsys.readouterr().err

    def test_enumeration_cap_exits_four(self, workdir, monkeypatch, capsys):
        hist = workdir / "hist"
        base = ["--model", workdir / "model.csv", "--history", hist]
        run(workdir, "publish", "--microdata", workdir / "t1.csv",
            "--m", "2", *base)
        capsys.readouterr()

        def explode(*args, **kwargs):
            raise CapExceededError("too many paths")

        monkeypatch.setattr(cli, "attack_release_sequence", explode)
        assert run(workdir, "attack", *base) == 4
        assert "too many paths" in capsys.readouterr().err


class TestBaselineCommands:
    def test_ldiv_publishes_numbered_releases(self, workdir, capsys):
        hist = workdir / "ldiv"
        base = ["--model", workdir / "model.csv", "--history", hist,
                "--m", "2"]
        assert run(workdir, "baseline", "--kind", "ldiv", "--microdata",
                   workdir / "t1.csv", *base) == 0
        assert "release 1 (ldiv)" in capsys.readouterr().out
        assert run(workdir, "baseline", "--kind", "ldiv", "--microdata",
                   workdir / "t2.csv", *base) == 0
        assert "release 2 (ldiv)" in capsys.readouterr().out

    def test_ldiv_infeasible_snapshot_exits_three(self, workdir, capsys):
        clones = workdir / "clones.csv"
        write_csv(clones, [["id", "salary", "age", "disease"]]
                  + [[f"r{i}", str(20 + i), "20", "Flu"] for i in range(4)])
        code = run(workdir, "baseline", "--kind", "ldiv", "--microdata",
                   clones, "--model", workdir / "model.csv", "--history",
                   workdir / "ldiv2", "--m", "2")
        assert code == 3
        assert "not m-eligible" in capsys.readouterr().err

    def test_minv_reports_cumulative_invalidations(self, workdir, capsys):
        hist = workdir / "minv"
        base = ["--model", workdir / "model.csv", "--history", hist,
                "--m", "2"]
        assert run(workdir, "baseline", "--kind", "minv", "--microdata",
                   workdir / "t1.csv", "--seed", "5", *base) == 0
        assert "0 invalidated" in capsys.readouterr().out
        assert run(workdir, "baseline", "--kind", "minv", "--microdata",
                   workdir / "t2.csv", "--seed", "5", *base) == 0
        assert "3 invalidated this release (3 cumulative)" in \
            capsys.readouterr().out

    def test_baseline_history_never_mixes_with_engine(self, workdir, capsys):
        hist = workdir / "hist"
        run(workdir, "publish", "--microdata", workdir / "t1.csv",
            "--model", workdir / "model.csv", "--history", hist, "--m", "2")
        capsys.readouterr()
        code = run(workdir, "baseline", "--kind", "ldiv", "--microdata",
                   workdir / "t2.csv", "--model", workdir / "model.csv",
                   "--history", hist, "--m", "2")
        assert code == 2
        assert "mode=m_distinct" in capsys.readouterr().err


class TestSimulate:
    CONFIG = dict(publisher="m_distinct", m=2, d=5, n_records=40,
                  n_releases=2, inserts=6, deletes=3, internal_updates=8,
                  thetas=[0.5], n_queries=30, seed=11, sensitive_size=10)

    def _write_config(self, path, out_dir):
        path.write_text(json.dumps({**self.CONFIG, "out_dir": str(out_dir)}))

    def test_writes_reports_and_exits_zero(self, workdir, capsys):
        config = workdir / "config.json"
        out_dir = workdir / "out"
        self._write_config(config, out_dir)
        assert run(workdir, "simulate", "--config", config) == 0
        out = capsys.readouterr().out
        assert "median relative error" in out
        assert "verify passed" in out
        for name in ("report.csv", "summary.csv", "timings.csv"):
            assert (out_dir / name).exists()

    def test_reruns_are_byte_identical(self, workdir):
        config = workdir / "config.json"
        self._write_config(config, workdir / "out1")
        run(workdir, "simulate", "--config", config)
        self._write_config(config, workdir / "out2")
        run(workdir, "simulate", "--config", config)
        for name in ("report.csv", "summary.csv"):
            assert (workdir / "out1" / name).read_bytes() == \
                (workdir / "out2" / name).read_bytes()

    def test_bad_config_exits_two(self, workdir, capsys):
        config = workdir / "config.json"
        config.write_text('{"publisher": "mystery"}')
        assert run(workdir, "simulate", "--config", config) == 2
        assert "unknown publisher" in capsys.readouterr().err
