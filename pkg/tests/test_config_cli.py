import csv
import json
from pathlib import Path

import pytest

from aris_isac import cli
from aris_isac.config import SpecError, dump_resolved, load_spec, spec_from_text

DATA = Path(__file__).parent / "data"
TINY = str(DATA / "tiny.yaml")

BASE = """scenario:
  n_bs: 4
  n_users: 2
  n_ris: 8
sweep:
  parameter: p_bs_dbm
  values: [40]
"""


def read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def numeric(rows):
    return [{k: v for k, v in r.items() if k != "wall_ms"} for r in rows]


class TestSpec:
    def test_defaults_match_golden_file(self):
        got = dump_resolved(load_spec(DATA / "minimal.yaml"))
        assert got == (DATA / "default_resolved.yaml").read_text()

    def test_resolved_round_trip(self):
        spec = load_spec(TINY)
        again = spec_from_text(dump_resolved(spec))
        assert again == spec

    def test_point_scenario_applies_sweep_value(self):
        spec = spec_from_text(BASE.replace("values: [40]", "values: [30, 44]"))
        assert spec.point_scenario(44.0).p_bs_dbm == 44.0
        assert spec.point_scenario(30.0).system_config().p_bs == pytest.approx(1.0)

    def test_integer_sweep_parameter(self):
        spec = spec_from_text(BASE.replace("parameter: p_bs_dbm", "parameter: n_ris").replace("[40]", "[8, 16]"))
        assert spec.point_scenario(16).system_config().n_ris == 16

    def test_seeds(self):
        spec = spec_from_text(BASE + "n_seeds: 3\nseed: 5\n")
        assert spec.seeds() == [5, 6, 7]

    @pytest.mark.parametrize("edit, field, line", [
        (lambda t: t.replace("  n_ris: 8\n", ""), "scenario.n_ris", 1),
        (lambda t: t.replace("n_bs: 4", "n_bs: 0"), "scenario.n_bs", 2),
        (lambda t: t.replace("n_bs: 4", "n_bs: four"), "scenario.n_bs", 2),
        (lambda t: t.replace("n_bs: 4", "n_bs: 4.5"), "scenario.n_bs", 2),
        (lambda t: t.replace("parameter: p_bs_dbm", "parameter: colour"), "sweep.parameter", 6),
        (lambda t: t.replace("values: [40]", "values: []"), "sweep.values", 7),
        (lambda t: t + "extra: 1\n", "extra", 8),
        (lambda t: t + "modes: [semi]\n", "modes[0]", 8),
        (lambda t: t + "n_seeds: 0\n", "n_seeds", 8),
        (lambda t: t.replace("  n_ris: 8\n", "  n_ris: 8\n  noise_dbm: -500\n"), "scenario.noise_dbm", 5),
    ])
    def test_errors_name_field_and_line(self, edit, field, line):
        with pytest.raises(SpecError) as exc:
            spec_from_text(edit(BASE))
        assert field in str(exc.value)
        assert exc.value.line == line
        assert str(exc.value).startswith(f"line {line}:")

    @pytest.mark.parametrize("text", ["- 1\n- 2\n", "scenario: [\n", ""])
    def test_malformed_documents(self, text):
        with pytest.raises(SpecError):
            spec_from_text(text)


class TestRun:
    def test_writes_expected_csv(self, tmp_path):
        out = tmp_path / "r.csv"
        assert cli.main(["run", TINY, "--out", str(out)]) == 0
        rows = read(out)
        assert list(rows[0]) == list(cli.COLUMNS)
        assert len(rows) == 4
        assert [r["mode"] for r in rows] == ["active_isac"] * 2 + ["passive_isac"] * 2
        assert [r["seed"] for r in rows] == ["7", "8", "7", "8"]
        assert all(r["status"] == "ok" for r in rows)
        assert all(float(r["min_sinr_margin_db"]) >= -1e-5 for r in rows)

    def test_bit_identical_reruns(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        cli.main(["run", TINY, "--out", str(a)])
        cli.main(["run", TINY, "--out", str(b)])
        assert numeric(read(a)) == numeric(read(b))

    def test_parallel_matches_serial(self, tmp_path):
        spec = load_spec(TINY)
        serial = cli.run(spec, tmp_path / "s.csv", jobs=1)
        parallel = cli.run(spec, tmp_path / "p.csv", jobs=2)
        assert numeric(read(tmp_path / "s.csv")) == numeric(read(tmp_path / "p.csv"))
        assert len(serial) == len(parallel)

    def test_seed_override(self, tmp_path):
        out = tmp_path / "r.csv"
        cli.main(["run", TINY, "--out", str(out), "--seed", "100"])
        assert {r["seed"] for r in read(out)} == {"100", "101"}

    def test_infeasible_point_recorded(self, tmp_path):
        spec = tmp_path / "s.yaml"
        spec.write_text(BASE.replace("  n_ris: 8\n", "  n_ris: 8\n  gamma_db: 150\n"))
        out = tmp_path / "r.csv"
        assert cli.main(["run", str(spec), "--out", str(out)]) == 0
        row = read(out)[0]
        assert row["status"] == "infeasible" and row["gamma_r_db"] == "nan"

    def test_strict_flags_numerical_failures(self, tmp_path, monkeypatch):
        def broken(task):
            row = {c: 0 for c in cli.COLUMNS}
            row.update(mode=task.mode.value, sweep_param="p_bs_dbm", status=cli.STATUS_FAILURE)
            return row
        monkeypatch.setattr(cli, "run_point", broken)
        out = str(tmp_path / "r.csv")
        assert cli.main(["run", TINY, "--out", out]) == 0
        assert cli.main(["run", TINY, "--out", out, "--strict"]) == 1

    def test_bad_spec_exit_code(self, tmp_path, capsys):
        spec = tmp_path / "bad.yaml"
        spec.write_text(BASE.replace("n_bs: 4", "n_bs: -1"))
        assert cli.main(["run", str(spec)]) == 2
        assert "scenario.n_bs" in capsys.readouterr().err
        assert cli.main(["run", str(tmp_path / "missing.yaml")]) == 2


class TestValidateAndOracle:
    def test_validate_dumps_resolved(self, capsys):
        assert cli.main(["validate", str(DATA / "minimal.yaml"), "--no-feasibility"]) == 0
        assert capsys.readouterr().out == (DATA / "default_resolved.yaml").read_text()

    def test_validate_feasibility_check(self, tmp_path, capsys):
        spec = tmp_path / "s.yaml"
        spec.write_text(BASE.replace("  n_ris: 8\n", "  n_ris: 8\n  gamma_db: 150\n"))
        assert cli.main(["validate", str(spec)]) == 1
        assert "infeasible" in capsys.readouterr().err
        assert cli.main(["validate", TINY]) == 0

    def test_oracle_report(self, tmp_path):
        out = tmp_path / "o.json"
        assert cli.main(["oracle", TINY, "--samples", "50000", "--out", str(out)]) == 0
        rep = json.loads(out.read_text())
        assert all(entry["agrees"] for entry in rep["mc"].values())
        assert min(v for k, v in rep["surrogate"].items() if not k.startswith("lam") and k != "max_eig_j") >= -1e-9
        assert rep["certificate"]["improving_fraction"] <= 0.05
