import json
import math

import pytest

from controllers.experiment_manager import SweepRow
from services.results_writer import (
    SweepTableWriter,
    dumps_json,
    format_value,
    read_sweep_csv,
    sweep_header,
    write_json,
    write_sweep_csv,
)


def make_row(value, analytic=0.5, sim=None):
    return SweepRow(
        variable="tau_db",
        value=value,
        assoc=(0.7, 0.1, 0.2),
        analytic=analytic,
        lower=0.4,
        upper=0.6,
        ppp_limit=0.3,
        sim_mean=sim,
        sim_half_width=None if sim is None else 0.01,
    )


def test_header_is_fixed():
    assert sweep_header(2) == [
        "sweep_var",
        "sweep_value",
        "assoc_0",
        "assoc_1",
        "assoc_2",
        "cov_analytic",
        "cov_lower",
        "cov_upper",
        "cov_ppp_limit",
        "cov_sim_mean",
        "cov_sim_halfwidth",
    ]


def test_numbers_keep_full_precision():
    value = 0.1 + 0.2
    assert float(format_value(value)) == value
    assert format_value(None) == "nan"
    assert format_value(float("nan")) == "nan"


def test_csv_table_round_trip(tmp_path):
    path = tmp_path / "out" / "sweep.csv"
    rows = [make_row(-10.0, 0.8, 0.79), make_row(0.0, 0.5)]
    write_sweep_csv(path, rows, 2, {"master_seed": 9, "trials": 100})

    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "# master_seed=9, trials=100"
    assert lines[1].startswith("sweep_var,sweep_value,assoc_0")
    parsed = read_sweep_csv(path)
    assert len(parsed) == 2
    assert float(parsed[0]["cov_sim_mean"]) == 0.79
    assert math.isnan(float(parsed[1]["cov_sim_mean"]))
    assert float(parsed[1]["assoc_2"]) == 0.2


def test_rerun_is_byte_identical(tmp_path):
    rows = [make_row(v) for v in (-5.0, 0.0, 5.0)]
    write_sweep_csv(tmp_path / "a.csv", rows, 2, {"master_seed": 1})
    write_sweep_csv(tmp_path / "b.csv", rows, 2, {"master_seed": 1})
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_writer_lifecycle(tmp_path):
    writer = SweepTableWriter(2)
    with pytest.raises(RuntimeError):
        writer.append(make_row(0.0))
    writer.start(tmp_path / "x.csv")
    with pytest.raises(RuntimeError):
        writer.start(tmp_path / "y.csv")
    assert writer.current_file_path == tmp_path / "x.csv"
    writer.stop()


def test_stdout_output(capsys):
    write_sweep_csv("-", [make_row(0.0)], 2)
    out = capsys.readouterr().out
    assert out.startswith("sweep_var,")


def test_json_is_sorted_and_standard(tmp_path):
    text = dumps_json({"b": float("nan"), "a": [1.0, float("nan")]})
    assert json.loads(text) == {"a": [1.0, None], "b": None}
    assert text.index('"a"') < text.index('"b"')
    write_json(tmp_path / "r.json", {"passed": True})
    assert json.loads((tmp_path / "r.json").read_text()) == {"passed": True}
