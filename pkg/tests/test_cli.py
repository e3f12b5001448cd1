import asyncio
import json

import numpy as np
import pytest
from matplotlib.figure import Figure

from core.errors import ConfigError, OutputError
from core.export import ReportWriter, csv_text, export, json_text, parse_csv, svg_text
from core.models import ReportBundle
from core.orchestration import build_config, load_config
from main import build_parser, main

DRIFT = ["--family", "drift", "--xi", repr(np.pi / 12), "--eta", repr(np.pi / 3)]


def run(argv):
    return asyncio.run(main(argv))


def test_csv_text():
    rows = [["name", "value", "flag"], ["a", 0.1, True], ["b", 3, False]]
    text = csv_text(rows)
    assert text == "name,value,flag\na,0.1,true\nb,3,false\n"
    assert parse_csv(text) == rows


def test_json_text_is_canonical():
    data = {"b": np.float64(0.5), "a": [1 + 2j, np.int64(3)]}
    text = json_text(data)
    assert text.endswith("\n")
    assert list(json.loads(text)) == ["a", "b"]
    assert json.loads(text)["a"] == [[1.0, 2.0], 3]


def test_svg_is_reproducible():
    fig = Figure()
    fig.add_subplot(1, 1, 1).plot([0, 1], [1, 0])
    first, second = svg_text(fig, "salt"), svg_text(fig, "salt")
    assert first == second
    assert "<svg" in first
    assert "dc:date" not in first


def test_writer_writes_bundle(tmp_path):
    fig = Figure()
    fig.add_subplot(1, 1, 1).plot([0, 1], [0, 1])
    bundle = ReportBundle(report={"x": 1}, tables={"t2": [["a"], [1]], "t1": [["b"], [2]]}, figures={"f": fig})
    written = asyncio.run(ReportWriter(tmp_path, "salt").write_bundle(bundle)).written
    assert written == ["report.json", "t1.csv", "t2.csv", "f.svg"]
    assert json.loads((tmp_path / "report.json").read_text()) == {"x": 1}
    assert (tmp_path / "t1.csv").read_text() == "b\n2\n"


def test_export_selected_formats(tmp_path):
    fig = Figure()
    fig.add_subplot(1, 1, 1).plot([0, 1], [0, 1])
    bundle = ReportBundle(report={"x": 1}, tables={"t": [["a"], [1]]}, figures={"f": fig})
    written = asyncio.run(export(bundle, tmp_path, formats=["csv"], hashsalt="salt")).written
    assert written == ["t.csv"]
    assert sorted(p.name for p in tmp_path.iterdir()) == ["t.csv"]
    with pytest.raises(ConfigError):
        asyncio.run(export(bundle, tmp_path, formats=["png"]))


def test_config_file_wins_over_flags(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps({"command": "spectra", "sizes": {"M": 8}}))
    cfg = asyncio.run(load_config(path, {"command": "hull", "sizes": {"M": 16, "grid": 5}}))
    assert cfg.command == "spectra"
    assert cfg.sizes.M == 8 and cfg.sizes.grid == 5


def test_bad_configs(tmp_path):
    with pytest.raises(ConfigError):
        build_config({"unknown": 1})
    with pytest.raises(ConfigError):
        build_config({"sizes": {"M": 1}})
    with pytest.raises(ConfigError):
        asyncio.run(load_config(tmp_path / "missing.json"))


def test_parser_rejects_unknown_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["frobnicate"])


def test_figures_command(tmp_settings, tmp_path):
    out = tmp_path / "figs"
    assert run(["figures", "--theta", "1.0", "--g", "0.4", "--out", str(out)]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["delta_region.svg", "form_region.svg", "region_boundaries.csv", "report.json"]
    report = json.loads((out / "report.json").read_text())
    assert report["cubic_defined"] and report["theta"] == 1.0


def test_outputs_are_byte_identical(tmp_settings, tmp_path):
    args = ["certify", "--family", "drift", "--xi", "0.26", "--eta", "1.05", "--eps", "0.1", "--x-samples", "512"]
    assert run(args + ["--out", str(tmp_path / "a")]) == 0
    assert run(args + ["--out", str(tmp_path / "b")]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "certificate.svg" in files and "gaps.csv" in files
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    report = json.loads((tmp_path / "a" / "report.json").read_text())
    assert report["certificate"]["splits"] is True


def test_spectra_command(tmp_settings, tmp_path):
    out = tmp_path / "spec"
    assert run(["spectra", *DRIFT, "--phases", "uniform", "--eps", "0.2", "--M", "8", "--grid", "9", "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["polar_residual"] <= 1e-12
    assert report["spectral_radius"] <= 1.0 + 1e-12
    assert report["pseudospectrum"]["disc_consistent"]
    assert (out / "pseudospectrum.csv").exists()


def test_walk_command(tmp_settings, tmp_path):
    out = tmp_path / "walk"
    assert run(["walk", *DRIFT, "--phases", "torus", "--depth", "7", "--n-max", "5", "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["dilation_deviation"] < 1e-12
    assert report["escape_deviation"] < 1e-12


def test_exit_codes(tmp_settings, tmp_path):
    out = str(tmp_path / "x")
    # family coins need both angles
    assert run(["certify", "--family", "drift", "--xi", "0.3", "--out", out]) == 2
    assert run(["certify", *DRIFT, "--g-check", "0.5", "--out", out]) == 2
    assert run(["figures", "--out", out]) == 2


def test_selftest_command(tmp_settings, tmp_path):
    out = tmp_path / "selftest"
    assert run(["selftest", "--quick", "--checks", "special", "--out", str(out)]) == 0
    report = json.loads((out / "acceptance.json").read_text())
    assert report["quick"] and report["results"][0]["name"] == "special"
    assert (out / "acceptance.csv").read_text().startswith("name,passed,metric,threshold\n")


def test_selftest_failure_exit_code(tmp_settings, tmp_path, monkeypatch):
    from core import acceptance
    from core.models import AcceptanceResult

    monkeypatch.setitem(
        acceptance.CHECKS, "special",
        lambda sizes: AcceptanceResult(name="special", passed=False, metric=1.0, threshold=0.0),
    )
    assert run(["run", "selftest", "--quick", "--checks", "special", "--out", str(tmp_path / "st")]) == 4


def test_unwritable_output_exit_code(tmp_settings, tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("not a directory")
    out = str(blocker / "report")
    assert run(["figures", "--theta", "1.0", "--g", "0.4", "--out", out]) == 1


def test_writer_wraps_os_errors(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    with pytest.raises(OutputError):
        asyncio.run(ReportWriter(blocker / "sub", "salt").write_json("report.json", {}))


def test_spectra_dump_matrix(tmp_settings, tmp_path):
    out = tmp_path / "dump"
    assert run(["spectra", *DRIFT, "--phases", "torus", "--M", "4", "--dump-matrix", "--out", str(out)]) == 0
    rows = parse_csv((out / "matrix_T.csv").read_text())
    assert rows[0] == ["row", "col", "re", "im"]
    entries = rows[1:]
    assert 0 < len(entries) <= 2 * 8
    cols = [col for _, col, _, _ in entries]
    assert all(cols.count(c) <= 2 for c in set(cols))
    assert all(0 <= r < 8 and 0 <= c < 8 for r, c, _, _ in entries)
    assert (out / "matrix_V.csv").exists()
    assert not (tmp_path / "plain").exists()
    assert run(["spectra", *DRIFT, "--M", "4", "--out", str(tmp_path / "plain")]) == 0
    assert not (tmp_path / "plain" / "matrix_T.csv").exists()
