from __future__ import annotations

import json

import pytest

from splitband.cli import CACHE_ENV, main, run_pipeline
from splitband.config import from_dict
from splitband.io import read_csv

TINY = {"n1": 6, "n2": 4, "grading": 0.6, "order": 2}


def _doc(tmp_path, **extra):
    doc = {
        "geometry": {"d": 2.0, "h": 2.3},
        "epsilons": [0.01],
        "k_grid": {"count": 16, "symmetric": True},
        "mesh": TINY,
        "bands": 4,
        "output_dir": str(tmp_path / "out"),
    }
    doc.update(extra)
    return doc


def _write(tmp_path, doc):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(doc))
    return str(p)


def test_analytic_task_writes_single_crossing(tmp_path):
    m = run_pipeline(from_dict(_doc(tmp_path, tasks=["analytic"])))
    assert m.ok
    header, rows = read_csv(tmp_path / "out" / "crossings.csv")
    assert len(rows) == 1
    assert rows[0][:2] == ["-1", "0"]
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    for rel, meta in manifest["files"].items():
        assert (tmp_path / "out" / rel).stat().st_size == meta["bytes"] > 0
    assert manifest["solver"]["lookups"] == 0


def test_study_without_crossing_fails_cleanly(tmp_path):
    m = run_pipeline(from_dict(_doc(tmp_path, geometry={"d": 2.0, "h": 1.0}, tasks=["study", "analytic"])))
    assert not m.ok
    study, analytic = m.tasks
    assert study.status == "failed" and "no eligible crossing" in study.error
    assert "opposite sign" in study.error
    # later tasks still run
    assert analytic.status == "ok"


def test_sweep_gaps_rerun_is_cached_and_identical(tmp_path, monkeypatch):
    monkeypatch.setenv(CACHE_ENV, str(tmp_path / "shared_cache"))
    cfg = from_dict(_doc(tmp_path, tasks=["sweep", "gaps"]))
    first = run_pipeline(cfg)
    assert first.ok
    out = tmp_path / "out"
    snap = {p.name: p.read_bytes() for p in out.glob("*.csv")}
    assert (tmp_path / "shared_cache").is_dir()
    assert not (out / ".cache").exists()
    second = run_pipeline(cfg)
    assert second.solver["cache_hit_rate"] == 1.0
    assert second.solver["fresh_solves"] == 0
    assert {p.name: p.read_bytes() for p in out.glob("*.csv")} == snap
    _, gaps = read_csv(out / "gaps.csv")
    assert len(gaps) == 1 and gaps[0][1] == "2"
    svg = (out / "bands_eps_0.01.svg").read_text()
    assert svg.count('class="gap"') == 1
    assert (out / "bands_eps_0.svg").read_text().count('class="gap"') == 0


def test_exit_codes(tmp_path, capsys):
    cfg = _write(tmp_path, _doc(tmp_path))
    assert main(["analytic", "--config", cfg]) == 0
    assert main(["analytic", "--config", cfg, "--d", "4"]) == 2
    assert "d < d_plus violated" in capsys.readouterr().err
    assert main(["study", "--config", cfg, "--h", "1.0"]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text('{"geometry": {"d": 2, "h": 2.3}, "colour": 1}')
    assert main(["analytic", "--config", str(bad)]) == 2


def test_overrides_replace_config_values(tmp_path):
    cfg = _write(tmp_path, _doc(tmp_path))
    out = tmp_path / "other"
    assert main(["analytic", "--config", cfg, "--h", "2.4", "--eps", "0.02", "0.005", "--out", str(out)]) == 0
    m = json.loads((out / "manifest.json").read_text())
    assert m["config"]["geometry"]["h"] == 2.4
    assert m["config"]["epsilons"] == [0.02, 0.005]


def test_overrides_alone_are_enough(tmp_path):
    assert main(["analytic", "--d", "2", "--h", "2.3", "--out", str(tmp_path / "o")]) == 0


def test_report_reads_the_manifest(tmp_path, capsys):
    cfg = _write(tmp_path, _doc(tmp_path))
    main(["analytic", "--config", cfg])
    capsys.readouterr()
    assert main(["report", "--config", cfg]) == 0
    text = capsys.readouterr().out
    assert "analytic" in text and "ok" in text
    assert main(["report", "--out", str(tmp_path / "nothing")]) == 1


def test_unknown_command_is_an_argparse_error():
    with pytest.raises(SystemExit) as info:
        main(["plot"])
    assert info.value.code == 2
