import json
import shutil
import subprocess
from pathlib import Path

import pytest

from seclab.cli import main
from seclab.sector import preset

TINY = {"grid_side": 12, "triples": 40, "points": 40, "acs_points": 60, "tame_points": 20, "tame_dirs": 20,
        "levi_points": 4, "d_grid": 8, "moser_points": 8, "moser_steps": 60, "support_points": 20,
        "closed_points": 4, "jets": 30, "level_points": 30}


def write_cfg(tmp_path: Path, model: dict, **run) -> str:
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"model": model, "run": {"sizes": TINY, **run}}))
    return str(path)


def test_validate_exit_codes(tmp_path, capsys):
    assert main(["validate", "--config", write_cfg(tmp_path, preset()), "--out", str(tmp_path / "a")]) == 0
    bad = preset()
    bad["ledger"]["beta"] = bad["alpha"]
    assert main(["validate", "--config", write_cfg(tmp_path, bad), "--out", str(tmp_path / "b")]) == 1
    report = json.loads((tmp_path / "b" / "report.json").read_text())
    assert report["summary"]["n_failed"] >= 1
    broken = preset()
    del broken["alpha"]
    assert main(["validate", "--config", write_cfg(tmp_path, broken)]) == 2
    assert "config error" in capsys.readouterr().err


@pytest.mark.parametrize("run_section", [{"seed": -1}, {"tol_scale": 0}, {"sizes": {"jets": 0}},
                                         {"colour": "red"}])
def test_bad_run_section_is_a_usage_error(tmp_path, run_section):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"model": preset(), "run": run_section}))
    assert main(["validate", "--config", str(path)]) == 2


def test_missing_or_malformed_file(tmp_path):
    assert main(["validate", "--config", str(tmp_path / "nope.json")]) == 2
    (tmp_path / "x.json").write_text("{not json")
    assert main(["validate", "--config", str(tmp_path / "x.json")]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate", "--config", "x"])
    assert exc.value.code == 2


def test_smooth_artifacts(tmp_path):
    out = tmp_path / "out"
    main(["smooth", "--config", write_cfg(tmp_path, preset()), "--out", str(out)])
    report = json.loads((out / "report.json").read_text())
    for name in report["artifacts"]:
        assert (out / name).is_file()
    svgs = [n for n in report["artifacts"] if n.endswith(".svg")]
    assert svgs and (out / svgs[0]).read_text().lstrip().startswith("<svg")
    csv = next(n for n in report["artifacts"] if n.endswith(".csv"))
    assert (out / csv).read_text().splitlines()[0].split(",")[:3] == ["x1", "x2", "phi"]
    unknown = [c for c in report["checks"] if not c["passed"] and not c["known_conflict"]]
    assert not unknown


def test_acs_reports_determinant_violations(tmp_path):
    bad = preset()
    bad["ledger"]["beta"] = (1 + bad["alpha"]) / 2
    out = tmp_path / "out"
    assert main(["acs", "--config", write_cfg(tmp_path, bad), "--out", str(out)]) == 1
    acs = json.loads((out / "acs_report.json").read_text())
    assert any("D" in f["check"] for f in acs["failures"])


@pytest.mark.slow
def test_fixed_seed_gives_identical_report(tmp_path):
    cfg = write_cfg(tmp_path, preset())
    for d in ("r1", "r2"):
        main(["all", "--config", cfg, "--seed", "7", "--out", str(tmp_path / d)])
    a, b = ((tmp_path / d / "report.json").read_bytes() for d in ("r1", "r2"))
    assert a == b
    assert json.loads(a)["seed"] == 7


def test_console_script(tmp_path):
    exe = shutil.which("seclab")
    if exe is None:
        pytest.skip("package not installed")
    res = subprocess.run([exe, "validate", "--config", write_cfg(tmp_path, preset()), "--out",
                          str(tmp_path / "o")], capture_output=True, text=True)
    assert res.returncode == 0 and "checks passed" in res.stdout
