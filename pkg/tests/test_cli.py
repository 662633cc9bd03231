import math
import os

import numpy as np
import pytest

from gpsafety.cli import main

SMALL_CFG = """\
system.name = rotation
grid.safe_box = -1 1 -1 1
grid.h = 0.5
data.n_d = 120
data.sigma = 0.01
data.seed = 0
bounds.epsilon = 0.1
abstraction.subgrid_k = 2
verify.horizon = 3
output.dir = {out}
"""


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    """One small end-to-end pipeline run shared by the checks below."""
    root = tmp_path_factory.mktemp("cli")
    out = root / "out"
    cfg = root / "run.cfg"
    cfg.write_text(SMALL_CFG.format(out=out))
    assert main(["pipeline", str(cfg)]) == 0
    return out, cfg


def test_pipeline_writes_all_artifacts(pipeline_dir):
    out, _ = pipeline_dir
    expected = [
        "dataset.csv",
        "model_a_0.gpm",
        "model_a_1.gpm",
        "imdp.txt",
        "results.csv",
        "heatmap.csv",
        "mc_report.csv",
    ]
    for name in expected:
        assert (out / name).exists(), name
    for stage in ("generate", "fit", "abstract", "verify", "mc-check"):
        assert (out / f"manifest_{stage}.txt").exists()


def test_results_echo_run_parameters(pipeline_dir):
    out, _ = pipeline_dir
    text = (out / "results.csv").read_text()
    assert "# system=rotation" in text
    assert "# h=0.5" in text
    assert "# T=3" in text
    assert "# seed=0" in text


def test_heatmap_covers_every_cell(pipeline_dir):
    out, _ = pipeline_dir
    lines = (out / "heatmap.csv").read_text().strip().splitlines()
    assert lines[0] == "x_lo,x_hi,y_lo,y_hi,p_min,p_max"
    assert len(lines) == 1 + 16 + 1  # header, 4x4 cells, unsafe state
    assert lines[-1].startswith(",,,,")  # unsafe state has no geometry
    for line in lines[1:-1]:
        vals = [float(v) for v in line.split(",")]
        assert 0.0 <= vals[4] <= vals[5] <= 1.0


def test_mc_report_is_consistent(pipeline_dir):
    out, _ = pipeline_dir
    rows = [
        line
        for line in (out / "mc_report.csv").read_text().splitlines()
        if line and not line.startswith("#") and not line.startswith("state_index")
    ]
    assert rows
    assert all(row.endswith("true") for row in rows)


def test_verify_stage_is_reproducible(pipeline_dir):
    out, cfg = pipeline_dir
    first = (out / "results.csv").read_bytes()
    assert main(["verify", str(cfg)]) == 0
    assert (out / "results.csv").read_bytes() == first


def test_missing_config_is_usage_error(tmp_path):
    assert main(["verify", str(tmp_path / "absent.cfg")]) == 2


def test_invalid_config_is_usage_error(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text(SMALL_CFG.format(out=tmp_path / "o") + "grid.h = -1\n")
    assert main(["verify", str(bad)]) == 2


def test_stage_without_inputs_is_usage_error(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(SMALL_CFG.format(out=tmp_path / "empty"))
    # verify needs imdp.txt, mc-check needs results.csv: nothing exists yet
    assert main(["verify", str(cfg)]) == 2
    assert main(["mc-check", str(cfg)]) == 2


def test_unknown_stage_rejected_by_argparse(tmp_path):
    with pytest.raises(SystemExit):
        main(["explode", str(tmp_path / "x.cfg")])
