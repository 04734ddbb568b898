import csv
import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from cltlab.cli import LEVEL_COLUMNS, dispatch, failure_line, main
from cltlab.config import build_config, parse_config, read_config_text
from cltlab.errors import CheckFailure, ConfigError
from cltlab.parallel import pmap, thread_count
from cltlab.profiles import GaussianMixture

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

GAUSSIAN = """
[profile]
kind = gaussian

[grid]
half_width = 16
points = 4096

[run]
k_max = 6
"""

BIMODAL = """
[profile]
kind = gaussian_mixture
weights = 0.3, 0.7
means = -1, 1
variances = 0.25, 0.25

[grid]
half_width = 16
points = 4096

[stitch]
c = 0.5

[run]
k_max = 10
"""


def write(tmp_path, text, name="cfg.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


# ---------- config ----------


def test_minimal_config_defaults():
    cfg = build_config(read_config_text(GAUSSIAN))
    assert cfg.k_max == 6 and cfg.k_min == 3 and cfg.stitch_c is None and cfg.mollify_t is None
    assert cfg.grid.points == 4096


def test_mixture_config():
    cfg = build_config(read_config_text(BIMODAL))
    assert cfg.profile == GaussianMixture((0.3, 0.7), (-1.0, 1.0), (0.25, 0.25))
    assert cfg.stitch_c == 0.5


def test_overrides():
    cfg = build_config(read_config_text(GAUSSIAN, ["run.k_max=8", "run.mollify_t = 0.1"]))
    assert cfg.k_max == 8 and cfg.mollify_t == 0.1


@pytest.mark.parametrize("override, message", [
    ("grid.points=1000", "power of two"),
    ("gird.points=4096", "gird.points"),
    ("run.kmax=4", "run.kmax"),
    ("profile.s=0.1", "profile.s"),
    ("run.k_max=ten", "malformed"),
    ("run.k_max", "section.key=value"),
    ("profile.kind=cauchy", "unknown profile"),
    ("grid.half_width=nan", "finite"),
])
def test_config_errors(override, message):
    with pytest.raises(ConfigError, match=message):
        build_config(read_config_text(GAUSSIAN, [override]))


def test_missing_required_key():
    with pytest.raises(ConfigError, match="run.k_max"):
        build_config(read_config_text(GAUSSIAN.replace("k_max = 6", "")))


def test_parse_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config(tmp_path / "nope.ini")


@pytest.mark.parametrize("name", ["gaussian", "bimodal", "laplace", "uniform"])
def test_shipped_configs_parse(name):
    parse_config(CONFIGS / f"{name}.ini")


# ---------- parallel ----------


def test_thread_count(monkeypatch):
    monkeypatch.delenv("CLTLAB_THREADS", raising=False)
    assert thread_count() == 1
    monkeypatch.setenv("CLTLAB_THREADS", "3")
    assert thread_count() == 3
    assert pmap(lambda v: v * v, range(10)) == [v * v for v in range(10)]
    for bad in ("0", "two"):
        monkeypatch.setenv("CLTLAB_THREADS", bad)
        with pytest.raises(ConfigError):
            thread_count()


# ---------- dispatch ----------


def test_failure_line():
    line = failure_line(CheckFailure("stam", 0.5, 0.25, 1e-8, level=3))
    assert line == "FAIL check=stam level=3 lhs=0.5 rhs=0.25 tol=1e-08"


def read_levels(out):
    with open(out / "levels.csv") as fh:
        return list(csv.DictReader(fh))


def test_verify_gaussian(tmp_path, capsys):
    out = tmp_path / "out"
    assert dispatch("verify", write(tmp_path, GAUSSIAN), out) == 0
    assert (out / "failures.log").read_text() == ""
    doc = json.loads((out / "report.json").read_text())
    assert doc["passed"] and doc["verb"] == "verify"
    names = {c["check"] for c in doc["checks"]}
    assert {"de_bruijn", "blackman_stam", "brascamp_lieb", "tail_lemmas", "level_inequalities"} <= names
    rows = read_levels(out)
    assert tuple(rows[0]) == LEVEL_COLUMNS
    assert all(abs(float(r["D"])) < 1e-8 and abs(float(r["J"])) < 1e-6 for r in rows)


def test_rate_bimodal(tmp_path, capsys):
    out = tmp_path / "out"
    assert dispatch("rate", write(tmp_path, BIMODAL), out) == 0
    printed = capsys.readouterr().out
    fields = dict(item.split("=") for item in printed.split())
    assert -1.25 <= float(fields["slope"]) <= -0.85
    assert math.isfinite(float(fields["c_sup"]))


def test_stitch_gaussian(tmp_path, capsys):
    out = tmp_path / "out"
    assert dispatch("stitch", write(tmp_path, GAUSSIAN + "\n[stitch]\nc = 1\n"), out) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines and all(line.startswith("n=") for line in lines)
    for line in lines:
        triple = line.split("eps_n=(")[1].rstrip(")").split(", ")
        assert all(abs(float(v)) < 1e-12 for v in triple)
    assert (out / "stitch.csv").exists()


def test_iterate_report_pipeline(tmp_path):
    cfg = write(tmp_path, BIMODAL)
    for verb in ("iterate", "report", "pipeline"):
        out = tmp_path / verb
        assert dispatch(verb, cfg, out) == 0, verb
        assert (out / "report.json").exists() and (out / "failures.log").read_text() == ""
    rows = read_levels(tmp_path / "pipeline")
    assert rows[2]["c1"] != "nan" and rows[0]["c1"] == "nan"


def test_failing_check_writes_record(tmp_path, capsys):
    # the raw uniform step rings on the default grid, so the first doubling fails
    cfg = write(tmp_path, GAUSSIAN.replace("kind = gaussian", "kind = uniform"))
    out = tmp_path / "out"
    assert dispatch("iterate", cfg, out) == 1
    log = (out / "failures.log").read_text().splitlines()
    assert len(log) == 1 and log[0].startswith("FAIL check=run_doubling level=- lhs=nan")
    assert "FAIL check=run_doubling" in capsys.readouterr().err


def test_config_error_exit_code(tmp_path, capsys):
    assert dispatch("rate", write(tmp_path, GAUSSIAN), tmp_path / "o", ["gird.points=1"]) == 2
    assert "gird.points" in capsys.readouterr().err
    assert dispatch("pipeline", write(tmp_path, GAUSSIAN), tmp_path / "o") == 2


def test_determinism(tmp_path):
    cfg = write(tmp_path, BIMODAL)
    for name in ("a", "b"):
        assert dispatch("pipeline", cfg, tmp_path / name) == 0
    for f in ("levels.csv", "report.json", "failures.log"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_main_argparse(tmp_path):
    assert main(["rate", "--config", str(write(tmp_path, BIMODAL)), "--out", str(tmp_path / "o"),
                 "--set", "run.k_max=9"]) == 0
    with pytest.raises(SystemExit):
        main(["plot", "--config", "x", "--out", "y"])


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "cltlab", "rate", "--config", str(CONFIGS / "gaussian.ini"),
                           "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "exact convergence" in proc.stdout
