import json
import os
from pathlib import Path

import pytest

from bfcsim.cli import main
from bfcsim.config import ConfigError, load_config, parse_config

ROOT = Path(__file__).resolve().parents[1]
DEFAULT = ROOT / "configs" / "default.yaml"

SMALL = """
output_dir: out
ring:
  n_sidebands: 6
source:
  pair_rate: 2.0e6
  duration: 0.005
  seed: 7
detectors:
  signal: {efficiency: 0.3, dark_rate: 100.0, jitter_ps: 30.0}
  idler: {efficiency: 0.3, dark_rate: 100.0, jitter_ps: 30.0}
franson:
  mc_points: 0
schmidt:
  duration: 0.002
"""


def test_default_config_parses():
    cfg = load_config(DEFAULT)
    assert cfg.ring.fsr_ghz == 384.6
    assert cfg.source.pair_rate * cfg.source.duration == pytest.approx(1e6, rel=0.01)
    assert len(cfg.sha256) == 64


def test_seed_override():
    assert parse_config(SMALL, seed=99).source.seed == 99


def test_exponent_without_dot():
    cfg = parse_config(SMALL.replace("2.0e6", "2e6"))
    assert cfg.source.pair_rate == 2e6


@pytest.mark.parametrize("text,field,line", [
    (SMALL.replace("  seed: 7", "  seed: 7\n  bogus: 1"), "source.bogus", 9),
    (SMALL.replace("pair_rate: 2.0e6", "pair_rate: fast"), "source.pair_rate", 6),
    (SMALL.replace("efficiency: 0.3, dark", "efficiency: 1.3, dark", 1), "detectors.signal.efficiency", 10),
    (SMALL.replace("  n_sidebands: 6", "  n_sidebands: 6\n  linewidth_mhz: 9000.0"), "ring.linewidth_mhz", 5),
    (SMALL.replace("  pair_rate: 2.0e6\n", ""), "source.pair_rate", 6),
    (SMALL + "tia:\n  bin_ps: 300.0\n", "tia.range_ns", None),
])
def test_field_precise_errors(text, field, line):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.field == field
    if line is not None:
        assert info.value.line == line


def test_yaml_syntax_error_has_line():
    with pytest.raises(ConfigError) as info:
        parse_config("ring:\n  fsr_ghz: [1,\n")
    assert info.value.line is not None


def test_validate_command(capsys):
    assert main(["validate", "--config", str(DEFAULT)]) == 0
    assert "ok" in capsys.readouterr().out


def test_validate_bad(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text(SMALL.replace("n_sidebands: 6", "n_sidebands: zero"))
    assert main(["validate", "--config", str(p)]) != 0
    assert "ring.n_sidebands" in capsys.readouterr().err


def test_invalid_experiment_name(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(SMALL)
    with pytest.raises(SystemExit) as info:
        main(["run", "--config", str(p), "--experiment", "nope"])
    assert info.value.code != 0


def test_unwritable_output(tmp_path, capsys):
    p = tmp_path / "c.yaml"
    p.write_text(SMALL)
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["run", "--config", str(p), "--experiment", "correlate",
                 "--out", str(blocker / "sub")]) != 0
    assert "cannot write" in capsys.readouterr().err


def test_correlate_artifacts(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(SMALL)
    out = tmp_path / "o"
    assert main(["run", "--config", str(p), "--experiment", "correlate", "--out", str(out)]) == 0
    lines = (out / "correlation_S2I2.csv").read_text().splitlines()
    assert lines[0] == "delay_ps,counts"
    rows = [tuple(map(float, r.split(","))) for r in lines[1:]]
    peak = max(rows, key=lambda r: r[1])
    assert abs(peak[0]) <= 100
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 7
    assert "correlation_S2I2.csv" in man["outputs"]


def test_jsi_artifacts(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(SMALL)
    out = tmp_path / "o"
    assert main(["run", "--config", str(p), "--experiment", "jsi", "--out", str(out)]) == 0
    rows = (out / "jsi.csv").read_text().splitlines()
    assert len(rows) == 7 and rows[0].startswith("k_s\\k_i")
    import numpy as np
    m = np.array([[float(x) for x in r.split(",")[1:]] for r in rows[1:]])
    assert m.shape == (6, 6)
    assert np.all(np.diag(m) > 10 * (m.sum(axis=1) - np.diag(m)).max() / 5)
    assert (out / "jsi.svg").read_text().count('class="cell"') == 36


def test_output_dir_precedence(tmp_path, monkeypatch):
    p = tmp_path / "c.yaml"
    p.write_text(SMALL.replace("output_dir: out", f"output_dir: {tmp_path / 'from_cfg'}"))
    monkeypatch.setenv("BFC_SIM_OUTPUT_DIR", str(tmp_path / "from_env"))
    assert main(["run", "--config", str(p), "--experiment", "correlate"]) == 0
    assert (tmp_path / "from_env" / "manifest.json").exists()
    assert main(["run", "--config", str(p), "--experiment", "correlate",
                 "--out", str(tmp_path / "from_flag")]) == 0
    assert (tmp_path / "from_flag" / "manifest.json").exists()
    monkeypatch.delenv("BFC_SIM_OUTPUT_DIR")
    assert main(["run", "--config", str(p), "--experiment", "correlate"]) == 0
    assert (tmp_path / "from_cfg" / "manifest.json").exists()


def test_byte_identical_reruns(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(SMALL)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", str(p), "--experiment", "all", "--out", str(a)]) == 0
    assert main(["run", "--config", str(p), "--experiment", "all", "--out", str(b),
                 "--workers", "3"]) == 0
    names = sorted(os.listdir(a))
    assert names == sorted(os.listdir(b))
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes(), n
    man = json.loads((a / "manifest.json").read_text())
    assert set(man["experiments"]) == {"correlate", "jsi", "franson_common", "franson_taud",
                                       "dispersion", "schmidt"}


def test_seed_changes_artifacts(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(SMALL)
    a, b = tmp_path / "a", tmp_path / "b"
    main(["run", "--config", str(p), "--experiment", "correlate", "--out", str(a)])
    main(["run", "--config", str(p), "--experiment", "correlate", "--out", str(b), "--seed", "8"])
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    assert ma["artifact_set_sha256"] != mb["artifact_set_sha256"]
