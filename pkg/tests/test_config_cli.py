import json
from pathlib import Path

import pytest

from mdiqn.cli import EXIT_CONFIG, EXIT_DATA, EXIT_IO, EXIT_OK, main
from mdiqn.config import ConfigError, SessionConfig, load_config, parse_config
from mdiqn.gaintable import bundled_table_path, ingest_gain_table

EXAMPLE = Path(bundled_table_path()).with_name("example.toml")


def _toml(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_example_config_loads():
    cfg = load_config(EXAMPLE)
    assert cfg.n_users == 4
    assert len(cfg.pairs) == 6
    assert cfg.pair_loss_db["AB"] == 30.6
    assert cfg.pair_loss_db["AC"] == 30.0
    assert cfg.protocol.mu("z") == 0.636


def test_defaults():
    cfg = SessionConfig()
    assert cfg.epsilon == 1e-10 and cfg.f == 1.16


@pytest.mark.parametrize("text", [
    "[netwrok]\nn_users = 4\n",
    "[network]\nn_user = 4\n",
    "[sim]\nseeed = 1\n",
    "[protocol]\nmu = { z = 0.6, y = 0.2, x = 0.05, w = 0.1 }\n",
])
def test_misspelt_keys_rejected(tmp_path, text):
    with pytest.raises(ConfigError):
        load_config(_toml(tmp_path, text))


@pytest.mark.parametrize("text", [
    "[sim]\nn_rounds = 0\n",
    "[network]\nn_users = 1\n",
    "[analysis]\nf = 0.9\n",
    "[analysis]\nepsilon = 2.0\n",
    "[sim]\nmode = \"quantum\"\n",
    "[network.loss_db]\nAZ = 30\n",
    "[network]\nn_users = \"four\"\n",
    "[protocol]\nmu = { z = 0.1, y = 0.2, x = 0.05 }\n",
    "not toml [",
])
def test_invalid_values_rejected(tmp_path, text):
    with pytest.raises(ConfigError):
        load_config(_toml(tmp_path, text))


def test_pair_spellings_normalised():
    cfg = parse_config({"network": {"n_users": 4, "loss_db": {"A-C": 29.0, "BD": 31.0}}})
    assert cfg.pair_loss_db == {"AC": 29.0, "BD": 31.0}


def test_missing_file_is_os_error(tmp_path):
    with pytest.raises(OSError):
        load_config(tmp_path / "absent.toml")


def test_exit_codes(tmp_path):
    zero = _toml(tmp_path, "[network]\nn_users = 2\ndefault_loss_db = 30\n[sim]\nn_rounds = 0\n")
    assert main(["simulate", "--config", str(zero), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    typo = _toml(tmp_path, "[sim]\nsed = 3\n", "typo.toml")
    assert main(["simulate", "--config", str(typo), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert main(["simulate", "--config", str(tmp_path / "nope.toml"),
                 "--out", str(tmp_path / "o")]) == EXIT_IO
    bad = tmp_path / "bad.csv"
    bad.write_text("label,NS_zz,NSE_zz\nAB,10,11\n")
    assert main(["analyze", "--gains", str(bad), "--out", str(tmp_path / "o")]) == EXIT_DATA
    assert main(["simulate", "--config", str(EXAMPLE), "--pairs", "AZ",
                 "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_infeasible_tally_is_data_error(tmp_path):
    # vacuum sources with more events than the brightest decoy admit no yield model
    text = ("label,NS_zz,NSE_zz,NS_yy,NS_xx,NSE_xx,NS_yo+oy,NS_xo+ox,NS_oo\n"
            "AB,87788209,256301,10,10,5,13375,5923,50000\n")
    path = tmp_path / "inconsistent.csv"
    path.write_text(text)
    assert main(["analyze", "--gains", str(path), "--out", str(tmp_path / "o")]) == EXIT_DATA


def _run_session(out):
    assert main(["simulate", "--config", str(EXAMPLE), "--out", str(out)]) == EXIT_OK
    assert main(["analyze", "--config", str(EXAMPLE), "--gains", str(out / "gains.csv"),
                 "--out", str(out)]) == EXIT_OK
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


def test_simulate_analyze_byte_identical(tmp_path):
    a = _run_session(tmp_path / "a")
    b = _run_session(tmp_path / "b")
    assert a == b
    assert {"gains.csv", "tally_AB.csv", "reports.csv", "summary.csv"} <= set(a)


def test_seed_override_changes_counts(tmp_path):
    main(["simulate", "--config", str(EXAMPLE), "--out", str(tmp_path / "a"), "--pairs", "AB"])
    main(["simulate", "--config", str(EXAMPLE), "--out", str(tmp_path / "b"), "--pairs", "AB",
          "--seed", "99"])
    assert (tmp_path / "a/gains.csv").read_text() != (tmp_path / "b/gains.csv").read_text()


def test_simulated_tables_reingest(tmp_path):
    main(["simulate", "--config", str(EXAMPLE), "--out", str(tmp_path), "--pairs", "AB,CD"])
    recs = ingest_gain_table(tmp_path / "gains.csv")
    assert [r.label for r in recs] == ["AB", "CD"]
    assert recs[0].loss_db == 30.6
    assert not (tmp_path / "tally_AC.csv").exists()


def test_analyze_bundled_mean(tmp_path, capsys):
    assert main(["analyze", "--gains", "bundled", "--format", "json", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    reports = json.loads((tmp_path / "reports.json").read_text())
    assert summary["pairs"] == len(reports) == 12
    assert 240 <= summary["mean_rate_bps"] <= 295
    assert "mean key rate" in capsys.readouterr().out


def test_analyze_pairs_filter(tmp_path):
    # a pair name keeps every run of that pair; a row label keeps one row
    assert main(["analyze", "--gains", "bundled", "--pairs", "AB", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "reports.csv").read_text().splitlines()[1:]
    assert [r.split(",")[0] for r in rows] == ["AB-1", "AB-2"]
    assert main(["analyze", "--gains", "bundled", "--pairs", "CD-3", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "reports.csv").read_text().splitlines()[1:]
    assert [r.split(",")[0] for r in rows] == ["CD-3"]
    assert main(["analyze", "--gains", "bundled", "--pairs", "XY", "--out", str(tmp_path)]) == 2


def test_plan_eight_users(tmp_path):
    assert main(["plan", "--users", "8", "--out", str(tmp_path)]) == 0
    table = (tmp_path / "tdm_table.txt").read_text().splitlines()
    assert [c.strip() for c in table[0].split("|")][2:] == [f"BSM {i}" for i in range(1, 8)]
    assert len(table[2:]) == 4
    assert len((tmp_path / "tdm.csv").read_text().splitlines()) == 1 + 28
    assert len((tmp_path / "wdm.csv").read_text().splitlines()) == 1 + 28


def test_plan_json(tmp_path):
    assert main(["plan", "--users", "5", "--format", "json", "--out", str(tmp_path)]) == 0
    wdm = json.loads((tmp_path / "wdm.json").read_text())
    tdm = json.loads((tmp_path / "tdm.json").read_text())
    assert len(wdm["channels"]) == 5 and len(wdm["links"]) == 10
    assert len(tdm["slots"]) == 10 and len(tdm["bsm_modules"]) == 7


def test_curve_output(tmp_path):
    cfg = _toml(tmp_path, "[curve]\nlosses = [10, 30]\n")
    assert main(["curve", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "curve.csv").read_text().splitlines()
    assert rows[0].startswith("loss_db,rate_per_pulse,rate_bps")
    r10, r30 = (float(r.split(",")[1]) for r in rows[1:])
    assert r10 > r30 > 0


def test_optimize_output(tmp_path):
    cfg = _toml(tmp_path, "[optimize]\nloss_db = 30\nrestarts = 1\nmax_evals = 4\n")
    assert main(["optimize", "--config", str(cfg), "--format", "json", "--out", str(tmp_path)]) == 0
    (rec,) = json.loads((tmp_path / "optimize.json").read_text())
    trace = json.loads((tmp_path / "optimize_trace.json").read_text())
    assert rec["evaluations"] == len(trace) <= 4
    assert rec["rate_per_pulse"] == max(t["rate_per_pulse"] for t in trace)
