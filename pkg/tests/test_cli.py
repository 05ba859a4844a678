import json
import subprocess
import sys

import numpy as np

from bmsync.cli import EXIT_ASSERT, EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from bmsync.harness import ResultRecord, read_results


def test_gen_solve_certify(tmp_path, capsys):
    stem = str(tmp_path / "inst")
    assert main(["gen", "--set", "n=80", "--set", "sigma=1.5", "--out", stem]) == EXIT_OK
    assert (tmp_path / "inst.coo").exists() and (tmp_path / "inst.json").exists()
    sol = str(tmp_path / "sol")
    assert main(["solve", "--instance", stem, "--out", sol, "--set", "solver.seed=4"]) == EXIT_OK
    rep = json.loads((tmp_path / "sol.json").read_text())
    assert rep["status"] == "converged" and len(rep["point"]) == 80
    out = tmp_path / "cert.json"
    assert main(["certify", "--instance", stem, "--point", sol + ".pt", "--with-truth",
                 "--expect-certified", "--out", str(out)]) == EXIT_OK
    assert json.loads(out.read_text())["verdict"] == "global-unique-ground-truth"


def test_gen_sbm(tmp_path):
    stem = str(tmp_path / "g")
    assert main(["gen", "--model", "sbm", "--set", "n=40", "--set", "a=10", "--set", "b=1",
                 "--out", stem]) == EXIT_OK
    meta = json.loads((tmp_path / "g.json").read_text())
    assert meta["model"] == "sbm" and sum(meta["labels"]) == 0


def test_sweep_with_config_file(tmp_path, monkeypatch):
    cfg = tmp_path / "s.cfg"
    cfg.write_text("experiment = z2-sweep\nn = 60\nsigma = 1, 2\ntrials = 2\nmaster_seed = 5\n"
                   f"output = {tmp_path / 'res.csv'}\n")
    assert main(["sweep", "--config", str(cfg), "--expect-min-correlation", "0.9"]) == EXIT_OK
    rows = read_results(tmp_path / "res.csv", ResultRecord)
    assert len(rows) == 4
    assert main(["sweep", "--config", str(cfg), "--set", "format=json",
                 "--out", str(tmp_path / "r.json"), "--workers", "2"]) == EXIT_OK
    back = read_results(tmp_path / "r.json", ResultRecord)
    assert [r.cost for r in back] == [r.cost for r in rows]


def test_exit_codes(tmp_path):
    assert main(["sweep", "--set", "experiment=z2-sweep"]) == EXIT_CONFIG  # empty grid
    assert main(["sweep", "--config", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG
    assert main(["nonsense"]) == EXIT_CONFIG
    assert main(["sweep", "--set", "experiment=z2-sweep", "--set", "sigma=50", "--set", "n=60",
                 "--expect-exact-rate", "1.0"]) == EXIT_ASSERT
    stem = str(tmp_path / "inst")
    main(["gen", "--set", "n=20", "--set", "sigma=1", "--out", stem])
    (tmp_path / "bad.pt").write_text("\n".join(["2 0"] * 20))
    assert main(["certify", "--instance", stem, "--point", str(tmp_path / "bad.pt")]) == EXIT_RUNTIME
    np.savetxt(tmp_path / "short.pt", np.tile([1.0, 0.0], (5, 1)))
    assert main(["certify", "--instance", stem, "--point", str(tmp_path / "short.pt")]) == EXIT_CONFIG


def test_tails_and_oracle(tmp_path, capsys):
    assert main(["tails", "--set", "n=60", "--set", "trials=30", "--expect-bounds",
                 "--out", str(tmp_path / "t.csv")]) == EXIT_OK
    assert "spec_freq" in capsys.readouterr().out
    assert main(["oracle", "--set", "trials=5", "--set", "n=10", "--out", str(tmp_path / "o.json"),
                 "--set", "format=json"]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary == {"instances": 5, "soc_points": summary["soc_points"], "counterexamples": 0}


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "bmsync", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for sub in ("gen", "solve", "certify", "sweep", "tails", "oracle"):
        assert sub in res.stdout
