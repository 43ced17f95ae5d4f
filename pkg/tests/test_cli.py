import json
import textwrap

import pytest

from degenflow import inequality_lab
from degenflow.cli import load_config, main
from degenflow.grid import read_snapshot

SMALL_LEMMAS = """
[lemmas]
p_values = 2, 3
delta_values = 0.5
n_values = 2
samples = 400
shards = 4
"""

SMALL_GRID = """
[params]
p = 3
delta = 0.5
eps = 0.1
[grid]
points = 17
dt = 0.02
nt = 13
"""


def write(tmp_path, text, name="cfg.ini"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return str(path)


def run(tmp_path, command, text, *extra, out="out", **kw):
    cfg = write(tmp_path, text)
    return main([command, "--config", cfg, "--out", str(tmp_path / out), *extra], **kw)


def body(path):
    return [l for l in path.read_text().splitlines() if not l.startswith("#")]


def test_verify_lemmas_passes_and_is_thread_independent(tmp_path, capsys):
    assert run(tmp_path, "verify-lemmas", SMALL_LEMMAS, out="a") == 0
    assert run(tmp_path, "verify-lemmas", SMALL_LEMMAS, "--threads", "4", out="b") == 0
    a = (tmp_path / "a" / "lemmas.csv").read_text()
    assert a == (tmp_path / "b" / "lemmas.csv").read_text()
    assert a.startswith("# command=verify-lemmas\n# seed=0\n# config_hash=")
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["status"] == "ok" and manifest["files"] == ["lemmas.csv"]
    assert "rows passed" in capsys.readouterr().out


def test_verify_lemmas_negative_control(tmp_path):
    def sabotaged(lemma_id, *args):
        gap = inequality_lab._shard(lemma_id, *args)
        return -1.0 if lemma_id == "brasco_monotonicity" else gap

    code = run(tmp_path, "verify-lemmas", SMALL_LEMMAS, shard_fn=sabotaged)
    assert code == 1
    assert json.loads((tmp_path / "out" / "manifest.json").read_text())["status"] == "failed"


def test_seed_changes_samples(tmp_path):
    run(tmp_path, "verify-lemmas", SMALL_LEMMAS, out="a")
    run(tmp_path, "verify-lemmas", SMALL_LEMMAS, "--seed", "7", out="b")
    assert body(tmp_path / "a" / "lemmas.csv") != body(tmp_path / "b" / "lemmas.csv")


@pytest.mark.parametrize("text", [
    "[nonsense]\nx = 1\n",
    "[params]\nq = 3\n",
    "[params]\np = three\n",
    "[lemmas]\np_values =\n",
    "[lemmas]\nlemmas = no_such_lemma\nsamples = 10\np_values = 3\n",
    "[grid]\npoints = 2\n",
    "[params]\np = 1.5\n",
    "[data]\nprofile = wiggly\n",
])
def test_configuration_errors_exit_2(tmp_path, text):
    command = "verify-lemmas" if "lemmas" in text else "solve"
    assert run(tmp_path, command, text) == 2


def test_usage_errors_exit_2(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "missing.ini")]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["solve", "--threads", "0"]) == 2


def test_solve_outputs(tmp_path):
    text = SMALL_GRID + "[data]\nprofile = manufactured\n"
    assert run(tmp_path, "solve", text, out="a") == 0
    assert run(tmp_path, "solve", text, out="b") == 0
    out = tmp_path / "a"
    values, header = read_snapshot(out / "solution.dgfl")
    assert values.shape == (13, 17, 17) and header["nt"] == 13
    side = json.loads((out / "solution.dgfl.json").read_text())
    assert side["command"] == "solve" and side["nx"] == [17, 17]
    for name in ("convergence.csv", "errors.csv"):
        assert (out / name).read_text() == (tmp_path / "b" / name).read_text()
        assert (out / name).read_text().startswith("# command=solve")
    rows = body(out / "errors.csv")
    assert rows[0] == "step,t,l2_error,max_error"
    assert max(float(r.split(",")[3]) for r in rows[1:]) < 1e-2


def test_solve_failure_exits_1(tmp_path):
    text = SMALL_GRID + "[data]\nprofile = source\n[solver]\nmax_iter = 1\nfallback = false\n"
    assert run(tmp_path, "solve", text) == 1


def test_estimates_from_snapshot(tmp_path):
    text = SMALL_GRID.replace("points = 17", "points = 33") + "[data]\nprofile = source\n"
    assert run(tmp_path, "solve", text, out="sol") == 0
    est = text + f"[estimates]\nsnapshot = {tmp_path / 'sol' / 'solution.dgfl'}\nR = 0.45\n"
    assert run(tmp_path, "estimates", est, out="est") == 0
    rows = body(tmp_path / "est" / "estimates.csv")
    ids = [r.split(",")[0] for r in rows[1:]]
    assert ids[0] == "caccioppoli" and ids[-1] == "higher_integrability"
    assert {"uniform", "diffquot", "comparison"} <= set(ids)
    assert (tmp_path / "est" / "estimates.txt").exists()


def test_estimates_bad_inputs(tmp_path):
    text = SMALL_GRID + "[estimates]\nsnapshot = nowhere.dgfl\n"
    assert run(tmp_path, "estimates", text) == 2
    text = SMALL_GRID + "[data]\nprofile = source\n[estimates]\nR = 0.9\n"
    assert run(tmp_path, "estimates", text) == 2


def test_eps_sweep_variants(tmp_path, capsys):
    base = SMALL_GRID.replace("nt = 13", "nt = 26") + "[data]\nprofile = source\n"
    assert run(tmp_path, "eps-sweep", base + "[sweep]\neps_values = 0.2\n", out="one") == 0
    assert "single rung" in capsys.readouterr().out
    assert body(tmp_path / "one" / "distances.csv") == ["eps_1,eps_2,h_distance,sup_l2_sq"]
    assert run(tmp_path, "eps-sweep", base + "[sweep]\neps_values = 0.2, 0.15, 0.05\n",
               out="odd") == 0
    assert "does not halve" in capsys.readouterr().out
    assert len(body(tmp_path / "odd" / "distances.csv")) == 3
    assert run(tmp_path, "eps-sweep", base + "[sweep]\neps_values =\n") == 2


def test_load_config_defaults(tmp_path):
    config, text = load_config(None)
    assert text == "" and config["params"]["p"] == 3.0
    config, _ = load_config(write(tmp_path, "[sweep]\nmollify = no\n"))
    assert config["sweep"]["mollify"] is False
