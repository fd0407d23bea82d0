import json

import numpy as np
import pytest
import yaml

from mbindex.cli import main
from mbindex.experiments import (ConfigError, ExperimentConfig, load_config, numeric_payload, run_experiment,
                                 sweep)

CHAIN = {"name": "staggered_chain", "L1": 8, "L2": 1, "delta": 2.0, "N": 4}


def _cfg(**kw):
    d = {"kind": "mb-index", "model": dict(CHAIN), "process": {"type": "translation", "shift": [2, 0]}}
    d.update(kw)
    return ExperimentConfig.from_dict(d)


def test_config_roundtrip(tmp_path):
    cfg = _cfg(tolerances={"index": 1e-4}, strip_width=2)
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(cfg.to_dict()))
    again = load_config(path)
    assert again.to_dict() == cfg.to_dict()
    rec = run_experiment(cfg, persist=False)
    assert ExperimentConfig.from_dict(rec["config"]).to_dict() == cfg.to_dict()


@pytest.mark.parametrize("bad,field", [({"kind": "spin-wave"}, "kind"),
                                       ({"tolerances": {"index": -1}}, "tolerances.index"),
                                       ({"tolerances": {"bogus": 1}}, "tolerances"),
                                       ({"process": {"type": "translation"}}, "process.shift"),
                                       ({"strip_width": 0}, "strip_width"),
                                       ({"colour": "red"}, "unknown"),
                                       ({"kind": "hall"}, "model.L2")])
def test_validation_messages(bad, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        _cfg(**bad)


def test_bad_model_field():
    with pytest.raises(ConfigError, match="model"):
        ExperimentConfig.from_dict({"kind": "lsm", "model": {"name": "hofstadter", "spin": 1}})


def test_identity_process_record(tmp_path):
    cfg = _cfg(process={"type": "identity"}, output=str(tmp_path))
    rec = run_experiment(cfg)
    assert rec["schema"] == "mbindex.result/v1" and rec["status"] == "ok"
    assert abs(rec["values"]["index"]) < 1e-10
    d = rec["diagnostics"]
    for key in ("u_commutator", "unitarity", "splitting_residual", "pre_shift_spread"):
        assert d[key] < 1e-10
    files = list(tmp_path.glob("mb-index-*.json"))
    assert len(files) == 1 and json.loads(files[0].read_text())["values"] == rec["values"]


def test_determinism():
    a = run_experiment(_cfg(), persist=False)
    b = run_experiment(_cfg(), persist=False)
    assert numeric_payload(a) == numeric_payload(b)


def test_ff_index_record():
    cfg = ExperimentConfig.from_dict({"kind": "ff-index", "model": {"name": "hofstadter", "L1": 6, "L2": 6,
                                                                      "alpha": "1/3"}})
    rec = run_experiment(cfg, persist=False)
    assert rec["values"]["tknn"] == pytest.approx(1.0)
    assert rec["diagnostics"]["u_commutator"] > 0


def test_sweep_delta_index_constant(tmp_path):
    recs, table = sweep(_cfg(), "model.delta", [1.0, 2.0, 4.0], workers=2, output=str(tmp_path))
    assert [r["sweep"]["value"] for r in recs] == [1.0, 2.0, 4.0]
    assert all(abs(r["values"]["index"] - 1) < 1e-6 for r in recs)
    lines = table.strip().splitlines()
    assert lines[0].startswith("value,status,passed,index") and len(lines) == 4
    assert (tmp_path / "sweep.csv").read_text() == table


def test_sweep_ff_index_size():
    cfg = ExperimentConfig.from_dict({"kind": "ff-index", "model": {"name": "hofstadter", "L1": 6, "L2": 6,
                                                                      "alpha": "1/3"}})
    recs, _ = sweep(cfg, "model.L", [6, 12])
    dist = [abs(r["values"]["index"] - r["values"]["tknn"]) for r in recs]
    assert dist[1] < dist[0]


def test_sweep_records_failures():
    recs, table = sweep(_cfg(), "model.L1", [8, 7])
    assert recs[0]["status"] == "ok" and recs[1]["status"] == "error"
    with pytest.raises(ConfigError):
        sweep(_cfg(), "model.flavour", [1])


def test_sweep_phi_grid_converges():
    cfg = _cfg(kind="braid")
    recs, _ = sweep(cfg, "phi_points", [11, 21, 41, 81])
    r = [x["values"]["ode_residual"] for x in recs]
    steps = np.abs(np.diff(r))
    assert steps[-1] < steps[0]


def test_gate_abort_record():
    cfg = ExperimentConfig.from_dict({"kind": "hall", "model": {"name": "hofstadter", "L1": 4, "L2": 4,
                                                                  "alpha": "1/4", "statistics": "hardcore_boson",
                                                                  "N": 2}})
    rec = run_experiment(cfg, persist=False)
    assert rec["status"] == "gate-failed" and not rec["passed"]
    assert rec["diagnostics"]["p"] == 2 and rec["diagnostics"]["topological_order_deviation"] > 0.05


def test_cli_exit_codes(tmp_path, capsys):
    good = tmp_path / "good.yaml"
    good.write_text(yaml.safe_dump(_cfg().to_dict()))
    assert main(["mb-index", str(good), "-o", str(tmp_path / "out")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["passed"]
    assert list((tmp_path / "out").glob("*.json"))
    bad = tmp_path / "bad.yaml"
    bad.write_text("kind: mb-index\nmodel: {name: nope}\n")
    assert main(["mb-index", str(bad)]) == 2
    assert main(["mb-index", str(tmp_path / "missing.yaml")]) == 2
    strict = tmp_path / "strict.yaml"
    strict.write_text(yaml.safe_dump(_cfg(process={"type": "translation", "shift": [1, 0]}).to_dict()))
    assert main(["lsm", str(strict)]) == 1  # translation by one is not a symmetry: compute error
    fci = tmp_path / "fci.yaml"
    fci.write_text(yaml.safe_dump({"kind": "braid", "model": {"name": "hofstadter", "L1": 4, "L2": 4, "alpha": "1/4",
                                                               "statistics": "hardcore_boson", "N": 2}}))
    assert main(["braid", str(fci)]) == 4
    ff = tmp_path / "ff.yaml"
    ff.write_text(yaml.safe_dump({"kind": "ff-index", "model": {"name": "hofstadter", "L1": 6, "L2": 6,
                                                                 "alpha": "1/3"}}))
    assert main(["ff-index", str(ff)]) == 0
    assert main(["ff-index", str(ff), "--strict"]) == 3
    capsys.readouterr()
    assert main(["sweep", str(good), "--axis", "model.delta", "--values", "1,2"]) == 0
    assert capsys.readouterr().out.startswith("value,")
