import json

import numpy as np
import pytest

from consensus_td.cli import main
from consensus_td.config import ExperimentConfig, ScheduleSpec, plan_from_dict
from consensus_td.errors import ConfigError
from consensus_td.harness import run_experiment


def minimal_config_doc(**overrides):
    doc = {
        "format_version": "1",
        "instance": {"n": 10, "K": 3, "N": 4, "gamma": 0.8, "C": 1.0, "seed": 7},
        "schedule": {"type": "ring", "N": 4},
        "plan": {"kind": "constant", "alpha": 0.05},
        "iterations": 50,
        "record_every": 10,
        "replications": 2,
        "seed": 99,
    }
    doc.update(overrides)
    return doc


# ---------------------------------------------------------------------------
# config parsing


def test_config_roundtrip():
    cfg = ExperimentConfig.from_dict(minimal_config_doc())
    assert cfg.instance.n == 10
    assert cfg.schedule.type == "ring"
    assert cfg.plan.kind == "constant" and cfg.plan.param == 0.05
    assert cfg.replications == 2


def test_config_rejects_unknown_top_level_key():
    with pytest.raises(ConfigError, match="unknown keys"):
        ExperimentConfig.from_dict(minimal_config_doc(iterationz=10))


def test_config_rejects_unknown_nested_keys():
    doc = minimal_config_doc()
    doc["instance"]["gama"] = 0.9
    with pytest.raises(ConfigError, match="unknown keys"):
        ExperimentConfig.from_dict(doc)
    doc = minimal_config_doc()
    doc["schedule"]["lazzy"] = 0.1
    with pytest.raises(ConfigError, match="unknown keys"):
        ExperimentConfig.from_dict(doc)
    doc = minimal_config_doc()
    doc["plan"]["alpha0"] = 1.0
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(doc)


def test_config_rejects_bad_version():
    with pytest.raises(ConfigError, match="format_version"):
        ExperimentConfig.from_dict(minimal_config_doc(format_version="2"))
    doc = minimal_config_doc()
    del doc["format_version"]
    with pytest.raises(ConfigError, match="missing"):
        ExperimentConfig.from_dict(doc)


def test_plan_parsing():
    assert plan_from_dict({"kind": "inv_sqrt"}).kind == "inv_sqrt"
    assert plan_from_dict({"kind": "harmonic", "alpha0": 2.0}).param == 2.0
    with pytest.raises(ConfigError):
        plan_from_dict({"kind": "constant"})
    with pytest.raises(ConfigError):
        plan_from_dict({"kind": "inv_sqrt", "alpha": 0.1})
    with pytest.raises(ConfigError):
        plan_from_dict({"kind": "geometric"})


def test_config_rejects_bad_counts():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(minimal_config_doc(replications=0))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(minimal_config_doc(record_every=0))


def test_schedule_spec_types():
    assert ScheduleSpec.from_dict({"type": "complete", "N": 3}).build().period == 1
    split = ScheduleSpec.from_dict(
        {"type": "split_ring", "N": 6, "period": 2, "B": 2}
    ).build()
    assert split.period == 2 and split.B == 2
    explicit = ScheduleSpec.from_dict(
        {"type": "explicit", "N": 3, "edge_sets": [[[0, 1], [1, 2]]], "B": 1}
    ).build()
    assert explicit.edge_sets[0] == ((0, 1), (1, 2))
    with pytest.raises(ConfigError):
        ScheduleSpec.from_dict({"type": "torus", "N": 4})


# ---------------------------------------------------------------------------
# run_experiment


def test_run_experiment_bookkeeping(tmp_path):
    cfg = ExperimentConfig.from_dict(
        minimal_config_doc(iterations=10, record_every=1, replications=1)
    )
    result = run_experiment(cfg, out_dir=tmp_path)
    traj = result.trajectories[0]
    np.testing.assert_array_equal(traj.ks, np.arange(1, 11))
    lines = (tmp_path / "traj_rep000.csv").read_text().strip().splitlines()
    assert len(lines) == 1 + 10 * 4  # header + records x agents
    assert (tmp_path / "aggregate.csv").exists()
    assert (tmp_path / "envelopes.csv").exists()
    assert (tmp_path / "report.json").exists()
    assert (tmp_path / "instance.json").exists()


def test_run_experiment_rerun_identical(tmp_path):
    cfg = ExperimentConfig.from_dict(minimal_config_doc())
    run_experiment(cfg, out_dir=tmp_path / "a")
    run_experiment(cfg, out_dir=tmp_path / "b")
    for name in ("aggregate.csv", "envelopes.csv", "traj_rep000.csv", "report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (
            tmp_path / "b" / name
        ).read_bytes()


def test_run_experiment_degenerate_schedule(tmp_path):
    # Uniform all-to-all averaging has eta = 0: trajectories are produced,
    # envelopes are omitted, and a warning is recorded.
    doc = minimal_config_doc(
        schedule={"type": "complete", "N": 4, "lazy": 0.0},
    )
    cfg = ExperimentConfig.from_dict(doc)
    with pytest.warns(RuntimeWarning, match="degenerate"):
        result = run_experiment(cfg, out_dir=tmp_path)
    assert result.constants is None
    assert len(result.trajectories) == 2
    assert not (tmp_path / "envelopes.csv").exists()
    assert any("degenerate" in w for w in result.warnings)
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["constants"]["degenerate"] is True
    assert report["gates"] == []


def test_run_experiment_gates_present(tmp_path):
    cfg = ExperimentConfig.from_dict(
        minimal_config_doc(iterations=100, replications=3)
    )
    result = run_experiment(cfg, out_dir=tmp_path)
    names = {g.name for g in result.gates}
    assert "value_error_constant" in names
    report = json.loads((tmp_path / "report.json").read_text())
    ks = {g["k"] for g in report["gates"]}
    assert ks == {10, 100}
    assert report["lemma1_pathwise"]["pass"] is True
    assert report["projection_error"]["pass"] is True
    # Reported constants are the bounds module's values, no recomputation.
    assert report["constants"]["beta1"] == result.constants.beta1
    assert report["constants"]["L"] == result.constants.L
    assert report["constants"]["eta"] == result.spectral.eta


def test_run_experiment_schedule_size_mismatch():
    doc = minimal_config_doc(schedule={"type": "ring", "N": 6})
    with pytest.raises(ConfigError, match="node count"):
        run_experiment(ExperimentConfig.from_dict(doc))


# ---------------------------------------------------------------------------
# CLI


def write_config(tmp_path, doc):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return str(path)


def test_cli_gen_deterministic(tmp_path, capsys):
    cfg = write_config(tmp_path, minimal_config_doc())
    out1, out2 = tmp_path / "g1", tmp_path / "g2"
    assert main(["gen", "--config", cfg, "--out", str(out1)]) == 0
    assert main(["gen", "--config", cfg, "--out", str(out2)]) == 0
    text = capsys.readouterr().out
    assert "assumption 3 (irreducible transition chain): OK" in text
    assert text.count("OK") >= 12  # six assumptions, two invocations
    assert (out1 / "instance.json").read_bytes() == (out2 / "instance.json").read_bytes()


def test_cli_gen_rejects_reducible(tmp_path, capsys):
    # A serialized instance with identity transitions violates irreducibility.
    inst = {
        "format_version": "1",
        "n": 2,
        "K": 1,
        "N": 1,
        "gamma": 0.9,
        "seed": 1,
        "P": [1.0, 0.0, 0.0, 1.0],
        "rewards": [[0.0, 0.0, 0.0, 0.0]],
        "Phi": [1.0, 0.5],
    }
    inst_path = tmp_path / "bad_instance.json"
    inst_path.write_text(json.dumps(inst))
    doc = minimal_config_doc(instance={"path": str(inst_path)})
    doc["schedule"] = {"type": "explicit", "N": 1, "edge_sets": [[]], "B": 1}
    cfg = write_config(tmp_path, doc)
    code = main(["gen", "--config", cfg, "--out", str(tmp_path / "out")])
    text = capsys.readouterr().out
    assert code == 1
    assert "assumption 3" in text and "VIOLATED" in text


def test_cli_invalid_config_exit_2(tmp_path, capsys):
    cfg = write_config(tmp_path, minimal_config_doc(bogus_key=1))
    assert main(["run", "--config", cfg]) == 2
    assert main(["gen", "--config", str(tmp_path / "missing.json")]) == 2


def test_cli_run_and_report(tmp_path, capsys):
    cfg = write_config(tmp_path, minimal_config_doc())
    out = tmp_path / "results"
    assert main(["run", "--config", cfg, "--out", str(out)]) == 0
    assert (out / "aggregate.csv").exists()
    assert main(["report", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "constants:" in text
    assert "all passed: True" in text


def test_cli_run_determinism(tmp_path):
    cfg = write_config(tmp_path, minimal_config_doc())
    a, b = tmp_path / "ra", tmp_path / "rb"
    assert main(["run", "--config", cfg, "--out", str(a)]) == 0
    assert main(["run", "--config", cfg, "--out", str(b)]) == 0
    assert (a / "aggregate.csv").read_bytes() == (b / "aggregate.csv").read_bytes()


def test_cli_bounds(tmp_path, capsys):
    cfg = write_config(tmp_path, minimal_config_doc())
    out = tmp_path / "bounds_out"
    assert main(["bounds", "--config", cfg, "--out", str(out)]) == 0
    text = capsys.readouterr().out
    doc = json.loads(text[: text.index("wrote")])
    assert {"eta", "delta", "beta1", "beta3", "L"} <= set(doc)
    assert doc["beta3"] == pytest.approx(4 * doc["beta1"])
    header = (out / "envelopes.csv").read_text().splitlines()[0]
    assert header == "k,lemma1_rhs,thm1_rhs,thm2_rhs"


def test_cli_replications_override(tmp_path):
    cfg = write_config(tmp_path, minimal_config_doc())
    out = tmp_path / "r"
    assert main(["run", "--config", cfg, "--out", str(out), "--replications", "1"]) == 0
    assert (out / "traj_rep000.csv").exists()
    assert not (out / "traj_rep001.csv").exists()


def test_cli_verify_rejects_unknown_check():
    with pytest.raises(SystemExit) as exc:
        main(["verify", "--only", "nonsense"])
    assert exc.value.code == 2


def test_cli_verify_with_config_checks(tmp_path, capsys):
    # A config can pin the check subset; contraction alone runs fast.
    doc = {"format_version": "1", "seed": 20260810, "checks": ["contraction"]}
    cfg = write_config(tmp_path, doc)
    assert main(["verify", "--config", cfg]) == 0
    out = capsys.readouterr().out
    assert "PASS contraction" in out and "1/1 checks passed" in out
    doc["checks"] = ["no_such_check"]
    cfg = write_config(tmp_path, doc)
    assert main(["verify", "--config", cfg]) == 2


def test_cli_verify_detects_injected_weight_fault(monkeypatch, capsys):
    # Corrupt the weight construction by 1e-3: double stochasticity breaks,
    # the schedule validator trips, and verify exits nonzero.
    import consensus_td.network as network

    real = network.metropolis_weights

    def corrupted(edges, N, lazy=0.0):
        W = real(edges, N, lazy=lazy).copy()
        W[0, 0] += 1e-3
        return W

    monkeypatch.setattr(network, "metropolis_weights", corrupted)
    code = main(["verify", "--only", "contraction"])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_cli_seed_override_changes_output(tmp_path):
    cfg = write_config(tmp_path, minimal_config_doc())
    a, b = tmp_path / "sa", tmp_path / "sb"
    assert main(["run", "--config", cfg, "--out", str(a), "--seed", "1"]) == 0
    assert main(["run", "--config", cfg, "--out", str(b), "--seed", "2"]) == 0
    assert (a / "aggregate.csv").read_bytes() != (b / "aggregate.csv").read_bytes()
