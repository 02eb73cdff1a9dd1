import json

import pytest

from proxsarah.cli import main

MINIMAL = """\
[experiment]
epochs = 2
seed = 3

[problem]
kind = nnpca
n = 200
d = 20

[solver v1]
"""

BINCLASS = """\
[experiment]
epochs = 2
seed = 1
output_rule = uniform

[problem]
kind = binclass
n = 300
d = 25
loss = l3
test_fraction = 0.1
separability = 0.9

[solver A-v2]
[solver spiderboost]
[solver mini]
preset = svrg
batch = mini
[solver sgd]
eta0 = 0.5
"""


def _write(tmp_path, text, name="exp.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_minimal_config_outputs(tmp_path, capsys):
    cfg = _write(tmp_path, MINIMAL)
    assert main(["run", str(cfg), "--out", str(tmp_path / "out")]) == 0
    files = sorted(p.name for p in (tmp_path / "out").iterdir())
    assert [f for f in files if f.endswith(".csv")] == ["v1.csv"]
    assert [f for f in files if f.endswith(".svg")] == ["grad_map_norm.svg", "objective_residual.svg"]
    lines = (tmp_path / "out" / "v1.csv").read_text().splitlines()
    assert lines[0] == "epoch_fraction,objective,rel_residual,grad_map_norm_sq,train_acc,test_acc,wall_ms"
    assert len(lines) > 10
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["seed"] == 3 and manifest["eta_ref"] == 0.5
    assert manifest["solvers"][0]["prox_calls"] == manifest["solvers"][0]["outer_iterations"] * 201
    assert "wrote 1 trace" in capsys.readouterr().out


def test_flags_override_config(tmp_path):
    cfg = _write(tmp_path, MINIMAL)
    assert main(["run", str(cfg), "--out", str(tmp_path / "o"), "--seed", "8", "--epochs", "1"]) == 0
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert (manifest["seed"], manifest["epochs"]) == (8, 1.0)


def test_default_out_is_relative_to_config(tmp_path):
    cfg = _write(tmp_path, MINIMAL.replace("seed = 3", "seed = 3\nout = res"))
    assert main(["run", str(cfg), "--epochs", "0.5"]) == 0
    assert (tmp_path / "res" / "v1.csv").exists()


def test_thread_count_does_not_change_outputs(tmp_path):
    cfg = _write(tmp_path, BINCLASS)
    assert main(["run", str(cfg), "--out", str(tmp_path / "a"), "--threads", "1"]) == 0
    assert main(["run", str(cfg), "--out", str(tmp_path / "b"), "--threads", "4"]) == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "accuracy.svg" in names and "mini.csv" in names
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_fstar_is_running_minimum(tmp_path):
    out = tmp_path / "out"
    cfg = _write(tmp_path, MINIMAL)
    main(["run", str(cfg), "--out", str(out), "--epochs", "0.5"])
    short = json.loads((out / "fstar.json").read_text())
    main(["run", str(cfg), "--out", str(out), "--epochs", "3"])
    long = json.loads((out / "fstar.json").read_text())
    (key,) = short
    assert long[key] <= short[key]
    main(["run", str(cfg), "--out", str(out), "--epochs", "0.5"])
    assert json.loads((out / "fstar.json").read_text())[key] == long[key]


@pytest.mark.parametrize(
    "edit, needle",
    [
        (("[solver v1]", "[solver v1]\npreset = v7"), "preset"),
        (("n = 200", "n = 0"), "n"),
        (("kind = nnpca", "kind = pca"), "kind"),
        (("seed = 3", "seed = 3\ncolour = red"), "colour"),
        (("[solver v1]", "[solver v1]\nbatch = mini"), "batch"),
        (("seed = 3", "seed = x"), "seed"),
    ],
)
def test_bad_configs_exit_2(tmp_path, capsys, edit, needle):
    cfg = _write(tmp_path, MINIMAL.replace(*edit))
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert needle in capsys.readouterr().err


def test_unknown_solver_names_the_field(tmp_path, capsys):
    cfg = _write(tmp_path, MINIMAL.replace("[solver v1]", "[solver mine]\npreset = adam"))
    assert main(["run", str(cfg)]) == 2
    assert "[solver mine] preset = 'adam' is not a known solver" in capsys.readouterr().err


def test_missing_config_and_dataset(tmp_path):
    assert main(["run", str(tmp_path / "nope.ini")]) == 2
    cfg = _write(tmp_path, MINIMAL.replace("n = 200", "dataset = missing.svm"))
    assert main(["run", str(cfg)]) == 2


def test_dataset_file(tmp_path):
    (tmp_path / "toy.svm").write_text("1 1:1 2:0.5\n0 2:1 3:2\n1 1:0.3 3:1\n0 2:2\n")
    cfg = _write(tmp_path, BINCLASS.replace("n = 300", "dataset = toy.svm").replace("test_fraction = 0.1\n", ""))
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 0


def test_usage_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["run"])
    assert exc.value.code == 2


def test_presets_commands(capsys):
    assert main(["presets", "list"]) == 0
    out = capsys.readouterr().out.split("\n")
    assert [line.split()[0] for line in out if line] == [
        "v1", "v2", "v3", "v4", "v5", "A-v1", "A-v2", "A-v3", "svrg", "spiderboost", "sgd", "gd"]
    assert main(["presets", "describe", "spiderboost", "--n", "10000"]) == 0
    out = capsys.readouterr().out
    assert "m = 100" in out and "eta = 0.5" in out
    assert main(["presets", "describe", "svrg", "--batch", "mini"]) == 0
    assert "b_hat = 100" in capsys.readouterr().out
    assert main(["presets", "describe", "nope"]) == 2
    assert main(["presets", "describe"]) == 2


def test_verify_exit_codes(capsys):
    assert main(["verify"]) == 0
    assert "FAIL" not in capsys.readouterr().out
    assert main(["verify", "--mutate", "omega"]) == 1
    captured = capsys.readouterr()
    assert "FAIL" in captured.out and "failing case" in captured.err
