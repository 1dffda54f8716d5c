import csv
import json
from pathlib import Path

import pytest

from slrbench.cli import main
from slrbench.experiment import load_config, parse_config

TINY = """\
[data]
root = {root}
folds = 5

[model]
conv_filters = 4
lstm_units = 8
layers = 1
heads = 4
model_dim = 16
ffn_dim = 32

[train]
epochs = {epochs}
batch_size = 8
curriculum_epochs = 1, 2, 3

[run]
output_dir = {out}
"""


def _synth(path, signers=6, per_class=6, *extra):
    return main(["synth", "--classes", "5", "--signers", str(signers), "--per-class", str(per_class),
                 "--seed", "42", "--out", str(path), *extra])


def _config(tmp_path, root, out, epochs=2, name="tiny.ini"):
    path = tmp_path / name
    path.write_text(TINY.format(root=root, out=out, epochs=epochs))
    return path


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data") / "synth"
    assert _synth(root) == 0
    return root


def _tree(root: Path):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_synth_counts_and_reproducibility(tmp_path, dataset):
    doc = json.loads((dataset / "manifest.json").read_text())
    assert doc["classes"] == 5 and len(doc["samples"]) == 30
    assert len({s["signer"] for s in doc["samples"]}) == 6
    assert len(list((dataset / "samples").glob("*.slrb"))) == 30
    again = tmp_path / "again"
    assert _synth(again) == 0
    assert _tree(again) == _tree(dataset)


def test_synth_refuses_to_overwrite(tmp_path, capsys):
    out = tmp_path / "d"
    assert _synth(out) == 0
    capsys.readouterr()
    assert _synth(out) == 10
    assert "error[refused]" in capsys.readouterr().err
    assert _synth(out, 6, 6, "--force") == 0


def test_train_is_bitwise_reproducible(tmp_path, dataset):
    for run in ("a", "b"):
        cfg = _config(tmp_path, dataset, tmp_path / run, name=f"{run}.ini")
        assert main(["train", "--config", str(cfg), "--model", "convlstm", "--fold", "2", "--seed", "43"]) == 0
    a, b = tmp_path / "a/convlstm/2/43", tmp_path / "b/convlstm/2/43"
    assert (a / "log.csv").read_bytes() == (b / "log.csv").read_bytes()
    assert (a / "checkpoint.slrc").read_bytes() == (b / "checkpoint.slrc").read_bytes()
    assert json.loads((a / "result.json").read_text()) == json.loads((b / "result.json").read_text())


def test_resolved_configs_differ_only_in_model_kind(tmp_path, dataset):
    cfg = _config(tmp_path, dataset, tmp_path / "out")
    for kind in ("convlstm", "transformer"):
        assert main(["train", "--config", str(cfg), "--model", kind, "--fold", "0"]) == 0
    lines = [(tmp_path / f"out/{k}/0/42/config.ini").read_text().splitlines() for k in ("convlstm", "transformer")]
    diff = [(x, y) for x, y in zip(*lines) if x != y]
    assert len(lines[0]) == len(lines[1])
    assert diff == [("kind = convlstm", "kind = transformer")]
    resolved = load_config(tmp_path / "out/transformer/0/42/config.ini")
    assert resolved.model.num_classes == 5 and resolved.model.dropout == resolved.train.dropout


def test_eval_reproduces_logged_metrics(tmp_path, dataset, capsys):
    cfg = _config(tmp_path, dataset, tmp_path / "out")
    assert main(["train", "--config", str(cfg), "--model", "transformer", "--fold", "1"]) == 0
    cell = tmp_path / "out/transformer/1/42"
    logged = json.loads((cell / "result.json").read_text())
    capsys.readouterr()
    argv = ["eval", "--checkpoint", str(cell / "checkpoint.slrc"), "--manifest", str(dataset / "manifest.json"),
            "--fold-plan", str(tmp_path / "out/fold_plan.json"), "--fold", "1"]
    assert main(argv + ["--k", "1"]) == 0
    out = capsys.readouterr().out
    assert f"top1={logged['top1']!r} top5={logged['top5']!r}" in out
    k1 = float(out.split("top1=")[-1])
    assert main(argv + ["--k", "5"]) == 0
    k5 = float(capsys.readouterr().out.split("top5=")[-1])
    assert k5 >= k1
    rows = list(csv.DictReader((cell / "eval.csv").open()))
    assert len(rows) == 2 and rows[0]["fold"] == "1" and float(rows[0]["top1"]) == logged["top1"]


def test_eval_refuses_corrupted_checkpoint(tmp_path, dataset, capsys):
    cfg = _config(tmp_path, dataset, tmp_path / "out", epochs=1)
    assert main(["train", "--config", str(cfg), "--model", "convlstm", "--fold", "0"]) == 0
    ckpt = tmp_path / "out/convlstm/0/42/checkpoint.slrc"
    data = bytearray(ckpt.read_bytes())
    data[-1] ^= 0x01
    ckpt.write_bytes(bytes(data))
    capsys.readouterr()
    assert main(["eval", "--checkpoint", str(ckpt), "--manifest", str(dataset)]) == 4
    assert "checksum" in capsys.readouterr().err


def test_missing_dataset_names_manifest(tmp_path, capsys):
    cfg = _config(tmp_path, tmp_path / "nowhere", tmp_path / "out")
    assert main(["train", "--config", str(cfg), "--model", "convlstm", "--fold", "0"]) == 5
    err = capsys.readouterr().err
    assert err.startswith("error[data]") and str(tmp_path / "nowhere" / "manifest.json") in err


def test_config_errors_are_field_level(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[train]\nepochz = 3\n")
    assert main(["train", "--config", str(bad), "--model", "convlstm", "--fold", "0"]) == 3
    assert "train.epochz" in capsys.readouterr().err
    bad.write_text("[train]\nlr_max = fast\n")
    assert main(["train", "--config", str(bad), "--model", "convlstm", "--fold", "0"]) == 3
    assert "train.lr_max" in capsys.readouterr().err
    assert main(["train", "--config", str(tmp_path / "absent.ini"), "--model", "convlstm", "--fold", "0"]) == 3


def test_config_dump_round_trips(repo_root):
    from slrbench.experiment import dump_config
    for name in ("reference.ini", "desk.ini"):
        cfg = load_config(repo_root / "configs" / name)
        assert parse_config(dump_config(cfg)) == cfg
    ref = load_config(repo_root / "configs/reference.ini")
    assert ref.train.epochs == 50 and ref.train.lr_max == 3e-3 and ref.model.model_dim == 512


def test_fold_out_of_range(tmp_path, dataset, capsys):
    cfg = _config(tmp_path, dataset, tmp_path / "out")
    assert main(["train", "--config", str(cfg), "--model", "convlstm", "--fold", "5"]) == 3


def test_crossval_grid_resume_and_too_few_signers(tmp_path, dataset, capsys):
    cfg = _config(tmp_path, dataset, tmp_path / "grid", epochs=1)
    assert main(["crossval", "--config", str(cfg)]) == 0
    rows = list(csv.DictReader((tmp_path / "grid/results.csv").open()))
    cells = [r for r in rows if r["fold"] not in ("mean", "std")]
    assert len(cells) == 2 * 5 * 3
    assert {(r["model"], r["fold"], r["seed"]) for r in cells} == {
        (m, str(f), str(s)) for m in ("convlstm", "transformer") for f in range(5) for s in (42, 43, 44)}
    assert all(float(r["top5"]) >= float(r["top1"]) for r in cells)
    assert "Vanilla Transformer" in (tmp_path / "grid/results.md").read_text()

    # resume: completed cells are read back, a deleted one is recomputed
    victim = tmp_path / "grid/transformer/3/44"
    before = {p: p.stat().st_mtime_ns for p in (tmp_path / "grid").rglob("checkpoint.slrc")}
    (victim / "result.json").unlink()
    assert main(["crossval", "--config", str(cfg)]) == 0
    after = {p: p.stat().st_mtime_ns for p in (tmp_path / "grid").rglob("checkpoint.slrc")}
    changed = [p for p in before if before[p] != after[p]]
    assert changed == [victim / "checkpoint.slrc"]

    few = tmp_path / "few"
    assert _synth(few, 4, 4) == 0
    cfg2 = _config(tmp_path, few, tmp_path / "grid2", epochs=1, name="few.ini")
    capsys.readouterr()
    assert main(["crossval", "--config", str(cfg2)]) == 6
    assert "error[protocol]" in capsys.readouterr().err
