import json
import os
import re
import shutil

import numpy as np
import pytest

from oracles import naive_rank, naive_scores
from shapecode import io
from shapecode.cli import main
from shapecode.evaluation import evaluate, format_cla, load_cla
from shapecode.exceptions import StaleArtifactError
from shapecode.pipeline import (
    PipelineConfig,
    cmd_bof,
    cmd_distances,
    cmd_encode,
    cmd_evaluate,
    cmd_finetune,
    cmd_fuse,
    cmd_pretrain,
    cmd_render,
    cmd_retrieve,
    load_config,
    parse_config_text,
    run_all,
)
from shapecode.synthetic import generate_dataset


def tiny_config(dataset, out, **kw):
    base = dict(dataset=str(dataset), labels=str(dataset / "classes.cla"), out=str(out),
                azimuth_count=2, elevation_count=2, resolution=16, layers=(20, 4),
                pretrain_epochs=2, batch_size=8, finetune_epochs=2, finetune_batch_size=8,
                bof_words=5, bof_grid_step=4, bof_patch_size=8)
    base.update(kw)
    return PipelineConfig(**base)


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    """Eight synthetic meshes plus model '8', an exact copy of model '0'."""
    root = tmp_path_factory.mktemp("data")
    labels = generate_dataset(root, n_per_class=2, seed=0)
    shutil.copy(root / "meshes" / "0.off", root / "meshes" / "8.off")
    pairs = dict(labels.labels, **{"8": labels["0"]})
    (root / "classes.cla").write_text(format_cla(type(labels)(pairs, labels.parents)))
    return root


@pytest.fixture(scope="module")
def finished(dataset, tmp_path_factory):
    cfg = tiny_config(dataset, tmp_path_factory.mktemp("run"))
    reports = run_all(cfg)
    return cfg, reports


def test_defaults_follow_published_settings():
    cfg = PipelineConfig()
    assert (cfg.pretrain_epochs, cfg.batch_size) == (40, 100)
    assert cfg.sizes == (5184, 1000, 500, 250, 30)
    assert (cfg.azimuth_count, cfg.elevation_count, cfg.resolution) == (8, 8, 72)
    assert cfg.bof_words == 1500 and cfg.w_global == cfg.w_local


def test_config_text_and_overrides(tmp_path):
    text = "# comment\nresolution = 32\nlayers = 1024-100-10  # inline\np = 1\n"
    assert parse_config_text(text) == {"resolution": 32, "layers": (1024, 100, 10), "p": 1.0}
    path = tmp_path / "c.cfg"
    path.write_text(text)
    cfg = load_config(path, seed=5, layers="esb")
    assert cfg.layers == (2000, 500, 100, 20) and cfg.seed == 5 and cfg.resolution == 32
    assert load_config(path).sizes == (1024, 100, 10)
    with pytest.raises(ValueError, match="unknown"):
        parse_config_text("colour = red\n")
    again = load_config(None, **parse_config_text(load_config(path).to_text()))
    assert again == load_config(path)


def test_render_one_mesh_full_rig(dataset, tmp_path):
    single = tmp_path / "single"
    single.mkdir()
    shutil.copy(dataset / "meshes" / "3.off", single / "3.off")
    cfg = PipelineConfig(dataset=str(single), out=str(tmp_path / "out"), resolution=16)
    assert cmd_render(cfg) == ["3"]
    with np.load(tmp_path / "out" / "views" / "3.npz") as data:
        assert data["images"].shape == (64, 16, 16)


def test_missing_mesh_directory(tmp_path):
    with pytest.raises(FileNotFoundError):
        cmd_render(PipelineConfig(dataset=str(tmp_path / "nowhere"), out=str(tmp_path)))


def test_rerun_is_skipped_and_stale_input_refused(dataset, tmp_path):
    data = tmp_path / "data"
    shutil.copytree(dataset, data)
    cfg = tiny_config(data, tmp_path / "out")
    cmd_render(cfg)
    target = tmp_path / "out" / "views" / "1.npz"
    stamp = os.stat(target).st_mtime_ns
    cmd_render(cfg)
    assert os.stat(target).st_mtime_ns == stamp
    # touching a mesh changes its digest
    with open(data / "meshes" / "1.off", "a") as fh:
        fh.write("# edited\n")
    with pytest.raises(StaleArtifactError):
        cmd_render(cfg)
    cmd_render(cfg, force=True)
    assert os.stat(target).st_mtime_ns != stamp
    # changed settings are stale as well
    with pytest.raises(StaleArtifactError):
        cmd_render(tiny_config(data, tmp_path / "out", resolution=24))


def test_stage_prerequisites(dataset, tmp_path):
    cfg = tiny_config(dataset, tmp_path)
    with pytest.raises(FileNotFoundError, match="render"):
        cmd_pretrain(cfg)
    cmd_render(cfg)
    with pytest.raises(FileNotFoundError, match="pretrain"):
        cmd_finetune(cfg)
    with pytest.raises(FileNotFoundError, match="finetune"):
        cmd_encode(cfg)
    with pytest.raises(FileNotFoundError, match="encode"):
        cmd_distances(cfg)


def test_finetune_logs_rmse_per_epoch(dataset, tmp_path, caplog):
    cfg = tiny_config(dataset, tmp_path, finetune_epochs=3)
    cmd_render(cfg)
    cmd_pretrain(cfg)
    with caplog.at_level("INFO", logger="shapecode"):
        net = cmd_finetune(cfg)
    lines = [r.getMessage() for r in caplog.records if "finetune" in r.getMessage()]
    assert len(lines) == 3
    for k, line in enumerate(lines, start=1):
        m = re.fullmatch(rf"finetune epoch {k}/3 rmse (\d+\.\d{{6}})", line)
        assert m and float(m.group(1)) == pytest.approx(net.rmse_curve[k - 1], abs=5e-7)


def test_artifact_shapes(finished):
    cfg, _ = finished
    codes, meta = io.read_matrix(cfg.path("codes.f64"))
    assert codes.shape == (9, 4, 4) and meta["ids"] == [str(i) for i in range(9)]
    for channel in ("global", "local", "fused"):
        d = io.load_distance_matrix(cfg.path(f"distances_{channel}.f64"))
        assert d.values.shape == (9, 9)
        assert (np.diag(d.values) == 0).all() and (d.values >= 0).all()
    stack = io.load_stack(cfg.path("dbn"))
    assert stack.sizes == (256, 20, 4)


def test_evaluate_matches_oracle(finished, dataset):
    cfg, reports = finished
    labels = load_cla(dataset / "classes.cla")
    for channel, report in reports.items():
        d = io.load_distance_matrix(cfg.path(f"distances_{channel}.f64"))
        ids = list(d.ids)
        expected = naive_scores(naive_rank(d.values.tolist(), ids), ids, labels.labels)
        assert (report.nn, report.ft, report.st) == pytest.approx(expected, abs=1e-12)
        assert evaluate(d, labels) == report
    saved = json.loads(open(cfg.path("report.json")).read())
    assert set(saved) == {"global", "local", "fused"}


def test_retrieve_finds_twin(finished):
    cfg, _ = finished
    for channel in ("global", "local", "fused"):
        top = cmd_retrieve(cfg, "8", k=3, channel=channel)
        assert top[0] == ("0", 0.0)
        assert len(top) == 3
    with pytest.raises(KeyError):
        cmd_retrieve(cfg, "99")


def test_full_rerun_is_bit_identical(finished, dataset, tmp_path):
    cfg, _ = finished
    again = tiny_config(dataset, tmp_path)
    run_all(again)
    for name in ("codes.f64", "bof_histograms.f64", "distances_fused.f64"):
        assert open(cfg.path(name), "rb").read() == open(again.path(name), "rb").read()


def test_cli_run_retrieve_and_errors(dataset, tmp_path, capsys):
    cfg = tiny_config(dataset, tmp_path / "cli")
    cfg_path = tmp_path / "tiny.cfg"
    cfg_path.write_text(cfg.to_text())
    assert main(["run", "--config", str(cfg_path), "--no-bof"]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0].split() == ["Method", "NN", "FT", "ST"]
    assert "Autoencoder" in out and "BoF" not in out
    assert main(["retrieve", "--config", str(cfg_path), "8", "-k", "2"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 2 and lines[0].split() == ["1", "0", "0.000000"]

    assert main(["render", "--dataset", str(tmp_path / "missing"), "--out", str(tmp_path / "x")]) == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "FileNotFoundError" and err["command"] == "render"
    assert main(["fuse", "--config", str(cfg_path)]) == 1
    assert "local distances" in json.loads(capsys.readouterr().err)["message"]


def test_cli_pretrain_layers_override(dataset, tmp_path, capsys):
    args = ["--dataset", str(dataset), "--out", str(tmp_path), "--resolution", "16",
            "--set", "azimuth_count=1", "--set", "elevation_count=2", "--set", "pretrain_epochs=1"]
    assert main(["render"] + args) == 0
    assert main(["pretrain", "--layers", "256-7-3"] + args) == 0
    assert "256-7-3" in capsys.readouterr().out
    assert io.load_stack(tmp_path / "dbn").sizes == (256, 7, 3)


def test_cli_synthetic(tmp_path, capsys):
    assert main(["synthetic", "--out", str(tmp_path / "s"), "--per-class", "1"]) == 0
    assert len(load_cla(tmp_path / "s" / "classes.cla")) == 4
    cfg = load_config(tmp_path / "s" / "pipeline.cfg")
    assert cfg.out == str(tmp_path / "s" / "run") and cfg.resolution == 32
    assert main(["synthetic", "--out", str(tmp_path / "s")]) == 0
    assert "already" in capsys.readouterr().out
