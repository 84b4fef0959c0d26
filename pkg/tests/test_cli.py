import json

import numpy as np
import pytest

from cmfd.cli import main
from cmfd.config import RunConfig
from cmfd.imgio import ForgeryGroundTruth, load_image, save_image, synth_forgery, textured_image


@pytest.fixture(scope="module")
def images(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    base = textured_image(256, seed=8)
    forged, _ = synth_forgery(base, ForgeryGroundTruth((30, 40, 64, 64), (30 + 31.5 + 100, 40 + 31.5 + 20)))
    save_image(root / "forged.png", forged)
    save_image(root / "genuine.png", base)
    save_image(root / "flat.pgm", np.full((64, 64), 120.0))
    return root


def test_detect_exit_codes(images, tmp_path, capsys):
    assert main(["detect", str(images / "flat.pgm")]) == 0
    assert json.loads(capsys.readouterr().out)["verdict"] == "genuine"
    out = tmp_path / "r.json"
    overlay = tmp_path / "o.png"
    assert main(["detect", str(images / "forged.png"), "--out", str(out), "--overlay", str(overlay)]) == 1
    report = json.loads(out.read_text())
    assert report["verdict"] == "forged" and report["config"] == json.loads(json.dumps(RunConfig().to_dict()))
    assert load_image(overlay).shape == (256, 256)
    assert main(["detect", str(tmp_path / "missing.png")]) == 2
    assert "error" in capsys.readouterr().err


def test_flags_override_config_file(images, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"matcher": {"tau_match": 7, "d_min": 20}, "seed": 4}))
    main(["detect", str(images / "flat.pgm"), "--config", str(cfg), "--tau-match", "3", "--eps", "0.1"])
    echoed = json.loads(capsys.readouterr().out)
    assert echoed["config"]["matcher"]["tau_match"] == 3
    assert echoed["config"]["matcher"]["d_min"] == 20
    assert echoed["config"]["matcher"]["eps"] == 0.1
    assert echoed["seed"] == 4


def test_bad_config_exit_2(images, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"matcher": {"nope": 1}}))
    assert main(["detect", str(images / "flat.pgm"), "--config", str(bad)]) == 2
    assert main(["detect", str(images / "flat.pgm"), "--eps", "0.1", "0.2"]) == 2


def test_match_dumps_candidates(images, tmp_path):
    out = tmp_path / "m.json"
    assert main(["match", str(images / "forged.png"), "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["candidates"] == len(data["pairs"]) > 0
    assert "config" in data


def test_perturb(images, tmp_path):
    out = tmp_path / "p.png"
    assert main(["perturb", str(images / "genuine.png"), "--op", "noise:0:0", "--out", str(out)]) == 0
    assert np.array_equal(load_image(out), load_image(images / "genuine.png"))
    assert json.loads((tmp_path / "p.png.json").read_text())["op"] == "noise:0:0"
    assert main(["perturb", str(images / "genuine.png"), "--op", "blur:2:1", "--out", str(out)]) == 2


def test_dump_keypoints(images, tmp_path):
    out, desc, pyr = tmp_path / "k.csv", tmp_path / "d.csv", tmp_path / "pyr"
    args = ["dump-keypoints", str(images / "genuine.png"), "--out", str(out), "--descriptors", str(desc)]
    assert main(args + ["--dump-pyramid", str(pyr)]) == 0
    n = len(out.read_text().splitlines()) - 1
    assert n > 0 and len(desc.read_text().splitlines()) - 1 == n
    assert len(list(pyr.glob("*.pgm"))) == 16


def test_synth_and_eval(tmp_path, capsys):
    corpus = tmp_path / "corpus"
    assert main(["synth", "--out", str(corpus), "--n", "2", "--seed", "6", "--tamper", "rotation", "--size", "256"]) == 0
    entries = json.loads((corpus / "manifest.json").read_text())
    assert len(entries) == 4
    assert main(["synth", "--out", str(tmp_path / "again"), "--n", "2", "--seed", "6", "--tamper", "rotation", "--size", "256"]) == 0
    for e in entries:
        assert (corpus / e["image_path"]).read_bytes() == (tmp_path / "again" / e["image_path"]).read_bytes()

    outs = []
    for run in ("e1", "e2"):
        assert main(["eval", "--manifest", str(corpus / "manifest.json"), "--out", str(tmp_path / run), "--seed", "2"]) == 0
        outs.append(((tmp_path / run / "roc.csv").read_bytes(), (tmp_path / run / "summary.json").read_bytes()))
    assert outs[0] == outs[1]
    rows = outs[0][0].decode().splitlines()
    assert rows[0] == "subset,op,param,tau,fpr,tpr" and len(rows) > 2
    assert json.loads(outs[0][1])["config"]["seed"] == 2


def test_eval_bad_manifest(tmp_path):
    (tmp_path / "m.json").write_text("[{\"image_path\": 1}]")
    assert main(["eval", "--manifest", str(tmp_path / "m.json"), "--out", str(tmp_path / "o")]) == 2


def test_synth_rejects_zero(tmp_path):
    assert main(["synth", "--out", str(tmp_path), "--n", "0"]) == 2
