import json

import numpy as np
import pytest

import hgit


@pytest.fixture(scope="module")
def pair():
    return hgit.generate_domain_pair("source", "shifted-dark-lowcontrast", n_train=8, n_test=3, size=32, seed=1)


def test_pair_shapes(pair):
    assert len(pair["source_train"]) == 8
    assert pair["target_train"].masks is None
    assert pair["target_test"].role == "target-test"
    img = pair["source_train"].images[0]
    assert img.shape == (32, 32) and img.dtype == np.float32
    assert 0.0 <= img.min() and img.max() <= 1.0


def test_histogram_and_ks():
    img = np.full((16, 16), 0.5, dtype=np.float32)
    h = hgit.compute_histogram(img)
    assert h.shape == (256,) and h[128] == 1.0
    assert hgit.ks_statistic(h, h) == 0.0
    assert hgit.ks_p_value(0.0, 100, 100) == 1.0
    assert hgit.ks_p_value(0.5, 100, 100) < 1e-3


def test_hist_match_self(pair):
    img = pair["source_train"].images[0]
    out = hgit.hist_match(img, hgit.compute_histogram(img))
    assert np.abs(out - img).max() <= 1 / 255 + 1e-6


def test_fda_self_swap(pair):
    img = pair["source_train"].images[0]
    assert np.abs(hgit.fda_translate(img, img, 0.1) - img).max() < 1e-5


def test_gate_and_segmenter(pair, tmp_path):
    tr = hgit.translate(pair["source_train"], pair["target_train"], backend="hist-match")
    selected, report = hgit.gate(tr, pair["target_train"], keep_percent=70)
    assert len(selected) == 6 == report["selected"]
    model = hgit.train_segmenter(selected, {"epochs": 1, "base_channels": 4, "batch_size": 4})
    masks = hgit.predict(pair["target_test"], model)
    scores = hgit.evaluate(masks, pair["target_test"].masks)
    assert 0.0 <= scores["iou"] <= scores["sa"] <= 1.0
    model.save(str(tmp_path / "seg.ckpt"))
    again = hgit.SegmenterModel.load(str(tmp_path / "seg.ckpt"))
    assert all((a == b).all() for a, b in zip(masks, hgit.predict(pair["target_test"], again)))


def test_test_split_refused(pair):
    with pytest.raises(hgit.ArgumentError):
        hgit.translate(pair["source_train"], pair["target_test"])


def test_bce_loss():
    p = np.full((8, 8), 0.5, dtype=np.float32)
    y = np.zeros((8, 8), dtype=np.uint8)
    y[::2] = 1
    assert hgit.bce_loss(p, y) == pytest.approx(np.log(2), rel=1e-6)


def test_run_experiment(tmp_path):
    cfg = {
        "scenarios": ["source-only", "hist-match"],
        "datasets": [{"name": "d", "source_style": "source", "target_style": "shifted-bright",
                      "n_train": 6, "n_test": 2, "image_size": 32}],
        "seeds": [0],
        "segmentation": {"epochs": 1, "base_channels": 4, "batch_size": 4},
        "out_dir": str(tmp_path / "out"),
    }
    lines = []
    report = hgit.run_experiment(cfg, log=lines.append)
    assert len(report["runs"]) == 2
    assert any(l.startswith("done") for l in lines)
    assert (tmp_path / "out" / "report.csv").exists()
    with pytest.raises(hgit.ConfigError):
        hgit.run_experiment({**cfg, "scenarios": ["suit"]})
