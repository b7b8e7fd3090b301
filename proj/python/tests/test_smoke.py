import numpy as np
import pytest

import mvhgnn


def test_cosine_lr_closed_form():
    assert mvhgnn.cosine_lr(0, 100, 1e-4, 1e-6) == pytest.approx(1e-4)
    assert mvhgnn.cosine_lr(50, 100, 1e-4, 1e-6) == pytest.approx(5.05e-5)


def test_metrics_on_identical_sets():
    rng = np.random.default_rng(0)
    emb = rng.normal(size=(12, 5))
    labels = [i % 3 for i in range(12)]
    table = mvhgnn.compute_metrics(emb, labels, emb, labels)
    assert list(table) == list(mvhgnn.METRIC_COLUMNS)
    assert table["NN"] == 100.0
    ranks = mvhgnn.rank_gallery(emb, labels, emb, labels)
    assert [r[0] for r in ranks] == list(range(12))


def test_hand_average_precision():
    q = np.array([[1.0, 0.0]])
    g = np.array([[1, 0], [0.9, 0.5], [0.5, 0.9], [0, 1]], dtype=float)
    assert round(mvhgnn.compute_metrics(q, [0], g, [0, 1, 0, 1])["mAP"], 2) == 83.33


def test_archive_round_trip(tmp_path):
    x = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
    path = tmp_path / "a.mvhf"
    mvhgnn.write_archive(str(path), [("views", x)], ["box", "cone"])
    tensors, labels = mvhgnn.read_archive(str(path))
    np.testing.assert_array_equal(tensors["views"], x)
    assert labels == {"0": "box", "1": "cone"}
    (tmp_path / "bad.mvhf").write_bytes(b"NOPE\x01\x00")
    with pytest.raises(mvhgnn.MvhgnnError):
        mvhgnn.read_archive(str(tmp_path / "bad.mvhf"))


def test_gradcheck_losses():
    assert all(c["passed"] for c in mvhgnn.gradcheck("losses", 3))


def test_tiny_pipeline(tmp_path):
    data, run = tmp_path / "data", tmp_path / "run"
    mvhgnn.generate_dataset(str(data), classes=3, per_class=5, sketches_per_class=4, views=6, dim=8, seed=1)
    ckpt = mvhgnn.train(
        f'data = "{data}"\nout = "{run}"\nepochs = 2\nbatch_size = 4\nquadruplets = 8\n'
        "schedule = [6, 3]\nout_dim = 8\n"
    )
    mvhgnn.encode(ckpt, str(data / "sketches.mvhf"), str(tmp_path / "q.mvhf"), str(run / "splits.json"), "query")
    mvhgnn.encode(ckpt, str(data / "shapes.mvhf"), str(tmp_path / "g.mvhf"), str(run / "splits.json"), "gallery")
    q, ql = mvhgnn.read_archive(str(tmp_path / "q.mvhf"))
    assert q["embeddings"].shape[1] == 8
    assert set(ql.values()) <= {"sphere", "box", "cylinder"}

    model = mvhgnn.Model.load(ckpt)
    tensors, _ = mvhgnn.read_archive(str(data / "shapes.mvhf"))
    e = model.embed_shape(tensors["views"][0], tensors["rig"])
    assert e.shape == (1, 8)
    assert np.isfinite(e).all()


def test_unknown_config_key_is_rejected():
    with pytest.raises(mvhgnn.MvhgnnError, match="unknown config key"):
        mvhgnn.train("epochz = 3\n")
