import numpy as np
import pytest

from visreg import conv_core, network, visloss, visualize

LAP = conv_core.laplacian()


def test_vis_first_layer_unit_norm():
    m = network.build_model([network.dense(5), network.output(2)], (2, 3, 4), seed=1)
    v = visualize.vis_first_layer(m, 3)
    assert v.shape == (2, 3, 4)
    assert np.linalg.norm(v) == pytest.approx(1.0)
    assert np.allclose(v.ravel() * np.linalg.norm(m.params[0]["W"][3]), m.params[0]["W"][3])


def test_vis_first_layer_errors():
    m = network.build_model([network.conv(3, 2), network.dense(3), network.output(2)], (1, 5, 5))
    with pytest.raises(visualize.VisualizationError, match="dense"):
        visualize.vis_first_layer(m, 0)
    m = network.build_model([network.dense(3), network.output(2)], (1, 3, 3))
    m.params[0]["W"][1] = 0.0
    with pytest.raises(visualize.VisualizationError, match="all-zero"):
        visualize.vis_first_layer(m, 1)
    with pytest.raises(IndexError):
        visualize.vis_first_layer(m, 3)


@pytest.mark.parametrize("act", ["sigmoid", "tanh", "none"])
def test_activation_maximize_finds_weight_direction(act):
    m = network.build_model([network.dense(6, act), network.output(2)], (1, 8, 8), seed=2)
    res = visualize.activation_maximize(m, 0, 4, steps=500, step_size=0.5, seed=0)
    assert visualize.cosine(res.x, visualize.vis_first_layer(m, 4)) >= 0.999
    assert np.linalg.norm(res.x) == pytest.approx(1.0)
    assert res.history[-1] >= res.history[0]


def test_activation_maximize_rejects_bad_steps():
    m = network.build_model([network.dense(2), network.output(2)], (1, 2, 2))
    with pytest.raises(ValueError):
        visualize.activation_maximize(m, 0, 0, steps=0)


def test_quantize_and_constant():
    q = visualize.quantize(np.array([[0.0, 0.5], [1.0, 0.25]]))
    assert q.tolist() == [[0, 128], [255, 64]]
    assert (visualize.quantize(np.full((2, 2), 3.0)) == 128).all()


def test_pgm_roundtrip(tmp_path, rng):
    img = rng.random((5, 7))
    path = visualize.export_image(img, tmp_path / "a.pgm")
    assert np.array_equal(visualize.read_pgm(path), visualize.quantize(img))


def test_png_export(tmp_path, rng):
    pytest.importorskip("PIL")
    from PIL import Image

    img = rng.random((4, 6))
    visualize.export_image(img, tmp_path / "a.png")
    assert np.array_equal(np.asarray(Image.open(tmp_path / "a.png")), visualize.quantize(img))


def test_export_rejects_stack(tmp_path):
    with pytest.raises(ValueError, match="2D"):
        visualize.export_image(np.zeros((2, 3, 3)), tmp_path / "x.pgm")


def test_loss_table_files(tmp_path, rng):
    imgs = [visualize.white_noise((10, 10), rng), visualize.gaussian_blob((10, 10), rng)]
    rows = visualize.loss_table(imgs, LAP, tmp_path, ["noise", "blob"])
    assert rows[0].vl2 == visloss.vl2(imgs[0], LAP)
    assert rows[1].vl1 == visloss.vl1(imgs[1], LAP)
    for name in ("noise.pgm", "noise_response.pgm", "blob.pgm", "loss_table.csv", "loss_table.txt"):
        assert (tmp_path / name).exists()
    lines = (tmp_path / "loss_table.csv").read_text().splitlines()
    assert lines[0] == "image_id,vl1,vl2" and lines[1].startswith("noise,")


def test_blob_peak():
    b = visualize.gaussian_blob((20, 20), np.random.default_rng(0))
    assert 0.9 < b.max() <= 1.0
