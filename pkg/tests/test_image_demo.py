import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bpcp.image_demo import (
    FULL_SHAPE,
    coins_image,
    demo,
    psnr,
    render_residual,
    rescale,
    stack,
    unstack,
    vectorize,
    write_outputs,
)
from bpcp.pgm import load_pgm


def test_vectorize_is_column_major():
    img = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert vectorize(img).tolist() == [1.0, 3.0, 2.0, 4.0]
    assert np.array_equal(unstack(vectorize(img), 2, 2), img)


def test_stack_single_frame():
    img = coins_image(8, 6)
    fs = stack(img, 1)
    assert fs.matrix.shape == (48, 1)
    assert np.array_equal(fs.matrix[:, 0], vectorize(img))
    assert np.array_equal(fs.frame(0), img)


def test_stack_is_rank_one():
    fs = stack(coins_image(), 50)
    assert fs.matrix.shape == (64 * 64, 50)
    assert np.all(fs.matrix == fs.matrix[:, :1])
    s = np.linalg.svd(fs.matrix, compute_uv=False)
    assert s[1] < 1e-10 * s[0]


def test_full_scale_stack_shape():
    fs = stack(np.zeros(FULL_SHAPE), 200)
    assert FULL_SHAPE == (242, 308)
    assert fs.matrix.shape == (74536, 200)


def test_stack_rejects_bad_input():
    with pytest.raises(ValueError):
        stack(coins_image(4, 4), 0)
    with pytest.raises(ValueError):
        stack(np.zeros(5), 3)


def test_coins_image_range():
    img = coins_image(40, 50)
    assert img.shape == (40, 50)
    assert img.min() >= 0 and img.max() <= 1 and img.std() > 0.1


def test_rescale_and_residual_render():
    assert rescale(np.array([[0.25, 0.75, 1.25]]), 0.25, 1.25).tolist() == [[0, 128, 255]]
    assert not rescale(np.ones((2, 2)), 1.0, 1.0).any()
    r = render_residual(np.array([[-2.0, 0.0, 2.0, 1.0]]), 2.0)
    assert r.tolist() == [[1, 128, 255, 192]]
    assert np.all(render_residual(np.zeros((2, 2)), 0.0) == 128)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=30))
def test_rescale_is_monotone(values):
    x = np.sort(np.array(values))
    out = rescale(x, float(x.min()), float(x.max())).astype(int)
    assert np.all(np.diff(out) >= 0)
    res = render_residual(x, float(np.max(np.abs(x))) or 1.0).astype(int)
    assert np.all(np.diff(res) >= 0)


def test_psnr():
    a = np.zeros((4, 4))
    assert psnr(a, a) == np.inf
    assert psnr(a, a + 0.1) == pytest.approx(20.0)


def test_zero_noise_round_trip():
    img = coins_image(32, 32)
    out = demo(img, frames=10, noise_scale=0.0)
    assert out.result.iterations == 1
    recovered = out.result.l_hat
    truth = stack(img, 10).matrix
    assert np.linalg.norm(recovered - truth) <= 1e-4 * np.linalg.norm(truth)
    assert out.metrics["rel_fro"] <= 1e-4


@pytest.fixture(scope="module")
def gaussian_small():
    return demo(coins_image(24, 24), frames=20, noise_kind="gaussian", noise_scale=0.3, seed=1)


def test_output_dimensions(gaussian_small):
    out = gaussian_small
    for name in ("original", "noisy", "recovered", "residual"):
        assert out.rendered[name].shape == (24, 24) and out.rendered[name].dtype == np.uint8
    for key in ("rel_error", "sigma_ratio", "residual_corr", "psnr_frame", "psnr_mean", "iterations"):
        assert key in out.metrics
    assert out.frame_psnr.shape == (20,)
    assert out.metrics["recovered_min"] <= out.metrics["recovered_max"]


def test_write_outputs(tmp_path, gaussian_small):
    write_outputs(gaussian_small, tmp_path)
    for name in ("original", "noisy", "recovered", "residual"):
        assert np.array_equal(np.round(load_pgm(tmp_path / f"{name}.pgm") * 255), gaussian_small.rendered[name])
    with open(tmp_path / "metrics.csv") as fh:
        rows = dict(csv.reader(fh))
    assert float(rows["rel_error"]) == gaussian_small.metrics["rel_error"]
    assert "psnr_frame_19" in rows


def test_determinism(tmp_path, gaussian_small):
    again = demo(coins_image(24, 24), frames=20, noise_kind="gaussian", noise_scale=0.3, seed=1)
    for name, img in gaussian_small.rendered.items():
        assert img.tobytes() == again.rendered[name].tobytes()


def test_frame_index_checked():
    with pytest.raises(ValueError):
        demo(coins_image(8, 8), frames=3, frame=3)
