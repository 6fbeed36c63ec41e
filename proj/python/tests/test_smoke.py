import numpy as np
import pytest

import pmri

SMALL = {"m": "16", "n": "16", "c": "2", "T": "2", "N_f": "4"}


def test_dft2_matches_numpy_ortho():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((12, 10, 3)) + 1j * rng.standard_normal((12, 10, 3))
    y = pmri.dft2(x)
    assert np.allclose(y, np.fft.fft2(x, axes=(0, 1), norm="ortho"), atol=1e-12)
    assert np.allclose(pmri.idft2(y), x, atol=1e-12)


def test_phantom_and_mask():
    p = pmri.phantom(64, 64)
    assert p.shape == (64, 64)
    assert p.min() >= 0.0 and p.max() <= 1.0
    mask = pmri.cartesian_mask(320, 320, 0.3156)
    assert mask.mean() == pytest.approx(101 / 320)
    assert (mask == mask[0]).all()  # whole columns


def test_sample_is_consistent():
    s = pmri.make_sample({"m": "24", "n": "20", "c": "3"}, seed=4)
    assert s["f"].shape == (24, 20, 3)
    assert np.all(s["f"][s["mask"] == 0] == 0)
    assert np.allclose(pmri.rss(s["u_star"]), s["v_star"], atol=1e-12)
    kspace = pmri.dft2(s["u_star"]) * s["mask"][:, :, None]
    assert np.allclose(kspace, s["f"], atol=1e-12)


def test_metrics():
    ref = np.full((2, 2), 0.5)
    ref[0, 0] = 1.0
    rec = ref.copy()
    rec[1, 1] = 0.6
    assert pmri.psnr(rec, ref) == pytest.approx(20 * np.log10(20), abs=1e-9)
    v = pmri.phantom(16, 16)
    assert pmri.ssim(v, v) == 1.0
    assert pmri.rmse_image(v, v) == 0.0


def test_zero_network_returns_zero_filled():
    s = pmri.make_sample({"m": "16", "n": "16", "c": "2"}, seed=1)
    net = pmri.Network.zeros(SMALL)
    out = net.forward(s["f"], s["mask"])
    zf = pmri.idft2(s["f"])
    assert len(out["u"]) == 3
    for u in out["u"]:
        assert np.max(np.abs(u - zf)) <= 1e-12 * np.max(np.abs(zf))


def test_network_layout_and_persistence(tmp_path):
    net = pmri.Network.xavier({"T": "4", "N_f": "8", "c": "2"}, seed=3)
    assert net.scalar_count <= 0.75 * net.unshared_scalar_count
    params = net.parameters()
    assert "theta1_rho" in params
    assert "theta3_J_0.w" in params and "theta2_J_0.w" not in params
    net.save(str(tmp_path / "ckpt"))
    back = pmri.Network.load(str(tmp_path / "ckpt"))
    for name, value in params.items():
        assert np.array_equal(back.parameters()[name], value)
    s = pmri.make_sample({"m": "16", "n": "16", "c": "2"}, seed=2)
    assert back.loss(s) == net.loss(s) > 0


def test_gradcheck_and_tolerance():
    ok = pmri.gradcheck({"gc_seeds": "1", "m": "8", "n": "8", "N_f": "4"})
    assert ok["passed"] and ok["max_rel_err"] < 1e-5
    strict = pmri.gradcheck({"gc_seeds": "1", "m": "8", "n": "8", "N_f": "4", "tol": "0"})
    assert not strict["passed"]


def test_errors_are_python_exceptions():
    with pytest.raises(ValueError):
        pmri.Network.zeros({"bogus": "1"})
    with pytest.raises(ValueError):
        pmri.dft2(np.zeros(4, dtype=complex))
