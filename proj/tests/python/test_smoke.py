import math

import numpy as np
import pytest

import lavse


def test_eofp_round_trip_bound():
    rng = np.random.default_rng(0)
    x = (rng.standard_normal((32, 8, 8)) * 3).astype(np.float32)
    blob = lavse.eofp_encode(x)
    assert blob[:4] == b"EOFP"
    assert len(blob) == 1024 + 4 + 1 + 1 + 3 * 4 + 2
    y = lavse.eofp_decode(blob)
    assert y.shape == x.shape
    nz = y != 0
    assert np.all(np.sign(y[nz]) == np.sign(x[nz]))
    ratio = np.abs(x[nz]) / np.abs(y[nz])
    assert np.all((ratio >= 1) & (ratio < 2))
    assert np.all(lavse.eofp_decode(lavse.eofp_encode(np.zeros(5, np.float32))) == 0)


def test_compression_report():
    r = lavse.compression_report()
    assert (r["r_ae"], r["r_qua"], r["r_comp"]) == (6, 8, 48)


def test_metrics():
    clean = lavse.gen_clean(3, 2.0)
    assert lavse.stoi(clean, clean) == pytest.approx(1.0, abs=1e-6)
    rng = np.random.default_rng(1)
    e = rng.standard_normal(clean.size)
    e -= clean * (e @ clean) / (clean @ clean)
    e *= math.sqrt(0.01 * (clean @ clean) / (e @ e))
    assert lavse.si_sdr(clean, clean + e) == pytest.approx(20.0, abs=0.01)
    noise = lavse.gen_noise("pink", 4, 2.0)
    noisy, alpha, gain = lavse.mix_at_snr(clean, noise, -4.0)
    assert lavse.measure_snr(clean * gain, noisy) == pytest.approx(-4.0, abs=0.01)


def test_stoi_against_pystoi():
    pystoi = pytest.importorskip("pystoi")
    signal = pytest.importorskip("scipy.signal")
    clean = lavse.gen_clean(5, 3.0)
    noisy, _, _ = lavse.mix_at_snr(clean, lavse.gen_noise("babble", 6, 3.0), 0.0)
    # pystoi's own 16 kHz path uses a different anti-aliasing filter, so
    # resample with ours and score at 10 kHz.
    h = signal.firwin(321, 1 / 8, window=("kaiser", 8.0))
    x = signal.resample_poly(clean, 5, 8, window=h)
    y = signal.resample_poly(noisy, 5, 8, window=h)
    ref = pystoi.stoi(x, y, 10000, extended=False)
    assert lavse.stoi(clean, noisy) == pytest.approx(ref, abs=1e-9)


def test_models_and_enhance(tmp_path):
    n = lavse.build_corpus(tmp_path / "c", seed=2, n_train=1, n_test=1, duration_s=1.0,
                           train_snrs=[0.0], test_snrs=[-4.0])
    assert n == 1 * 1 * 2 + 1 * 1 * 4
    lips = lavse.read_lip_frames(tmp_path / "c" / "test" / "lips" / "u0000")
    assert lips.shape == (25, 3, 64, 64)
    ae = lavse.AeModel.create(1)
    z = ae.encode(lips[0])
    assert z.shape == (32, 8, 8) and np.all(z >= 0)
    assert ae.decode(z).shape == (3, 64, 64)
    assert len(ae.compress(lips[0])) == 1044

    avse = lavse.SeModel.create("avse", 1)
    ao = lavse.SeModel.create("audio_only", 1)
    assert abs(ao.param_count - avse.param_count) / avse.param_count <= 0.10
    noisy = lavse.gen_clean(9, 1.0) + 0.01
    out = avse.enhance(noisy, ae, lips)
    assert out.shape == noisy.shape
    assert np.array_equal(out, avse.enhance(noisy, ae, lips))
    assert ao.enhance(noisy).shape == noisy.shape
    with pytest.raises(lavse.LavseError):
        avse.enhance(noisy)

    model, losses = lavse.train_se(str(tmp_path / "c" / "manifest.csv"), None, "audio_only", epochs=1)
    assert model.mode == "audio_only" and len(losses) == 1
    rows = lavse.evaluate(str(tmp_path / "c" / "manifest.csv"), model)
    assert len(rows) == 4
