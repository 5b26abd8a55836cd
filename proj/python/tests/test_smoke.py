import math

import numpy as np
import pytest

import shellac


def test_schedule_endpoints_and_coefficients():
    assert shellac.sigma(0.0) == 0.0
    assert shellac.sigma(0.5) == pytest.approx(0.5)
    assert shellac.alpha(0.5) == pytest.approx(math.sqrt(0.75))
    f, g, h = shellac.reverse_coefficients(0.5, 0.4)
    # f z - g eps reproduces the posterior mean A z + B x.
    st, ss = shellac.sigma(0.5), shellac.sigma(0.4)
    ar = shellac.alpha(0.5) / shellac.alpha(0.4)
    assert f - g / st == pytest.approx(ar * ss**2 / st**2, rel=1e-12)
    assert h > 0.0
    with pytest.raises(shellac.UsageError):
        shellac.sigma(1.5)


def test_guide_normalize_and_envelope():
    fs = 8000.0
    n = shellac.frame_length(fs)
    assert n == 6154
    g = shellac.synth_guide("filtered-noise-thumps", fs, seed=3)
    assert g.shape == (n,)
    assert np.array_equal(g, shellac.synth_guide("filtered-noise-thumps", fs, seed=3))

    y = shellac.normalize_median_rms(g)
    assert 20 * math.log10(shellac.median_rms(y)) == pytest.approx(-10.0, abs=1e-9)

    env = shellac.temporal_envelope(y, fs)
    assert env.ndim == 1 and np.all(env >= 0)
    db, edges = shellac.bark_envelope(y, fs)
    assert len(edges) == len(db) + 1


def test_pairwise_deviation_modes():
    items = np.array([[0.0, 1.0], [2.0, 1.0]])
    assert np.allclose(shellac.pairwise_deviation_std(items), [2.0, 0.0])
    ref = np.array([1.0, 1.0])
    assert np.allclose(shellac.pairwise_deviation_std(items, ref), [1.0, 0.0])


def test_wav_round_trip(tmp_path):
    x = np.linspace(-0.5, 0.5, 101)
    path = tmp_path / "x.wav"
    shellac.write_wav(path, x, 8000.0)
    y, fs = shellac.read_wav(path)
    assert fs == 8000.0
    assert np.allclose(y, x.astype(np.float32))
    with pytest.raises(shellac.IoError):
        shellac.read_wav(tmp_path / "missing.wav")


def test_train_and_sample(tmp_path):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    for i in range(2):
        code, _, err = shellac.run_cli(["guide-synth", "--preset", "hiss-clicks", "--fs", "8000", "--length", "2",
                                        "--seed", str(i), "-o", str(corpus / f"c{i}.wav")])
        assert code == 0, err
    (corpus / "manifest.txt").write_text("c0.wav\nc1.wav\n")
    config = tmp_path / "desk.json"
    config.write_text('{"network": {"preset": "desk"}, "data": {"fs": 8000, "manifest": "%s"},'
                      ' "training": {"batch_size": 1, "total_iterations": 2}}' % (corpus / "manifest.txt"))
    ckpt = tmp_path / "model.ckpt"
    code, _, err = shellac.run_cli(["train", "-c", str(config), "--seed", "1", "-o", str(ckpt)])
    assert code == 0, err

    model = shellac.Model(ckpt)
    assert model.fs == 8000.0 and model.iteration == 2
    a = model.sample(steps=3, seed=5)
    assert a.shape == (model.frame_length,) and np.all(np.isfinite(a))
    assert np.array_equal(a, model.sample(steps=3, seed=5))

    guide = shellac.normalize_median_rms(shellac.synth_guide("filtered-noise-thumps", 8000.0, seed=1))
    assert np.array_equal(model.guided(guide, tau0=0.0, steps=3), guide)
    frames = model.variations(revolutions=3, tau_p=0.5, steps=4, seed=2)
    assert frames.shape == (3, model.frame_length)


def test_cli_usage_error_exit_code():
    code, _, err = shellac.run_cli(["sample"])
    assert code == 2
    assert err
