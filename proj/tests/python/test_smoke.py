import json
import math

import numpy as np
import pytest

import s2pec


def tiny_config(length=3200):
    return {"model.preset": "tiny", "model.input_length": str(length)}


def test_tsf_pool_and_gate():
    rng = np.random.default_rng(0)
    h = rng.normal(size=(3, 4, 5))
    spectral, temporal = s2pec.tsf_pool(h)
    assert spectral.shape == (3, 4, 1)
    assert temporal.shape == (3, 1, 5)
    np.testing.assert_array_equal(spectral[:, :, 0], np.abs(h).max(axis=2))
    np.testing.assert_array_equal(temporal[:, 0, :], np.abs(h).max(axis=1))
    s2, t2 = s2pec.tsf_pool(-h)
    np.testing.assert_array_equal(spectral, s2)
    np.testing.assert_array_equal(temporal, t2)

    a = s2pec.combine_attention(spectral / spectral.max(), temporal / temporal.max())
    np.testing.assert_allclose(a, (spectral / spectral.max()) * (temporal / temporal.max()), rtol=0, atol=0)
    np.testing.assert_array_equal(s2pec.apply_attention(a, h), a * h)
    with pytest.raises(ValueError):
        s2pec.apply_attention(a, h[:, :3, :])


def test_losses():
    x = np.linspace(-1, 1, 12).reshape(3, 4)
    assert s2pec.recon_loss(x, x) == 0.0
    assert s2pec.recon_loss(x + 0.5, x) == pytest.approx(0.5)
    assert s2pec.recon_loss(x + 0.5, x, norm="l2") == pytest.approx(0.25)
    assert s2pec.wbce([0.5], [1.0], 1.0, 1.0) == pytest.approx(math.log(2))
    d = s2pec.total_loss(2.0, 3.0, 0.5, 0.1)
    assert d["total"] == pytest.approx(1.0)
    wb, ws = s2pec.default_class_weights()
    assert wb + ws == pytest.approx(1.0)
    assert wb > ws


def test_metrics():
    eer, _ = s2pec.compute_eer([0.6, 0.4, 0.8], [0.5, 0.3, 0.7])
    assert eer == pytest.approx(1 / 3)
    assert s2pec.compute_eer([0.9, 0.8], [0.1, 0.2])[0] == 0.0
    tdcf, _ = s2pec.compute_min_tdcf([0.9, 0.8], [0.1, 0.2])
    assert tdcf == 0.0
    per = s2pec.per_attack_breakdown([(0.9, "-"), (0.7, "-"), (0.1, "A01"), (0.8, "A02")])
    assert set(per) == {"A01", "A02"}
    assert per["A01"] == 0.0
    with pytest.raises(ValueError):
        s2pec.compute_eer([0.1], [])


def test_features_shapes():
    t = np.arange(16000) / 16000.0
    w = 0.1 * np.sin(2 * math.pi * 440 * t)
    p = s2pec.lfcc(w)
    assert p.shape[0] == 60
    assert p.shape[1] == 1 + (16000 - 320) // 160
    r = s2pec.sinc_frontend(w, tiny_config())
    assert r.ndim == 2
    assert np.all(r >= 0)


def test_toy_data_protocols_and_model(tmp_path):
    cfg = {
        "toy.train_bonafide": "4",
        "toy.train_spoof_per_attack": "2",
        "toy.dev_bonafide": "2",
        "toy.dev_spoof_per_attack": "1",
        "toy.eval_bonafide": "0",
        "toy.eval_spoof_per_attack": "0",
        "toy.length": "4000",
    }
    protocols = s2pec.synth_toy_dataset(str(tmp_path / "toy"), seed=1, config=cfg)
    assert set(protocols) == {"train", "dev"}
    stats = s2pec.partition_stats(protocols["train"])
    assert stats["bonafide"] == 4
    assert stats["spoof"] == 4
    entries = s2pec.parse_protocol(protocols["train"])
    assert len(entries) == 8

    audio = tmp_path / "toy" / "train" / "audio" / (entries[0][1] + ".wav")
    w = np.asarray(s2pec.load_waveform(str(audio), 3200))
    assert w.shape == (3200,)

    model = s2pec.Model(tiny_config())
    out = model.forward(np.stack([w, w[::-1].copy()]))
    assert out["logit"].shape == (2,)
    assert np.all(np.isfinite(out["logit"]))
    assert out["recon_raw"].shape == out["raw_input"].shape
    assert out["recon_power"].shape == out["power_input"].shape
    att = out["attention"]
    assert np.all((att > 0) & (att < 1))
    assert out["h_raw"].shape == out["h_power"].shape

    ckpt = tmp_path / "m.ckpt"
    model.save(str(ckpt))
    again = s2pec.Model.load(str(ckpt))
    np.testing.assert_array_equal(again.forward(np.stack([w]))["logit"], model.forward(np.stack([w]))["logit"])
    assert again.config() == model.config()


def test_cli_in_process(tmp_path):
    code, out, _ = s2pec.run_cli(["--help"])
    assert code == 0
    assert "train" in out
    code, _, err = s2pec.run_cli(["frobnicate"])
    assert code == 2
    code, out, _ = s2pec.run_cli(["synth-data", "-o", str(tmp_path / "d"), "--set", "toy.train_bonafide=2",
                                  "--set", "toy.train_spoof_per_attack=1", "--set", "toy.dev_bonafide=1",
                                  "--set", "toy.dev_spoof_per_attack=1", "--set", "toy.eval_bonafide=1",
                                  "--set", "toy.eval_spoof_per_attack=1", "--set", "toy.length=2000"])
    assert code == 0
    code, out, _ = s2pec.run_cli(["check-data", "--protocol", str(tmp_path / "d" / "protocols" / "toy.dev.txt"),
                                  "--audio-root", str(tmp_path / "d" / "dev" / "audio"), "--partition", "dev"])
    assert code == 0
    assert json.loads(out)["issues"] == 0
