import math

import numpy as np
import pytest

import renet


def test_smooth_l1_and_schedule():
    assert renet.smooth_l1(0.0) == 0.0
    assert renet.smooth_l1(0.5) == pytest.approx(0.00495, abs=1e-15)
    assert renet.lr_at(0) == 0.005
    assert renet.lr_at(20) == 0.0005
    assert renet.lr_at(3, {"base_lr": "0.1", "lr_step_epochs": "2"}) == pytest.approx(0.01)
    with pytest.raises(ValueError):
        renet.lr_at(0, {"nope": "1"})


def test_synthetic_round_trip(tmp_path):
    frames, poses, k = renet.generate_synthetic(3, seed=5, spec={"width": "64", "height": "64", "cx": "31.5", "cy": "31.5", "fx": "110", "fy": "110"})
    assert len(frames) == 3
    assert frames[0].shape == (64, 64)
    assert frames[0].dtype == np.uint16
    assert poses.shape == (3, 16, 3)
    assert k == (110.0, 110.0, 31.5, 31.5)

    again = renet.generate_synthetic(3, seed=5, spec={"width": "64", "height": "64", "cx": "31.5", "cy": "31.5", "fx": "110", "fy": "110"})
    assert np.array_equal(again[1], poses)

    path = tmp_path / "f.rdep"
    renet.write_depth(path, frames[1])
    assert np.array_equal(renet.read_depth(path), frames[1])


def test_metrics():
    rng = np.random.default_rng(0)
    gts = rng.uniform(-100, 100, size=(20, 16, 3))
    preds = gts + rng.normal(scale=5, size=gts.shape)
    overall, per_joint = renet.mean_3d_error(preds, gts)
    errs = np.linalg.norm(preds - gts, axis=2)
    assert overall == pytest.approx(errs.mean(), abs=1e-9)
    assert np.allclose(per_joint, errs.mean(axis=0), atol=1e-9)

    curve = renet.success_curve(preds, gts, [5.0, 10.0, 40.0])
    for thr, frac in curve:
        assert frac == pytest.approx((errs.max(axis=1) < thr).mean())
    tips = [3, 6, 9, 12, 15]
    assert renet.mean_precision(preds, gts, tips, 6.0) == pytest.approx((errs[:, tips] < 6.0).mean())
    mean, rates = renet.mean_average_precision(preds, gts, 7.0)
    assert mean == pytest.approx((errs < 7.0).mean())
    assert len(rates) == 16
    assert renet.mean_3d_error(gts, gts)[0] == 0.0


def test_cli_train_and_predict(tmp_path):
    code, out, err = renet.run_cli(["gen-data", "--n", "4", "--seed", "1", "--out", str(tmp_path / "data")])
    assert code == 0, err
    manifest = tmp_path / "data" / "manifest.txt"
    code, out, err = renet.run_cli([
        "train", "--manifest", str(manifest), "--out", str(tmp_path / "run"),
        "--input_size", "24", "--channels", "2,3,4", "--fc_width", "8",
        "--regions", "0:0:2:2;0:1:2:2;1:0:2:2;1:1:2:2", "--epochs", "1", "--batch_size", "2",
    ])
    assert code == 0, err
    ck = renet.Checkpoint.load(tmp_path / "run" / "model.renc")
    assert ck.config["input_size"] == "24"
    assert ck.parameter_count > 0
    frames, poses, k = renet.load_dataset(manifest)
    pose = ck.predict(frames[0], list(k))
    assert pose.shape == (1, 16, 3)
    assert all(math.isfinite(v) for v in pose.ravel())

    code, _, _ = renet.run_cli(["train", "--manifest", str(tmp_path / "missing.txt"), "--out", str(tmp_path / "x")])
    assert code == 2
    with pytest.raises(ValueError):
        renet.load_dataset(tmp_path / "missing.txt")
