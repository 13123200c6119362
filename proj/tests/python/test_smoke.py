import numpy as np
import pytest

import sdcd


def test_shuffle_round_trip_conserves_patches():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, size=(28, 42, 3), dtype=np.uint8)
    out, perm = sdcd.shuffle_patches(img, 14, 5)
    assert out.shape == img.shape
    assert sorted(perm) == list(range(6))
    back = sdcd.unshuffle_patches(out, 14, perm)
    assert np.array_equal(back, img)
    again, perm2 = sdcd.shuffle_patches(img, 14, 5)
    assert perm2 == perm and np.array_equal(again, out)


def test_non_divisible_raises():
    img = np.zeros((30, 28), dtype=np.uint8)
    with pytest.raises(sdcd.SdcdError) as info:
        sdcd.shuffle_patches(img, 14, 0)
    assert info.value.args[0] == "NonDivisibleDimensions"


def test_calibration_identities():
    a = [0.5, -1.25, 3.0]
    b = [2.0, 0.0, -4.0]
    assert sdcd.calibrate(a, a, 2.0) == a
    assert sdcd.calibrate(a, b, 0.0) == a
    assert sdcd.calibrate(a, b, 1.0) == pytest.approx([-1.0, -2.5, 10.0])
    p = sdcd.softmax(a)
    assert sum(p) == pytest.approx(1.0)
    assert sdcd.plausibility_mask([0.0, -10.0], 0.1) == [True, False]


def test_pope_and_chair():
    s = sdcd.pope_score([(True, "Yes"), (True, "no"), (False, "No."), (False, "yes")])
    assert s["accuracy"] == 0.5 and s["precision"] == 0.5 and s["recall"] == 0.5
    assert sdcd.parse_binary_answer("I cannot tell") == "unparseable"
    c = sdcd.chair_score(
        [("A dog lies beside a sleeping cat.", ["cat"]), ("A car waits.", ["car"])],
        {"dog": ["dogs"], "cat": ["cats"], "car": ["cars"]},
    )
    assert c["chair_s"] == 0.5
    assert c["chair_i"] == pytest.approx(1 / 3)


def test_synthetic_bait_is_suppressed():
    scene, items = sdcd.synthetic_dataset({"real_items": 1, "bait_items": 1})
    backend = sdcd.SyntheticBackend(scene)
    bait = next(i for i in items if not i["ground_truth"])
    prompt = sdcd.probe_prompt(bait["object"])
    _, regular = backend.generate(bait["image"], prompt, contrastive=False)
    _, contrastive = backend.generate(bait["image"], prompt)
    assert regular == "yes"
    assert contrastive == "no"
    _, alpha0 = backend.generate(bait["image"], prompt, {"alpha": 0.0})
    assert alpha0 == regular
    with pytest.raises(sdcd.SdcdError):
        backend.generate(bait["image"], prompt, {"alpha": -1.0})
