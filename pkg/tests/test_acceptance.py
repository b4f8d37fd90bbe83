"""Acceptance suite: twelve numbered end-to-end criteria.

Each test is one criterion; the terminal summary (see conftest) prints one
pass/fail line per criterion. Tolerances are part of the contract — do not
loosen them.
"""

import math
import time

import numpy as np
import pytest

from test_metrics import ssim_brute
from test_model import REFERENCE_ROWS

from thermofuse import cli, metrics, wavelet
from thermofuse.datakit import random_crops, read_pgm, synth_pairs, write_pgm
from thermofuse.fusion import average_fuse, histogram_equalize
from thermofuse.model import ModelConfig, build_model, load_weights, save_weights
from thermofuse.nn import (
    Adam,
    BatchNormLayer,
    Conv2DLayer,
    Conv2DTransposeLayer,
    LeakyReLULayer,
    ReLULayer,
    SigmoidLayer,
    gradient_check,
    logcosh_loss,
)
from thermofuse.nn.gradcheck import gradient_check_fn
from thermofuse.rof import RofBox, compute_rof
from thermofuse.training import train_from_pairs


def test_criterion_01_dwt_oracle():
    # 100 random 128x128 planes: reconstruction < 1e-9, energy relative
    # error < 1e-10, all inside one second
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    for _ in range(100):
        x = rng.uniform(size=(128, 128))
        pyr = wavelet.dwt2_forward(x, levels=2)
        back = wavelet.dwt2_inverse(pyr)
        assert np.abs(back - x).max() < 1e-9
        energy = float((pyr.ll**2).sum())
        for bands in pyr.details:
            energy += float((bands.lh**2 + bands.hl**2 + bands.hh**2).sum())
        ref = float((x**2).sum())
        assert abs(energy - ref) / ref < 1e-10
    assert time.perf_counter() - start < 1.0


def test_criterion_02_ll_range_law():
    rng = np.random.default_rng(2)
    saw_negative = {"lh": False, "hl": False, "hh": False}
    for _ in range(20):
        x = rng.uniform(size=(64, 64))
        one = wavelet.dwt2_forward(x, levels=1)
        assert one.ll.min() >= 0.0 and one.ll.max() <= 2.0
        two = wavelet.dwt2_forward(x, levels=2)
        assert two.ll.min() >= 0.0 and two.ll.max() <= 4.0
        for pyr in (one, two):
            for bands in pyr.details:
                saw_negative["lh"] |= bool(bands.lh.min() < 0.0)
                saw_negative["hl"] |= bool(bands.hl.min() < 0.0)
                saw_negative["hh"] |= bool(bands.hh.min() < 0.0)
    assert all(saw_negative.values())


def test_criterion_03_gradient_checks():
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    makers = [
        lambda c, r: Conv2DLayer(c, int(r.integers(1, 5)), stride=1, rng=r),
        lambda c, r: Conv2DLayer(c, int(r.integers(1, 5)), stride=2, rng=r),
        lambda c, r: Conv2DTransposeLayer(c, int(r.integers(1, 5)), rng=r),
        lambda c, r: BatchNormLayer(c),
        lambda c, r: ReLULayer(),
        lambda c, r: LeakyReLULayer(),
        lambda c, r: SigmoidLayer(),
    ]
    for make in makers:
        for trial in range(5):
            shape_rng = np.random.default_rng(1000 + trial)
            n = int(shape_rng.integers(1, 3))
            h = 2 * int(shape_rng.integers(2, 5))
            w = 2 * int(shape_rng.integers(2, 5))
            c = int(shape_rng.integers(1, 4))
            layer = make(c, rng)
            x = rng.normal(size=(n, h, w, c))
            if isinstance(layer, (ReLULayer, LeakyReLULayer)):
                x += 0.05 * np.sign(x) + 1e-3  # probe clear of the kink
            report = gradient_check(layer, x, tolerance=1e-4)
            assert report.passed, f"{type(layer).__name__}: {report}"
    for trial in range(5):
        pred = rng.normal(size=(3, int(rng.integers(2, 8))))
        target = rng.normal(size=pred.shape)
        report = gradient_check_fn(lambda p: logcosh_loss(p, target), pred)
        assert report.passed, str(report)
    assert time.perf_counter() - start < 120.0


def test_criterion_04_shape_audit():
    model = build_model(ModelConfig(dwf=4, height=128, width=128), seed=4)
    out = model.forward(np.random.default_rng(4).uniform(size=(128, 128)))
    audit = [(label, tuple(shape)) for label, shape in model.last_audit]
    assert audit == REFERENCE_ROWS
    assert ("d0", (64, 64, 16)) in audit
    assert ("op1", (128, 128, 1)) in audit
    assert out.shape == (128, 128)
    assert out.min() > 0.0 and out.max() < 1.0


def test_criterion_05_structural_correspondence():
    # drive exactly one decoded sub-band to ones at a time: op1 must place
    # it where the reference tiling puts that band
    model = build_model(ModelConfig(dwf=1, height=32, width=32), seed=5)
    deep = {"ll2_blk6": "ll", "hl2": "hl", "lh2": "lh", "hh2": "hh"}
    fine = {"hl1": "hl", "lh1": "lh", "hh1": "hh"}
    for hot in list(deep) + list(fine):
        overrides = {
            name: np.full((8, 8, 1) if name in deep else (16, 16, 1),
                          1.0 if name == hot else 0.0)
            for name in list(deep) + list(fine)
        }
        model.forward(np.zeros((32, 32)), overrides=overrides)
        op1 = model.activation("op1")[0, :, :, 0]

        def plane(name, extent):
            return np.full((extent, extent), 1.0 if name == hot else 0.0)

        pyramid = wavelet.SubbandPyramid(
            levels=2,
            ll=plane("ll2_blk6", 8),
            details=[
                wavelet.DetailBands(
                    lh=plane("lh1", 16), hl=plane("hl1", 16), hh=plane("hh1", 16)
                ),
                wavelet.DetailBands(
                    lh=plane("lh2", 8), hl=plane("hl2", 8), hh=plane("hh2", 8)
                ),
            ],
        )
        assert np.array_equal(op1, wavelet.tile_layout(pyramid)), hot


@pytest.mark.slow
def test_criterion_06_toy_training(tmp_path):
    start = time.perf_counter()
    rng = np.random.default_rng(42)
    samples = synth_pairs(24, extent=128, rng=rng)
    pairs = []
    for sample in samples:
        pairs.extend(random_crops(sample, per_box=2, rng=rng, crop_size=32))
    pairs = pairs[:64]
    assert len(pairs) == 64

    cfg = ModelConfig(dwf=1, height=32, width=32)
    csv_a = tmp_path / "a.csv"
    csv_b = tmp_path / "b.csv"
    _, losses = train_from_pairs(
        cfg, pairs, epochs=200, batch_size=8, seed=42, loss_csv=csv_a
    )
    assert len(losses) == 200
    assert losses[199] <= 0.5 * losses[0], (losses[0], losses[199])

    train_from_pairs(cfg, pairs, epochs=200, batch_size=8, seed=42, loss_csv=csv_b)
    assert csv_a.read_bytes() == csv_b.read_bytes()
    assert time.perf_counter() - start < 1800.0


def test_criterion_07_logcosh_limits():
    loss_big, _ = logcosh_loss(np.array([100.0]), np.array([0.0]))
    assert abs(loss_big - (100.0 - math.log(2.0))) < 1e-8
    loss_small, _ = logcosh_loss(np.array([0.01]), np.array([0.0]))
    assert abs(loss_small - 0.01**2 / 2.0) < 1e-8


def test_criterion_08_adam_bias_correction():
    for g in (1.0, -3.5, 1e-6, 1e6, 0.3):
        p = np.full((4,), 10.0)
        opt = Adam()
        grad = np.full((4,), g)
        opt.step({"w": p}, {"w": grad})
        assert np.array_equal(opt.m["w"], grad)  # m-hat == g, exactly
    p = np.array([2.0, -7.0])
    held = p.copy()
    opt = Adam()
    for _ in range(5):
        opt.step({"w": p}, {"w": np.zeros(2)})
    assert np.array_equal(p, held)


def test_criterion_09_fusion_and_equalization():
    a = np.array([[100, 101]], dtype=np.uint8)
    b = np.array([[200, 100]], dtype=np.uint8)
    fused = average_fuse(a, b)
    assert fused[0, 0] == 150
    assert fused[0, 1] == 101  # 100.5 rounds away from zero

    rng = np.random.default_rng(9)
    for _ in range(50):
        img = rng.integers(0, 256, size=(24, 24), dtype=np.uint8)
        out = histogram_equalize(img)
        order = np.argsort(img.ravel(), kind="stable")
        assert np.all(np.diff(out.ravel().astype(int)[order]) >= 0)
    flat = np.full((16, 16), 93, dtype=np.uint8)
    assert np.array_equal(histogram_equalize(flat), flat)


def box_iou(a: RofBox, b: RofBox) -> float:
    rows = min(a.x2, b.x2) - max(a.x1, b.x1) + 1
    cols = min(a.y2, b.y2) - max(a.y1, b.y1) + 1
    inter = max(rows, 0) * max(cols, 0)
    area_a = (a.x2 - a.x1 + 1) * (a.y2 - a.y1 + 1)
    area_b = (b.x2 - b.x1 + 1) * (b.y2 - b.y1 + 1)
    return inter / (area_a + area_b - inter)


def test_criterion_10_region_of_fusion():
    # (a) fully hand-checkable 4x4 case
    thermal = np.zeros((4, 4), dtype=np.uint8)
    fused = thermal.copy()
    fused[1:3, 1:3] = 100
    box = compute_rof(thermal, fused)
    assert (box.x1, box.x2) == (1, 2) and (box.y1, box.y2) == (1, 2)

    # (b) blob recovery under noise: IoU >= 0.8 in at least 45 of 50
    hits = 0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        base = rng.integers(90, 130, size=(96, 96), dtype=np.uint8)
        h = int(rng.integers(48, 73))
        w = int(rng.integers(48, 73))
        r = int(rng.integers(2, 96 - h - 2))
        c = int(rng.integers(2, 96 - w - 2))
        noisy = base.astype(np.int64).copy()
        noisy[r : r + h, c : c + w] += 100
        noisy += np.round(rng.normal(0.0, 2.0, size=noisy.shape)).astype(np.int64)
        noisy = np.clip(noisy, 0, 255).astype(np.uint8)
        got = compute_rof(base, noisy)
        if box_iou(got, RofBox(r, r + h - 1, c, c + w - 1)) >= 0.8:
            hits += 1
    assert hits >= 45, f"only {hits}/50 blob recoveries reached IoU 0.8"

    # (c) summed-area fast path identical to direct recomputation
    rng = np.random.default_rng(10)
    for _ in range(20):
        t = rng.integers(0, 256, size=(16, 16), dtype=np.uint8)
        f = rng.integers(0, 256, size=(16, 16), dtype=np.uint8)
        assert compute_rof(t, f, use_integral=True) == compute_rof(
            t, f, use_integral=False
        )

    # (d) no divergence at all: the box stays the whole image
    img = rng.integers(0, 256, size=(20, 30), dtype=np.uint8)
    full = compute_rof(img, img.copy())
    assert (full.x1, full.x2, full.y1, full.y2) == (0, 19, 0, 29)


def test_criterion_11_metrics():
    rng = np.random.default_rng(11)
    img = rng.integers(0, 256, size=(32, 32)).astype(np.float64)
    triple = metrics.score_triple(img, img)
    assert abs(triple.ssim - 1.0) < 1e-12
    assert abs(triple.cossim - 1.0) < 1e-12
    assert abs(triple.mse) < 1e-12

    for _ in range(5):
        a = rng.integers(0, 256, size=(32, 32)).astype(np.float64)
        b = np.clip(a + rng.normal(0, 15, size=a.shape), 0, 255)
        assert abs(metrics.ssim(a, b) - ssim_brute(a, b)) < 1e-9
        assert abs(metrics.ssim(a, b) - metrics.ssim(b, a)) < 1e-12
        assert abs(metrics.cossim(a, b) - metrics.cossim(b, a)) < 1e-12


def test_criterion_12_serialization(tmp_path, capsys):
    # weights container: save -> load -> save reproduces the bytes
    model = build_model(ModelConfig(dwf=1, height=32, width=32), seed=12)
    first = tmp_path / "w.tofw"
    second = tmp_path / "w2.tofw"
    save_weights(model, first)
    save_weights(load_weights(first, extents=(32, 32)), second)
    assert first.read_bytes() == second.read_bytes()

    # image container: write -> read -> write reproduces the bytes
    img = np.random.default_rng(12).integers(0, 256, size=(24, 40), dtype=np.uint8)
    pgm_a = tmp_path / "img.pgm"
    pgm_b = tmp_path / "img2.pgm"
    write_pgm(img, pgm_a)
    write_pgm(read_pgm(pgm_a), pgm_b)
    assert pgm_a.read_bytes() == pgm_b.read_bytes()

    # corrupted magic must surface as exit code 2 through the front end
    blob = bytearray(first.read_bytes())
    blob[:4] = b"JUNK"
    bad = tmp_path / "bad.tofw"
    bad.write_bytes(bytes(blob))
    rc = cli.main(
        ["infer", str(bad), str(pgm_a), "--out", str(tmp_path / "mask.pgm")]
    )
    assert rc == 2
    assert "magic" in capsys.readouterr().err
