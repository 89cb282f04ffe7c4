"""Acceptance gate: one pass/fail line per criterion.

Run with -s to see the gate lines. Every criterion asserts, so a failure
shows up as a plain test failure too.
"""

import numpy as np
import pytest

from hsitrain import gradient_check, load_tensors, toy_setup

fcn = pytest.importorskip("specdrive.fcn")
hypercube = pytest.importorskip("specdrive.hypercube")
quant = pytest.importorskip("specdrive.quant")


def gate(tag: str, ok: bool, detail: str) -> None:
    print(f"\n[{tag}] {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, f"{tag}: {detail}"


def test_s1_gradient_check():
    model, x, y = toy_setup("unet", 13)
    err = gradient_check(model, x, y)
    control = gradient_check(model, x, y, corrupt_scale=2.0)
    ok = err < 1e-3 and control > 1e-3
    gate("S1", ok, f"tiny U-Net max relative gradient error {err:.3e} < 1e-3 "
                   f"(corrupted control {control:.2e})")


def test_s2_synthetic_learning(trained_full, full_ds):
    weights_path, log = trained_full
    val_acc = log["epochs"][-1]["val_accuracy"]

    # exported checkpoint loads on the inference side
    cfg, weights = fcn.load_float_model(weights_path)
    arch_ok = (cfg.in_bands, cfg.base, cfg.depth, cfg.classes, cfg.patch) == \
        (25, 8, 2, 3, 128)

    # float vs quantized agreement on a held-out style frame
    cube = hypercube.load_cube(sorted(full_ds.glob("*.hsc"))[0]).data
    xa = cube[:128, :128]
    xb = cube[16:144, 96:224]
    qm = quant.quantize_model(cfg, weights, [xa, xb])
    probs = fcn.forward(cfg, weights, xa)
    sums_ok = np.abs(probs.sum(axis=-1) - 1.0).max() < 1e-5
    agree = float((quant.forward_quantized(qm, xa).argmax(-1) ==
                   probs.argmax(-1)).mean())

    ok = val_acc >= 0.99 and arch_ok and sums_ok and agree >= 0.95
    gate("S2", ok, f"2/8/128 val accuracy {val_acc:.4f} >= 0.99 after "
                   f"{log['epochs'][-1]['epoch']} epochs; checkpoint loads "
                   f"(arch ok: {arch_ok}); float-vs-quantized agreement "
                   f"{agree:.4f} >= 0.95")


def test_s3_cross_component_bit_contract(trained_full, tmp_path):
    weights_path, _ = trained_full
    cfg, weights = fcn.load_float_model(weights_path)
    rewritten = tmp_path / "rewritten.hswt"
    fcn.save_float_model(rewritten, cfg, weights)
    ours = weights_path.read_bytes()
    theirs = rewritten.read_bytes()
    names, meta = load_tensors(weights_path)
    gate("S3", ours == theirs,
         f"trainer-written HSWT ({len(ours)} bytes, {len(names)} tensors) "
         f"re-written by the consumer is byte-identical")
