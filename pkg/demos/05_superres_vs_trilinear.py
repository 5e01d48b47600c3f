"""Flow super-resolution against the trilinear baseline.

Trains a small relaxed model to upsample channel-mode flow by 4x and
compares its validation L1 against trilinear interpolation of the newest
velocity frame. Also prints the per-element weight deviations: channel flow
is anisotropic, so the learned weights drift apart across the group, which
is the symmetry-discovery signature in this setting. Expect a few minutes
per training run on one core; pass --fast for a shortened run that shows
the mechanics without beating the baseline.

    python3 demos/05_superres_vs_trilinear.py [--fast]
"""

import sys

import numpy as np

from rgconv import (
    ExperimentConfig,
    eval_l1,
    load_flow_dataset,
    train,
    trilinear_upsample,
)


def main():
    fast = "--fast" in sys.argv[1:]
    cfg = ExperimentConfig(
        task="flow_channel",
        group="octahedral_24",
        layer_kind="relaxed_equiv",
        channels=4,
        banks=1,
        blocks=2,
        epochs=30 if fast else 200,
        lr=1e-3,
        batch_size=4,
        n_samples=16,
        flow_size=32,
        precision="f32",
    ).validate()

    data = load_flow_dataset(cfg)
    tri = eval_l1(lambda s: trilinear_upsample(s[-3:], 4), data.val, np.float32)
    print(f"trilinear baseline: val L1 {tri:.4f}")

    model, stats = train(cfg)
    val = stats.val_losses[-1]
    print(f"trained {cfg.layer_kind}: val L1 {val:.4f} "
          f"({100 * (1 - val / tri):+.1f}% vs trilinear, "
          f"{stats.wall_time:.0f}s, {stats.final_epoch + 1} epochs)")

    report = stats.report
    devs = report.deviations
    print(f"weight deviations d(g): mean {np.mean(devs[1:]):.3e}, "
          f"max {np.max(devs):.3e}")
    print("anisotropic data pushes the relaxed weights apart; on "
          "flow_isotropic the same numbers stay near zero.")


if __name__ == "__main__":
    main()
