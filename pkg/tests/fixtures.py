"""Shared tuned fixtures for trainer, CLI and acceptance tests.

The spurious fixture mirrors a 95%-aligned training split with a bias axis
three times stronger than the signal axis and contaminated class prompts;
evaluation uses a group-balanced split drawn from the same geometry. The
intrinsic fixture couples the attributes in the sampling law itself and is
trained with ground-truth target labels.
"""

from dataclasses import replace

import kerneldebias as kd

SPURIOUS_SPEC = kd.SynthSpec(
    n=5000,
    d=16,
    correlation_mode="spurious",
    spurious_strength=0.95,
    signal_gap=4.0,
    bias_gap=12.0,
    noise_sigma=0.8,
    seed=3,
    prompt_bias=0.4,
)
SPURIOUS_TEST_SPEC = replace(SPURIOUS_SPEC, n=4000, spurious_strength=0.5)

SPURIOUS_CONFIG = kd.TrainConfig(
    tau_i=0.7,
    tau_t=0.7,
    tau_z=0.7,
    rff_dim=512,
    iters=10,
    seed=0,
    bandwidth=6.0,
)

INTRINSIC_SPEC = kd.SynthSpec(
    n=5000,
    d=16,
    correlation_mode="intrinsic",
    spurious_strength=0.85,
    signal_gap=4.0,
    bias_gap=8.0,
    noise_sigma=1.0,
    seed=3,
)
INTRINSIC_TEST_SPEC = replace(INTRINSIC_SPEC, n=4000)

INTRINSIC_CONFIG = kd.TrainConfig(
    tau_i=1.2,
    tau_t=1.2,
    tau_z=0.5,
    rff_dim=512,
    iters=10,
    seed=0,
    bandwidth=4.0,
    supervised_y=True,
)


def train_data(ds: kd.SynthDataset, with_y: bool = False) -> kd.TrainData:
    return kd.TrainData(
        x_img=ds.x_img,
        x_text=ds.x_text,
        x_text_sensitive=ds.x_text_sensitive,
        y=ds.y if with_y else None,
        s=ds.s,
    )
