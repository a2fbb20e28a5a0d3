"""Gated scale-transfer operations and a toy multi-branch segmentation network.

Arrays are NumPy (N, C, H, W). Primitive ops and gates run in float64;
networks come in float32 and float64 flavours.
"""

from ._core import (
    ConfigError,
    FormatError,
    NetworkF32,
    NetworkF64,
    NumericError,
    ShapeError,
    TapeError,
    adaptive_avg_pool,
    apply_gate,
    avg_pool_down,
    batch_norm_eval,
    bilinear_upsample,
    config_keys,
    conv2d,
    cross_entropy,
    gate_param_count,
    gate_supervised,
    gate_unsupervised,
    load_tensor,
    miou,
    per_op_audit,
    pixel_accuracy,
    poly_lr,
    relu,
    resolve_config,
    save_tensor,
    save_tensor_f32,
    scale_transfer,
    sigmoid,
    synth_generate,
    total_loss,
)
from ._core import train as _train

VARIANTS = ("baseline", "gfm", "gtm_unsup", "gtm_sup", "full", "hrnet")


def Network(variant="full", width=8, blocks=2, size=64, seed=1, dtype="float32"):
    """Toy network for one of VARIANTS."""
    if dtype in ("float32", "f32"):
        return NetworkF32(variant, width, blocks, size, seed)
    if dtype in ("float64", "f64"):
        return NetworkF64(variant, width, blocks, size, seed)
    raise ValueError(f"dtype must be float32 or float64, got {dtype!r}")


def train(settings=None, **overrides):
    """Runs one training job and returns its summary.

    `settings` maps config keys such as "optim.lr" to values; keyword
    overrides use "__" for the dot, e.g. optim__lr=0.1.
    """
    merged = dict(settings or {})
    merged.update({k.replace("__", "."): v for k, v in overrides.items()})
    text = {}
    for k, v in merged.items():
        if isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, (list, tuple)):
            v = ",".join(str(x) for x in v)
        text[k] = str(v)
    return _train(text)
