"""Synthetic vision-pipeline kernels and message types for benchmarks.

The five-stage lane pipeline (compensate, blur, project, extract-center,
steer) applies deterministic per-element arithmetic to a camera-image
analog.  Image stages are pointwise, so a stage computes identically
whether it sees the whole frame (sequential mode) or one chunk at a time
(dataflow mode); the center extractor reduces with exact integer
accumulators for the same reason.  No image libraries: plain numpy
ufuncs, which also release the GIL so dataflow stages genuinely overlap.
"""

from __future__ import annotations

import numpy as np

from .msgdef import Arity, FieldDef, MessageTypeDef, TypeRegistry
from .runtime import DATAFLOW, SEQUENTIAL, NodeKernel, NodePorts

IMAGE_TYPE = "bench/Image"
CENTER_TYPE = "bench/Center"
COMMAND_TYPE = "bench/Command"
BLOB_TYPE = "bench/Blob"

# full-scale reference image is 1000x600 elements; benchmarks shrink it
FULL_IMAGE_ELEMS = 1000 * 600


def bench_registry(image_elems: int) -> TypeRegistry:
    """Registry of the benchmark message types for one image size."""
    if image_elems % 4 != 0:
        raise ValueError("image_elems must be a multiple of 4 (word alignment)")
    registry = TypeRegistry()
    registry.register(
        MessageTypeDef(
            IMAGE_TYPE,
            (FieldDef("pixels", "uint8", Arity.fixed(image_elems)),),
        )
    )
    registry.register(
        MessageTypeDef(
            CENTER_TYPE,
            (FieldDef("x", "float64", Arity.scalar()), FieldDef("y", "float64", Arity.scalar())),
        )
    )
    registry.register(
        MessageTypeDef(
            COMMAND_TYPE,
            (
                FieldDef("speed", "float64", Arity.scalar()),
                FieldDef("turn", "float64", Arity.scalar()),
            ),
        )
    )
    registry.register(
        MessageTypeDef(
            BLOB_TYPE,
            (
                FieldDef("seq", "uint32", Arity.scalar()),
                FieldDef("data", "uint8", Arity.unbounded()),
            ),
        )
    )
    return registry.resolve()


def make_image(elems: int, seed: int = 0) -> bytes:
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=elems, dtype=np.uint8).tobytes()


# -- pointwise image transforms (uint8 -> uint8, deterministic) -----------


def _as_f32(data: bytes) -> np.ndarray:
    return np.frombuffer(data, dtype=np.uint8).astype(np.float32)


def _as_u8(arr: np.ndarray) -> bytes:
    return np.clip(arr, 0.0, 255.0).astype(np.uint8).tobytes()


def compensate(data: bytes, passes: int = 1) -> bytes:
    """Outlier-squash analog: affine rescale toward mid-range."""
    arr = _as_f32(data)
    for _ in range(passes):
        arr = arr * np.float32(0.92) + np.float32(9.5)
    return _as_u8(arr)


def blur(data: bytes, passes: int = 1) -> bytes:
    """Low-pass analog: damp deviation from a fixed pivot."""
    arr = _as_f32(data)
    for _ in range(passes):
        arr = (arr + np.float32(128.0)) * np.float32(0.5)
    return _as_u8(arr)


def project(data: bytes, passes: int = 1) -> bytes:
    """Perspective-warp analog: nonlinear intensity remap."""
    arr = _as_f32(data)
    for _ in range(passes):
        arr = np.sqrt(arr * np.float32(220.0) + np.float32(16.0))
    return _as_u8(arr)


def extract_center(total: int, count: int, lo: int, hi: int) -> dict:
    """Center point from exact integer reductions of the image."""
    x = total / (count * 255.0)
    y = (hi - lo) / 255.0
    return {"x": x, "y": y}


def steer(center: dict) -> dict:
    x, y = center["x"], center["y"]
    return {"speed": 1.0 / (1.0 + abs(x)), "turn": (x - 0.5) * (1.0 + y)}


IMAGE_STAGES = {
    "compensate": compensate,
    "blur": blur,
    "project": project,
}

# topic names along the five-stage pipeline
CHAIN_TOPICS = ["camera", "plane", "smooth", "birdseye", "center", "command"]
CHAIN_NODES = ["compensate", "blur", "project", "extract", "steer"]


def image_stage_sequential(stage, in_topic: str, out_topic: str, passes: int):
    def body(inputs):
        return {out_topic: {"pixels": stage(inputs[in_topic]["pixels"], passes)}}

    return body


def image_stage_dataflow(stage, in_topic: str, out_topic: str, passes: int, chunk_words: int):
    def body(ports: NodePorts):
        sub = ports.sub(in_topic)
        pub = ports.pub(out_topic)
        while True:
            data, last = sub.read_chunk(max_words=chunk_words)
            pub.write_chunk(stage(data, passes), last=last)
            if last:
                return

    return body


def _extract_sequential(in_topic: str, out_topic: str):
    def body(inputs):
        pixels = np.frombuffer(inputs[in_topic]["pixels"], dtype=np.uint8)
        return {
            out_topic: extract_center(
                int(pixels.sum(dtype=np.int64)), pixels.size, int(pixels.min()), int(pixels.max())
            )
        }

    return body


def _extract_dataflow(in_topic: str, out_topic: str, chunk_words: int):
    def body(ports: NodePorts):
        sub = ports.sub(in_topic)
        pub = ports.pub(out_topic)
        total = 0
        count = 0
        lo, hi = 255, 0
        while True:
            data, last = sub.read_chunk(max_words=chunk_words)
            if data:
                arr = np.frombuffer(data, dtype=np.uint8)
                total += int(arr.sum(dtype=np.int64))
                count += arr.size
                lo = min(lo, int(arr.min()))
                hi = max(hi, int(arr.max()))
            if last:
                pub.publish_blocking(extract_center(total, count, lo, hi))
                return

    return body


def _steer_sequential(in_topic: str, out_topic: str):
    def body(inputs):
        return {out_topic: steer(inputs[in_topic])}

    return body


def chain_kernels(mode: str, passes: int = 1, chunk_words: int = 4096) -> dict[str, NodeKernel]:
    """Kernels for the five-stage pipeline in the given execution mode.

    The tiny center/command stages always run sequentially; dataflow mode
    streams the three image stages and the reduction chunk by chunk.
    """
    t = CHAIN_TOPICS
    stages = [
        ("compensate", compensate, t[0], t[1]),
        ("blur", blur, t[1], t[2]),
        ("project", project, t[2], t[3]),
    ]
    kernels: dict[str, NodeKernel] = {}
    for name, fn, t_in, t_out in stages:
        if mode == DATAFLOW:
            kernels[name] = NodeKernel(
                name, DATAFLOW, image_stage_dataflow(fn, t_in, t_out, passes, chunk_words)
            )
        else:
            kernels[name] = NodeKernel(
                name, SEQUENTIAL, image_stage_sequential(fn, t_in, t_out, passes)
            )
    if mode == DATAFLOW:
        kernels["extract"] = NodeKernel(
            "extract", DATAFLOW, _extract_dataflow(t[3], t[4], chunk_words)
        )
    else:
        kernels["extract"] = NodeKernel("extract", SEQUENTIAL, _extract_sequential(t[3], t[4]))
    kernels["steer"] = NodeKernel("steer", SEQUENTIAL, _steer_sequential(t[4], t[5]))
    return kernels
