"""Benchmark harness: transfer time, fan-out sensitivity, and chain latency.

Scenarios compare the streaming runtime against the double-copy baseline at
desk scale:

* ``bench_transfer``: one publisher, one subscriber, a ladder of message
  sizes.  Per message, the transport duration runs from the first word
  entering the network to the last word received (codec excluded); the
  codec-inclusive duration is reported alongside in the row extras.
* ``bench_fanout``: one publisher, k draining subscribers; duration ends at
  the last subscriber's receipt.  A software broadcaster pays a per-
  subscriber copy, so only bounded growth is expected of the streaming
  subject, while the baseline grows with per-reader stack work.
* ``bench_chain``: the five-stage lane pipeline; duration runs from the
  first node's receipt of the camera frame to the last node's completed
  command publish.

Harness conventions: the transfer and fan-out scenarios drive every port
from one harness thread over full-frame-capacity links (publish returns
after enqueue; the take immediately after measures the receive-side
movement), which keeps scheduler wake latency out of the size ladder.  The
chain scenario runs every node as a real thread on purpose: its jitter
comparison is about exactly that scheduling.  Baseline and streaming
repetitions are interleaved in time so their ratio is immune to host
throughput drift, the garbage collector is paused during measured loops,
and the first 5% of repetitions are discarded as warm-up everywhere.
"""

from __future__ import annotations

import math
import threading
import time
from dataclasses import dataclass, field

from .baseline import BaselineTopic
from .kernels import (
    BLOB_TYPE,
    CHAIN_NODES,
    CHAIN_TOPICS,
    CENTER_TYPE,
    COMMAND_TYPE,
    IMAGE_TYPE,
    bench_registry,
    chain_kernels,
    make_image,
)
from .runtime import (
    DATAFLOW,
    EXTERNAL,
    RuntimeConfig,
    SEQUENTIAL,
    instantiate,
)
from .topology import (
    PUB,
    SUB,
    AppSpec,
    NodeSpec,
    PortSpec,
    build_topology,
)

WARMUP_FRACTION = 0.05


def stats(samples) -> tuple[float, float]:
    """Exact mean and population standard deviation (n divisor)."""
    n = len(samples)
    if n == 0:
        raise ValueError("stats of an empty sample set")
    mean = math.fsum(samples) / n
    var = math.fsum((x - mean) ** 2 for x in samples) / n
    return mean, math.sqrt(var)


@dataclass(frozen=True)
class Measurement:
    """Duration samples (ns) with their mean and population sigma."""

    label: str
    samples_ns: tuple[int, ...]
    t_avg_ns: float
    sigma_ns: float

    @property
    def n(self) -> int:
        return len(self.samples_ns)

    @classmethod
    def from_samples(cls, label: str, samples_ns) -> "Measurement":
        mean, sigma = stats(samples_ns)
        return cls(label, tuple(samples_ns), mean, sigma)


@dataclass
class BenchRow:
    label: str
    measurements: dict[str, Measurement]
    speedup: float | None = None
    extras: dict[str, float] = field(default_factory=dict)


@dataclass
class BenchReport:
    scenario: str
    subjects: list[str]
    rows: list[BenchRow]


BASELINE = "baseline"
STREAMING = "streaming"
BOTH = "both"


def _subjects(subject: str) -> list[str]:
    if subject == BOTH:
        return [BASELINE, STREAMING]
    if subject in (BASELINE, STREAMING):
        return [subject]
    raise ValueError(f"unknown subject {subject!r}")


def _warmup_cut(reps: int) -> int:
    return int(reps * WARMUP_FRACTION)


# Samples beyond this multiple of the median are host preemption artifacts
# (multi-millisecond scheduler steals), not properties of either subject;
# they are discarded symmetrically and counted in the row extras.
OUTLIER_MEDIAN_FACTOR = 20


def _reject_outliers(samples: list[int]) -> tuple[list[int], int]:
    if len(samples) < 8:
        return samples, 0
    ordered = sorted(samples)
    cutoff = ordered[len(ordered) // 2] * OUTLIER_MEDIAN_FACTOR
    kept = [x for x in samples if x <= cutoff]
    return kept, len(samples) - len(kept)


def _finish_row(label: str, per_subject: dict[str, list[int]], reps: int) -> BenchRow:
    cut = _warmup_cut(reps)
    meas = {}
    discarded = {}
    for s, samples in per_subject.items():
        if s not in (BASELINE, STREAMING):
            continue
        kept, dropped = _reject_outliers(samples[cut:])
        meas[s] = Measurement.from_samples(label, kept)
        discarded[s] = dropped
    speedup = None
    if BASELINE in meas and STREAMING in meas:
        speedup = meas[BASELINE].t_avg_ns / meas[STREAMING].t_avg_ns
    row = BenchRow(label, meas, speedup)
    for s, dropped in discarded.items():
        if dropped:
            row.extras[f"{s}_outliers_discarded"] = float(dropped)
    return row


def format_size(size: int) -> str:
    return f"{size // 1024}k" if size % 1024 == 0 and size >= 1024 else f"{size}B"


def parse_size(token: str) -> int:
    """Parse a byte count with an optional k (=1024) suffix."""
    token = token.strip().lower()
    if token.endswith("k"):
        return int(token[:-1]) * 1024
    return int(token)


def _yield() -> None:
    time.sleep(0)


# -- transfer ---------------------------------------------------------------


def _two_node_spec(msg_type: str) -> AppSpec:
    return AppSpec(
        (
            NodeSpec("src", "src", (PortSpec(PUB, "data", msg_type),)),
            NodeSpec("dst", "dst", (PortSpec(SUB, "data", msg_type),)),
        )
    )


def _blob(seq: int, data: bytes) -> dict:
    return {"seq": seq, "data": data}


def _blob_payload(size: int, seed: int) -> bytes:
    # frame layout: 4B seq + 4B count prefix + data, so the wire frame
    # matches the nominal size for sizes >= 8
    return make_image(max(0, size - 8), seed)


class _StreamTransferRig:
    """One-size streaming transfer fixture driven rep by rep."""

    def __init__(self, size: int, seed: int):
        registry = bench_registry(4)
        graph = build_topology(_two_node_spec(BLOB_TYPE), registry)
        frame_words = (size + 8 + 3) // 4
        self._config = RuntimeConfig(default_capacity_words=frame_words + 8)
        self._value = _blob(0, _blob_payload(size, seed))
        self._clock = self._config.clock
        self._inst = instantiate(
            graph, {"src": EXTERNAL, "dst": EXTERNAL}, self._config
        ).start()
        self._pub = self._inst.publisher("src", "data")
        self._sub = self._inst.subscriber("dst", "data")
        self.received = 0

    def rep(self) -> tuple[int, int]:
        clock = self._clock
        t0 = clock()
        self._pub.publish_blocking(self._value)
        v = self._sub.take_blocking()
        t1 = clock()
        if len(v["data"]) != len(self._value["data"]):
            raise AssertionError("transfer corrupted a message")
        self.received += 1
        ft = self._sub.last_times
        return (ft.t_last_recv - ft.t_first_sent, t1 - t0)

    def close(self) -> None:
        self._inst.shutdown()


class _BaselineTransferRig:
    """One-size baseline transfer fixture driven rep by rep."""

    def __init__(self, size: int, seed: int):
        from .msgdef import flatten

        registry = bench_registry(4)
        plan = flatten(registry, BLOB_TYPE)
        self._topic = BaselineTopic("data", plan)
        self._writer = self._topic.create_writer("src")
        self._reader = self._topic.create_reader("dst")
        self._value = _blob(0, _blob_payload(size, seed))
        self._clock = self._topic.clock
        self.received = 0

    def rep(self) -> tuple[int, int]:
        clock = self._clock
        t0 = clock()
        self._writer.publish(self._value)
        v = self._reader.take(block=False)
        t1 = clock()
        if v is None or len(v["data"]) != len(self._value["data"]):
            raise AssertionError("baseline transfer lost a message")
        self.received += 1
        bt = self._reader.last_times
        return (bt.t_last_recv - bt.t_first_sent, t1 - t0)

    def close(self) -> None:
        if self._topic.copies_in != self.received or self._topic.copies_out != self.received:
            raise AssertionError("baseline copy accounting broke")


_TRANSFER_RIGS = {BASELINE: _BaselineTransferRig, STREAMING: _StreamTransferRig}


class _paused_gc:
    def __enter__(self):
        import gc

        self._was_enabled = gc.isenabled()
        gc.disable()
        return self

    def __exit__(self, *exc):
        import gc

        if self._was_enabled:
            gc.enable()


def bench_transfer(
    sizes: list[int], reps: int, subject: str = BOTH, seed: int = 0
) -> BenchReport:
    """Transfer time over a size ladder for a 1-publisher/1-subscriber topic.

    All (size, subject) combinations alternate within one repetition loop,
    so every reported ratio and every cross-size comparison is taken from
    the same time window and host throughput drift cancels out.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    for size in sizes:
        if size < 4:
            raise ValueError("sizes must be at least 4 bytes")
    subjects = _subjects(subject)
    rows = []
    with _paused_gc():
        rigs = {
            (size, s): _TRANSFER_RIGS[s](size, seed) for size in sizes for s in subjects
        }
        transport = {key: [] for key in rigs}
        with_codec = {key: [] for key in rigs}
        try:
            for _ in range(reps):
                for key, rig in rigs.items():
                    t, c = rig.rep()
                    transport[key].append(t)
                    with_codec[key].append(c)
        finally:
            for rig in rigs.values():
                rig.close()
        cut = _warmup_cut(reps)
        for size in sizes:
            codec_means = {
                s: stats(with_codec[(size, s)][cut:])[0] for s in subjects
            }
            row = _finish_row(
                format_size(size), {s: transport[(size, s)] for s in subjects}, reps
            )
            for s, mean in codec_means.items():
                row.extras[f"{s}_with_codec_ms"] = mean / 1e6
            if len(codec_means) == 2:
                row.extras["speedup_with_codec"] = (
                    codec_means[BASELINE] / codec_means[STREAMING]
                )
            rows.append(row)
    return BenchReport("transfer", subjects, rows)


# -- fan-out ----------------------------------------------------------------


def _fanout_spec(k: int, msg_type: str) -> AppSpec:
    nodes = [NodeSpec("src", "src", (PortSpec(PUB, "data", msg_type),))]
    for i in range(k):
        nodes.append(
            NodeSpec(f"dst{i}", f"dst{i}", (PortSpec(SUB, "data", msg_type),))
        )
    return AppSpec(tuple(nodes))


def _drained_fanout(reps: int, k: int, publish_one, drain_one) -> list[int]:
    """Shared fan-out loop: k draining consumer threads, barrier per rep.

    ``publish_one(i) -> t_first_sent``; ``drain_one(idx, i) -> t_last_recv``.
    The per-message duration runs from the transport start to the last
    subscriber's receipt.
    """
    recv_last = [[0] * reps for _ in range(k)]
    barrier = threading.Barrier(k + 1)
    errors: list[BaseException] = []

    def drain(idx: int):
        try:
            for i in range(reps):
                recv_last[idx][i] = drain_one(idx, i)
                barrier.wait()
        except BaseException as e:  # noqa: BLE001 - reported by the main thread
            errors.append(e)
            barrier.abort()

    threads = [
        threading.Thread(target=drain, args=(idx,), name=f"drain{idx}", daemon=True)
        for idx in range(k)
    ]
    for t in threads:
        t.start()
    sent_first = [0] * reps
    try:
        for i in range(reps):
            sent_first[i] = publish_one(i)
            barrier.wait()
    finally:
        for t in threads:
            t.join(timeout=10.0)
    if errors:
        raise AssertionError(f"fanout consumer failed: {errors[0]!r}")
    return [
        max(recv_last[idx][i] for idx in range(k)) - sent_first[i] for i in range(reps)
    ]


def _stream_fanout(k: int, size: int, reps: int, seed: int) -> list[int]:
    registry = bench_registry(4)
    graph = build_topology(_fanout_spec(k, BLOB_TYPE), registry)
    frame_words = (size + 8 + 3) // 4
    config = RuntimeConfig(default_capacity_words=frame_words + 8)
    data = _blob_payload(size, seed)
    kernels = {"src": EXTERNAL, **{f"dst{i}": EXTERNAL for i in range(k)}}

    inst = instantiate(graph, kernels, config).start()
    try:
        pub = inst.publisher("src", "data")
        subs = [inst.subscriber(f"dst{i}", "data") for i in range(k)]

        def publish_one(i: int) -> int:
            pub.publish_blocking(_blob(i, data))
            return pub.last_times.t_first_sent

        def drain_one(idx: int, i: int) -> int:
            subs[idx].take_blocking()
            return subs[idx].last_times.t_last_recv

        return _drained_fanout(reps, k, publish_one, drain_one)
    finally:
        inst.shutdown()


def _baseline_fanout(k: int, size: int, reps: int, seed: int) -> list[int]:
    registry = bench_registry(4)
    from .msgdef import flatten

    plan = flatten(registry, BLOB_TYPE)
    topic = BaselineTopic("data", plan)
    writer = topic.create_writer("src")
    readers = [topic.create_reader(f"dst{i}") for i in range(k)]
    data = _blob_payload(size, seed)

    def publish_one(i: int) -> int:
        return writer.publish(_blob(i, data)).t_first_sent

    def drain_one(idx: int, i: int) -> int:
        v = readers[idx].take(block=True)
        if v["seq"] != i:
            raise AssertionError("baseline fanout lost a message")
        return readers[idx].last_times.t_last_recv

    return _drained_fanout(reps, k, publish_one, drain_one)


def bench_fanout(
    n_subs: list[int], size: int, reps: int, subject: str = BOTH, seed: int = 0
) -> BenchReport:
    """Publish-to-last-receipt time as the subscriber count grows."""
    if any(k < 1 for k in n_subs):
        raise ValueError("subscriber counts must be >= 1")
    subjects = _subjects(subject)
    rows = []
    for k in n_subs:
        per_subject: dict[str, list[int]] = {}
        for s in subjects:
            run = _baseline_fanout if s == BASELINE else _stream_fanout
            per_subject[s] = run(k, size, reps, seed)
        rows.append(_finish_row(f"k={k}", per_subject, reps))
    return BenchReport("fanout", subjects, rows)


# -- five-stage chain --------------------------------------------------------


def chain_spec() -> AppSpec:
    """Camera -> five pipeline nodes -> command monitor, all 1:1 topics."""
    t = CHAIN_TOPICS
    types = {
        t[0]: IMAGE_TYPE,
        t[1]: IMAGE_TYPE,
        t[2]: IMAGE_TYPE,
        t[3]: IMAGE_TYPE,
        t[4]: CENTER_TYPE,
        t[5]: COMMAND_TYPE,
    }
    nodes = [NodeSpec("camera", "camera", (PortSpec(PUB, t[0], types[t[0]]),))]
    for i, name in enumerate(CHAIN_NODES):
        nodes.append(
            NodeSpec(
                name,
                name,
                (
                    PortSpec(SUB, t[i], types[t[i]]),
                    PortSpec(PUB, t[i + 1], types[t[i + 1]]),
                ),
            )
        )
    nodes.append(NodeSpec("monitor", "monitor", (PortSpec(SUB, t[5], types[t[5]]),)))
    return AppSpec(tuple(nodes))


class _StreamChainRig:
    """Five-stage pipeline running as real node threads, one image per rep.

    Chain duration runs from the first node's completed receipt of the
    camera frame to the last node's completed command publish, read from
    the trace after all repetitions.
    """

    def __init__(self, mode: str, image_elems: int, passes: int, chunk_words: int, seed: int):
        registry = bench_registry(image_elems)
        graph = build_topology(chain_spec(), registry)
        frame_words = image_elems // 4 + 4
        capacity = chunk_words * 2 if mode == DATAFLOW else frame_words
        config = RuntimeConfig(default_capacity_words=capacity, trace=True)
        kernels = dict(chain_kernels(mode, passes, chunk_words))
        kernels["camera"] = EXTERNAL
        kernels["monitor"] = EXTERNAL
        self._image = make_image(image_elems, seed)
        self._inst = instantiate(graph, kernels, config).start()
        self._cam = self._inst.publisher("camera", CHAIN_TOPICS[0])
        self._mon = self._inst.subscriber("monitor", CHAIN_TOPICS[5])
        self._reps = 0

    def rep(self) -> None:
        self._cam.publish_blocking({"pixels": self._image})
        self._mon.take_blocking()
        self._reps += 1

    def durations(self) -> list[int]:
        if self._inst.faults:
            raise AssertionError(f"chain kernels faulted: {self._inst.faults}")
        start_by_seq: dict[int, int] = {}
        end_by_seq: dict[int, int] = {}
        for e in self._inst.trace.events():
            if e.topic == CHAIN_TOPICS[0]:
                start_by_seq[e.seq] = e.t_last_recv
            elif e.topic == CHAIN_TOPICS[5]:
                end_by_seq[e.seq] = e.t_last_sent
        if len(start_by_seq) != self._reps or len(end_by_seq) != self._reps:
            raise AssertionError("chain lost messages")
        return [end_by_seq[i] - start_by_seq[i] for i in range(self._reps)]

    def close(self) -> None:
        self._inst.shutdown()


class _BaselineNode(threading.Thread):
    """Sequential take/compute/publish loop over baseline topics."""

    def __init__(self, name, reader, writer, transform, reps):
        super().__init__(name=f"bl-node-{name}", daemon=True)
        self.reader = reader
        self.writer = writer
        self.transform = transform
        self.reps = reps
        self.take_done_ns: list[int] = []
        self.publish_done_ns: list[int] = []
        self.error: BaseException | None = None

    def run(self):
        try:
            clock = self.reader.topic.clock
            for _ in range(self.reps):
                value = self.reader.take(block=True)
                self.take_done_ns.append(self.reader.last_times.t_last_recv)
                out = self.transform(value)
                self.writer.publish(out)
                self.publish_done_ns.append(clock())
        except BaseException as e:  # noqa: BLE001 - surfaced by the harness
            self.error = e


class _BaselineChainRig:
    """Five-stage pipeline over baseline topics, one image per rep."""

    def __init__(self, reps: int, image_elems: int, passes: int, seed: int):
        from .kernels import blur, compensate, extract_center, project, steer
        from .msgdef import flatten
        import numpy as np

        registry = bench_registry(image_elems)
        t = CHAIN_TOPICS
        image_plan = flatten(registry, IMAGE_TYPE)
        plans = {
            t[0]: image_plan,
            t[1]: image_plan,
            t[2]: image_plan,
            t[3]: image_plan,
            t[4]: flatten(registry, CENTER_TYPE),
            t[5]: flatten(registry, COMMAND_TYPE),
        }
        topics = {name: BaselineTopic(name, plan) for name, plan in plans.items()}

        def image_stage(fn):
            return lambda v: {"pixels": fn(v["pixels"], passes)}

        def extract_stage(v):
            pixels = np.frombuffer(v["pixels"], dtype=np.uint8)
            return extract_center(
                int(pixels.sum(dtype=np.int64)),
                pixels.size,
                int(pixels.min()),
                int(pixels.max()),
            )

        transforms = [
            image_stage(compensate),
            image_stage(blur),
            image_stage(project),
            extract_stage,
            steer,
        ]
        self._nodes = [
            _BaselineNode(
                CHAIN_NODES[i],
                topics[t[i]].create_reader(CHAIN_NODES[i]),
                topics[t[i + 1]].create_writer(CHAIN_NODES[i]),
                transforms[i],
                reps,
            )
            for i in range(5)
        ]
        self._camera = topics[t[0]].create_writer("camera")
        self._monitor = topics[t[5]].create_reader("monitor")
        self._image = make_image(image_elems, seed)
        self._reps = 0
        for node in self._nodes:
            node.start()

    def rep(self) -> None:
        self._camera.publish({"pixels": self._image})
        self._monitor.take(block=True)
        self._reps += 1

    def durations(self) -> list[int]:
        for node in self._nodes:
            node.join()
            if node.error is not None:
                raise AssertionError(f"baseline chain node failed: {node.error!r}")
        first, last = self._nodes[0], self._nodes[-1]
        return [
            last.publish_done_ns[i] - first.take_done_ns[i] for i in range(self._reps)
        ]

    def close(self) -> None:
        pass


def bench_chain(
    mode: str = SEQUENTIAL,
    subject: str = BOTH,
    reps: int = 1000,
    image_elems: int = 6000,
    passes: int = 1,
    chunk_words: int = 4096,
    seed: int = 0,
) -> BenchReport:
    """Five-stage pipeline latency: first node's receipt to last node's publish.

    ``image_elems`` scales the camera-image analog down from the full
    1000x600; the pipeline math is fixed per-element arithmetic.  The
    baseline subject always runs its phases sequentially: its pool
    transport hands over whole messages, so there is nothing to overlap.
    """
    subjects = _subjects(subject)
    per_subject: dict[str, list[int]] = {}
    with _paused_gc():
        rigs: dict[str, object] = {}
        try:
            for s in subjects:
                if s == BASELINE:
                    rigs[s] = _BaselineChainRig(reps, image_elems, passes, seed)
                else:
                    rigs[s] = _StreamChainRig(mode, image_elems, passes, chunk_words, seed)
            for _ in range(reps):
                for s in subjects:
                    rigs[s].rep()
            for s in subjects:
                per_subject[s] = rigs[s].durations()
        finally:
            for rig in rigs.values():
                rig.close()
    cut = _warmup_cut(reps)
    rows = []
    ref: Measurement | None = None
    for s in subjects:
        kept, dropped = _reject_outliers(per_subject[s][cut:])
        m = Measurement.from_samples(s, kept)
        if ref is None:
            ref = m
        row = BenchRow(
            label=f"{s} ({mode})" if s == STREAMING else f"{s} (sequential)",
            measurements={s: m},
            speedup=ref.t_avg_ns / m.t_avg_ns,
        )
        if dropped:
            row.extras[f"{s}_outliers_discarded"] = float(dropped)
        rows.append(row)
    return BenchReport("chain", subjects, rows)


# -- n-stage overlap pipeline (execution-mode comparison) --------------------


def line_spec(n_stages: int, msg_type: str = IMAGE_TYPE) -> AppSpec:
    # the sink port buffers one whole message so a single harness thread can
    # drive the pipeline end to end without deadlocking on narrow links
    nodes = [NodeSpec("src", "src", (PortSpec(PUB, "t0", msg_type),))]
    for i in range(n_stages):
        nodes.append(
            NodeSpec(
                f"s{i}",
                f"s{i}",
                (PortSpec(SUB, f"t{i}", msg_type), PortSpec(PUB, f"t{i + 1}", msg_type)),
            )
        )
    nodes.append(
        NodeSpec("sink", "sink", (PortSpec(SUB, f"t{n_stages}", msg_type, fifo_depth=1),))
    )
    return AppSpec(tuple(nodes))


def pipeline_latency(
    n_stages: int,
    mode: str,
    image_elems: int,
    passes: int,
    reps: int,
    chunk_words: int = 16384,
    stage_fn=None,
    seed: int = 0,
) -> tuple[list[int], "object"]:
    """End-to-end latency samples of an n-stage image pipeline.

    Returns (durations_ns, trace).  Duration runs from the source's first
    word sent to the sink's last word received.
    """
    from .kernels import project
    from .runtime import NodeKernel
    from .kernels import image_stage_dataflow, image_stage_sequential

    fn = stage_fn or project
    registry = bench_registry(image_elems)
    graph = build_topology(line_spec(n_stages), registry)
    frame_words = image_elems // 4 + 4
    capacity = chunk_words * 2 if mode == DATAFLOW else frame_words
    config = RuntimeConfig(default_capacity_words=capacity, trace=True)
    kernels = {"src": EXTERNAL, "sink": EXTERNAL}
    for i in range(n_stages):
        if mode == DATAFLOW:
            body = image_stage_dataflow(fn, f"t{i}", f"t{i + 1}", passes, chunk_words)
        else:
            body = image_stage_sequential(fn, f"t{i}", f"t{i + 1}", passes)
        kernels[f"s{i}"] = NodeKernel(f"s{i}", mode, body)
    image = make_image(image_elems, seed)
    durations = []

    inst = instantiate(graph, kernels, config).start()
    try:
        pub = inst.publisher("src", "t0")
        sub = inst.subscriber("sink", f"t{n_stages}")
        for _ in range(reps):
            pub.publish_blocking({"pixels": image})
            t_start = pub.last_times.t_first_sent
            sub.take_blocking()
            durations.append(sub.last_times.t_last_recv - t_start)
        if inst.faults:
            raise AssertionError(f"pipeline kernels faulted: {inst.faults}")
        trace = inst.trace
    finally:
        inst.shutdown()
    return durations, trace


# -- report rendering ---------------------------------------------------------


def _fmt_ms(m: Measurement) -> str:
    return f"{m.t_avg_ns / 1e6:.3f} ({m.sigma_ns / 1e6:.3f})"


def emit_report(report: BenchReport, format: str) -> str:
    """Render a report as csv, json, or a markdown table."""
    if format == "markdown":
        cols = [report.scenario] + [f"{s} t_avg (sigma) [ms]" for s in report.subjects]
        cols.append("speedup")
        lines = ["| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
        for row in report.rows:
            cells = [row.label]
            for s in report.subjects:
                m = row.measurements.get(s)
                cells.append(_fmt_ms(m) if m else "-")
            cells.append(f"{row.speedup:.2f}" if row.speedup is not None else "-")
            lines.append("| " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"

    if format == "csv":
        extra_keys = sorted({k for row in report.rows for k in row.extras})
        header = ["label"]
        for s in report.subjects:
            header += [f"{s}_t_avg_ms", f"{s}_sigma_ms", f"{s}_n"]
        header.append("speedup")
        header += extra_keys
        lines = [",".join(header)]
        for row in report.rows:
            cells = [row.label]
            for s in report.subjects:
                m = row.measurements.get(s)
                if m:
                    cells += [f"{m.t_avg_ns / 1e6:.6f}", f"{m.sigma_ns / 1e6:.6f}", str(m.n)]
                else:
                    cells += ["", "", ""]
            cells.append(f"{row.speedup:.6f}" if row.speedup is not None else "")
            cells += [
                f"{row.extras[k]:.6f}" if k in row.extras else "" for k in extra_keys
            ]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    if format == "json":
        import json

        doc = {
            "scenario": report.scenario,
            "subjects": report.subjects,
            "rows": [
                {
                    "label": row.label,
                    "measurements": {
                        s: {
                            "t_avg_ns": m.t_avg_ns,
                            "sigma_ns": m.sigma_ns,
                            "n": m.n,
                        }
                        for s, m in row.measurements.items()
                    },
                    "speedup": row.speedup,
                    "extras": row.extras,
                }
                for row in report.rows
            ],
        }
        return json.dumps(doc, indent=2) + "\n"

    raise ValueError(f"unknown report format {format!r}")
