"""Threaded execution of a compiled topology.

Every topic becomes a small static network of bounded single-producer,
single-consumer word-stream channels: publisher ports feed either the lone
subscriber directly, an arbiter (many publishers), or a broadcaster (many
subscribers).  Frames travel as chunks of 32-bit words with an
end-of-message marker on the final chunk; a frame's identity and send
timestamps ride along as sideband metadata with that marker.

Delivery follows keep-all/reliable semantics throughout: a full buffer
blocks the writer, nothing is dropped, and infrastructure forwards only
complete frames (the arbiter never interleaves two frames, the broadcaster
is paced by its slowest consumer).  Blocking operations park on per-context
events rather than spinning; shutdown closes every channel, which wakes and
fails all parked operations and discards partial frames.

Execution contexts: one thread per kernel-driven node, per arbiter, and per
broadcaster.  Nodes run in one of two modes: ``sequential`` (take whole
messages, compute, publish) or ``dataflow`` (the body streams chunks through
the node, overlapping receive, compute, and send).  Nodes mapped to the
EXTERNAL kernel get no thread; their ports are driven by the caller.
"""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass
from typing import Callable, Optional

from .msgdef import SerializationPlan
from .serde import Frame, MessageValue, deserialize, serialize
from .topology import PUB, SUB, TopologyGraph

Clock = Callable[[], int]


class ShutdownError(RuntimeError):
    """Raised by any port or channel operation after the runtime shut down."""


class RuntimeBuildError(Exception):
    pass


class StopKernel(Exception):
    """A kernel body raises this to stop its own node cleanly."""


class Waker:
    """Parking spot for one blocked execution context.

    Exactly one thread may wait on a Waker; any number may ``set`` it.  The
    lost-wakeup-safe pattern is: check state, ``clear``, re-check state,
    ``wait``.  ``spin_ns`` polls the flag for that long before parking,
    trading CPU for wake latency on hot paths; the wait still parks after
    the spin window (no indefinite spinning).
    """

    __slots__ = ("_event", "spin_ns")

    def __init__(self, spin_ns: int = 0):
        self._event = threading.Event()
        self.spin_ns = spin_ns

    def set(self) -> None:
        self._event.set()

    def clear(self) -> None:
        self._event.clear()

    def wait(self) -> None:
        if self.spin_ns:
            deadline = time.perf_counter_ns() + self.spin_ns
            is_set = self._event.is_set
            while not is_set():
                time.sleep(0)  # yield so the spin never starves other threads
                if time.perf_counter_ns() >= deadline:
                    break
        self._event.wait()


class GrowBuffer:
    """A persistent, grow-only byte buffer written through a memoryview.

    Slice assignment through the cached view copies at memcpy speed and
    never resizes the underlying allocation, so steady-state reuse stays in
    warm memory no matter what the allocator does in between.
    """

    __slots__ = ("buf", "view")

    def __init__(self, initial: int = 0):
        self.buf = bytearray(initial)
        self.view = memoryview(self.buf)

    def ensure(self, n: int) -> None:
        if len(self.buf) < n:
            try:
                self.view.release()
                self.buf.extend(bytes(n - len(self.buf)))
            except BufferError:  # a stale export pinned the buffer: start over
                self.buf = bytearray(n)
            self.view = memoryview(self.buf)

    def write(self, pos: int, data) -> int:
        """Copy ``data`` to ``pos``, growing as needed; returns the end offset."""
        end = pos + len(data)
        self.ensure(end)
        self.view[pos:end] = data
        return end


@dataclass(slots=True)
class FrameMeta:
    """Sideband frame identity travelling with the end-of-message marker."""

    topic: str
    publisher: str
    seq: int
    t_first_sent: int | None = None
    t_last_sent: int | None = None


@dataclass(frozen=True, slots=True)
class FrameTimes:
    """Per-frame endpoint timestamps (nanoseconds, monotonic clock)."""

    topic: str
    publisher: str
    seq: int
    t_first_sent: int | None
    t_last_sent: int | None
    t_first_recv: int | None = None
    t_last_recv: int | None = None


class StreamChannel:
    """Bounded SPSC stream of 32-bit words with end-of-message markers.

    Capacity is counted in words; a frame's marker is sideband and consumes
    no capacity, so zero-word (empty-message) frames always fit.  ``close``
    makes every subsequent operation raise ShutdownError and discards any
    buffered words.
    """

    __slots__ = (
        "capacity_words",
        "name",
        "_lock",
        "_chunks",
        "_words",
        "_frames",
        "_closed",
        "reader_waker",
        "writer_waker",
        "_clock",
    )

    def __init__(self, capacity_words: int, name: str = "", clock: Clock = time.perf_counter_ns):
        if capacity_words < 1:
            raise ValueError("channel capacity must be at least one word")
        self.capacity_words = capacity_words
        self.name = name
        self._lock = threading.Lock()
        self._chunks: deque = deque()  # (data, last: bool, meta: FrameMeta|None)
        self._words = 0
        self._frames = 0
        self._closed = False
        self.reader_waker: Waker | None = None
        self.writer_waker: Waker | None = None
        self._clock = clock

    # -- producer side ----------------------------------------------------

    def free_words(self) -> int:
        with self._lock:
            return self.capacity_words - self._words

    def write_some(self, data, last: bool, meta: FrameMeta | None = None) -> int:
        """Enqueue as much of ``data`` as fits; return words accepted.

        ``data`` must be a whole number of words.  ``last`` marks that
        ``data`` ends a frame; the marker (and ``meta``) attach only when
        the final word is accepted.  Send timestamps are stamped into
        ``meta`` under the channel lock, once, so forwarded frames keep the
        original publisher's times.  Returns 0 without side effects when
        full (except that a zero-word marker is always accepted).
        """
        nbytes = len(data)
        with self._lock:
            if self._closed:
                raise ShutdownError(f"channel {self.name} is closed")
            take = min(self.capacity_words - self._words, nbytes // 4)
            final = last and take * 4 == nbytes
            if take == 0 and not final:
                return 0
            if meta is not None:
                if meta.t_first_sent is None:
                    meta.t_first_sent = self._clock()
                if final and meta.t_last_sent is None:
                    meta.t_last_sent = self._clock()
            piece = data if take * 4 == nbytes else data[: take * 4]
            self._chunks.append((piece, final, meta if final else None))
            self._words += take
            if final:
                self._frames += 1
            if self.reader_waker is not None:
                self.reader_waker.set()
            return take

    def try_write_frame(self, payload, meta: FrameMeta | None = None) -> bool:
        """All-or-nothing enqueue of one whole frame."""
        need = len(payload) // 4
        with self._lock:
            if self._closed:
                raise ShutdownError(f"channel {self.name} is closed")
            if self.capacity_words - self._words < need:
                return False
            if meta is not None:
                now = self._clock()
                if meta.t_first_sent is None:
                    meta.t_first_sent = now
                if meta.t_last_sent is None:
                    meta.t_last_sent = now
            self._chunks.append((payload, True, meta))
            self._words += need
            self._frames += 1
            if self.reader_waker is not None:
                self.reader_waker.set()
            return True

    # -- consumer side ----------------------------------------------------

    def readable(self) -> bool:
        with self._lock:
            return len(self._chunks) > 0

    def frames_buffered(self) -> int:
        with self._lock:
            return self._frames

    def buffered_words(self) -> int:
        with self._lock:
            return self._words

    def read_some(self, max_words: int | None = None):
        """Dequeue up to ``max_words`` from the head chunk, or None if empty.

        Returns (data, last, meta).  A zero-word marker chunk is returned
        even when ``max_words`` is 0.  Splitting a chunk keeps the marker on
        its final piece.
        """
        with self._lock:
            if self._closed:
                raise ShutdownError(f"channel {self.name} is closed")
            if not self._chunks:
                return None
            data, last, meta = self._chunks[0]
            words = len(data) // 4
            if max_words is not None and words > max_words:
                if max_words == 0:
                    return None
                head = data[: max_words * 4]
                self._chunks[0] = (data[max_words * 4 :], last, meta)
                self._words -= max_words
                if self.writer_waker is not None:
                    self.writer_waker.set()
                return (head, False, None)
            self._chunks.popleft()
            self._words -= words
            if last:
                self._frames -= 1
            if self.writer_waker is not None:
                self.writer_waker.set()
            return (data, last, meta)

    def close(self) -> None:
        with self._lock:
            self._closed = True
            self._chunks.clear()
            self._words = 0
            self._frames = 0
            if self.reader_waker is not None:
                self.reader_waker.set()
            if self.writer_waker is not None:
                self.writer_waker.set()


class TraceLog:
    """Thread-safe collector of per-frame delivery events."""

    CSV_HEADER = (
        "topic,publisher,frame_seq,t_first_sent,t_last_sent,t_first_recv,t_last_recv"
    )

    def __init__(self):
        self._lock = threading.Lock()
        self._events: list[FrameTimes] = []

    def record(self, times: FrameTimes) -> None:
        with self._lock:
            self._events.append(times)

    def events(self) -> list[FrameTimes]:
        with self._lock:
            return list(self._events)

    def to_csv(self) -> str:
        rows = [self.CSV_HEADER]
        for e in self.events():
            rows.append(
                f"{e.topic},{e.publisher},{e.seq},{e.t_first_sent},"
                f"{e.t_last_sent},{e.t_first_recv},{e.t_last_recv}"
            )
        return "\n".join(rows) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write(self.to_csv())


class PortHandle:
    """A node's endpoint on one topic.

    Publisher handles only write, subscriber handles only read; a handle
    belongs to exactly one execution context at a time (transferable, never
    shared concurrently).  Value-level operations (publish/take) frame whole
    messages through the codec; chunk-level operations (write_chunk /
    read_chunk) expose the word stream for dataflow kernels.  Do not mix the
    two levels within one frame.  ``last_times`` holds the timestamps of the
    most recently completed frame on this port.
    """

    def __init__(
        self,
        direction: str,
        topic: str,
        node: str,
        port_name: str,
        plan: SerializationPlan,
        channel: StreamChannel,
        clock: Clock,
        trace: TraceLog | None,
    ):
        self.direction = direction
        self.topic = topic
        self.node = node
        self.port_name = port_name
        self.plan = plan
        self.channel = channel
        self._clock = clock
        self._trace = trace
        self.waker = Waker()
        if direction == PUB:
            channel.writer_waker = self.waker
        else:
            channel.reader_waker = self.waker
        self._seq = 0
        self.last_times: FrameTimes | None = None
        # subscriber frame-reassembly state (persistent warm buffer + fill)
        self._rx = GrowBuffer()
        self._rx_len = 0
        self._rx_active = False
        self._rx_first_t: int | None = None
        # publisher chunk-stream state
        self._tx_meta: FrameMeta | None = None
        self._tx_tail = bytearray()

    def _require(self, direction: str) -> None:
        if self.direction != direction:
            op = "write" if direction == PUB else "read"
            raise ValueError(f"port {self.node}.{self.port_name} cannot {op}")

    # -- publisher --------------------------------------------------------

    def _new_meta(self) -> FrameMeta:
        meta = FrameMeta(self.topic, self.node, self._seq)
        self._seq += 1
        return meta

    def _push(self, payload, last: bool, meta: FrameMeta) -> None:
        """Blocking write of ``payload``; with ``last`` also pushes the marker."""
        mv = memoryview(payload)
        offset = 0
        total = len(payload)

        def done() -> bool:
            return offset >= total and (not last or meta.t_last_sent is not None)

        while True:
            offset += 4 * self.channel.write_some(mv[offset:], last, meta)
            if done():
                return
            self.waker.clear()
            before = offset
            offset += 4 * self.channel.write_some(mv[offset:], last, meta)
            if done():
                return
            if offset == before:
                self.waker.wait()

    def publish_blocking(self, value: MessageValue) -> None:
        """Send one message; returns after the last word is accepted downstream."""
        self._require(PUB)
        frame = serialize(value, self.plan)
        meta = self._new_meta()
        self._push(frame.payload, True, meta)
        self.last_times = FrameTimes(
            meta.topic, meta.publisher, meta.seq, meta.t_first_sent, meta.t_last_sent
        )

    def publish_try(self, value: MessageValue) -> bool:
        """Send only if the whole frame fits downstream right now."""
        self._require(PUB)
        frame = serialize(value, self.plan)
        meta = FrameMeta(self.topic, self.node, self._seq)
        if not self.channel.try_write_frame(frame.payload, meta):
            return False
        self._seq += 1
        self.last_times = FrameTimes(
            meta.topic, meta.publisher, meta.seq, meta.t_first_sent, meta.t_last_sent
        )
        return True

    def write_chunk(self, data, last: bool = False) -> None:
        """Stream raw frame bytes; ``last`` closes the frame.

        Bytes are carried at word granularity: a sub-word tail is held back
        until more data arrives, and the final chunk is zero-padded to a
        word boundary.
        """
        self._require(PUB)
        if self._tx_meta is None:
            self._tx_meta = self._new_meta()
        self._tx_tail += data
        if last:
            self._tx_tail += b"\x00" * ((-len(self._tx_tail)) % 4)
        send = len(self._tx_tail) if last else len(self._tx_tail) // 4 * 4
        if not send and not last:
            return
        payload = bytes(self._tx_tail[:send])
        del self._tx_tail[:send]
        meta = self._tx_meta
        if last:
            self._tx_meta = None
        self._push(payload, last, meta)
        if last:
            self.last_times = FrameTimes(
                meta.topic, meta.publisher, meta.seq, meta.t_first_sent, meta.t_last_sent
            )

    # -- subscriber -------------------------------------------------------

    def _read_some_blocking(self, max_words: int | None = None):
        while True:
            res = self.channel.read_some(max_words)
            if res is not None:
                return res
            self.waker.clear()
            res = self.channel.read_some(max_words)
            if res is not None:
                return res
            self.waker.wait()

    def _finish_frame(self, meta: FrameMeta | None, t_first: int | None) -> None:
        t_last = self._clock()
        if meta is not None:
            times = FrameTimes(
                meta.topic,
                meta.publisher,
                meta.seq,
                meta.t_first_sent,
                meta.t_last_sent,
                t_first,
                t_last,
            )
        else:  # untraceable frame (chunk-level producer outside port API)
            times = FrameTimes(self.topic, "?", -1, None, None, t_first, t_last)
        self.last_times = times
        if self._trace is not None:
            self._trace.record(times)

    def _take(self, blocking: bool) -> MessageValue | None:
        while True:
            if blocking:
                res = self._read_some_blocking()
            else:
                res = self.channel.read_some()
                if res is None:
                    return None
            data, last, meta = res
            if not self._rx_active:
                self._rx_active = True
                self._rx_first_t = self._clock()
            # the receive-side data movement
            self._rx_len = self._rx.write(self._rx_len, data)
            if last:
                first_t = self._rx_first_t
                n = self._rx_len
                self._rx_active = False
                self._rx_first_t = None
                self._rx_len = 0
                self._finish_frame(meta, first_t)
                return deserialize(Frame(self._rx.view[:n]), self.plan)

    def take_blocking(self) -> MessageValue:
        """Receive the oldest complete message, waiting as long as needed."""
        self._require(SUB)
        return self._take(blocking=True)

    def take_try(self) -> MessageValue | None:
        """Return a complete buffered message, or None without blocking.

        Words of a partially arrived frame are absorbed into the reassembly
        buffer; the frame is surfaced only once its marker arrives.
        """
        self._require(SUB)
        return self._take(blocking=False)

    def read_chunk(self, max_words: int | None = None) -> tuple[bytes, bool]:
        """Blocking chunk-level read of the current frame for dataflow bodies."""
        self._require(SUB)
        data, last, meta = self._read_some_blocking(max_words)
        if self._rx_first_t is None:
            self._rx_first_t = self._clock()
        if last:
            first_t = self._rx_first_t
            self._rx_first_t = None
            self._finish_frame(meta, first_t)
        return (bytes(data), last)


SEQUENTIAL = "sequential"
DATAFLOW = "dataflow"
EXTERNAL_MODE = "external"


@dataclass(frozen=True)
class NodeKernel:
    """A node's computation plus its execution mode.

    sequential: ``body(inputs: dict[topic, value]) -> dict[topic, value]``.
    The runtime takes one message from every subscription, calls the body,
    then publishes the returned values (a topic may be omitted to skip
    publishing that iteration).

    dataflow: ``body(ports: NodePorts) -> None``, called once per frame; the
    body reads and writes chunks itself so receive, compute, and send
    overlap.
    """

    kernel_id: str
    mode: str = SEQUENTIAL
    body: Optional[Callable] = None


EXTERNAL = NodeKernel(kernel_id="<external>", mode=EXTERNAL_MODE)


class NodePorts:
    """A node's ports, addressable by topic."""

    def __init__(self, subs: dict[str, PortHandle], pubs: dict[str, PortHandle]):
        self._subs = subs
        self._pubs = pubs

    def sub(self, topic: str) -> PortHandle:
        return self._subs[topic]

    def pub(self, topic: str) -> PortHandle:
        return self._pubs[topic]

    @property
    def sub_topics(self) -> list[str]:
        return list(self._subs)

    @property
    def pub_topics(self) -> list[str]:
        return list(self._pubs)


@dataclass
class RuntimeConfig:
    """Sizing and instrumentation knobs for one runtime instance.

    ``default_capacity_words`` is the skid buffering of a plain link (one
    word by default: a near-rendezvous wire).  Subscriber FIFOs are sized in
    messages and converted to words via the topic's fixed frame size;
    dynamically sized message types need ``max_message_bytes`` for that
    conversion.
    """

    default_capacity_words: int = 1
    max_message_bytes: int | None = None
    trace: bool = False
    clock: Clock = time.perf_counter_ns
    # spin window of arbiter/broadcaster wakers before parking (bench knob)
    infra_spin_ns: int = 0


@dataclass
class KernelFault:
    node: str
    error: BaseException


class RuntimeInstance:
    """A startable set of node, arbiter, and broadcaster contexts."""

    def __init__(self, graph: TopologyGraph, config: RuntimeConfig):
        self.graph = graph
        self.config = config
        self.trace: TraceLog | None = TraceLog() if config.trace else None
        self.faults: list[KernelFault] = []
        self._ports: dict[tuple[str, str], PortHandle] = {}
        self._channels: list[StreamChannel] = []
        self._contexts: list[tuple[str, Callable[[], None]]] = []
        self._threads: list[threading.Thread] = []
        self._lock = threading.Lock()
        self._started = False
        self._closed = False

    # -- wiring helpers -----------------------------------------------------

    def _new_channel(self, capacity: int, name: str) -> StreamChannel:
        ch = StreamChannel(capacity, name, self.config.clock)
        self._channels.append(ch)
        return ch

    # -- public API ---------------------------------------------------------

    def port(self, node: str, port_name: str) -> PortHandle:
        return self._ports[(node, port_name)]

    def publisher(self, node: str, topic: str) -> PortHandle:
        return self.port(node, f"{PUB}_{topic}")

    def subscriber(self, node: str, topic: str) -> PortHandle:
        return self.port(node, f"{SUB}_{topic}")

    def channels(self) -> list[StreamChannel]:
        return list(self._channels)

    def start(self) -> "RuntimeInstance":
        with self._lock:
            if self._started or self._closed:
                return self
            self._started = True
            for name, target in self._contexts:
                t = threading.Thread(target=target, name=name, daemon=True)
                self._threads.append(t)
                t.start()
        return self

    def shutdown(self) -> None:
        """Close all channels, fail every parked operation, join contexts.

        Idempotent; partial frames in flight are discarded, never delivered.
        """
        self._abort()
        for t in self._threads:
            if t is not threading.current_thread():
                t.join(timeout=10.0)

    def _abort(self) -> None:
        with self._lock:
            if self._closed:
                return
            self._closed = True
        for ch in self._channels:
            ch.close()

    @property
    def closed(self) -> bool:
        return self._closed

    def __enter__(self) -> "RuntimeInstance":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.shutdown()

    def _record_fault(self, node: str, error: BaseException) -> None:
        self.faults.append(KernelFault(node, error))
        self._abort()

    # -- context bodies -------------------------------------------------------

    def _node_loop(self, node: str, kernel: NodeKernel, ports: NodePorts) -> None:
        try:
            if kernel.mode == SEQUENTIAL:
                subs = {t: ports.sub(t) for t in ports.sub_topics}
                pubs = {t: ports.pub(t) for t in ports.pub_topics}
                while True:
                    inputs = {t: p.take_blocking() for t, p in subs.items()}
                    outputs = kernel.body(inputs) or {}
                    unknown = outputs.keys() - pubs.keys()
                    if unknown:
                        raise ValueError(
                            f"kernel {kernel.kernel_id!r} returned values for "
                            f"topics it does not publish: {sorted(unknown)}"
                        )
                    for t, p in pubs.items():
                        if t in outputs:
                            p.publish_blocking(outputs[t])
            else:
                while True:
                    kernel.body(ports)
        except (ShutdownError, StopKernel):
            pass
        except BaseException as e:  # noqa: BLE001 - kernel faults stop the instance
            self._record_fault(node, e)


def _forward_frame(src: StreamChannel, dst: StreamChannel, waker: Waker) -> None:
    """Move exactly one complete frame from src to dst, chunk by chunk.

    Reads are sized by the destination's free space, so the forwarder never
    holds words it cannot immediately deliver.
    """
    while True:
        res = src.read_some(max_words=dst.free_words())
        if res is None:
            waker.clear()
            res = src.read_some(max_words=dst.free_words())
            if res is None:
                waker.wait()
                continue
        data, last, meta = res
        accepted = dst.write_some(data, last, meta)
        assert accepted * 4 == len(data), "sized read must be fully accepted"
        if last:
            return


def run_arbiter(inputs: list[StreamChannel], output: StreamChannel, waker: Waker) -> None:
    """Merge inputs into output at frame granularity until shutdown.

    Ready inputs are serviced round-robin starting after the last serviced
    index; once a frame starts forwarding, it finishes before any other
    input is looked at.
    """
    if len(inputs) < 2:
        raise ValueError("an arbiter needs at least two inputs")
    last_serviced = -1
    n = len(inputs)
    try:
        while True:
            chosen = None
            waker.clear()
            for k in range(1, n + 1):
                i = (last_serviced + k) % n
                if inputs[i].readable():
                    chosen = i
                    break
            if chosen is None:
                waker.wait()
                continue
            last_serviced = chosen
            _forward_frame(inputs[chosen], output, waker)
    except ShutdownError:
        pass


def run_broadcaster(inp: StreamChannel, outputs: list[StreamChannel], waker: Waker) -> None:
    """Replicate every frame to every output, in order, until shutdown.

    A chunk is read only once every output can accept it whole (slowest-
    consumer pacing), so per-word backpressure propagates upstream.
    """
    if len(outputs) < 2:
        raise ValueError("a broadcaster needs at least two outputs")
    try:
        while True:
            res = inp.read_some(max_words=min(o.free_words() for o in outputs))
            if res is None:
                waker.clear()
                res = inp.read_some(max_words=min(o.free_words() for o in outputs))
                if res is None:
                    waker.wait()
                    continue
            data, last, meta = res
            for out in outputs:
                accepted = out.write_some(data, last, meta)
                assert accepted * 4 == len(data), "sized read must be fully accepted"
    except ShutdownError:
        pass


def _fifo_capacity_words(
    plan: SerializationPlan, depth: int, config: RuntimeConfig, topic: str
) -> int:
    words = plan.word_count()
    if words is None:
        if config.max_message_bytes is None:
            raise RuntimeBuildError(
                f"topic {topic!r} carries a dynamically sized type; subscriber "
                f"FIFOs need RuntimeConfig.max_message_bytes"
            )
        words = (config.max_message_bytes + 3) // 4
    return max(1, depth * words)


def instantiate(
    graph: TopologyGraph,
    kernels: dict[str, NodeKernel],
    config: RuntimeConfig | None = None,
) -> RuntimeInstance:
    """Allocate channels, ports, and contexts for a compiled topology.

    ``kernels`` maps kernel ids to NodeKernel; map a node's kernel id to
    EXTERNAL to drive its ports from the caller instead of a thread.
    Contexts are created but not started; call ``start()`` or use the
    instance as a context manager.
    """
    config = config or RuntimeConfig()
    inst = RuntimeInstance(graph, config)
    node_ports: dict[str, tuple[dict, dict]] = {}

    def make_port(ref, direction, topic, plan, channel):
        port = PortHandle(
            direction, topic, ref.node, f"{direction}_{topic}", plan, channel,
            config.clock, inst.trace,
        )
        inst._ports[(ref.node, port.port_name)] = port
        subs, pubs = node_ports.setdefault(ref.node, ({}, {}))
        (subs if direction == SUB else pubs)[topic] = port

    for tp in graph.topics:
        plan = graph.plans[tp.topic]
        cap = config.default_capacity_words

        def sub_channel(ref):
            words = (
                _fifo_capacity_words(plan, ref.fifo_depth, config, tp.topic)
                if ref.fifo_depth is not None
                else cap
            )
            return inst._new_channel(words, f"{tp.topic}->{ref.node}")

        n_pub, n_sub = len(tp.publishers), len(tp.subscribers)
        pub_chs = []
        if n_pub > 1:
            for p in tp.publishers:
                ch = inst._new_channel(cap, f"{p.node}->{tp.topic}")
                pub_chs.append(ch)
                make_port(p, PUB, tp.topic, plan, ch)
            if n_sub > 1:
                trunk = inst._new_channel(cap, f"{tp.topic}.trunk")
                _wire_arbiter(inst, tp.topic, pub_chs, trunk)
                downstream_src = trunk
            elif n_sub == 1:
                out = sub_channel(tp.subscribers[0])
                make_port(tp.subscribers[0], SUB, tp.topic, plan, out)
                _wire_arbiter(inst, tp.topic, pub_chs, out)
                continue
            else:
                _wire_arbiter(
                    inst, tp.topic, pub_chs, inst._new_channel(cap, f"{tp.topic}.sink")
                )
                continue
        else:
            if n_sub == 1:
                # direct link (or subscriber-only orphan)
                ch = sub_channel(tp.subscribers[0])
                if n_pub == 1:
                    make_port(tp.publishers[0], PUB, tp.topic, plan, ch)
                make_port(tp.subscribers[0], SUB, tp.topic, plan, ch)
                continue
            downstream_src = inst._new_channel(cap, f"{tp.topic}.src")
            if n_pub == 1:
                make_port(tp.publishers[0], PUB, tp.topic, plan, downstream_src)
            if n_sub == 0:
                continue

        sub_chs = []
        for s in tp.subscribers:
            ch = sub_channel(s)
            sub_chs.append(ch)
            make_port(s, SUB, tp.topic, plan, ch)
        _wire_broadcaster(inst, tp.topic, downstream_src, sub_chs)

    for node in graph.nodes:
        kernel = kernels.get(node.kernel_id)
        if kernel is None:
            raise RuntimeBuildError(
                f"node {node.name!r} needs kernel {node.kernel_id!r}, "
                f"which is not in the kernel map"
            )
        if kernel.mode == EXTERNAL_MODE:
            continue
        if kernel.mode not in (SEQUENTIAL, DATAFLOW):
            raise RuntimeBuildError(f"node {node.name!r}: unknown kernel mode {kernel.mode!r}")
        if kernel.body is None:
            raise RuntimeBuildError(f"node {node.name!r}: kernel {kernel.kernel_id!r} has no body")
        subs, pubs = node_ports.get(node.name, ({}, {}))
        ports = NodePorts(subs, pubs)
        inst._contexts.append(
            (
                f"node:{node.name}",
                lambda n=node.name, k=kernel, p=ports: inst._node_loop(n, k, p),
            )
        )
    return inst


def _wire_arbiter(inst, topic, inputs, output) -> None:
    waker = Waker(inst.config.infra_spin_ns)
    for ch in inputs:
        ch.reader_waker = waker
    output.writer_waker = waker
    inst._contexts.append(
        (f"arbiter:{topic}", lambda: run_arbiter(list(inputs), output, waker))
    )


def _wire_broadcaster(inst, topic, inp, outputs) -> None:
    waker = Waker(inst.config.infra_spin_ns)
    inp.reader_waker = waker
    for ch in outputs:
        ch.writer_waker = waker
    inst._contexts.append(
        (f"broadcast:{topic}", lambda: run_broadcaster(inp, list(outputs), waker))
    )
