"""Double-copy software pub/sub baseline for benchmark comparisons.

Models the conventional intra-host middleware path that the streaming
network bypasses.  Publishing serializes, then walks an emulated middleware
stack: client/adapter dispatch, a wire-representation preamble,
fragmentation descriptors, QoS admission (deadline, lifespan, history), and
per-reader sample admission; then the payload is copied into a pooled
sample slab (first data movement) and readers are notified.  Taking
validates the envelope, runs the reader-side state bookkeeping, copies the
payload out of the pool into the reader's buffer (second data movement),
and deserializes.

Every message payload crosses memory exactly twice end to end, where the
streaming path moves it once; ``copies_in`` / ``copies_out`` counters
expose that invariant to tests.  Sample slabs and reader buffers are reused
(as real middleware pools do) so steady-state timings measure movement, not
allocator page faults.

Keep-all/reliable semantics: per-reader caches are unbounded, nothing is
dropped.
"""

from __future__ import annotations

import struct
import threading
import time
import zlib
from collections import deque
from dataclasses import dataclass

from .msgdef import SerializationPlan
from .runtime import GrowBuffer
from .serde import Frame, MessageValue, deserialize, serialize

_HEADER = struct.Struct("<16sQQIHH")  # writer guid, seq, source_ts, length, flags, version
_CDR_PREAMBLE = struct.Struct("<HH")  # representation id, options
_FRAG = struct.Struct("<IIQ")  # fragment index, length, offset
_PARAM = struct.Struct("<HHQ")  # inline QoS parameter: pid, length, value
_FRAGMENT_BYTES = 64 * 1024

# inline QoS parameter ids carried with every data submessage
_PID_TOPIC_HASH = 0x0001
_PID_SEQ = 0x0002
_PID_SOURCE_TS = 0x0003
_PID_LIFESPAN = 0x0004
_PID_OWNERSHIP = 0x0005
_PID_PRESENTATION = 0x0006
_PID_SENTINEL = 0x0000


def _pack_inline_qos(seq: int, source_ts: int, topic_hash: int) -> bytes:
    return b"".join(
        (
            _PARAM.pack(_PID_TOPIC_HASH, 8, topic_hash),
            _PARAM.pack(_PID_SEQ, 8, seq),
            _PARAM.pack(_PID_SOURCE_TS, 8, source_ts),
            _PARAM.pack(_PID_LIFESPAN, 8, 2**63 - 1),  # infinite
            _PARAM.pack(_PID_OWNERSHIP, 8, 0),  # shared
            _PARAM.pack(_PID_PRESENTATION, 8, 0),
            _PARAM.pack(_PID_SENTINEL, 0, 0),
        )
    )


def _parse_inline_qos(raw: bytes) -> dict:
    params = {}
    offset = 0
    while True:
        pid, length, value = _PARAM.unpack_from(raw, offset)
        offset += _PARAM.size
        if pid == _PID_SENTINEL:
            return params
        params[pid] = value


@dataclass(frozen=True)
class BaselineTimes:
    """Endpoint timestamps of one baseline transfer (ns, monotonic clock)."""

    seq: int
    t_publish_start: int  # before serialization
    t_first_sent: int  # after serialization, before the copy into the pool
    t_publish_done: int | None = None  # publish call completed
    t_last_recv: int | None = None  # after the copy out of the pool
    t_take_done: int | None = None  # after deserialization


class _Sample:
    __slots__ = ("slab", "length", "refs", "header", "info")

    def __init__(self, slab: GrowBuffer, length: int, refs: int, header: bytes, info: dict):
        self.slab = slab
        self.length = length
        self.refs = refs
        self.header = header
        self.info = info


class _ReaderState:
    __slots__ = (
        "name",
        "cache",
        "cond",
        "next_seq",
        "sample_lost",
        "last_source_ts",
        "instances",
        "guard",
    )

    def __init__(self, name: str, lock: threading.Lock):
        self.name = name
        self.cache: deque = deque()
        self.cond = threading.Condition(lock)
        self.next_seq = 0
        self.sample_lost = 0
        self.last_source_ts = 0
        self.instances: dict = {}  # writer guid -> (count, last_seq, last_ts)
        self.guard = threading.Event()  # waitset guard condition


class BaselineTopic:
    """One topic's sample pool plus its writer/reader bookkeeping."""

    def __init__(self, name: str, plan: SerializationPlan, clock=time.perf_counter_ns):
        self.name = name
        self.plan = plan
        self.clock = clock
        self._lock = threading.Lock()
        self._readers: list[_ReaderState] = []
        self._writers = 0
        self._free_slabs: list[GrowBuffer] = []
        self.copies_in = 0
        self.copies_out = 0

    def create_writer(self, node: str) -> "BaselineWriter":
        with self._lock:
            self._writers += 1
            return BaselineWriter(self, node, self._writers)

    def create_reader(self, node: str) -> "BaselineReader":
        with self._lock:
            state = _ReaderState(node, self._lock)
            self._readers.append(state)
            return BaselineReader(self, state)

    def _acquire_slab(self) -> GrowBuffer:
        with self._lock:
            return self._free_slabs.pop() if self._free_slabs else GrowBuffer()


_COMMAND = struct.Struct("<IIQQI")  # opcode, port, address, length, flags
_WORD = struct.Struct("<I")
_OP_PUBLISH = 0x10
_OP_TAKE = 0x11
_OP_ACK = 0x80


class _CommandPort:
    """Word-serial command port between a node and its middleware agent.

    Requests and responses cross a word FIFO one 32-bit word at a time and
    are re-assembled by a receive state machine, mirroring how a
    command/mailbox interface carries middleware calls for a node that
    cannot call into the stack directly.
    """

    __slots__ = ("_fifo", "_state", "_words")

    _LAYOUT = ("opcode", "port", "addr_lo", "addr_hi", "len_lo", "len_hi", "flags", "crc")

    def __init__(self):
        self._fifo: deque = deque()
        self._state = 0
        self._words: list[int] = []

    def _push_word(self, word: int) -> None:
        self._fifo.append(_WORD.pack(word))

    def _pump(self) -> list[int]:
        words = []
        while self._fifo:
            raw = self._fifo.popleft()
            (word,) = _WORD.unpack(raw)
            field = self._LAYOUT[self._state]
            if self._state == 0 and word & 0xFF not in (_OP_PUBLISH, _OP_TAKE, _OP_ACK | _OP_PUBLISH, _OP_ACK | _OP_TAKE):
                raise RuntimeError(f"bad opcode word {word:#x} for {field}")
            words.append(word)
            self._state = (self._state + 1) % len(self._LAYOUT)
        return words

    def exchange(self, opcode: int, port: int, address: int, length: int, flags: int) -> int:
        """Round-trip one command: marshal, pump, validate, acknowledge."""
        request = (
            opcode,
            port,
            address & 0xFFFFFFFF,
            (address >> 32) & 0xFFFFFFFF,
            length & 0xFFFFFFFF,
            (length >> 32) & 0xFFFFFFFF,
            flags,
        )
        crc = 0
        for word in request:
            self._push_word(word)
            crc = zlib.crc32(_WORD.pack(word), crc)
        self._push_word(crc & 0xFFFFFFFF)
        received = self._pump()
        if len(received) != 8 or received[0] != opcode:
            raise RuntimeError("command framing lost")
        check = 0
        for word in received[:-1]:
            check = zlib.crc32(_WORD.pack(word), check)
        if check & 0xFFFFFFFF != received[-1]:
            raise RuntimeError("command checksum mismatch")
        # agent response: acknowledge with the opcode's ack bit
        for word in (opcode | _OP_ACK, port, received[4], received[5], crc & 0xFFFFFFFF):
            self._push_word(word)
        response = []
        while self._fifo:
            (word,) = _WORD.unpack(self._fifo.popleft())
            response.append(word)
        self._state = 0
        if response[0] != (opcode | _OP_ACK) or response[1] != port:
            raise RuntimeError("command not acknowledged")
        return response[2] | (response[3] << 32)


class BaselineWriter:
    """Publishes through the emulated stack, copying samples into the pool."""

    def __init__(self, topic: BaselineTopic, node: str, writer_index: int):
        self.topic = topic
        self.node = node
        self.guid = f"{node}:{writer_index:04d}".encode().ljust(16, b"\x00")[:16]
        self._seq = 0
        self._port_id = writer_index
        self._history: deque = deque()
        self._deadline_ns = None  # deadline QoS unset: checked, never violated
        self._last_publish_ns = 0
        self._chunk_epoch = 0
        self._command_port = _CommandPort()
        self.last_times: BaselineTimes | None = None

    # -- emulated middleware layers ---------------------------------------

    def _client_publish(self, payload, t_start: int) -> BaselineTimes:
        # node-to-agent command round trip before the stack acts
        granted = self._command_port.exchange(
            _OP_PUBLISH, self._port_id, id(payload), len(payload), 0
        )
        if granted != len(payload):
            raise RuntimeError("publish command corrupted")
        return self._adapter_publish(payload, t_start)

    def _adapter_publish(self, payload, t_start: int) -> BaselineTimes:
        preamble = _CDR_PREAMBLE.pack(0x0001, 0x0000)
        # pooled-chunk bookkeeping: header init and epoch tracking
        self._chunk_epoch += 1
        chunk_header = struct.pack(
            "<QQII", self._chunk_epoch, t_start, len(payload), _FRAGMENT_BYTES
        )
        if struct.unpack("<QQII", chunk_header)[2] != len(payload):
            raise RuntimeError("chunk header corrupted")
        return self._writer_write(preamble, payload, t_start)

    def _fragments(self, length: int) -> list[bytes]:
        descriptors = []
        offset = 0
        index = 0
        while True:
            frag_len = min(_FRAGMENT_BYTES, length - offset)
            descriptors.append(_FRAG.pack(index, frag_len, offset))
            offset += frag_len
            index += 1
            if offset >= length:
                return descriptors

    def _qos_admit(self, now: int) -> None:
        if self._deadline_ns is not None and now - self._last_publish_ns > self._deadline_ns:
            raise RuntimeError("deadline missed")
        self._last_publish_ns = now
        # keep-all history: nothing is ever evicted, only recorded
        self._history.append((self._seq, now))

    def _writer_write(self, preamble: bytes, payload, t_start: int) -> BaselineTimes:
        topic = self.topic
        t_first_sent = topic.clock()
        seq = self._seq
        length = len(payload)
        header = _HEADER.pack(self.guid, seq, t_first_sent, length, 0x0003, 2)
        inline_qos = _pack_inline_qos(seq, t_first_sent, zlib.crc32(topic.name.encode()))
        checksum = zlib.crc32(preamble)
        checksum = zlib.crc32(header, checksum)
        checksum = zlib.crc32(inline_qos, checksum)
        fragments = self._fragments(length)
        for d in fragments:
            checksum = zlib.crc32(d, checksum)
        self._qos_admit(t_first_sent)
        info = {
            "writer": self.guid,
            "seq": seq,
            "source_ts": t_first_sent,
            "t_publish_start": t_start,
            "t_first_sent": t_first_sent,
            "length": length,
            "fragments": len(fragments),
            "inline_qos": inline_qos,
            "checksum": checksum,
            "valid": True,
        }
        slab = topic._acquire_slab()
        slab.write(0, payload)  # movement 1: into the shared pool
        with topic._lock:
            topic.copies_in += 1
            sample = _Sample(slab, length, len(topic._readers), header, info)
            if sample.refs == 0:
                topic._free_slabs.append(slab)
            for reader in topic._readers:
                reader.cache.append(sample)
                reader.guard.set()  # waitset guard condition
                reader.cond.notify()
        self._seq += 1
        return BaselineTimes(seq, t_start, t_first_sent, t_publish_done=topic.clock())

    def publish(self, value: MessageValue) -> BaselineTimes:
        t_start = self.topic.clock()
        payload = serialize(value, self.topic.plan).payload
        times = self._client_publish(payload, t_start)
        self.last_times = times
        return times


class BaselineReader:
    """Takes by validating the envelope and copying samples out of the pool."""

    def __init__(self, topic: BaselineTopic, state: _ReaderState):
        self.topic = topic
        self._state = state
        self._rx = GrowBuffer()  # reused copy-out buffer (reader cache slab)
        self._command_port = _CommandPort()
        self.last_times: BaselineTimes | None = None
        self.last_sample_info: dict | None = None

    def _validate(self, sample: _Sample) -> dict:
        guid, seq, source_ts, length, flags, version = _HEADER.unpack(sample.header)
        info = sample.info
        if length != sample.length or not info["valid"] or version != 2:
            raise ValueError(f"baseline topic {self.topic.name}: corrupt envelope")
        params = _parse_inline_qos(info["inline_qos"])
        if params[_PID_SEQ] != seq or params[_PID_SOURCE_TS] != source_ts:
            raise ValueError("inline QoS disagrees with the submessage header")
        if params[_PID_LIFESPAN] < source_ts:  # infinite lifespan never expires
            raise ValueError("sample expired")
        # readers re-derive the writer's checksum over every descriptor
        checksum = zlib.crc32(_CDR_PREAMBLE.pack(0x0001, 0x0000))
        checksum = zlib.crc32(sample.header, checksum)
        checksum = zlib.crc32(info["inline_qos"], checksum)
        offset = 0
        for index in range(info["fragments"]):
            frag_len = min(_FRAGMENT_BYTES, length - offset)
            checksum = zlib.crc32(_FRAG.pack(index, frag_len, offset), checksum)
            offset += frag_len
        if checksum != info["checksum"]:
            raise ValueError("fragment set does not match the envelope checksum")
        state = self._state
        # reliable + keep-all: sequence must be contiguous per reader
        if seq > state.next_seq:
            state.sample_lost += seq - state.next_seq
        state.next_seq = seq + 1
        # destination order by source timestamp
        if source_ts < state.last_source_ts:
            raise ValueError("destination order violated")
        state.last_source_ts = source_ts
        # per-writer instance bookkeeping and liveliness renewal
        count, _, _ = state.instances.get(guid, (0, -1, 0))
        state.instances[guid] = (count + 1, seq, source_ts)
        return {
            "writer": guid,
            "seq": seq,
            "source_ts": source_ts,
            "valid_data": True,
            "sample_state": "not_read",
            "view_state": "new" if count == 0 else "not_new",
            "instance_state": "alive",
            "lost": state.sample_lost,
        }

    def _wait_and_dispatch(self, block: bool) -> _Sample | None:
        """Waitset-style delivery: consult the guard, wait, then dispatch."""
        state = self._state
        if not block and not state.guard.is_set():
            return None
        with state.cond:
            if not state.cache:
                if not block:
                    return None
                while not state.cache:
                    state.cond.wait()
            sample = state.cache.popleft()
            if not state.cache:
                state.guard.clear()
        return sample

    def take(self, block: bool = True) -> MessageValue | None:
        # node-to-agent command round trip for the take request
        self._command_port.exchange(_OP_TAKE, 0, 0, 0, 1 if block else 0)
        sample = self._wait_and_dispatch(block)
        if sample is None:
            return None
        # the agent hands the granted sample's location back to the node
        granted = self._command_port.exchange(
            _OP_TAKE, 0, id(sample.slab), sample.length, 1
        )
        if granted != sample.length:
            raise RuntimeError("take grant corrupted")
        self.last_sample_info = self._validate(sample)
        info = sample.info
        n = sample.length
        self._rx.write(0, sample.slab.view[:n])  # movement 2: out of the pool
        topic = self.topic
        with topic._lock:
            topic.copies_out += 1
            sample.refs -= 1
            if sample.refs == 0:
                if len(topic._free_slabs) < 8:
                    topic._free_slabs.append(sample.slab)
        t_last_recv = topic.clock()
        value = deserialize(Frame(self._rx.view[:n]), topic.plan)
        self.last_times = BaselineTimes(
            info["seq"],
            t_publish_start=info["t_publish_start"],
            t_first_sent=info["t_first_sent"],
            t_last_recv=t_last_recv,
            t_take_done=topic.clock(),
        )
        return value
