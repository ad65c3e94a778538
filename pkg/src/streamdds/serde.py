"""Framed message codec.

A message value is a plain dict tree mirroring its type definition.  It is
serialized by walking the type's flattened plan slot by slot: little-endian
primitives, packed (no inter-field alignment), dynamic slots prefixed with a
uint32 element count, strings as utf-8 bytes behind a uint32 byte-length
prefix.  The payload is zero-padded to a 32-bit word boundary and wrapped in
a Frame; one frame carries exactly one message, so the frame boundary is the
end-of-message marker.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .msgdef import (
    Arity,
    GroupSlot,
    MessageTypeDef,
    PlanSlot,
    SerializationPlan,
    TypeRegistry,
)

_STRUCT_CODE = {
    "bool": "?",
    "int8": "b",
    "uint8": "B",
    "int16": "h",
    "uint16": "H",
    "int32": "i",
    "uint32": "I",
    "int64": "q",
    "uint64": "Q",
    "float32": "f",
    "float64": "d",
}

_COUNT = struct.Struct("<I")

MessageValue = dict


class CodecError(Exception):
    pass


class SerializationError(CodecError):
    def __init__(self, message: str, path: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class DeserializationError(CodecError):
    pass


@dataclass(frozen=True)
class Frame:
    """One serialized message: a word-aligned byte payload.

    ``payload`` may be any bytes-like object (treat it as read-only);
    avoiding a forced ``bytes`` conversion keeps multi-megabyte frames from
    paying an extra copy.
    """

    payload: bytes | bytearray | memoryview

    def __post_init__(self):
        if len(self.payload) % 4 != 0:
            raise ValueError("frame payload must be a whole number of 32-bit words")

    @property
    def word_count(self) -> int:
        return len(self.payload) // 4

    def hexdump(self) -> str:
        """Lowercase hex, one 4-byte word per line (golden-test format)."""
        mv = memoryview(self.payload)
        return "\n".join(mv[i : i + 4].hex() for i in range(0, len(mv), 4))


_path_segments_cache: dict[str, tuple] = {}


def _path_segments(path: str) -> tuple:
    """Parse a dotted slot path like ``a[2].b.c`` into access steps."""
    segs = _path_segments_cache.get(path)
    if segs is not None:
        return segs
    steps = []
    for part in path.split("."):
        if part.endswith("]"):
            name, _, idx = part[:-1].partition("[")
            steps.append(name)
            steps.append(int(idx))
        else:
            steps.append(part)
    segs = tuple(steps)
    _path_segments_cache[path] = segs
    return segs


def _lookup(value: MessageValue, path: str):
    node = value
    for step in _path_segments(path):
        try:
            node = node[step]
        except (KeyError, TypeError):
            raise SerializationError("missing field", path) from None
        except IndexError:
            raise SerializationError("array shorter than declared", path) from None
    return node


def _pack_scalars(primitive: str, values, path: str) -> bytes:
    code = _STRUCT_CODE[primitive]
    try:
        if isinstance(values, (list, tuple)):
            return struct.pack(f"<{len(values)}{code}", *values)
        return struct.pack(f"<{code}", values)
    except struct.error as e:
        raise SerializationError(f"value not encodable as {primitive} ({e})", path) from None
    except TypeError:
        raise SerializationError(f"value not encodable as {primitive}", path) from None


def _write_string(out: bytearray, value, path: str) -> None:
    if not isinstance(value, str):
        raise SerializationError("expected str", path)
    data = value.encode("utf-8")
    out += _COUNT.pack(len(data))
    out += data


def _write_array_body(out: bytearray, slot: PlanSlot, values, n: int, path: str) -> None:
    if slot.primitive == "string":
        for i in range(n):
            _write_string(out, values[i], f"{path}[{i}]")
    elif slot.primitive == "uint8" and isinstance(values, (bytes, bytearray, memoryview)):
        out += values
    else:
        if isinstance(values, (bytes, bytearray, memoryview)):
            raise SerializationError("bytes value only valid for uint8 arrays", path)
        out += _pack_scalars(slot.primitive, list(values), path)


def _expected_count(arity: Arity, actual: int, path: str) -> None:
    if arity.kind == Arity.FIXED and actual != arity.size:
        raise SerializationError(
            f"fixed array needs exactly {arity.size} elements, got {actual}", path
        )
    if arity.kind == Arity.BOUNDED and actual > arity.size:
        raise SerializationError(
            f"bounded array allows at most {arity.size} elements, got {actual}", path
        )


def _write_slot(out: bytearray, slot, value: MessageValue) -> None:
    if isinstance(slot, GroupSlot):
        elements = _lookup(value, slot.path)
        try:
            n = len(elements)
        except TypeError:
            raise SerializationError("expected a sequence", slot.path) from None
        _expected_count(slot.arity, n, slot.path)
        out += _COUNT.pack(n)
        for i, element in enumerate(elements):
            if not isinstance(element, dict):
                raise SerializationError("expected nested value", f"{slot.path}[{i}]")
            for sub in slot.element_slots:
                _write_slot(out, sub, element)
        return

    v = _lookup(value, slot.path)
    if slot.arity.kind == Arity.SCALAR:
        if slot.primitive == "string":
            _write_string(out, v, slot.path)
        else:
            out += _pack_scalars(slot.primitive, v, slot.path)
        return

    try:
        n = len(v)
    except TypeError:
        raise SerializationError("expected a sequence", slot.path) from None
    _expected_count(slot.arity, n, slot.path)
    if slot.arity.is_dynamic:
        out += _COUNT.pack(n)
    _write_array_body(out, slot, v, n, slot.path)


def serialize(value: MessageValue, plan: SerializationPlan) -> Frame:
    """Encode ``value`` against ``plan`` into a word-aligned frame."""
    out = bytearray()
    for slot in plan.slots:
        _write_slot(out, slot, value)
    pad = (-len(out)) % 4
    if pad:
        out += b"\x00" * pad
    return Frame(out)


class _Reader:
    # reads through a memoryview so slicing never copies the frame
    __slots__ = ("data", "pos")

    def __init__(self, data):
        self.data = memoryview(data)
        self.pos = 0

    def remaining(self) -> int:
        return len(self.data) - self.pos

    def take(self, n: int, what: str) -> memoryview:
        if self.remaining() < n:
            raise DeserializationError(
                f"truncated frame: needed {n} bytes for {what}, "
                f"{self.remaining()} left"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def count(self, what: str) -> int:
        return _COUNT.unpack(self.take(4, what))[0]


def _read_scalars(r: _Reader, primitive: str, n: int, path: str):
    code = _STRUCT_CODE[primitive]
    size = struct.calcsize(code)
    raw = r.take(size * n, path)
    return list(struct.unpack(f"<{n}{code}", raw))


def _read_string(r: _Reader, path: str) -> str:
    n = r.count(f"{path} length")
    raw = r.take(n, path)
    try:
        return str(raw, "utf-8")
    except UnicodeDecodeError as e:
        raise DeserializationError(f"{path}: invalid utf-8 payload ({e})") from None


def _read_slot(r: _Reader, slot):
    if isinstance(slot, GroupSlot):
        n = r.count(f"{slot.path} count")
        if slot.arity.kind == Arity.BOUNDED and n > slot.arity.size:
            raise DeserializationError(
                f"{slot.path}: count {n} exceeds bound {slot.arity.size}"
            )
        return [
            _build_tree([(sub, _read_slot(r, sub)) for sub in slot.element_slots])
            for _ in range(n)
        ]

    if slot.arity.kind == Arity.SCALAR:
        if slot.primitive == "string":
            return _read_string(r, slot.path)
        return _read_scalars(r, slot.primitive, 1, slot.path)[0]

    if slot.arity.kind == Arity.FIXED:
        n = slot.arity.size
    else:
        n = r.count(f"{slot.path} count")
        if slot.arity.kind == Arity.BOUNDED and n > slot.arity.size:
            raise DeserializationError(
                f"{slot.path}: count {n} exceeds bound {slot.arity.size}"
            )
    if slot.primitive == "string":
        return [_read_string(r, f"{slot.path}[{i}]") for i in range(n)]
    if slot.primitive == "uint8":
        return bytes(r.take(n, slot.path))
    return _read_scalars(r, slot.primitive, n, slot.path)


def _build_tree(slot_values: list) -> MessageValue:
    """Assemble a value tree from (slot, value) pairs using slot paths."""
    root: MessageValue = {}
    for slot, v in slot_values:
        steps = _path_segments(slot.path)
        node = root
        for step, nxt in zip(steps[:-1], steps[1:]):
            if isinstance(step, int):
                while len(node) <= step:
                    node.append({})
                node = node[step]
            else:
                default = [] if isinstance(nxt, int) else {}
                if isinstance(node, dict):
                    node = node.setdefault(step, default)
                else:
                    node = node[step]
        last = steps[-1]
        if isinstance(last, int):
            while len(node) <= last:
                node.append({})
            node[last] = v
        else:
            node[last] = v
    return root


def deserialize(frame: Frame, plan: SerializationPlan) -> MessageValue:
    """Decode a frame produced for the same plan back into a value tree."""
    r = _Reader(frame.payload)
    pairs = [(slot, _read_slot(r, slot)) for slot in plan.slots]
    tail = r.remaining()
    if tail >= 4 or r.data[r.pos :] != b"\x00" * tail:
        raise DeserializationError(
            f"{tail} trailing bytes after last slot are not word padding"
        )
    return _build_tree(pairs)


# --- shape conformance ---------------------------------------------------


def _join(path: str, name: str) -> str:
    return f"{path}.{name}" if path else name


def _scalar_conforms(primitive: str, v) -> bool:
    if primitive == "bool":
        return isinstance(v, bool)
    if primitive == "string":
        return isinstance(v, str)
    if primitive in ("float32", "float64"):
        return isinstance(v, (int, float)) and not isinstance(v, bool)
    return isinstance(v, int) and not isinstance(v, bool)


def _check_length(arity: Arity, n: int) -> bool:
    if arity.kind == Arity.FIXED:
        return n == arity.size
    if arity.kind == Arity.BOUNDED:
        return n <= arity.size
    return True


def conforms_to(
    value: MessageValue, mtd: MessageTypeDef, registry: TypeRegistry
) -> tuple[bool, str | None]:
    """Check that ``value`` shape-matches ``mtd`` recursively.

    Returns (True, None) on conformance, else (False, first violation path).
    """

    def walk(v, t: MessageTypeDef, path: str) -> str | None:
        if not isinstance(v, dict):
            return path or t.type_name
        names = {f.name for f in t.fields}
        for extra in v.keys() - names:
            return _join(path, extra)
        for f in t.fields:
            fpath = _join(path, f.name)
            if f.name not in v:
                return fpath
            fv = v[f.name]
            if f.arity.kind == Arity.SCALAR:
                if f.is_primitive:
                    if not _scalar_conforms(f.type_name, fv):
                        return fpath
                else:
                    bad = walk(fv, registry.get(f.type_name), fpath)
                    if bad is not None:
                        return bad
                continue
            # arrays
            if isinstance(fv, (bytes, bytearray)):
                if f.type_name != "uint8":
                    return fpath
                n = len(fv)
            elif isinstance(fv, (list, tuple)):
                n = len(fv)
            else:
                return fpath
            if not _check_length(f.arity, n):
                return fpath
            if isinstance(fv, (bytes, bytearray)):
                continue
            for i, item in enumerate(fv):
                ipath = f"{fpath}[{i}]"
                if f.is_primitive:
                    if not _scalar_conforms(f.type_name, item):
                        return ipath
                else:
                    bad = walk(item, registry.get(f.type_name), ipath)
                    if bad is not None:
                        return bad
        return None

    violation = walk(value, mtd, "")
    return (violation is None, violation)
