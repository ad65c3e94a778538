import math
import random
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamdds.msgdef import TypeRegistry, flatten, parse_msg_file
from streamdds.serde import (
    DeserializationError,
    Frame,
    SerializationError,
    conforms_to,
    deserialize,
    serialize,
)

from support import mutate_value, random_registry, random_value


def plan_for(src: str, name: str = "t/M"):
    reg = TypeRegistry()
    reg.register(parse_msg_file(src, name))
    return reg.resolve(), flatten(reg, name)


class TestSerialize:
    def test_int32_little_endian(self):
        _, plan = plan_for("int32 v")
        assert bytes(serialize({"v": 1}, plan).payload) == b"\x01\x00\x00\x00"

    def test_empty_message_empty_payload(self):
        _, plan = plan_for("")
        assert len(serialize({}, plan).payload) == 0

    def test_point_is_three_f64_concatenated(self, geometry_registry):
        plan = flatten(geometry_registry, "geometry_msgs/Point")
        value = {"x": 1.0, "y": 2.0, "z": 3.0}
        expected = b"".join(struct.pack("<d", v) for v in (1.0, 2.0, 3.0))
        assert bytes(serialize(value, plan).payload) == expected

    def test_padding_to_word_boundary(self):
        _, plan = plan_for("int8 a\nint8 b\nint8 c")
        frame = serialize({"a": 1, "b": 2, "c": 3}, plan)
        assert len(frame.payload) == 4
        assert bytes(frame.payload) == b"\x01\x02\x03\x00"

    def test_dynamic_count_prefix(self):
        _, plan = plan_for("uint16[] v")
        frame = serialize({"v": [5, 6]}, plan)
        assert bytes(frame.payload) == b"\x02\x00\x00\x00\x05\x00\x06\x00"

    def test_string_utf8_with_byte_length_prefix(self):
        _, plan = plan_for("string s")
        frame = serialize({"s": "hé"}, plan)
        assert bytes(frame.payload) == b"\x03\x00\x00\x00h\xc3\xa9\x00"

    def test_uint8_array_accepts_bytes(self):
        _, plan = plan_for("uint8[] data")
        frame = serialize({"data": b"\x01\x02"}, plan)
        assert bytes(frame.payload) == b"\x02\x00\x00\x00\x01\x02\x00\x00"

    def test_bool_single_byte(self):
        _, plan = plan_for("bool a\nbool b")
        assert bytes(serialize({"a": True, "b": False}, plan).payload) == b"\x01\x00\x00\x00"

    def test_missing_field_reports_path(self, geometry_registry):
        plan = flatten(geometry_registry, "geometry_msgs/Pose")
        with pytest.raises(SerializationError) as err:
            serialize({"position": {"x": 1.0, "y": 2.0}, "orientation": [0.0] * 4}, plan)
        assert err.value.path == "position.z"

    def test_bounded_overflow(self):
        _, plan = plan_for("int32[<=2] v")
        with pytest.raises(SerializationError, match="at most 2"):
            serialize({"v": [1, 2, 3]}, plan)

    def test_fixed_length_enforced(self):
        _, plan = plan_for("int32[2] v")
        with pytest.raises(SerializationError, match="exactly 2"):
            serialize({"v": [1]}, plan)

    def test_out_of_range_int(self):
        _, plan = plan_for("int8 v")
        with pytest.raises(SerializationError, match="int8"):
            serialize({"v": 1000}, plan)

    def test_determinism(self, geometry_registry):
        plan = flatten(geometry_registry, "geometry_msgs/Pose")
        value = {
            "position": {"x": 0.5, "y": -2.0, "z": 3.25},
            "orientation": [0.0, 0.0, 0.0, 1.0],
        }
        assert bytes(serialize(value, plan).payload) == bytes(serialize(value, plan).payload)

    def test_nested_group_serialization(self):
        reg = TypeRegistry()
        reg.register(parse_msg_file("int32 v", "t/Inner"))
        reg.register(parse_msg_file("Inner[] items\nuint8 tail", "t/Outer"))
        plan = flatten(reg.resolve(), "t/Outer")
        frame = serialize({"items": [{"v": 1}, {"v": 2}], "tail": 9}, plan)
        assert bytes(frame.payload) == (
            b"\x02\x00\x00\x00" + b"\x01\x00\x00\x00" + b"\x02\x00\x00\x00" + b"\x09\x00\x00\x00"
        )


class TestDeserialize:
    def test_int32_identity(self):
        _, plan = plan_for("int32 v")
        assert deserialize(Frame(b"\x01\x00\x00\x00"), plan) == {"v": 1}

    def test_truncated_frame(self):
        _, plan = plan_for("int32 v\nint64 w")
        with pytest.raises(DeserializationError, match="truncated"):
            deserialize(Frame(b"\x01\x00\x00\x00"), plan)

    def test_count_exceeding_bound(self):
        _, plan = plan_for("int32[<=2] v")
        bad = b"\x03\x00\x00\x00" + b"\x00" * 12
        with pytest.raises(DeserializationError, match="bound"):
            deserialize(Frame(bad), plan)

    def test_count_exceeding_remaining_bytes(self):
        _, plan = plan_for("uint8[] v")
        with pytest.raises(DeserializationError, match="truncated"):
            deserialize(Frame(b"\xff\x00\x00\x00"), plan)

    def test_trailing_garbage_rejected(self):
        _, plan = plan_for("int8 v")
        with pytest.raises(DeserializationError, match="padding"):
            deserialize(Frame(b"\x01\x00\x00\x09"), plan)

    def test_whole_extra_word_rejected(self):
        _, plan = plan_for("int32 v")
        with pytest.raises(DeserializationError):
            deserialize(Frame(b"\x01\x00\x00\x00\x00\x00\x00\x00"), plan)

    def test_nan_round_trips(self):
        _, plan = plan_for("float64 v\nfloat32 w")
        out = deserialize(serialize({"v": math.nan, "w": math.inf}, plan), plan)
        assert math.isnan(out["v"]) and out["w"] == math.inf


class TestFrame:
    def test_word_alignment_enforced(self):
        with pytest.raises(ValueError):
            Frame(b"\x01\x02\x03")

    def test_hexdump_one_word_per_line(self):
        frame = Frame(bytes(range(8)))
        assert frame.hexdump() == "00010203\n04050607"


class TestRoundTrip:
    def test_seeded_sweep(self):
        rng = random.Random(20240817)
        for _ in range(200):
            registry, root = random_registry(rng)
            plan = flatten(registry, root)
            value = random_value(rng, registry, root)
            assert deserialize(serialize(value, plan), plan) == value

    @settings(max_examples=80, deadline=None)
    @given(st.integers(0, 10**9))
    def test_property_round_trip(self, seed):
        rng = random.Random(seed)
        registry, root = random_registry(rng)
        plan = flatten(registry, root)
        value = random_value(rng, registry, root)
        assert deserialize(serialize(value, plan), plan) == value

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**9))
    def test_fixed_size_law(self, seed):
        rng = random.Random(seed)
        registry, root = random_registry(rng)
        plan = flatten(registry, root)
        if plan.fixed_size_bytes is None:
            return
        value = random_value(rng, registry, root)
        frame = serialize(value, plan)
        assert len(frame.payload) == (plan.fixed_size_bytes + 3) // 4 * 4


class TestConformance:
    def test_simple_match(self):
        reg, _ = plan_for("int32 x")
        ok, path = conforms_to({"x": 1}, reg.get("t/M"), reg)
        assert ok and path is None

    def test_wrong_scalar_type(self):
        reg, _ = plan_for("int32 x")
        ok, path = conforms_to({"x": "s"}, reg.get("t/M"), reg)
        assert not ok and path == "x"

    def test_nested_violation_path(self, geometry_registry):
        value = {"position": {"x": 1.0, "y": 2.0, "z": "bad"}, "orientation": [0.0] * 4}
        ok, path = conforms_to(value, geometry_registry.get("geometry_msgs/Pose"), geometry_registry)
        assert not ok and path == "position.z"

    def test_extra_field_detected(self):
        reg, _ = plan_for("int32 x")
        ok, path = conforms_to({"x": 1, "y": 2}, reg.get("t/M"), reg)
        assert not ok and path == "y"

    def test_bool_is_not_int(self):
        reg, _ = plan_for("int32 x")
        ok, _ = conforms_to({"x": True}, reg.get("t/M"), reg)
        assert not ok

    def test_bytes_only_for_uint8(self):
        reg, _ = plan_for("int8[] v")
        ok, path = conforms_to({"v": b"\x01"}, reg.get("t/M"), reg)
        assert not ok and path == "v"

    def test_mutation_oracle(self):
        rng = random.Random(99)
        found = set()
        for _ in range(300):
            registry, root = random_registry(rng)
            value = random_value(rng, registry, root)
            ok, _ = conforms_to(value, registry.get(root), registry)
            assert ok
            mutated, kind = mutate_value(rng, registry, root, value)
            ok, path = conforms_to(mutated, registry.get(root), registry)
            assert not ok, f"undetected {kind} mutation"
            assert path
            found.add(kind)
        assert found == {"drop", "rename", "retype"}
