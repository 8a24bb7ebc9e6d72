import struct

import pytest
from hypothesis import given, strategies as st

from pufseal.errors import BadMagic, InvariantViolation, Truncated, UnsupportedVersion
from pufseal.package import (
    EncryptionMap,
    FieldDescriptor,
    FieldFilter,
    Isa,
    Mode,
    PackageHeader,
    SealedPackage,
    overhead_bytes,
    parse,
    serialize,
)


def make_package(mode=Mode.FULL, n=2, code_length=None, compressed=False, descriptors=(), bits=None):
    code_length = 4 * n if code_length is None else code_length
    header = PackageHeader(
        mode=mode, isa=Isa.RV32, flags=1 if compressed else 0, device_id=0x1122334455667788,
        code_length=code_length, instruction_count=n,
        map_length=0 if mode == Mode.FULL else (n + 7) // 8, field_count=len(descriptors),
    )
    emap = None if mode == Mode.FULL else EncryptionMap(bits if bits is not None else [k % 3 == 0 for k in range(n)])
    return SealedPackage(header, tuple(descriptors), emap, b"\xab" * code_length, b"\x5a" * 32)


descriptor_st = st.one_of(
    st.builds(lambda lo, w: FieldDescriptor(FieldFilter.ALL, lo, min(31, lo + w)), st.integers(0, 31), st.integers(0, 31)),
    st.builds(
        lambda f, lo, w: FieldDescriptor(f, lo, min(31, lo + w)),
        st.sampled_from([FieldFilter.LOADS, FieldFilter.STORES, FieldFilter.BRANCHES, FieldFilter.JUMPS]),
        st.integers(7, 31), st.integers(0, 24),
    ),
)


@st.composite
def packages(draw):
    mode = draw(st.sampled_from(list(Mode)))
    n = draw(st.integers(0, 300))
    compressed = draw(st.booleans())
    code_length = draw(st.integers(2 * n, 4 * n)) if compressed else 4 * n
    descriptors = draw(st.lists(descriptor_st, min_size=1, max_size=5)) if mode == Mode.FIELD_LEVEL else []
    header = PackageHeader(
        mode=mode, isa=draw(st.sampled_from(list(Isa))), flags=int(compressed),
        device_id=draw(st.integers(0, 2**64 - 1)), code_length=code_length, instruction_count=n,
        map_length=0 if mode == Mode.FULL else (n + 7) // 8, field_count=len(descriptors),
    )
    emap = None if mode == Mode.FULL else EncryptionMap(draw(st.lists(st.booleans(), min_size=n, max_size=n)))
    return SealedPackage(
        header, tuple(descriptors), emap,
        draw(st.binary(min_size=code_length, max_size=code_length)),
        draw(st.binary(min_size=32, max_size=32)),
    )


def test_mode0_size():
    assert len(serialize(make_package(Mode.FULL, n=2))) == 72


def test_mode1_map_length():
    pkg = make_package(Mode.PER_INSTRUCTION, n=100)
    assert pkg.header.map_length == 13
    assert len(serialize(pkg)) == 32 + 13 + 400 + 32


def test_header_layout_is_little_endian():
    blob = serialize(make_package(Mode.PER_INSTRUCTION, n=9))
    assert blob[:4] == b"ERIC"
    assert blob[4:8] == bytes([1, 1, 0, 0])
    assert struct.unpack_from("<Q", blob, 8)[0] == 0x1122334455667788
    assert struct.unpack_from("<III", blob, 16) == (36, 9, 2)
    assert blob[28:32] == b"\x00\x00\x00\x00"


def test_map_bit_order():
    bits = [1, 0, 0, 0, 0, 0, 0, 1, 0, 1]
    assert EncryptionMap(bits).pack() == bytes([0x81, 0x02])
    assert list(EncryptionMap.unpack(bytes([0x81, 0x02]), 10)) == bits


def test_map_pad_bits_must_be_zero():
    with pytest.raises(InvariantViolation):
        EncryptionMap.unpack(bytes([0x81, 0x06]), 10)


@given(packages())
def test_roundtrip(pkg):
    blob = serialize(pkg)
    assert len(blob) == pkg.size == 32 + 3 * pkg.header.field_count + pkg.header.map_length + pkg.header.code_length + 32
    assert parse(blob) == pkg
    assert serialize(parse(blob)) == blob


@given(packages())
def test_size_overhead_formula(pkg):
    h = pkg.header
    assert len(serialize(pkg)) - h.code_length == overhead_bytes(h.mode, h.instruction_count, h.field_count)


def test_bad_magic():
    blob = bytearray(serialize(make_package()))
    blob[0] ^= 0xFF
    with pytest.raises(BadMagic):
        parse(bytes(blob))


def test_bad_version():
    blob = bytearray(serialize(make_package()))
    blob[4] = 2
    with pytest.raises(UnsupportedVersion):
        parse(bytes(blob))


def test_truncated():
    blob = serialize(make_package(Mode.PER_INSTRUCTION, n=5))
    with pytest.raises(Truncated):
        parse(blob[:-1])
    with pytest.raises(Truncated):
        parse(blob[:20])


def test_trailing_bytes():
    with pytest.raises(InvariantViolation):
        parse(serialize(make_package()) + b"\x00")


def test_mode1_zero_map_length():
    blob = bytearray(serialize(make_package(Mode.PER_INSTRUCTION, n=5)))
    struct.pack_into("<I", blob, 24, 0)
    with pytest.raises(InvariantViolation):
        parse(bytes(blob))


@pytest.mark.parametrize(
    "offset,value",
    [(5, 3), (6, 2), (7, 0x02), (29, 1), (28, 1)],
    ids=["mode", "isa", "flags", "reserved", "field_count"],
)
def test_header_field_invariants(offset, value):
    blob = bytearray(serialize(make_package(Mode.FULL, n=2)))
    blob[offset] = value
    with pytest.raises(InvariantViolation):
        parse(bytes(blob))


def test_code_length_without_compressed_flag():
    with pytest.raises(InvariantViolation):
        serialize(make_package(Mode.FULL, n=3, code_length=10))
    serialize(make_package(Mode.FULL, n=3, code_length=10, compressed=True))


def test_mode_invariants_on_serialize():
    with pytest.raises(InvariantViolation):
        serialize(make_package(Mode.FIELD_LEVEL, n=3))
    with pytest.raises(InvariantViolation):
        serialize(make_package(Mode.PER_INSTRUCTION, n=3, descriptors=[FieldDescriptor(FieldFilter.ALL, 0, 3)]))


@pytest.mark.parametrize(
    "d",
    [FieldDescriptor(FieldFilter.LOADS, 6, 20), FieldDescriptor(FieldFilter.ALL, 10, 9),
     FieldDescriptor(FieldFilter.ALL, 0, 32)],
)
def test_descriptor_invariants(d):
    with pytest.raises(InvariantViolation):
        serialize(make_package(Mode.FIELD_LEVEL, n=3, descriptors=[d]))


def test_descriptor_filter_byte_checked_on_parse():
    blob = bytearray(serialize(make_package(Mode.FIELD_LEVEL, n=3, descriptors=[FieldDescriptor(FieldFilter.ALL, 20, 31)])))
    blob[32] = 9
    with pytest.raises(InvariantViolation):
        parse(bytes(blob))


def test_map_length_mismatch_on_serialize():
    pkg = make_package(Mode.PER_INSTRUCTION, n=4, bits=[1, 0, 1])
    with pytest.raises(InvariantViolation):
        serialize(pkg)
