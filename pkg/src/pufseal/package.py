"""The ``.eric`` sealed-package container.

Layout (all integers little-endian)::

    header        32 bytes
    descriptors   3 * field_count bytes   (filter, bit_lo, bit_hi)
    map           map_length bytes        (instruction k -> bit k%8 of byte k//8)
    ciphertext    code_length bytes
    signature     32 bytes, encrypted
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import Sequence

from .errors import BadMagic, InvariantViolation, Truncated, UnsupportedVersion

MAGIC = b"ERIC"
VERSION = 1
HEADER_SIZE = 32
SIGNATURE_SIZE = 32
DESCRIPTOR_SIZE = 3
_HEADER_FMT = "<4sBBBBQIIIB3s"
assert struct.calcsize(_HEADER_FMT) == HEADER_SIZE

FLAG_COMPRESSED = 0x01


class Mode(enum.IntEnum):
    FULL = 0
    PER_INSTRUCTION = 1
    FIELD_LEVEL = 2


class Isa(enum.IntEnum):
    RV32 = 0
    RV64 = 1


class FieldFilter(enum.IntEnum):
    ALL = 0
    LOADS = 1
    STORES = 2
    BRANCHES = 3
    JUMPS = 4


@dataclass(frozen=True)
class FieldDescriptor:
    filter: FieldFilter
    bit_lo: int
    bit_hi: int

    @property
    def mask(self) -> int:
        return ((1 << (self.bit_hi - self.bit_lo + 1)) - 1) << self.bit_lo


def check_descriptor(d: FieldDescriptor) -> None:
    if d.filter not in FieldFilter.__members__.values():
        raise InvariantViolation(f"descriptor filter {d.filter} unknown")
    if not 0 <= d.bit_lo <= d.bit_hi <= 31:
        raise InvariantViolation(f"descriptor range {d.bit_lo}..{d.bit_hi} must satisfy 0 <= lo <= hi <= 31")
    if d.filter != FieldFilter.ALL and d.bit_lo < 7:
        raise InvariantViolation("class-filtered descriptor must not cover opcode bits 0-6")


class EncryptionMap:
    """Per-instruction 'encrypted' flags, packed LSB-first."""

    __slots__ = ("_bits",)

    def __init__(self, bits: Sequence[int | bool]) -> None:
        self._bits = tuple(1 if b else 0 for b in bits)

    def __len__(self) -> int:
        return len(self._bits)

    def __getitem__(self, k: int) -> int:
        return self._bits[k]

    def __iter__(self):
        return iter(self._bits)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, EncryptionMap) and self._bits == other._bits

    def __repr__(self) -> str:
        return f"EncryptionMap({len(self._bits)} bits, {sum(self._bits)} set)"

    def pack(self) -> bytes:
        out = bytearray((len(self._bits) + 7) // 8)
        for k, b in enumerate(self._bits):
            if b:
                out[k >> 3] |= 1 << (k & 7)
        return bytes(out)

    @classmethod
    def unpack(cls, data: bytes, count: int) -> "EncryptionMap":
        if len(data) != (count + 7) // 8:
            raise InvariantViolation(f"map of {len(data)} bytes cannot hold exactly {count} bits")
        bits = [(data[k >> 3] >> (k & 7)) & 1 for k in range(count)]
        if count % 8 and data[-1] >> (count % 8):
            raise InvariantViolation("encryption map pad bits must be zero")
        return cls(bits)


@dataclass(frozen=True)
class PackageHeader:
    mode: Mode
    isa: Isa
    flags: int
    device_id: int
    code_length: int
    instruction_count: int
    map_length: int
    field_count: int
    magic: bytes = MAGIC
    version: int = VERSION
    reserved: bytes = b"\x00\x00\x00"

    def pack(self) -> bytes:
        return struct.pack(
            _HEADER_FMT, self.magic, self.version, self.mode, self.isa, self.flags,
            self.device_id, self.code_length, self.instruction_count, self.map_length,
            self.field_count, self.reserved,
        )


def check_header(h: PackageHeader) -> None:
    if h.magic != MAGIC:
        raise BadMagic(f"bad magic {h.magic!r}")
    if h.version != VERSION:
        raise UnsupportedVersion(f"unsupported package version {h.version}")
    if h.mode not in Mode.__members__.values():
        raise InvariantViolation(f"unknown mode {h.mode}")
    if h.isa not in Isa.__members__.values():
        raise InvariantViolation(f"unknown isa {h.isa}")
    if h.flags & ~FLAG_COMPRESSED:
        raise InvariantViolation(f"undefined flag bits set: {h.flags:#04x}")
    if h.reserved != b"\x00\x00\x00":
        raise InvariantViolation("reserved bytes must be zero")
    if not 0 <= h.device_id < 1 << 64:
        raise InvariantViolation("device_id must fit in 64 bits")
    for name in ("code_length", "instruction_count", "map_length"):
        if not 0 <= getattr(h, name) < 1 << 32:
            raise InvariantViolation(f"{name} must fit in 32 bits")
    if h.mode == Mode.FULL and (h.map_length or h.field_count):
        raise InvariantViolation("full mode requires map_length = 0 and field_count = 0")
    if h.mode == Mode.PER_INSTRUCTION and h.field_count:
        raise InvariantViolation("per-instruction mode requires field_count = 0")
    if h.mode == Mode.FIELD_LEVEL and not 1 <= h.field_count <= 255:
        raise InvariantViolation("field-level mode requires 1 <= field_count <= 255")
    if h.mode != Mode.FULL and h.map_length != (h.instruction_count + 7) // 8:
        raise InvariantViolation(
            f"map_length {h.map_length} inconsistent with instruction_count {h.instruction_count}"
        )
    if not h.flags & FLAG_COMPRESSED and h.code_length != 4 * h.instruction_count:
        raise InvariantViolation("without compressed parcels code_length must equal 4 * instruction_count")


@dataclass(frozen=True)
class SealedPackage:
    header: PackageHeader
    descriptors: tuple[FieldDescriptor, ...] = ()
    map: EncryptionMap | None = None
    ciphertext: bytes = b""
    encrypted_signature: bytes = field(default=bytes(SIGNATURE_SIZE), repr=False)

    @property
    def size(self) -> int:
        h = self.header
        return HEADER_SIZE + DESCRIPTOR_SIZE * h.field_count + h.map_length + h.code_length + SIGNATURE_SIZE


def check_package(p: SealedPackage) -> None:
    h = p.header
    check_header(h)
    if len(p.descriptors) != h.field_count:
        raise InvariantViolation(f"{len(p.descriptors)} descriptors but field_count {h.field_count}")
    for d in p.descriptors:
        check_descriptor(d)
    if h.mode == Mode.FULL:
        if p.map is not None:
            raise InvariantViolation("full mode carries no encryption map")
    elif p.map is None or len(p.map) != h.instruction_count:
        raise InvariantViolation("encryption map must hold one bit per instruction")
    if len(p.ciphertext) != h.code_length:
        raise InvariantViolation(f"ciphertext is {len(p.ciphertext)} bytes, header says {h.code_length}")
    if len(p.encrypted_signature) != SIGNATURE_SIZE:
        raise InvariantViolation("encrypted signature must be 32 bytes")


def metadata_bytes(p: SealedPackage) -> bytes:
    """Serialized header, descriptors and map: everything ahead of the ciphertext."""
    out = bytearray(p.header.pack())
    for d in p.descriptors:
        out += bytes((d.filter, d.bit_lo, d.bit_hi))
    if p.map is not None:
        out += p.map.pack()
    return bytes(out)


def serialize(p: SealedPackage) -> bytes:
    check_package(p)
    return metadata_bytes(p) + bytes(p.ciphertext) + bytes(p.encrypted_signature)


def parse(data: bytes) -> SealedPackage:
    data = bytes(data)
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagic("not a sealed package (bad magic)")
    if len(data) < HEADER_SIZE:
        raise Truncated(f"package header needs {HEADER_SIZE} bytes, got {len(data)}")
    fields = struct.unpack_from(_HEADER_FMT, data)
    magic, version, mode, isa, flags, device_id, code_length, count, map_length, field_count, reserved = fields
    if version != VERSION:
        raise UnsupportedVersion(f"unsupported package version {version}")
    if mode not in Mode.__members__.values():
        raise InvariantViolation(f"unknown mode {mode}")
    if isa not in Isa.__members__.values():
        raise InvariantViolation(f"unknown isa {isa}")
    header = PackageHeader(
        mode=Mode(mode), isa=Isa(isa), flags=flags, device_id=device_id, code_length=code_length,
        instruction_count=count, map_length=map_length, field_count=field_count,
        magic=magic, version=version, reserved=reserved,
    )
    check_header(header)

    expected = HEADER_SIZE + DESCRIPTOR_SIZE * field_count + map_length + code_length + SIGNATURE_SIZE
    if len(data) < expected:
        raise Truncated(f"package needs {expected} bytes, got {len(data)}")
    if len(data) > expected:
        raise InvariantViolation(f"{len(data) - expected} trailing bytes after package")

    pos = HEADER_SIZE
    descriptors = []
    for _ in range(field_count):
        f, lo, hi = data[pos:pos + DESCRIPTOR_SIZE]
        if f not in FieldFilter.__members__.values():
            raise InvariantViolation(f"descriptor filter {f} unknown")
        d = FieldDescriptor(FieldFilter(f), lo, hi)
        check_descriptor(d)
        descriptors.append(d)
        pos += DESCRIPTOR_SIZE
    emap = None
    if header.mode != Mode.FULL:
        emap = EncryptionMap.unpack(data[pos:pos + map_length], count)
    pos += map_length
    ciphertext = data[pos:pos + code_length]
    pos += code_length
    return SealedPackage(header, tuple(descriptors), emap, ciphertext, data[pos:pos + SIGNATURE_SIZE])


def overhead_bytes(mode: Mode, instruction_count: int, field_count: int = 0) -> int:
    """Closed-form package size minus code size."""
    if mode == Mode.FULL:
        return HEADER_SIZE + SIGNATURE_SIZE
    return HEADER_SIZE + SIGNATURE_SIZE + (instruction_count + 7) // 8 + DESCRIPTOR_SIZE * field_count
