"""RISC-V parcel walking, coarse classification and field masks.

Only what sealing needs: instruction boundaries (16-bit compressed vs 32-bit),
a coarse class per parcel, and the encoding-bit masks of the register and
immediate fields of base 32-bit formats.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator

from .errors import FieldAbsent, TruncatedParcel, UnsupportedEncoding, UnsupportedParcel


class InstrClass(enum.Enum):
    LOAD = "load"
    STORE = "store"
    BRANCH = "branch"
    JUMP = "jump"
    ALU = "alu"
    SYSTEM = "system"
    OTHER = "other"
    COMPRESSED = "compressed"


class Field(enum.Enum):
    OPCODE = "opcode"
    RD = "rd"
    RS1 = "rs1"
    RS2 = "rs2"
    IMMEDIATE = "immediate"


@dataclass(frozen=True)
class InstrParcel:
    offset: int
    length: int
    raw: bytes

    @property
    def word(self) -> int:
        return int.from_bytes(self.raw, "little")

    @property
    def compressed(self) -> bool:
        return self.length == 2


def parcel_length(first_byte: int) -> int:
    return 4 if first_byte & 0b11 == 0b11 else 2


def iter_parcels(code: bytes) -> Iterator[InstrParcel]:
    code = bytes(code)
    n = len(code)
    off = 0
    while off < n:
        b0 = code[off]
        if b0 & 0b11111 == 0b11111:
            raise UnsupportedEncoding(f"instruction longer than 32 bits at offset {off:#x}")
        length = parcel_length(b0)
        if off + length > n:
            raise TruncatedParcel(f"image ends inside a {length}-byte parcel at offset {off:#x}")
        yield InstrParcel(off, length, code[off:off + length])
        off += length


def iterate_instructions(code: bytes) -> list[InstrParcel]:
    return list(iter_parcels(code))


_OPCODE_CLASS = {
    0b0000011: InstrClass.LOAD,
    0b0100011: InstrClass.STORE,
    0b1100011: InstrClass.BRANCH,
    0b1101111: InstrClass.JUMP,
    0b1100111: InstrClass.JUMP,
    0b0010011: InstrClass.ALU,
    0b0110011: InstrClass.ALU,
    0b0110111: InstrClass.ALU,
    0b0010111: InstrClass.ALU,
    0b1110011: InstrClass.SYSTEM,
}


def classify_word(word: int) -> InstrClass:
    """Class of a 32-bit encoding from its major opcode."""
    return _OPCODE_CLASS.get(word & 0x7F, InstrClass.OTHER)


def classify(parcel: InstrParcel) -> InstrClass:
    if parcel.length == 2:
        return InstrClass.COMPRESSED
    return classify_word(parcel.word)


def bit_range(lo: int, hi: int) -> int:
    """Mask with bits ``lo..hi`` (inclusive) set."""
    return ((1 << (hi - lo + 1)) - 1) << lo


OPCODE_MASK = bit_range(0, 6)
RD_MASK = bit_range(7, 11)
RS1_MASK = bit_range(15, 19)
RS2_MASK = bit_range(20, 24)

# imm[11:5] | imm[4:0] for S-type; B-type scatters its bits over the same positions
_SPLIT_IMM = bit_range(25, 31) | bit_range(7, 11)

_FORMAT_FIELDS = {
    "R": {Field.RD: RD_MASK, Field.RS1: RS1_MASK, Field.RS2: RS2_MASK},
    "I": {Field.RD: RD_MASK, Field.RS1: RS1_MASK, Field.IMMEDIATE: bit_range(20, 31)},
    "S": {Field.RS1: RS1_MASK, Field.RS2: RS2_MASK, Field.IMMEDIATE: _SPLIT_IMM},
    "B": {Field.RS1: RS1_MASK, Field.RS2: RS2_MASK, Field.IMMEDIATE: _SPLIT_IMM},
    "U": {Field.RD: RD_MASK, Field.IMMEDIATE: bit_range(12, 31)},
    "J": {Field.RD: RD_MASK, Field.IMMEDIATE: bit_range(12, 31)},
}

_OPCODE_FORMAT = {
    0b0110011: "R", 0b0111011: "R", 0b0101111: "R", 0b1010011: "R",
    0b1000011: "R", 0b1000111: "R", 0b1001011: "R", 0b1001111: "R",  # fused multiply-add (rs3 ignored)
    0b0000011: "I", 0b0000111: "I", 0b0001111: "I", 0b0010011: "I",
    0b0011011: "I", 0b1100111: "I", 0b1110011: "I",
    0b0100011: "S", 0b0100111: "S",
    0b1100011: "B",
    0b0110111: "U", 0b0010111: "U",
    0b1101111: "J",
}


def instruction_format(word: int) -> str | None:
    return _OPCODE_FORMAT.get(word & 0x7F)


def field_bits(parcel: InstrParcel, field: Field | str) -> int:
    """Encoding-bit mask of ``field`` in a 32-bit parcel."""
    field = Field(field)
    if parcel.length != 4:
        raise UnsupportedParcel("field addressing is only defined for 32-bit parcels")
    if field is Field.OPCODE:
        return OPCODE_MASK
    fmt = instruction_format(parcel.word)
    if fmt is None:
        raise FieldAbsent(f"unknown format for opcode {parcel.word & 0x7F:#09b}")
    try:
        return _FORMAT_FIELDS[fmt][field]
    except KeyError:
        raise FieldAbsent(f"{fmt}-type instruction has no {field.value} field") from None


def mask_ranges(mask: int) -> list[tuple[int, int]]:
    """Split a bit mask into inclusive ``(lo, hi)`` runs, low bits first."""
    runs = []
    bit = 0
    while mask >> bit:
        if (mask >> bit) & 1:
            lo = bit
            while (mask >> (bit + 1)) & 1:
                bit += 1
            runs.append((lo, bit))
        bit += 1
    return runs
