"""Code-image ingestion: flat binaries, or the ``.text`` section of an ELF file."""

from __future__ import annotations

import struct
from typing import Literal

from .errors import NoTextSection, NotElf, UnsupportedElf
from .package import Isa

ELF_MAGIC = b"\x7fELF"
ELFCLASS32, ELFCLASS64 = 1, 2
ELFDATA2LSB = 1
SHT_NOBITS = 8
SHN_UNDEF = 0
SHN_XINDEX = 0xFFFF

_EHDR = {ELFCLASS32: "<HHIIIIIHHHHHH", ELFCLASS64: "<HHIQQQIHHHHHH"}
_SHDR = {ELFCLASS32: "<IIIIIIIIII", ELFCLASS64: "<IIQQQQIIQQ"}


def _section_headers(data: bytes, elfclass: int) -> tuple[list[tuple], int]:
    ehdr = struct.unpack_from(_EHDR[elfclass], data, 16)
    shoff, shentsize, shnum, shstrndx = ehdr[5], ehdr[10], ehdr[11], ehdr[12]
    fmt = _SHDR[elfclass]
    if shoff == 0:
        raise UnsupportedElf("ELF file has no section header table")
    if shentsize < struct.calcsize(fmt):
        raise UnsupportedElf(f"section header entry size {shentsize} too small")

    def read(i: int) -> tuple:
        pos = shoff + i * shentsize
        if pos + struct.calcsize(fmt) > len(data):
            raise UnsupportedElf(f"section header {i} lies outside the file")
        return struct.unpack_from(fmt, data, pos)

    first = read(0)
    if shnum == 0:  # extended numbering: real count lives in section 0's sh_size
        shnum = first[5]
    if shstrndx == SHN_XINDEX:
        shstrndx = first[6]
    return [read(i) for i in range(shnum)], shstrndx


def _section_bytes(data: bytes, shdr: tuple) -> bytes:
    offset, size = shdr[4], shdr[5]
    if shdr[1] == SHT_NOBITS:
        return b""
    if offset + size > len(data):
        raise UnsupportedElf("section contents lie outside the file")
    return data[offset:offset + size]


def extract_elf_text(data: bytes) -> tuple[bytes, Isa]:
    data = bytes(data)
    if len(data) < 16 or data[:4] != ELF_MAGIC:
        raise NotElf("input is not an ELF file")
    elfclass, encoding = data[4], data[5]
    if encoding != ELFDATA2LSB:
        raise UnsupportedElf("only little-endian ELF files are supported")
    if elfclass not in _EHDR:
        raise UnsupportedElf(f"unknown ELF class {elfclass}")
    if len(data) < 16 + struct.calcsize(_EHDR[elfclass]):
        raise NotElf("ELF header truncated")

    sections, shstrndx = _section_headers(data, elfclass)
    if shstrndx == SHN_UNDEF or shstrndx >= len(sections):
        raise UnsupportedElf("ELF file has no section name string table")
    names = _section_bytes(data, sections[shstrndx])
    for shdr in sections:
        start = shdr[0]
        end = names.find(b"\x00", start)
        if start >= len(names) or end < 0:
            continue
        if names[start:end] == b".text":
            if shdr[1] == SHT_NOBITS:
                raise NoTextSection(".text section has no file contents")
            isa = Isa.RV32 if elfclass == ELFCLASS32 else Isa.RV64
            return _section_bytes(data, shdr), isa
    raise NoTextSection("ELF file has no .text section")


def extract_code(data: bytes, kind: Literal["flat", "elf"], isa: Isa = Isa.RV32) -> tuple[bytes, Isa]:
    """Return ``(code, isa)``; for flat input ``isa`` is passed through."""
    if kind == "flat":
        return bytes(data), Isa(isa)
    if kind == "elf":
        return extract_elf_text(data)
    raise ValueError(f"unknown input kind {kind!r}")
