"""Software-side sealing: select, sign, encrypt, package.

The code keystream is positional: the byte at code offset ``j`` is only ever
XORed with keystream byte ``j``, whatever the policy.  A parcel's XOR mask
decides which of its bits take part:

* full / per-instruction: every bit of a selected parcel;
* field-level, 32-bit parcel: bits of the ``all`` descriptors, plus those of
  descriptors whose class filter matches the parcel's plaintext class;
* field-level, 16-bit parcel: the operand bits 2..12, plus whichever of the
  two length bits the ``all`` descriptors cover.  Bits 0-1 and 13-15 hold the
  compressed opcode and stay readable unless a descriptor says otherwise.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import IndexOutOfRange, PolicyError, PolicyViolation
from .keys import (
    KeystreamDomain,
    PufBasedKey,
    bind_metadata,
    keystream_bytes,
    xor_bytes,
)
from .package import (
    FLAG_COMPRESSED,
    EncryptionMap,
    FieldDescriptor,
    FieldFilter,
    Isa,
    Mode,
    PackageHeader,
    SealedPackage,
    metadata_bytes,
)
from .riscv import InstrClass, InstrParcel, classify, iterate_instructions

COMPRESSED_OPERAND_MASK = 0x1FFC
LENGTH_BITS = 0x3

FILTER_CLASS = {
    FieldFilter.LOADS: InstrClass.LOAD,
    FieldFilter.STORES: InstrClass.STORE,
    FieldFilter.BRANCHES: InstrClass.BRANCH,
    FieldFilter.JUMPS: InstrClass.JUMP,
}


# --- policy ---------------------------------------------------------------

@dataclass(frozen=True)
class SelectAll:
    pass


@dataclass(frozen=True)
class SelectRandom:
    fraction: float
    seed: int = 0


@dataclass(frozen=True)
class SelectClasses:
    classes: frozenset[InstrClass]


@dataclass(frozen=True)
class SelectExplicit:
    indices: tuple[int, ...]


Selection = Union[SelectAll, SelectRandom, SelectClasses, SelectExplicit]


@dataclass(frozen=True)
class EncryptionPolicy:
    mode: Mode
    selection: Selection = field(default_factory=SelectAll)
    descriptors: tuple[FieldDescriptor, ...] = ()

    def validate(self) -> None:
        if self.mode == Mode.FULL:
            if not isinstance(self.selection, SelectAll) or self.descriptors:
                raise PolicyViolation("full mode encrypts everything: no selection or field descriptors allowed")
        elif self.mode == Mode.PER_INSTRUCTION:
            if self.descriptors:
                raise PolicyViolation("field descriptors require field-level mode")
        elif self.mode == Mode.FIELD_LEVEL:
            if not self.descriptors:
                raise PolicyViolation("field-level mode needs at least one field descriptor")
            if len(self.descriptors) > 255:
                raise PolicyViolation("at most 255 field descriptors")
            for d in self.descriptors:
                if not 0 <= d.bit_lo <= d.bit_hi <= 31:
                    raise PolicyViolation(f"field range {d.bit_lo}..{d.bit_hi} outside 0..31")
                if d.filter != FieldFilter.ALL and d.bit_lo < 7:
                    raise PolicyViolation(
                        f"{d.filter.name.lower()} field {d.bit_lo}..{d.bit_hi} covers opcode bits 0-6"
                    )
        if isinstance(self.selection, SelectRandom) and not 0.0 <= self.selection.fraction <= 1.0:
            raise PolicyViolation(f"random fraction {self.selection.fraction} outside [0, 1]")


FULL = EncryptionPolicy(Mode.FULL)


_CLASS_NAMES = {c.value: c for c in InstrClass}
_FILTER_NAMES = {"all": FieldFilter.ALL, "loads": FieldFilter.LOADS, "stores": FieldFilter.STORES,
                 "branches": FieldFilter.BRANCHES, "jumps": FieldFilter.JUMPS}
_MODE_NAMES = {"full": Mode.FULL, "partial": Mode.PER_INSTRUCTION, "fields": Mode.FIELD_LEVEL}


def parse_policy(text: str) -> EncryptionPolicy:
    """Parse the line-oriented policy format.  ``#`` starts a comment."""
    mode = None
    fraction = seed = classes = indices = None
    descriptors = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        word, _, rest = line.partition(" ")
        rest = rest.strip()
        where = f"policy line {lineno}"
        try:
            if word == "mode":
                if rest not in _MODE_NAMES:
                    raise PolicyError(f"{where}: mode must be full, partial or fields")
                mode = _MODE_NAMES[rest]
            elif word == "fraction":
                fraction = float(rest)
            elif word == "seed":
                seed = int(rest, 0)
                if not 0 <= seed < 1 << 64:
                    raise PolicyError(f"{where}: seed must fit in 64 bits")
            elif word == "classes":
                names = [n.strip() for n in rest.split(",") if n.strip()]
                unknown = [n for n in names if n not in _CLASS_NAMES]
                if unknown or not names:
                    raise PolicyError(f"{where}: unknown instruction classes {unknown or rest!r}")
                classes = frozenset(_CLASS_NAMES[n] for n in names)
            elif word == "indices":
                indices = tuple(int(n) for n in rest.split(",") if n.strip())
            elif word == "field":
                which, _, span = rest.partition(" ")
                if which not in _FILTER_NAMES:
                    raise PolicyError(f"{where}: field filter must be one of {', '.join(_FILTER_NAMES)}")
                lo, sep, hi = span.strip().partition("..")
                if not sep:
                    raise PolicyError(f"{where}: field range must look like <lo>..<hi>")
                descriptors.append(FieldDescriptor(_FILTER_NAMES[which], int(lo), int(hi)))
            else:
                raise PolicyError(f"{where}: unknown directive {word!r}")
        except ValueError as exc:
            raise PolicyError(f"{where}: {exc}") from None

    if mode is None:
        raise PolicyError("policy has no mode directive")
    chosen = [s for s in (fraction, classes, indices) if s is not None]
    if len(chosen) > 1:
        raise PolicyViolation("choose one of fraction, classes or indices")
    if seed is not None and fraction is None:
        raise PolicyViolation("seed only applies to a random fraction selection")
    if fraction is not None:
        selection: Selection = SelectRandom(fraction, seed or 0)
    elif classes is not None:
        selection = SelectClasses(classes)
    elif indices is not None:
        selection = SelectExplicit(indices)
    else:
        selection = SelectAll()
    policy = EncryptionPolicy(mode, selection, tuple(descriptors))
    policy.validate()
    return policy


def load_policy(path: str | Path) -> EncryptionPolicy:
    return parse_policy(Path(path).read_text())


# --- selection and masks --------------------------------------------------

def select_instructions(stream: Sequence[InstrParcel], policy: EncryptionPolicy) -> list[int]:
    n = len(stream)
    sel = policy.selection
    if isinstance(sel, SelectAll):
        return [1] * n
    if isinstance(sel, SelectRandom):
        if not 0.0 <= sel.fraction <= 1.0:
            raise PolicyViolation(f"random fraction {sel.fraction} outside [0, 1]")
        draws = np.random.default_rng(sel.seed).random(n)
        return [int(x) for x in draws < sel.fraction]
    if isinstance(sel, SelectClasses):
        return [int(classify(p) in sel.classes) for p in stream]
    if isinstance(sel, SelectExplicit):
        bad = [i for i in sel.indices if not 0 <= i < n]
        if bad:
            raise IndexOutOfRange(f"instruction indices {bad} outside 0..{n - 1}")
        bits = [0] * n
        for i in sel.indices:
            bits[i] = 1
        return bits
    raise TypeError(f"unknown selection {sel!r}")


def field_masks(descriptors: Iterable[FieldDescriptor]) -> tuple[int, dict[InstrClass, int]]:
    """Split descriptors into the unconditional mask and per-class masks."""
    always = 0
    by_class: dict[InstrClass, int] = {}
    for d in descriptors:
        if d.filter == FieldFilter.ALL:
            always |= d.mask
        else:
            if d.bit_lo < 7:
                raise PolicyViolation("class-filtered descriptor covers opcode bits 0-6")
            cls = FILTER_CLASS[d.filter]
            by_class[cls] = by_class.get(cls, 0) | d.mask
    return always, by_class


def compressed_field_mask(always: int) -> int:
    return COMPRESSED_OPERAND_MASK | (always & LENGTH_BITS)


def parcel_mask(parcel: InstrParcel, mode: Mode, always: int = 0, by_class: dict | None = None) -> int:
    """XOR mask over a selected parcel's encoding bits."""
    if mode != Mode.FIELD_LEVEL:
        return (1 << (8 * parcel.length)) - 1
    if parcel.length == 2:
        return compressed_field_mask(always)
    return always | (by_class or {}).get(classify(parcel), 0)


# --- sign / encrypt / seal ------------------------------------------------

def sign_program(code: bytes) -> bytes:
    return hashlib.sha256(bytes(code)).digest()


def encrypt_code(
    code: bytes,
    stream: Sequence[InstrParcel],
    selected: Sequence[int],
    policy: EncryptionPolicy,
    key: PufBasedKey,
) -> tuple[bytes, EncryptionMap | None]:
    code = bytes(code)
    if len(selected) != len(stream):
        raise ValueError(f"{len(selected)} selection bits for {len(stream)} instructions")
    ks = np.frombuffer(keystream_bytes(key, KeystreamDomain.CODE, 0, len(code)), dtype=np.uint8)
    plain = np.frombuffer(code, dtype=np.uint8)
    if policy.mode == Mode.FULL:
        return (plain ^ ks).tobytes(), None

    always, by_class = field_masks(policy.descriptors) if policy.mode == Mode.FIELD_LEVEL else (0, {})
    mask = np.zeros(len(code), dtype=np.uint8)
    for parcel, sel in zip(stream, selected):
        if sel:
            m = parcel_mask(parcel, policy.mode, always, by_class)
            mask[parcel.offset:parcel.offset + parcel.length] = np.frombuffer(
                m.to_bytes(parcel.length, "little"), dtype=np.uint8
            )
    return (plain ^ (ks & mask)).tobytes(), EncryptionMap(selected)


def encrypt_signature(signature: bytes, key: PufBasedKey, metadata: bytes) -> bytes:
    pad = xor_bytes(keystream_bytes(key, KeystreamDomain.SIGNATURE, 0, 32), bind_metadata(key, metadata))
    return xor_bytes(signature, pad)


# decryption is the same XOR
decrypt_signature = encrypt_signature


def seal(
    code: bytes,
    key: PufBasedKey,
    policy: EncryptionPolicy,
    isa: Isa = Isa.RV32,
    device_id: int = 0,
) -> SealedPackage:
    code = bytes(code)
    policy.validate()
    stream = iterate_instructions(code)
    signature = sign_program(code)
    selected = select_instructions(stream, policy)
    ciphertext, emap = encrypt_code(code, stream, selected, policy, key)

    n = len(stream)
    compressed = any(p.length == 2 for p in stream)
    header = PackageHeader(
        mode=policy.mode,
        isa=Isa(isa),
        flags=FLAG_COMPRESSED if compressed else 0,
        device_id=device_id,
        code_length=len(code),
        instruction_count=n,
        map_length=0 if policy.mode == Mode.FULL else (n + 7) // 8,
        field_count=len(policy.descriptors),
    )
    draft = SealedPackage(header, tuple(policy.descriptors), emap, ciphertext)
    return SealedPackage(
        header, draft.descriptors, emap, ciphertext,
        encrypt_signature(signature, key, metadata_bytes(draft)),
    )
