"""Arbiter-PUF key generator simulation.

Each simulated device owns 32 independent arbiter chains of 8 stages.  A chain
is the standard additive delay model: its response to a challenge ``c`` is the
sign of ``w . phi(c)`` where ``phi_k = prod_{j>=k} (1 - 2 c_j)`` for the 8 stage
terms and a constant 1 for the arbiter bias term.

The per-device PUF key is the concatenation of the 32 chain responses, each
chain answering its own 8-bit challenge.  Nothing here stores the key; it is
recomputed from the device model whenever it is needed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DeviceError

N_CHAINS = 32
N_STAGES = 8
N_WEIGHTS = N_STAGES + 1

DEVICE_MAGIC = b"ERDV"
DEVICE_VERSION = 1
_DEVICE_FMT = "<4sBQ"

U64_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class Challenge:
    """Eight challenge bits, ``bits[k]`` drives stage ``k``."""

    bits: tuple[int, ...]

    def __post_init__(self) -> None:
        bits = tuple(int(b) for b in self.bits)
        if len(bits) != N_STAGES or any(b not in (0, 1) for b in bits):
            raise DeviceError(f"challenge must be {N_STAGES} binary values, got {self.bits!r}")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_int(cls, value: int) -> "Challenge":
        """Bit ``k`` of ``value`` becomes stage bit ``k``."""
        if not 0 <= value < 1 << N_STAGES:
            raise DeviceError(f"challenge value out of range: {value}")
        return cls(tuple((value >> k) & 1 for k in range(N_STAGES)))

    def to_int(self) -> int:
        return sum(b << k for k, b in enumerate(self.bits))


@dataclass(frozen=True)
class PufKey:
    """32 response bits; chain ``i`` supplies ``bits[i]``."""

    bits: tuple[int, ...]

    def __post_init__(self) -> None:
        bits = tuple(int(b) for b in self.bits)
        if len(bits) != N_CHAINS or any(b not in (0, 1) for b in bits):
            raise DeviceError(f"PUF key must be {N_CHAINS} binary values")
        object.__setattr__(self, "bits", bits)

    def to_bytes(self) -> bytes:
        # bit 0 -> LSB of byte 0
        return sum(b << i for i, b in enumerate(self.bits)).to_bytes(4, "little")

    def hamming(self, other: "PufKey") -> int:
        return sum(a != b for a, b in zip(self.bits, other.bits))

    def __repr__(self) -> str:
        # keep raw key material out of logs and tracebacks
        return "PufKey(<32 bits>)"


@dataclass(frozen=True, eq=False)
class DeviceModel:
    device_seed: int
    weights: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if self.weights.shape != (N_CHAINS, N_WEIGHTS):
            raise DeviceError(f"weights must have shape {(N_CHAINS, N_WEIGHTS)}, got {self.weights.shape}")
        self.weights.setflags(write=False)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DeviceModel):
            return NotImplemented
        return self.device_seed == other.device_seed and np.array_equal(self.weights, other.weights)

    def __hash__(self) -> int:
        return hash(self.device_seed)


def synthesize_device(device_seed: int) -> DeviceModel:
    """Draw i.i.d. standard-normal stage weights from a generator seeded by ``device_seed``."""
    if not 0 <= device_seed <= U64_MASK:
        raise DeviceError(f"device seed must fit in 64 bits: {device_seed}")
    rng = np.random.default_rng(device_seed)
    weights = rng.standard_normal((N_CHAINS, N_WEIGHTS))
    return DeviceModel(device_seed, weights)


def features(challenges: np.ndarray) -> np.ndarray:
    """Parity feature transform for an ``(..., 8)`` array of 0/1 challenge bits.

    Returns an ``(..., 9)`` array of +-1 values; the last column is the bias term.
    """
    signs = 1 - 2 * np.asarray(challenges, dtype=np.int64)
    # suffix products: phi_k = prod_{j=k..7} signs_j
    phi = np.cumprod(signs[..., ::-1], axis=-1)[..., ::-1]
    ones = np.ones(phi.shape[:-1] + (1,), dtype=np.int64)
    return np.concatenate([phi, ones], axis=-1)


def _check_chain(chain_index: int) -> None:
    if not 0 <= chain_index < N_CHAINS:
        raise DeviceError(f"chain index out of range: {chain_index}")


def respond(
    model: DeviceModel,
    chain_index: int,
    challenge: Challenge,
    noise: float = 0.0,
    rng: np.random.Generator | None = None,
) -> int:
    """Response bit of one chain.  A zero delay difference answers 0.

    ``noise`` is the probability that the arbiter flips its answer; the
    sealing protocol has no error correction, so leave it at 0 for keys.
    """
    _check_chain(chain_index)
    delta = float(model.weights[chain_index] @ features(np.array(challenge.bits)))
    bit = 1 if delta > 0 else 0
    if noise > 0:
        rng = rng if rng is not None else np.random.default_rng()
        if rng.random() < noise:
            bit ^= 1
    return bit


def respond_many(model: DeviceModel, chain_index: int, challenges: np.ndarray) -> np.ndarray:
    """Vectorised ``respond`` over an ``(N, 8)`` array of challenges."""
    _check_chain(chain_index)
    delta = features(challenges) @ model.weights[chain_index]
    return (delta > 0).astype(np.uint8)


def generate_puf_key(model: DeviceModel, challenge_set: Sequence[Challenge]) -> PufKey:
    if len(challenge_set) != N_CHAINS:
        raise DeviceError(f"challenge set must hold {N_CHAINS} challenges, got {len(challenge_set)}")
    phi = features(np.array([c.bits for c in challenge_set]))
    delta = np.einsum("ij,ij->i", model.weights, phi)
    return PufKey(tuple(int(d > 0) for d in delta))


def random_challenge_set(seed: int) -> list[Challenge]:
    rng = np.random.default_rng(seed)
    return [Challenge(tuple(row)) for row in rng.integers(0, 2, size=(N_CHAINS, N_STAGES))]


# --- files ----------------------------------------------------------------

def dump_device(model: DeviceModel) -> bytes:
    return struct.pack(_DEVICE_FMT, DEVICE_MAGIC, DEVICE_VERSION, model.device_seed)


def parse_device(data: bytes) -> DeviceModel:
    size = struct.calcsize(_DEVICE_FMT)
    if len(data) != size:
        raise DeviceError(f"device file must be {size} bytes, got {len(data)}")
    magic, version, seed = struct.unpack(_DEVICE_FMT, data)
    if magic != DEVICE_MAGIC:
        raise DeviceError("not a device model file (bad magic)")
    if version != DEVICE_VERSION:
        raise DeviceError(f"unsupported device file version {version}")
    return synthesize_device(seed)


def save_device(model: DeviceModel, path: str | Path) -> None:
    Path(path).write_bytes(dump_device(model))


def load_device(path: str | Path) -> DeviceModel:
    return parse_device(Path(path).read_bytes())


def format_challenges(challenge_set: Sequence[Challenge]) -> str:
    # most significant stage (index 7) is the first character
    return "".join("".join(str(b) for b in reversed(c.bits)) + "\n" for c in challenge_set)


def parse_challenges(text: str) -> list[Challenge]:
    lines = text.splitlines()
    if len(lines) != N_CHAINS:
        raise DeviceError(f"challenge file must have {N_CHAINS} lines, got {len(lines)}")
    out = []
    for lineno, line in enumerate(lines, 1):
        if len(line) != N_STAGES or set(line) - {"0", "1"}:
            raise DeviceError(f"challenge file line {lineno}: expected {N_STAGES} characters of 0/1")
        out.append(Challenge(tuple(int(ch) for ch in reversed(line))))
    return out


def save_challenges(challenge_set: Sequence[Challenge], path: str | Path) -> None:
    Path(path).write_text(format_challenges(challenge_set))


def load_challenges(path: str | Path) -> list[Challenge]:
    return parse_challenges(Path(path).read_text())
