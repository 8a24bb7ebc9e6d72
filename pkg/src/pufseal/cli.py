"""``pufseal`` command-line entry point.

Exit codes: 0 ok, 1 usage, 2 parse/format, 3 integrity rejection, 4 I/O, 5 network.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import analysis, distribution, hde, puf
from .errors import (
    DecodeError,
    DeviceError,
    DistributionError,
    EmptyInput,
    FormatError,
    MapExhausted,
    PolicyError,
)
from .image import extract_code
from .keys import PufBasedKey
from .package import Isa, parse, serialize
from .sealer import load_policy, seal

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FORMAT = 2
EXIT_REJECTED = 3
EXIT_IO = 4
EXIT_NETWORK = 5


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit with status 2
        raise UsageError(f"{self.prog}: {message}")


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 1 << 64:
        raise ValueError(f"{text} does not fit in 64 bits")
    return value


def _isa(text: str) -> Isa:
    try:
        return {"rv32": Isa.RV32, "rv64": Isa.RV64}[text.lower()]
    except KeyError:
        raise argparse.ArgumentTypeError("isa must be rv32 or rv64") from None


def _out(lines: Sequence[str]) -> None:
    sys.stdout.write("".join(line + "\n" for line in lines))


def _device(args: argparse.Namespace):
    return puf.load_device(args.model), puf.load_challenges(args.challenges)


def _context(args: argparse.Namespace) -> bytes:
    return args.context.encode("utf-8")


def _read_code(args: argparse.Namespace) -> tuple[bytes, Isa]:
    data = Path(args.input).read_bytes()
    return extract_code(data, "elf" if args.elf else "flat", args.isa)


# --- subcommands ----------------------------------------------------------

def cmd_device_new(args: argparse.Namespace) -> int:
    puf.save_device(puf.synthesize_device(args.seed), args.out)
    return EXIT_OK


def cmd_device_challenges(args: argparse.Namespace) -> int:
    puf.save_challenges(puf.random_challenge_set(args.seed), args.out)
    return EXIT_OK


def cmd_device_key(args: argparse.Namespace) -> int:
    model, challenges = _device(args)
    _out([hde.device_key(model, challenges, _context(args)).hex()])
    return EXIT_OK


def cmd_seal(args: argparse.Namespace) -> int:
    key = PufBasedKey.from_hex(args.key)
    policy = load_policy(args.policy)
    code, isa = _read_code(args)
    pkg = seal(code, key, policy, isa, args.device_id)
    Path(args.out).write_bytes(serialize(pkg))
    return EXIT_OK


def cmd_unseal(args: argparse.Namespace) -> int:
    data = Path(args.input).read_bytes()
    model, challenges = _device(args)
    outcome = hde.unseal(data, model, challenges, _context(args))
    if not outcome.accepted:
        print(f"rejected: {outcome.reason.value}", file=sys.stderr)
        return EXIT_REJECTED
    Path(args.out).write_bytes(outcome.image.code)
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    store = distribution.PackageStore(Path(args.store))
    if not store.root.is_dir():
        raise FileNotFoundError(f"store directory {args.store} does not exist")
    try:
        distribution.serve(args.addr, store)
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def cmd_fetch(args: argparse.Namespace) -> int:
    data = distribution.fetch(args.addr, args.device_id, args.name)
    Path(args.out).write_bytes(data)
    return EXIT_OK


def cmd_entropy(args: argparse.Namespace) -> int:
    data = Path(args.input).read_bytes()
    _out([f"bytes={len(data)}", f"entropy={analysis.entropy(data):.6f}"])
    return EXIT_OK


def cmd_overhead(args: argparse.Namespace) -> int:
    code, _ = _read_code(args)
    pkg = parse(Path(args.package).read_bytes())
    _out(analysis.overhead_report(code, pkg).lines())
    return EXIT_OK


def cmd_tamper(args: argparse.Namespace) -> int:
    data = Path(args.input).read_bytes()
    model, challenges = _device(args)
    context = _context(args)
    if not hde.unseal(data, model, challenges, context).accepted:
        print("tamper sweep needs a package the reference device accepts", file=sys.stderr)
        return EXIT_REJECTED
    report = analysis.tamper_sweep(data, args.trials, args.seed, model, challenges, context)
    _out(report.lines())
    return EXIT_OK


def cmd_throughput(args: argparse.Namespace) -> int:
    code, isa = _read_code(args)
    model, challenges = _device(args)
    key = hde.device_key(model, challenges, _context(args))
    policy = load_policy(args.policy)
    blob = serialize(seal(code, key, policy, isa))
    seal_rate = analysis.throughput(lambda: seal(code, key, policy, isa), len(code))
    unseal_rate = analysis.throughput(lambda: hde.validate(blob, key), len(code))
    _out([f"bytes={len(code)}", f"seal_mib_s={seal_rate:.3f}", f"unseal_mib_s={unseal_rate:.3f}"])
    return EXIT_OK


# --- parser ---------------------------------------------------------------

def _add_device_files(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", required=True, help="device model file (.erdv)")
    p.add_argument("--challenges", required=True, help="challenge-set file, 32 lines of 8 bits")
    p.add_argument("--context", default="", help="key-derivation context string")


def _add_code_input(p: argparse.ArgumentParser) -> None:
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--elf", action="store_true", help="input is an ELF file; seal its .text")
    p.add_argument("--isa", type=_isa, default=Isa.RV32, help="rv32 or rv64 (flat input only)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pufseal", description="Seal RISC-V code to a simulated PUF device.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    device = sub.add_parser("device", help="provision simulated devices")
    dsub = device.add_subparsers(dest="device_command", required=True, parser_class=_Parser)
    p = dsub.add_parser("new", help="write a device model file")
    p.add_argument("--seed", type=_u64, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_device_new)
    p = dsub.add_parser("challenges", help="write a random challenge-set file")
    p.add_argument("--seed", type=_u64, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_device_challenges)
    p = dsub.add_parser("key", help="print the device's 256-bit PUF-based key")
    _add_device_files(p)
    p.set_defaults(func=cmd_device_key)

    p = sub.add_parser("seal", help="encrypt and sign a code image for one device")
    _add_code_input(p)
    p.add_argument("--key", required=True, help="64 hex characters")
    p.add_argument("--policy", required=True)
    p.add_argument("--device-id", type=_u64, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_seal)

    p = sub.add_parser("unseal", help="decrypt and validate a package on a device")
    p.add_argument("--in", dest="input", required=True)
    _add_device_files(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_unseal)

    p = sub.add_parser("serve", help="serve a package store directory")
    p.add_argument("--addr", required=True, help="host:port")
    p.add_argument("--store", required=True)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("fetch", help="fetch a package from a server")
    p.add_argument("--addr", required=True, help="host:port")
    p.add_argument("--device-id", type=_u64, required=True)
    p.add_argument("--name", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fetch)

    analyze = sub.add_parser("analyze", help="measurements")
    asub = analyze.add_subparsers(dest="analyze_command", required=True, parser_class=_Parser)
    p = asub.add_parser("entropy")
    p.add_argument("--in", dest="input", required=True)
    p.set_defaults(func=cmd_entropy)
    p = asub.add_parser("overhead")
    _add_code_input(p)
    p.add_argument("--package", required=True)
    p.set_defaults(func=cmd_overhead)
    p = asub.add_parser("tamper")
    p.add_argument("--in", dest="input", required=True)
    _add_device_files(p)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--seed", type=_u64, default=0)
    p.set_defaults(func=cmd_tamper)
    p = asub.add_parser("throughput")
    _add_code_input(p)
    _add_device_files(p)
    p.add_argument("--policy", required=True)
    p.set_defaults(func=cmd_throughput)
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (UsageError, PolicyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, DecodeError, DeviceError, EmptyInput, MapExhausted) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except DistributionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NETWORK
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
