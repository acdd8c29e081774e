"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error (including failed
fixture validation), 2 no exact solution found.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, fields

import numpy as np

from .core import Modulation, PulseSequence
from .designer import DesignSpec, Family, NoSolutionError, build_sequence, design
from .profile import sweep as profile_sweep
from .profile import widths
from .robustness import ErrorKind, sweep2d
from .tables import lookup, validate_all

EXIT_OK, EXIT_USAGE, EXIT_NO_SOLUTION = 0, 1, 2

logger = logging.getLogger("cp3")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunConfig:
    """Validated command-line options; unknown config-file keys are rejected."""

    command: str
    family: str | None = None
    modulation: str = "strength"
    pulses: int | None = None
    pb_class: str | None = None
    target_prob: float = 1.0
    suppress_leakage: int = 0
    seed: int | None = 0
    starts: int | None = None
    params: str | None = None
    table: str | None = None
    eps: str = "-1.2:1.2:2001"
    target: str = "f"
    error: str | None = None
    range: str | None = None
    dt: float = 1e-3
    detuning: float = 0.0
    all: bool = False
    polish: bool = False
    out: str | None = None
    contours: str | None = None

    @classmethod
    def from_namespace(cls, ns: argparse.Namespace) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        values = {k: v for k, v in vars(ns).items() if k in known and v is not None}
        if getattr(ns, "config", None):
            with open(ns.config) as fh:
                loaded = json.load(fh)
            unknown = set(loaded) - known
            if unknown:
                raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
            values = {**loaded, **values}
        return cls(**values)


def parse_range(text: str, what: str = "range") -> tuple[float, float, int]:
    """``"a:b:n"`` -> ``(a, b, n)``."""
    try:
        a, b, n = text.split(":")
        lo, hi, count = float(a), float(b), int(n)
    except ValueError:
        raise UsageError(f"{what} must look like start:stop:points, got {text!r}") from None
    if not hi > lo or count < 2:
        raise UsageError(f"{what} needs start < stop and at least two points")
    return lo, hi, count


def _write(text: str, path: str | None):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _n_jobs() -> int:
    # all cores, capped by CP3_THREADS inside the solvers
    return -1


def _load_sequence(cfg: RunConfig) -> PulseSequence:
    if bool(cfg.params) == bool(cfg.table):
        raise UsageError("give exactly one of --params FILE or --table LABEL")
    if cfg.table:
        try:
            return lookup(cfg.table).sequence
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
    with open(cfg.params) as fh:
        data = json.load(fh)
    try:
        params = np.asarray(data["params_pi"], dtype=float) * np.pi
        if "family" in data:
            spec = DesignSpec(Family(data["family"]), Modulation(data["modulation"]), int(data["pulses"]),
                              data.get("pb_class"), float(data.get("target_prob", 1.0)),
                              int(data.get("suppress_leakage", 0)))
            return build_sequence(params, spec)
        mod = Modulation(data.get("modulation", "strength"))
        if mod is Modulation.STRENGTH:
            return PulseSequence.strength(params)
        return PulseSequence.phase(params, theta=float(data.get("theta_pi", 0.25)) * np.pi)
    except (KeyError, ValueError) as exc:
        raise UsageError(f"cannot read parameters from {cfg.params}: {exc}") from None


def cmd_design(cfg: RunConfig) -> int:
    if cfg.family is None or cfg.pulses is None:
        raise UsageError("design needs --family and --pulses")
    try:
        spec = DesignSpec(Family(cfg.family), Modulation(cfg.modulation), int(cfg.pulses), cfg.pb_class,
                          float(cfg.target_prob), int(cfg.suppress_leakage))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    try:
        result = design(spec, n_starts=cfg.starts, random_state=cfg.seed, n_jobs=_n_jobs())
    except NoSolutionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_SOLUTION
    _write(json.dumps(result.to_dict(), indent=2) + "\n", cfg.out)
    return EXIT_OK


def cmd_profile(cfg: RunConfig) -> int:
    seq = _load_sequence(cfg)
    lo, hi, n = parse_range(cfg.eps, "--eps")
    target = {"f": "transfer", "e": "leakage"}.get(cfg.target)
    if target is None:
        raise UsageError("--target must be f or e")
    curve = profile_sweep(seq, lo, hi, n, target, detuning=cfg.detuning)
    _write(curve.to_csv(), cfg.out)
    return EXIT_OK


def cmd_widths(cfg: RunConfig) -> int:
    report = widths(_load_sequence(cfg))
    _write(json.dumps(report.to_dict(), indent=2) + "\n", cfg.out)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    seq = _load_sequence(cfg)
    if cfg.error is None or cfg.range is None:
        raise UsageError("sweep needs --error and --range")
    lo, hi, n = parse_range(cfg.range, "--range")
    elo, ehi, en = parse_range(cfg.eps if cfg.eps != RunConfig.eps else "-1:1:201", "--eps")
    if cfg.error == "phase":
        if seq.modulation is Modulation.STRENGTH:
            kind = ErrorKind.PHASE_DIFFERENCE
        elif seq.modulation is Modulation.PHASE:
            kind = ErrorKind.PHASE_PAIR
        else:
            raise UsageError("phase errors need a strength- or phase-modulated sequence")
    elif cfg.error in ("detuning", "waveform"):
        kind = ErrorKind(cfg.error)
    else:
        raise UsageError("--error must be phase, detuning or waveform")
    try:
        grid = sweep2d(seq, kind, (elo, ehi), (lo, hi), (en, n), dt=cfg.dt)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _write(grid.to_csv(), cfg.out)
    if cfg.contours:
        with open(cfg.contours, "w") as fh:
            json.dump({str(k): v for k, v in grid.contours().items()}, fh, indent=2)
    return EXIT_OK


def cmd_validate(cfg: RunConfig) -> int:
    if cfg.all == bool(cfg.table):
        raise UsageError("give exactly one of --all or --table LABEL")
    if cfg.table:
        try:
            lookup(cfg.table)
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
    reports = validate_all(with_polish=cfg.polish, only=[cfg.table] if cfg.table else None)
    counts = {s: sum(r.status == s for r in reports) for s in ("pass", "filter", "quarantined", "fail")}
    summary = {"rows": len(reports), **counts, "unquarantined_failures": counts["fail"]}
    payload = {"summary": summary, "rows": [r.to_dict() for r in reports]}
    _write(json.dumps(payload, indent=2) + "\n", cfg.out)
    print(" ".join(f"{k}={v}" for k, v in summary.items()), file=sys.stderr)
    return EXIT_OK if counts["fail"] == 0 else EXIT_USAGE


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cp3", description="Composite 2 pi pulse design for Lambda systems.")
    parser.add_argument("--config", help="JSON file with option values")
    parser.add_argument("--seed", type=int, help="seed for every random multi-start (default 0)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("design", help="solve design equations")
    d.add_argument("--family", choices=[f.value for f in Family])
    d.add_argument("--modulation", choices=[m.value for m in Modulation])
    d.add_argument("--pulses", type=int)
    d.add_argument("--class", dest="pb_class", choices=list("abcde"))
    d.add_argument("--target-prob", type=float)
    d.add_argument("--suppress-leakage", type=int, metavar="L")
    d.add_argument("--starts", type=int, help="number of random starts")
    d.add_argument("--out")

    for name, helptext in (("profile", "sample a profile as CSV"), ("widths", "width metrics as JSON"),
                           ("sweep", "2-D robustness grid as CSV")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--params", help="JSON with params_pi (e.g. design output)")
        p.add_argument("--table", help="reference label such as S-NB7")
        p.add_argument("--out")
        if name in ("profile", "sweep"):
            p.add_argument("--eps", help="start:stop:points")
            p.add_argument("--detuning", type=float, help="absolute detuning (profile only)")
        if name == "profile":
            p.add_argument("--target", choices=["f", "e"])
        if name == "sweep":
            p.add_argument("--error", choices=["phase", "detuning", "waveform"])
            p.add_argument("--range", help="start:stop:points of the error axis")
            p.add_argument("--dt", type=float)
            p.add_argument("--contours", help="write contour points as JSON")

    v = sub.add_parser("validate", help="validate the reference tables")
    v.add_argument("--all", action="store_true")
    v.add_argument("--table")
    v.add_argument("--polish", action="store_true", help="also report distance to the nearest root")
    v.add_argument("--out")
    return parser


COMMANDS = {"design": cmd_design, "profile": cmd_profile, "widths": cmd_widths,
            "sweep": cmd_sweep, "validate": cmd_validate}


_RANGE_FLAGS = ("--eps", "--range")


def _attach_ranges(argv: list[str]) -> list[str]:
    """Glue ``--eps -1:1:3`` into ``--eps=-1:1:3`` so argparse does not
    mistake a negative range for an option."""
    out, it = [], iter(argv)
    for tok in it:
        if tok in _RANGE_FLAGS:
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        ns = build_parser().parse_args(_attach_ranges(argv))
        logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING)
        cfg = RunConfig.from_namespace(ns)
        return COMMANDS[cfg.command](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
