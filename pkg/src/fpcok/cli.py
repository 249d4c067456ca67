"""Command-line entry point: ``fpcok <subcommand> [flags]``.

Each subcommand accepts ``--config FILE`` (a JSON object whose keys mirror
the flag names); explicit flags override values from the file. Runs that
write an output file also write ``<out>.manifest.json`` holding the merged
configuration and a version string, and that manifest can be passed back
as ``--config`` to repeat the run.

Exit codes: 0 success, 1 an audit found a failing check, 2 invalid input
(one JSON line on stderr), 64 unknown or malformed flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import subprocess
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from . import fourier, limits
from .errors import FpcokError
from .experiments import (
    ExperimentConfig,
    histogram_csv,
    moment_from_histogram,
    simulate,
    threshold_sweep,
    two_point_ensemble,
)
from .samplers import MatrixEnsemble, TwoPointGrid

EXIT_FAILED_CHECK = 1
EXIT_INVALID = 2
EXIT_USAGE = 64

SUBCOMMANDS = ("limits", "simulate", "moments", "sweep", "fourier-audit", "bounds-audit", "oracle")


class UsageError(Exception):
    pass


class ValidationError(FpcokError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise UsageError(message)


def _int_list(text: str) -> list[int]:
    return [int(x) for x in str(text).replace(",", " ").split()]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in str(text).replace(",", " ").split()]


class _Registry:
    """Flag table per subcommand: defaults, converters and required names."""

    def __init__(self):
        self.defaults: dict[str, dict] = {}
        self.types: dict[str, dict] = {}
        self.required: dict[str, set] = {}

    def add(self, cmd, sp, name, type=str, default=None, help="", required=False, choices=None, metavar=None):
        key = name.replace("-", "_")
        self.defaults.setdefault(cmd, {})[key] = default
        self.types.setdefault(cmd, {})[key] = type
        if required:
            self.required.setdefault(cmd, set()).add(key)
        extra = " (required)" if required else ("" if default is None else f" (default: {default})")
        sp.add_argument(f"--{name}", dest=key, type=type, choices=choices, metavar=metavar,
                        help=help + extra)


REG = _Registry()


def _ensemble_flags(cmd, sp):
    REG.add(cmd, sp, "p", int, 2, "prime modulus")
    REG.add(cmd, sp, "n", int, None, "matrix size", required=True)
    REG.add(cmd, sp, "law", str, "two-point", "entry law", choices=["two-point", "uniform"])
    REG.add(cmd, sp, "c", float, 2.0, "alpha = c ln(n)/n for the two-point law")
    REG.add(cmd, sp, "alpha", float, None, "explicit alpha, overrides --c")
    REG.add(cmd, sp, "t", int, 1, "nonzero value of the two-point law")
    REG.add(cmd, sp, "samples", int, None, "number of matrices", required=True)
    REG.add(cmd, sp, "seed", int, None, "RNG seed; all randomness derives from it", required=True)
    REG.add(cmd, sp, "workers", int, 1, "sampling threads (results do not depend on it)")


def build_parser() -> _Parser:
    parser = _Parser(prog="fpcok", description="Cokernels of sparse random matrices over F_p.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log one line per sample block")
    sub = parser.add_subparsers(dest="command", metavar="subcommand", required=True, parser_class=_Parser)

    def new(cmd, help):
        sp = sub.add_parser(cmd, help=help, description=help, argument_default=argparse.SUPPRESS)
        sp.add_argument("--config", help="JSON file of flag values; explicit flags win")
        return sp

    sp = new("limits", "Write the limiting corank law as CSV (k, probability).")
    REG.add("limits", sp, "p", int, None, "prime modulus", required=True)
    REG.add("limits", sp, "kmax", int, None, "largest k (default: until terms underflow)")
    REG.add("limits", sp, "out", str, None, "output CSV path (default: stdout)")

    sp = new("simulate", "Sample matrices and write the corank histogram as CSV.")
    _ensemble_flags("simulate", sp)
    REG.add("simulate", sp, "out", str, None, "output CSV path (default: stdout)")

    sp = new("moments", "Estimate E #Sur(cok A, F_p^r) for each r.")
    _ensemble_flags("moments", sp)
    REG.add("moments", sp, "r", _int_list, [1, 2], "comma-separated targets r", metavar="R[,R...]")
    REG.add("moments", sp, "out", str, None, "output CSV path (default: stdout)")

    sp = new("sweep", "Threshold sweep of the two-point ensemble over c and n.")
    REG.add("sweep", sp, "p", int, 2, "prime modulus")
    REG.add("sweep", sp, "c-list", _float_list, None, "comma-separated c values", required=True, metavar="C[,C...]")
    REG.add("sweep", sp, "n-list", _int_list, None, "comma-separated n values", required=True, metavar="N[,N...]")
    REG.add("sweep", sp, "r-list", _int_list, [], "comma-separated moment targets", metavar="R[,R...]")
    REG.add("sweep", sp, "t", int, 1, "nonzero value of the two-point law")
    REG.add("sweep", sp, "samples", int, None, "matrices per cell", required=True)
    REG.add("sweep", sp, "seed", int, None, "RNG seed", required=True)
    REG.add("sweep", sp, "workers", int, 1, "sampling threads")
    REG.add("sweep", sp, "out", str, None, "output CSV path (default: stdout)")

    sp = new("fourier-audit", "Evaluate the exact Fourier partial sums and audit their relations.")
    _fourier_flags("fourier-audit", sp)
    REG.add("fourier-audit", sp, "out", str, None, "report JSON path (default: stdout)")

    sp = new("bounds-audit", "Audit the per-entry modulus bounds and the partial-sum decomposition.")
    REG.add("bounds-audit", sp, "p-list", _int_list, [2, 3, 5, 7], "primes for the modulus bounds", metavar="P[,P...]")
    REG.add("bounds-audit", sp, "c-list", _float_list, [1.5, 2.0, 3.0], "values of c > 1", metavar="C[,C...]")
    REG.add("bounds-audit", sp, "n-max", int, 10_000, "largest n for the modulus bounds")
    REG.add("bounds-audit", sp, "fourier-p", int, 2, "prime for the decomposition audit")
    REG.add("bounds-audit", sp, "fourier-r", int, 1, "r for the decomposition audit")
    REG.add("bounds-audit", sp, "fourier-n", int, 10, "n for the decomposition audit")
    REG.add("bounds-audit", sp, "out", str, None, "report JSON path (default: stdout)")

    sp = new("oracle", "Compare the Fourier moment with brute-force enumeration.")
    REG.add("oracle", sp, "p", int, None, "prime modulus", required=True)
    REG.add("oracle", sp, "r", int, None, "target rank r", required=True)
    REG.add("oracle", sp, "n", int, None, "matrix size", required=True)
    REG.add("oracle", sp, "alpha", float, None, "P(entry != 0)", required=True)
    REG.add("oracle", sp, "t", str, "all-ones", "'all-ones' or a file with n rows of t values", metavar="all-ones|FILE")
    return parser


def _fourier_flags(cmd, sp):
    REG.add(cmd, sp, "p", int, None, "prime modulus", required=True)
    REG.add(cmd, sp, "r", int, None, "target rank r", required=True)
    REG.add(cmd, sp, "n", int, None, "matrix size", required=True)
    REG.add(cmd, sp, "c", float, 2.0, "alpha = c ln(n)/n unless overridden")
    REG.add(cmd, sp, "alpha-override", float, None, "explicit alpha")
    REG.add(cmd, sp, "t-grid", str, "all-ones", "'all-ones' or a file with n rows of t values", metavar="all-ones|FILE")
    REG.add(cmd, sp, "constants", str, None, "JSON file overriding the gamma constants")


# ---------------------------------------------------------------- config merging


def _load_config(path: str) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError("config must be a JSON object")
    if "config" in data and "version" in data:  # a run manifest
        data = data["config"]
    return {k.replace("-", "_"): v for k, v in data.items()}


def _convert(conv, value):
    if value is None:
        return None
    if conv in (_int_list, _float_list):
        if isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
    return conv(value)


def merge_config(cmd: str, explicit: dict) -> dict:
    """Defaults, then the config file, then explicit flags."""
    merged = dict(REG.defaults[cmd])
    types = REG.types[cmd]
    if explicit.get("config"):
        for k, v in _load_config(explicit["config"]).items():
            if k not in types:
                raise ValidationError(f"unknown config key {k!r} for {cmd}")
            try:
                merged[k] = _convert(types[k], v)
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"bad value for {k}: {v!r}") from exc
    merged.update({k: v for k, v in explicit.items() if k != "config"})
    missing = sorted(k for k in REG.required.get(cmd, ()) if merged.get(k) is None)
    if missing:
        raise ValidationError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))
    return merged


def version_string() -> str:
    """Package version, plus ``git describe`` output when run from a checkout."""
    try:
        base = metadata.version("fpcok")
    except metadata.PackageNotFoundError:
        base = "0+unknown"
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{base}-{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return base


def manifest(cmd: str, cfg: dict) -> dict:
    return {"command": cmd, "config": cfg, "version": version_string()}


def _emit(text: str, out: str | None, cmd: str, cfg: dict) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    Path(out).write_text(text)
    Path(out + ".manifest.json").write_text(json.dumps(manifest(cmd, cfg), indent=2, sort_keys=True) + "\n")


def _read_t_grid(source: str, p: int, n: int) -> np.ndarray:
    if source == "all-ones":
        return np.ones((n, n), dtype=np.int64)
    try:
        t = np.loadtxt(source, dtype=np.int64, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ValidationError(f"cannot read t grid {source}: {exc}") from exc
    if t.shape != (n, n):
        raise ValidationError(f"t grid in {source} is {t.shape[0]}x{t.shape[1]}, expected {n}x{n}")
    if t.min() < 1 or t.max() >= p:
        raise ValidationError(f"t values must lie in [1, {p})")
    return t


# ---------------------------------------------------------------- subcommands


def _ensemble(cfg: dict) -> MatrixEnsemble:
    p, n, seed = cfg["p"], cfg["n"], cfg["seed"]
    if cfg["law"] == "uniform":
        return MatrixEnsemble(p, n, "uniform", seed)
    if cfg["alpha"] is not None:
        return MatrixEnsemble(p, n, TwoPointGrid.constant(n, cfg["alpha"], cfg["t"]), seed)
    return two_point_ensemble(p, n, cfg["c"], seed, cfg["t"])


def cmd_limits(cfg):
    law = limits.limiting_law(cfg["p"], cfg["kmax"])
    lines = ["k,probability"] + [f"{k},{v!r}" for k, v in sorted(law.probs.items())]
    _emit("\n".join(lines) + "\n", cfg["out"], "limits", cfg)
    return 0


def cmd_simulate(cfg):
    run = simulate(_ensemble(cfg), cfg["samples"], cfg["workers"])
    _emit(histogram_csv(run.histogram()), cfg["out"], "simulate", cfg)
    return 0


def cmd_moments(cfg):
    if any(r < 0 for r in cfg["r"]):
        raise ValidationError("r must be non-negative")
    hist = simulate(_ensemble(cfg), cfg["samples"], cfg["workers"]).histogram()
    lines = ["r,samples,mean,stderr,overflow_events"]
    for r in cfg["r"]:
        est = moment_from_histogram(hist, r)
        lines.append(f"{r},{hist.samples},{est.mean!r},{est.stderr!r},{est.overflow_events}")
    _emit("\n".join(lines) + "\n", cfg["out"], "moments", cfg)
    return 0


def cmd_sweep(cfg):
    base = MatrixEnsemble(cfg["p"], max(cfg["n_list"], default=1), "uniform", cfg["seed"])
    config = ExperimentConfig(base, cfg["samples"], cfg["r_list"], cfg["c_list"], cfg["n_list"],
                              cfg["workers"], cfg["out"])
    res = threshold_sweep(config, cfg["t"])
    for e in res.errors:
        logging.getLogger(__name__).warning("skipped cell: %s", e)
    _emit(res.to_csv(), cfg["out"], "sweep", cfg)
    return 0


def _fourier_params(cfg) -> fourier.FourierParams:
    consts = None
    if cfg["constants"]:
        try:
            consts = fourier.Constants(**json.loads(Path(cfg["constants"]).read_text()))
        except (OSError, TypeError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read constants {cfg['constants']}: {exc}") from exc
    t = _read_t_grid(cfg["t_grid"], cfg["p"], cfg["n"])
    return fourier.FourierParams.build(cfg["p"], cfg["r"], cfg["n"], cfg["c"], cfg["alpha_override"], t, consts)


def cmd_fourier_audit(cfg):
    report = fourier.decomposition_audit(_fourier_params(cfg))
    _emit(report.to_json() + "\n", cfg["out"], "fourier-audit", cfg)
    return 0 if report.ok else EXIT_FAILED_CHECK


def cmd_bounds_audit(cfg):
    out = {"modulus_bounds": [], "decomposition": None}
    ok = True
    for p in cfg["p_list"]:
        for c in cfg["c_list"]:
            rep = fourier.lemma22_audit(p, c, (2, cfg["n_max"]))
            ok &= rep.ok
            out["modulus_bounds"].append({
                "p": p, "c": c, "threshold_n": rep.threshold_n, "n_checked": rep.n_checked,
                "violations": len(rep.violations), "violations_below_threshold": rep.violations_below_threshold,
                "ok": rep.ok,
            })
    params = fourier.FourierParams.build(cfg["fourier_p"], cfg["fourier_r"], cfg["fourier_n"])
    dec = fourier.decomposition_audit(params)
    ok &= dec.ok
    out["decomposition"] = {"params": params.to_dict(), "checks": dec.checks, "ok": dec.ok}
    out["ok"] = bool(ok)
    _emit(json.dumps(out, indent=2, sort_keys=True) + "\n", cfg["out"], "bounds-audit", cfg)
    return 0 if ok else EXIT_FAILED_CHECK


def cmd_oracle(cfg):
    p, r, n, alpha = cfg["p"], cfg["r"], cfg["n"], cfg["alpha"]
    t = _read_t_grid(cfg["t"], p, n)
    params = fourier.FourierParams.build(p, r, n, alpha=alpha, t_grid=t)
    brute = fourier.brute_force_expected_sur(fourier.ensemble_for(params), r)
    four = fourier.moment_fourier(params)
    diff = abs(four.real - brute)
    res = {
        "brute_force": brute, "moment_fourier": four.real, "moment_fourier_imag": four.imag,
        "abs_diff": diff, "rel_diff": diff / max(abs(brute), 1e-300),
    }
    sys.stdout.write(json.dumps(res, sort_keys=True) + "\n")
    return 0


HANDLERS = {
    "limits": cmd_limits,
    "simulate": cmd_simulate,
    "moments": cmd_moments,
    "sweep": cmd_sweep,
    "fourier-audit": cmd_fourier_audit,
    "bounds-audit": cmd_bounds_audit,
    "oracle": cmd_oracle,
}


def _fail(exc: Exception) -> int:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
    return EXIT_INVALID


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except UsageError:
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    explicit = {k: v for k, v in vars(ns).items() if k not in ("command", "verbose")}
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = merge_config(ns.command, explicit)
        return HANDLERS[ns.command](cfg)
    except (FpcokError, ValueError) as exc:
        return _fail(exc)


if __name__ == "__main__":
    sys.exit(main())
