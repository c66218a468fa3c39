"""Command-line interface.

Commands: ``keyrate``, ``boundary``, ``montecarlo``, ``scaling``, ``oracle-check``.
Values come from (lowest to highest priority) built-in defaults, a JSON file
given with ``--config``, and command-line flags.  Exit codes: 0 success,
1 computation error (JSON report on stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__, streams
from .boundary import CSV_HEADER, Mode, SearchConfig, boundary_csv, scan_boundary
from .channels import ChannelSpec, EprSource, apply_channel, epr_cm, loss_db_to_T
from .errors import CVPostError
from .fock import DEFAULT_NCUT, LEAK_TOL, cm_from_fock, filter_fock, pure_loss_fock, tmsv_fock
from .gaussian import apply_filter
from .keyrate import key_rate
from .postselect import (
    DEFAULT_CHUNK,
    AmplifyAdaptive,
    AmplifyCutoff,
    Attenuate,
    acceptance_ratio_theory,
    bob_variance,
    empirical_cm,
    fit_scaling_exponent,
    simulate,
    summary_record,
)

ORACLE_THRESHOLD = 1e-6


class UsageError(Exception):
    """Bad command line or config file; maps to exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --------------------------------------------------------------------------
# value parsers


def parse_count(text) -> int:
    """Integer count; scientific notation such as ``1e6`` is accepted."""
    if isinstance(text, int):
        return text
    value = float(text)
    if not value.is_integer():
        raise ValueError(f"not an integer count: {text!r}")
    return int(value)


def parse_range(text) -> list[float]:
    """``start:stop:step`` (inclusive), a comma list, or a single value."""
    if isinstance(text, (int, float)):
        return [float(text)]
    if isinstance(text, list):
        return [float(x) for x in text]
    text = str(text)
    if ":" in text:
        parts = [float(x) for x in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
            raise ValueError(f"range must be start:stop:step with step > 0, got {text!r}")
        start, stop, step = parts
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 12) for i in range(n)]
    return [float(x) for x in text.split(",")]


def parse_count_grid(text) -> list[int]:
    """``start:stop[:factor]`` geometric grid (factor defaults to 10) or a comma list."""
    if isinstance(text, list):
        return [parse_count(x) for x in text]
    text = str(text)
    if ":" in text:
        parts = text.split(":")
        if len(parts) not in (2, 3):
            raise ValueError(f"count grid must be start:stop[:factor], got {text!r}")
        start, stop = parse_count(parts[0]), parse_count(parts[1])
        factor = float(parts[2]) if len(parts) == 3 else 10.0
        if factor <= 1 or start < 1 or stop < start:
            raise ValueError(f"bad count grid {text!r}")
        out, n = [], float(start)
        while n <= stop * (1 + 1e-12):
            out.append(int(round(n)))
            n *= factor
        return out
    return [parse_count(x) for x in text.split(",")]


def parse_modes(text) -> list[str]:
    items = text if isinstance(text, list) else str(text).split(",")
    return [Mode(str(x).strip().lower()).value for x in items]


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# --------------------------------------------------------------------------
# parameter tables: name -> (flag, converter, default, help)

_CHANNEL = {
    "channel": ("--channel", str, "loss", "loss | amp"),
    "T": ("--T", float, None, "transmittance in (0, 1]"),
    "loss_db": ("--loss-db", float, None, "channel loss in dB, alternative to --T"),
    "G": ("--G", float, None, "amplifying channel gain >= 1"),
    "nth": ("--nth", float, 0.0, "excess thermal photons"),
}
_SOURCE = {
    "V": ("--V", float, None, "Alice's modulation variance"),
    "lam": ("--lambda", float, None, "two-mode squeezing lambda in [0, 1)"),
}

PARAMS: dict[str, dict] = {
    "keyrate": {
        **_CHANNEL,
        **_SOURCE,
        "eta": ("--eta", float, 0.9, "reconciliation efficiency in (0, 1]"),
        "gain": ("--gain", float, 1.0, "virtual filter gain on Bob's mode"),
    },
    "boundary": {
        "channel": ("--channel", str, "amp", "loss | amp"),
        "T": ("--T", parse_range, None, "transmittance grid"),
        "loss_db": ("--loss-db", parse_range, None, "loss grid in dB"),
        "G": ("--G", parse_range, None, "gain grid"),
        "mode": ("--mode", parse_modes, None, "comma list of standard, attenuate, amplify"),
        "eta": ("--eta", float, 0.9, "reconciliation efficiency"),
        "tol": ("--tol", float, 1e-4, "bisection tolerance in photons"),
        "V_min": ("--V-min", float, 1e-2, "smallest modulation variance"),
        "V_max": ("--V-max", float, 1e2, "largest modulation variance"),
        "V_points": ("--V-points", int, 40, "modulation grid size"),
        "nu_min": ("--nu-min", float, 0.05, "smallest attenuation nu"),
        "g_max": ("--g-max", float, 3.0, "largest amplification g"),
        "gain_points": ("--gain-points", int, 40, "gain grid size"),
        "refine": ("--refine", _bool, True, "local polish after the grid search"),
    },
    "montecarlo": {
        **_CHANNEL,
        **_SOURCE,
        "rule": ("--rule", str, "attenuate", "attenuate | cutoff | adaptive"),
        "nu": ("--nu", float, None, "attenuation nu"),
        "g": ("--g", float, None, "amplification g"),
        "g2": ("--g2", float, None, "amplification g^2"),
        "gamma_m2": ("--gamma-m2", float, None, "squared cutoff radius for the cutoff rule"),
        "N": ("--N", parse_count, 10**6, "number of samples"),
        "chunk_size": ("--chunk-size", parse_count, DEFAULT_CHUNK, "samples per chunk"),
        "bootstrap": ("--bootstrap", parse_count, 100, "bootstrap resamples"),
    },
    "scaling": {
        "VB": ("--VB", float, 1.0, "Bob's per-component outcome variance"),
        "g": ("--g", float, None, "amplification g"),
        "g2": ("--g2", float, 1.5, "amplification g^2"),
        "runs": ("--runs", parse_count, 100, "independent runs per N"),
        "Ngrid": ("--Ngrid", parse_count_grid, [10**3, 10**4, 10**5, 10**6], "counts, start:stop[:factor] or list"),
        "chunk_size": ("--chunk-size", parse_count, DEFAULT_CHUNK, "samples per chunk"),
    },
    "oracle-check": {
        "lam": ("--lambda", float, 0.5, "two-mode squeezing lambda"),
        "g": ("--g", float, 1.0, "filter gain"),
        "T": ("--T", float, 1.0, "pure-loss transmittance"),
        "ncut": ("--ncut", parse_count, DEFAULT_NCUT, "Fock cutoff"),
    },
}

COMMON = {
    "seed": ("--seed", parse_count, None, "64-bit seed (default: $GQ_SEED or 0)"),
    "out": ("--out", str, None, "output file (default: stdout)"),
    "format": ("--format", str, None, "csv | json"),
    "threads": ("--threads", parse_count, 1, "worker cap; never changes results"),
}


@dataclass(frozen=True)
class RunConfig:
    command: str
    params: dict
    seed: int
    out: str | None
    format: str
    threads: int = 1
    meta: dict = field(default_factory=dict, compare=False)

    def canonical(self) -> dict:
        return {
            "command": self.command,
            "params": self.params,
            "seed": self.seed,
            "format": self.format,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cvpost", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"cvpost {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for command, table in PARAMS.items():
        p = sub.add_parser(command)
        p.add_argument("--config", default=argparse.SUPPRESS, help="JSON file of parameter values")
        for name, (flag, _conv, default, text) in {**table, **COMMON}.items():
            # raw strings; conversion happens after merging with the config file
            p.add_argument(flag, dest=name, default=argparse.SUPPRESS, help=f"{text} (default: {default})")
    return parser


def _convert(command, name, value):
    table = {**PARAMS[command], **COMMON}
    flag, conv, _default, _text = table[name]
    if value is None:
        return None
    try:
        return conv(value)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{flag}: {exc}") from None


def _load_config(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"--config: cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"--config: invalid JSON in {path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError("--config: top level must be an object")
    return data


def parse_and_validate(argv=None, env=None) -> RunConfig:
    """Parse argv (and an optional config file) into a validated :class:`RunConfig`."""
    env = os.environ if env is None else env
    ns = vars(build_parser().parse_args(argv))
    command = ns.pop("command")
    table = {**PARAMS[command], **COMMON}

    raw = {}
    if "config" in ns:
        config = _load_config(ns.pop("config"))
        if config.pop("command", command) != command:
            raise UsageError(f"--config: file is for a different command than {command!r}")
        unknown = sorted(set(config) - set(table))
        if unknown:
            raise UsageError(f"--config: unknown keys {unknown} for {command}")
        raw.update(config)
    raw.update(ns)

    values = {}
    for name, (_flag, _conv, default, _text) in table.items():
        if name in raw:
            values[name] = _convert(command, name, raw[name])
        else:
            values[name] = default

    seed = values.pop("seed")
    if seed is None:
        env_seed = env.get("GQ_SEED")
        seed = _convert(command, "seed", env_seed) if env_seed else 0
    try:
        streams.check_seed(seed)
    except ValueError as exc:
        raise UsageError(f"--seed: {exc}") from None
    out = values.pop("out")
    fmt = values.pop("format") or ("csv" if command == "boundary" else "json")
    threads = values.pop("threads")
    if fmt not in ("csv", "json"):
        raise UsageError(f"--format must be csv or json, got {fmt!r}")
    if fmt == "csv" and command not in ("keyrate", "boundary"):
        raise UsageError(f"--format csv is not available for {command}")
    if threads is None or threads < 1:
        raise UsageError("--threads must be a positive integer")

    _VALIDATORS[command](values)
    return RunConfig(command, values, seed, out, fmt, threads)


# --------------------------------------------------------------------------
# validation


def _need(cond, message):
    if not cond:
        raise UsageError(message)


def _validate_channel(v, grid=False):
    kind = v["channel"]
    _need(kind in ("loss", "amp"), f"--channel must be loss or amp, got {kind!r}")
    if kind == "loss":
        _need(v["G"] is None, "--G is only valid with --channel amp")
        _need(v["T"] is None or v["loss_db"] is None, "give either --T or --loss-db, not both")
        if v["loss_db"] is not None:
            dbs = v["loss_db"] if grid else [v["loss_db"]]
            _need(all(x >= 0 for x in dbs), "--loss-db must be >= 0")
        else:
            _need(v["T"] is not None, "--T (or --loss-db) is required for a loss channel")
            Ts = v["T"] if grid else [v["T"]]
            _need(all(0 < x <= 1 for x in Ts), "--T must lie in (0, 1]")
    else:
        _need(v["T"] is None and v["loss_db"] is None, "--T/--loss-db are only valid with --channel loss")
        _need(v["G"] is not None, "--G is required for an amplifying channel")
        Gs = v["G"] if grid else [v["G"]]
        _need(all(x >= 1 for x in Gs), "--G must be >= 1")
    if "nth" in v:
        _need(v["nth"] >= 0, "--nth must be >= 0")
        if kind == "amp":
            _need(not (v["G"] == 1 and v["nth"] > 0), "--G 1 requires --nth 0")


def _validate_source(v):
    _need((v["V"] is None) != (v["lam"] is None), "give exactly one of --V and --lambda")
    if v["V"] is not None:
        _need(v["V"] >= 0, "--V must be >= 0")
    else:
        _need(0 <= v["lam"] < 1, "--lambda must lie in [0, 1)")


def _validate_eta(v):
    _need(0 < v["eta"] <= 1, "--eta must lie in (0, 1]")


def _validate_keyrate(v):
    _validate_channel(v)
    _validate_source(v)
    _validate_eta(v)
    _need(v["gain"] > 0, "--gain must be positive")


def _validate_boundary(v):
    _validate_channel(v, grid=True)
    _validate_eta(v)
    if v["mode"] is None:
        v["mode"] = ["standard", "attenuate" if v["channel"] == "amp" else "amplify"]
    _need(v["tol"] > 0, "--tol must be positive")
    try:
        _search_config(v)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _validate_montecarlo(v):
    _validate_channel(v)
    _validate_source(v)
    rule = v["rule"]
    _need(rule in ("attenuate", "cutoff", "adaptive"), f"--rule must be attenuate, cutoff or adaptive, got {rule!r}")
    if rule == "attenuate":
        _need(v["nu"] is not None and 0 < v["nu"] <= 1, "--nu in (0, 1] is required for --rule attenuate")
    else:
        _need((v["g"] is None) != (v["g2"] is None), "give exactly one of --g and --g2")
        g = v["g"] if v["g"] is not None else math.sqrt(v["g2"]) if v["g2"] > 0 else 0.0
        _need(g > 1, "amplification gain must exceed 1")
        if rule == "cutoff":
            _need(v["gamma_m2"] is not None and v["gamma_m2"] > 0, "--gamma-m2 > 0 is required for --rule cutoff")
    _need(v["N"] >= 1, "--N must be positive")
    _need(v["chunk_size"] >= 1, "--chunk-size must be positive")
    _need(v["bootstrap"] >= 2, "--bootstrap must be at least 2")


def _validate_scaling(v):
    _need(v["VB"] >= 0.5, "--VB must be >= 0.5 (vacuum)")
    if v["g"] is not None:
        v["g2"] = None
    g2 = v["g"] ** 2 if v["g"] is not None else v["g2"]
    _need(g2 is not None and g2 > 1, "amplification g^2 must exceed 1")
    _need(v["runs"] >= 2, "--runs must be at least 2")
    grid = v["Ngrid"]
    _need(len(grid) >= 3 and all(b > a for a, b in zip(grid, grid[1:])), "--Ngrid needs >= 3 increasing counts")
    _need(v["chunk_size"] >= 1, "--chunk-size must be positive")


def _validate_oracle(v):
    _need(0 <= v["lam"] < 1, "--lambda must lie in [0, 1)")
    _need(v["g"] > 0, "--g must be positive")
    _need(0 < v["T"] <= 1, "--T must lie in (0, 1]")
    _need(1 <= v["ncut"] <= 200, "--ncut must lie in [1, 200]")


_VALIDATORS = {
    "keyrate": _validate_keyrate,
    "boundary": _validate_boundary,
    "montecarlo": _validate_montecarlo,
    "scaling": _validate_scaling,
    "oracle-check": _validate_oracle,
}


# --------------------------------------------------------------------------
# commands


def _source(p) -> EprSource:
    return EprSource.from_variance(p["V"]) if p["V"] is not None else EprSource.from_lambda(p["lam"])


def _channel_spec(p) -> ChannelSpec:
    if p["channel"] == "amp":
        if p["G"] == 1:
            return ChannelSpec.loss(1.0, p["nth"])
        return ChannelSpec.amplify(p["G"], p["nth"])
    T = p["T"] if p["T"] is not None else loss_db_to_T(p["loss_db"])
    return ChannelSpec.loss(T, p["nth"])


def _cm_dict(cm):
    return {"a": cm.a, "b": cm.b, "c": cm.c}


def _search_config(p) -> SearchConfig:
    return SearchConfig(
        V_min=p["V_min"],
        V_max=p["V_max"],
        V_points=p["V_points"],
        nu_min=p["nu_min"],
        g_max=p["g_max"],
        gain_points=p["gain_points"],
        eta=p["eta"],
        tol=p["tol"],
        refine=p["refine"],
    )


def _run_keyrate(cfg: RunConfig):
    p = cfg.params
    src = _source(p)
    ch = _channel_spec(p)
    cm = apply_channel(epr_cm(src), ch)
    filtered = apply_filter(cm, p["gain"])
    report = key_rate(filtered, p["eta"])
    return {
        "source": {"V": src.V, "lambda": src.lam},
        "channel": {"kind": ch.kind.value, "param": ch.param, "n_th": ch.n_th},
        "cm": _cm_dict(cm),
        "filtered_cm": _cm_dict(filtered),
        "gain": p["gain"],
        "report": report.to_dict(),
    }


def _run_boundary(cfg: RunConfig):
    p = cfg.params
    search = _search_config(p)
    if p["channel"] == "amp":
        kind, grid = "amplify", p["G"]
    elif p["T"] is not None:
        kind, grid = "loss", p["T"]
    else:
        kind, grid = "loss", [loss_db_to_T(x) for x in p["loss_db"]]
    points = scan_boundary(kind, grid, search, p["mode"], workers=cfg.threads)
    return points, search


def _run_montecarlo(cfg: RunConfig):
    p = cfg.params
    cm = apply_channel(epr_cm(_source(p)), _channel_spec(p))
    if p["rule"] == "attenuate":
        rule = Attenuate(p["nu"])
    else:
        g = p["g"] if p["g"] is not None else math.sqrt(p["g2"])
        rule = AmplifyAdaptive(g) if p["rule"] == "adaptive" else AmplifyCutoff(g, math.sqrt(p["gamma_m2"]))
    acc = simulate(cm, rule, p["N"], cfg.seed, p["chunk_size"])
    emp = empirical_cm(acc, n_boot=p["bootstrap"], seed=cfg.seed)
    V_B = bob_variance(cm)
    record = summary_record(acc, V_B, emp, p["chunk_size"])
    if isinstance(rule, AmplifyCutoff):
        record["theory_ratio_exact"] = acceptance_ratio_theory(rule, V_B, exact=True)
    predicted = apply_filter(cm, rule.gain)
    record["input_cm"] = _cm_dict(cm)
    record["predicted_cm"] = _cm_dict(predicted)
    record["z_scores"] = {
        "a": (emp.cm.a - predicted.a) / emp.se_a,
        "b": (emp.cm.b - predicted.b) / emp.se_b,
        "c": (emp.cm.c - predicted.c) / emp.se_c,
    }
    return record


def _run_scaling(cfg: RunConfig):
    p = cfg.params
    g = p["g"] if p["g"] is not None else math.sqrt(p["g2"])
    res = fit_scaling_exponent(p["VB"], g, p["Ngrid"], p["runs"], cfg.seed, p["chunk_size"])
    return {"V_B": p["VB"], "g2": g * g, **res.to_dict()}


class _OracleMismatch(CVPostError):
    code = "oracle_mismatch"


def _run_oracle(cfg: RunConfig):
    p = cfg.params
    lam, g, T, ncut = p["lam"], p["g"], p["T"], p["ncut"]
    gauss = apply_filter(apply_channel(epr_cm(EprSource.from_lambda(lam)), ChannelSpec.loss(T)), g)
    rho = filter_fock(pure_loss_fock(tmsv_fock(lam, ncut), T), g)
    fock = cm_from_fock(rho)
    dev = max(abs(x - y) for x, y in zip(gauss.as_tuple(), fock.cm.as_tuple()))
    report = {
        "inputs": {"lambda": lam, "g": g, "T": T, "n_cut": ncut, "leak_tol": LEAK_TOL},
        "gaussian_cm": _cm_dict(gauss),
        "fock_cm": _cm_dict(fock.cm),
        "fock_residual": fock.residual,
        "fock_success_weight": rho.trace,
        "max_abs_deviation": dev,
        "threshold": ORACLE_THRESHOLD,
        "pass": dev < ORACLE_THRESHOLD,
    }
    if not report["pass"]:
        raise _OracleMismatch(json.dumps(report, sort_keys=True))
    return report


def _metadata(cfg: RunConfig) -> dict:
    return {
        "version": __version__,
        "sampler_version": streams.ALGORITHM_VERSION,
        "command": cfg.command,
        "seed": cfg.seed,
        "config_hash": cfg.config_hash(),
        "config": cfg.canonical(),
    }


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_atomic(path, text: str) -> None:
    """Write via a temporary file in the target directory and rename over it."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_from_dict(row: dict) -> str:
    flat = {k: v for k, v in row.items() if not isinstance(v, (dict, list))}
    keys = list(flat)
    vals = [repr(v) if isinstance(v, float) else str(v) for v in flat.values()]
    return ",".join(keys) + "\n" + ",".join(vals) + "\n"


def run(cfg: RunConfig, stdout=None, stderr=None) -> int:
    """Execute a validated config; returns the process exit code."""
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    meta = _metadata(cfg)
    sidecar = None
    try:
        if cfg.command == "boundary":
            points, search = _run_boundary(cfg)
            meta["search_config"] = search.to_dict()
            meta["loss_db"] = [p.loss_db for p in points]
            if cfg.format == "csv":
                text = boundary_csv(points)
                sidecar = _dumps(meta)
            else:
                rows = [
                    dict(zip(CSV_HEADER, (p.channel_param, p.mode.value, p.n_th_max, p.V_opt, p.gain_opt, p.eta, p.status)))
                    for p in points
                ]
                text = _dumps({"meta": meta, "rows": rows})
        else:
            runner = {
                "keyrate": _run_keyrate,
                "montecarlo": _run_montecarlo,
                "scaling": _run_scaling,
                "oracle-check": _run_oracle,
            }[cfg.command]
            result = runner(cfg)
            if cfg.format == "csv":
                text = _csv_from_dict({**result, **result.get("report", {})})
                sidecar = _dumps(meta)
            else:
                text = _dumps({"meta": meta, "result": result})
    except CVPostError as exc:
        stderr.write(json.dumps({"error": exc.code, "message": str(exc), "meta": meta}, sort_keys=True) + "\n")
        return 1
    if cfg.out:
        write_atomic(cfg.out, text)
        if sidecar is not None:
            write_atomic(f"{cfg.out}.meta.json", sidecar)
    else:
        stdout.write(text)
    return 0


def main(argv=None) -> int:
    try:
        cfg = parse_and_validate(argv)
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
