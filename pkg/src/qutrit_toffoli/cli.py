"""Command line runner: ``qtoffoli <experiment> --config FILE``.

Every run writes its payload files (CSV for curves, JSON for summaries)
plus ``manifest.json``, which echoes the resolved configuration and holds
the only timestamps.  Payloads are byte-identical across reruns with the
same seed.  Errors are printed to stderr as a JSON object and the process
exits nonzero.
"""
from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import sys
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from . import circuit as C
from . import decompositions as D
from . import experiments as E
from . import noise as N
from .cr import CRParams
from .gates import toffoli

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

KINDS = ("cr-scan", "ramsey", "stark-cal", "truth-table", "qpt", "durations", "verify", "compare")

EXIT_CONFIG = 2
EXIT_DURATIONS = 3
EXIT_CONVERGENCE = 4
EXIT_INTERNAL = 1


class RunError(Exception):
    def __init__(self, kind: str, message: str, code: int):
        super().__init__(message)
        self.kind = kind
        self.code = code


# config -----------------------------------------------------------------------

def load_config(path: str | Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise RunError("config", f"config file not found: {path}", EXIT_CONFIG)
    except tomllib.TOMLDecodeError as exc:
        raise RunError("config", f"invalid TOML in {path}: {exc}", EXIT_CONFIG)


def _section(cfg: dict, name: str) -> dict:
    sec = cfg.get(name, {})
    if not isinstance(sec, dict):
        raise RunError("config", f"[{name}] must be a table", EXIT_CONFIG)
    return sec


def _require(sec: dict, key: str, where: str):
    if key not in sec:
        raise RunError("config", f"missing required key '{key}' in [{where}]", EXIT_CONFIG)
    return sec[key]


def _grid(spec: dict, where: str) -> np.ndarray:
    start, stop, step = (float(_require(spec, k, where)) for k in ("start", "stop", "step"))
    if step <= 0 or stop < start:
        raise RunError("config", f"[{where}] needs step > 0 and stop >= start", EXIT_CONFIG)
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(n)


def cr_params(cfg: dict) -> CRParams:
    sec = _section(cfg, "cr")
    try:
        return CRParams(**{k: tuple(v) if isinstance(v, list) else v for k, v in sec.items()})
    except (TypeError, ValueError) as exc:
        raise RunError("config", f"invalid [cr] section: {exc}", EXIT_CONFIG)


def rtn_params(cfg: dict) -> N.RTNParams | None:
    sec = _section(cfg, "noise")
    if not sec.get("enabled", bool(sec)):
        return None
    try:
        return N.RTNParams(
            float(sec.get("amplitude", E.DEFAULT_RTN_AMPLITUDE)),
            float(sec.get("switching_rate", 0.0)),
            sec.get("regime", "quasi_static"),
        )
    except ValueError as exc:
        raise RunError("config", f"invalid [noise] section: {exc}", EXIT_CONFIG)


def confusion(cfg: dict) -> N.ConfusionMatrix | None:
    sec = _section(cfg, "readout")
    if not sec.get("enabled", False):
        return None
    matrix = sec.get("matrix", N.SYNTHETIC_CONFUSION.tolist())
    try:
        return N.ConfusionMatrix.uniform(3, np.array(matrix, dtype=float))
    except ValueError as exc:
        raise RunError("config", f"invalid [readout] section: {exc}", EXIT_CONFIG)


def durations(cfg: dict, base: Path) -> C.DurationTable:
    sec = _section(cfg, "durations")
    try:
        if "path" in sec:
            p = Path(sec["path"])
            return C.DurationTable.load(p if p.is_absolute() else base / p)
        if "pulses" in sec:
            return C.DurationTable.from_mapping(sec)
        return C.default_durations()
    except (OSError, KeyError, ValueError) as exc:
        raise RunError("durations", f"could not load duration table: {exc}", EXIT_DURATIONS)


def seeds(cfg: dict, override: int | None) -> list[int]:
    base = int(override if override is not None else _require(cfg, "seed", "top level"))
    n = int(cfg.get("n_seeds", 1))
    if n < 1:
        raise RunError("config", "n_seeds must be at least 1", EXIT_CONFIG)
    return [base] if n == 1 else N.spawn_seeds(base, n)


# output -------------------------------------------------------------------------

class Writer:
    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.files: list[str] = []
        out_dir.mkdir(parents=True, exist_ok=True)

    def csv(self, name: str, header: list[str], rows: list[list[Any]]) -> None:
        with open(self.out_dir / name, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(x) for x in row])
        self.files.append(name)

    def json(self, name: str, payload: Any) -> None:
        with open(self.out_dir / name, "w", encoding="utf-8") as fh:
            json.dump(_plain(payload), fh, indent=2, sort_keys=True)
            fh.write("\n")
        self.files.append(name)


def _fmt(x: Any) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _plain(x: Any) -> Any:
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


# experiments ----------------------------------------------------------------------

def run_cr_scan(cfg: dict, w: Writer, ctx: dict) -> dict:
    sec = _section(cfg, "cr_scan")
    taus = _grid(_require(sec, "grid", "cr_scan"), "cr_scan.grid")
    levels = [int(x) for x in sec.get("levels", [1, 2])]
    shots = sec.get("shots")
    res = E.cr_scan_table(levels, taus, ctx["cr"], shots, ctx["seeds"][0])
    rows = [[lvl, t, v] for lvl in levels for t, v in zip(taus, res["curves"][lvl])]
    w.csv("cr_scan.csv", ["control_level", "tau", "z_expectation"], rows)
    summary = {"frequencies": res["frequencies"], "ratio": res["ratio"], "shots": shots}
    w.json("summary.json", summary)
    return summary


def run_ramsey(cfg: dict, w: Writer, ctx: dict) -> dict:
    sec = _section(cfg, "ramsey")
    delays = _grid(_require(sec, "delays", "ramsey"), "ramsey.delays")
    rtn = ctx["rtn"] or N.RTNParams(0.0)
    shots = sec.get("shots")
    seed = ctx["seeds"][0]
    rows = []
    for use_dd in (False, True):
        for k, tau in enumerate(delays):
            est = N.ramsey_experiment(tau, use_dd, rtn, shots, seed + k + (len(delays) if use_dd else 0),
                                      ctx["durations"])
            rows.append(["dd" if use_dd else "free", tau, est.value, est.stderr])
    w.csv("ramsey.csv", ["arm", "parameter", "population", "stderr"], rows)
    summary = {"amplitude": rtn.amplitude, "regime": rtn.regime, "shots": shots, "points": len(delays)}
    w.json("summary.json", summary)
    return summary


def run_stark(cfg: dict, w: Writer, ctx: dict) -> dict:
    sec = _section(cfg, "stark_cal")
    thetas = _grid(sec.get("grid", {"start": -np.pi, "stop": np.pi, "step": 0.005}), "stark_cal.grid")
    bg = float(sec.get("background_phase", -0.1083))
    rows, peaks = [], {}
    for drive in (False, True):
        res = N.stark_calibration_scan(thetas, drive, bg, ctx["cr"])
        arm = "cnot" if drive else "delay"
        peaks[arm] = res.argmax
        rows += [[arm, t, p, 0.0] for t, p in zip(thetas, res.population)]
    w.csv("stark_cal.csv", ["arm", "parameter", "population", "stderr"], rows)
    summary = {"argmax": peaks, "shift": peaks["cnot"] - peaks["delay"], "grid_step": float(thetas[1] - thetas[0])}
    w.json("summary.json", summary)
    return summary


def _circuits(sec: dict, default: list[str]) -> list[str]:
    names = list(sec.get("circuits", default))
    for n in names:
        if n not in E.CIRCUITS:
            raise RunError("config", f"unknown circuit {n!r}; choose from {list(E.CIRCUITS)}", EXIT_CONFIG)
    return names


def run_truth_table(cfg: dict, w: Writer, ctx: dict) -> dict:
    sec = _section(cfg, "truth_table")
    names = _circuits(sec, ["ternary"])
    shots = int(sec.get("shots", 1024))
    rem_shots = sec.get("rem_shots", 2048) if ctx["confusion"] is not None else None
    rows, summary = [], {}
    for name in names:
        runs = E._map(lambda s: E.truth_table_run(name, s, shots, ctx["rtn"], ctx["confusion"], rem_shots,
                                                  ctx["cr"], ctx["durations"]), ctx["seeds"], ctx["threads"])
        for r in runs:
            rows.append([name, r["seed"], r["f_tt"], r.get("f_tt_rem", "")])
        f = np.array([r["f_tt"] for r in runs])
        summary[name] = {"f_tt_mean": f.mean(), "f_tt_std": f.std()}
        if rem_shots:
            g = np.array([r["f_tt_rem"] for r in runs])
            summary[name].update({"f_tt_rem_mean": g.mean(), "f_tt_rem_std": g.std()})
    w.csv("truth_table.csv", ["circuit", "seed", "f_tt", "f_tt_rem"], rows)
    w.json("summary.json", summary)
    return summary


def run_qpt(cfg: dict, w: Writer, ctx: dict) -> dict:
    sec = _section(cfg, "qpt")
    names = _circuits(sec, ["ternary", "ternary-dd"])
    shots = sec.get("shots", 1024)
    rem_shots = sec.get("rem_shots", 2048) if ctx["confusion"] is not None else None
    method = sec.get("method", "mle")
    rows, summary, failed = [], {}, []
    for name in names:
        runs = E.qpt_ensemble(name, ctx["seeds"], ctx["threads"], rtn=ctx["rtn"], shots=shots,
                              confusion=ctx["confusion"], rem_shots=rem_shots, cr=ctx["cr"],
                              durations=ctx["durations"], method=method)
        for r in runs:
            rows.append([name, r.seed, r.f_avg, r.leakage, r.iterations, r.converged, r.cp_residual, r.tp_residual])
            if not r.converged:
                failed.append({"circuit": name, "seed": r.seed, "iterations": r.iterations})
        f = np.array([r.f_avg for r in runs])
        summary[name] = {"f_avg_mean": f.mean(), "f_avg_std": f.std(), "f_avg_min": f.min(), "runs": len(runs)}
    w.csv("qpt.csv", ["circuit", "seed", "f_avg", "leakage", "iterations", "converged", "cp_residual", "tp_residual"], rows)
    w.json("summary.json", summary)
    if failed:
        raise RunError("convergence", f"reconstruction did not converge: {failed}", EXIT_CONVERGENCE)
    return summary


def run_durations(cfg: dict, w: Writer, ctx: dict) -> dict:
    sec = _section(cfg, "durations_report")
    names = _circuits(sec, ["ternary", "ternary-dd", "binary-8cnot"])
    rows, summary = [], {}
    for name in names:
        circ = E.build(name, ctx["cr"], ctx["durations"]).circuit
        try:
            rep = D.duration_accounting(circ, ctx["durations"])
        except KeyError as exc:
            raise RunError("durations", f"{name}: {exc.args[0]}", EXIT_DURATIONS)
        for r in rep.breakdown:
            rows.append([name, r["index"], r["kind"], "-".join(map(str, r["sites"])), r["start"], r["end"]])
        summary[name] = {"total_ns": rep.total, "two_transmon_gates": circ.two_transmon_gate_count}
    w.csv("durations.csv", ["circuit", "index", "kind", "sites", "start_ns", "end_ns"], rows)
    w.json("summary.json", summary)
    return summary


def run_verify(cfg: dict, w: Writer, ctx: dict) -> dict:
    sec = _section(cfg, "verify")
    names = _circuits(sec, ["ternary", "ternary-dd", "binary-8cnot", "binary-6cnot"])
    summary = {}
    for name in names:
        rep = E.build(name, ctx["cr"], ctx["durations"])
        summary[name] = {
            "equivalence_fidelity": rep.equivalence_fidelity,
            "leakage": rep.leakage,
            "status": rep.status,
            "residual_phase_corrections": [list(c[:1]) + [list(c[1]), c[2]] for c in rep.residual_phase_corrections],
            "two_transmon_gate_count": rep.two_transmon_gate_count,
        }
        w.json(f"{name}.report.json", rep.to_dict())
    w.json("summary.json", summary)
    return summary


def run_compare(cfg: dict, w: Writer, ctx: dict) -> dict:
    """Ternary against the eight-CNOT reference: F_TT with and without REM, F_avg, timing, gate counts."""
    sec = _section(cfg, "compare")
    names = _circuits(sec, ["ternary", "binary-8cnot"])
    shots = int(sec.get("shots", 1024))
    qpt_shots = sec.get("qpt_shots")
    rem_shots = sec.get("rem_shots", 2048) if ctx["confusion"] is not None else None
    summary = {}
    for name in names:
        rep = E.build(name, ctx["cr"], ctx["durations"])
        tt = [E.truth_table_run(name, s, shots, ctx["rtn"], ctx["confusion"], rem_shots, ctx["cr"], ctx["durations"])
              for s in ctx["seeds"]]
        row = {
            "two_transmon_gate_count": rep.two_transmon_gate_count,
            "total_duration_ns": rep.total_duration,
            "f_tt": float(np.mean([t["f_tt"] for t in tt])),
        }
        if rem_shots:
            row["f_tt_rem"] = float(np.mean([t["f_tt_rem"] for t in tt]))
        if qpt_shots is not None:
            runs = E.qpt_ensemble(name, ctx["seeds"], ctx["threads"], rtn=ctx["rtn"], shots=qpt_shots or None,
                                  confusion=ctx["confusion"], rem_shots=rem_shots, cr=ctx["cr"],
                                  durations=ctx["durations"])
            row["f_avg"] = float(np.mean([r.f_avg for r in runs]))
        summary[name] = row
    if len(names) == 2 and all(summary[n]["total_duration_ns"] for n in names):
        summary["duration_ratio"] = summary[names[0]]["total_duration_ns"] / summary[names[1]]["total_duration_ns"]
    header = ["circuit", "two_transmon_gate_count", "total_duration_ns", "f_tt", "f_tt_rem", "f_avg"]
    w.csv("compare.csv", header, [[n] + [summary[n].get(k, "") for k in header[1:]] for n in names])
    w.json("summary.json", summary)
    return summary


RUNNERS = {
    "cr-scan": run_cr_scan,
    "ramsey": run_ramsey,
    "stark-cal": run_stark,
    "truth-table": run_truth_table,
    "qpt": run_qpt,
    "durations": run_durations,
    "verify": run_verify,
    "compare": run_compare,
}


def execute(kind: str, config_path: str | Path, out_dir: str | Path | None = None,
            seed_override: int | None = None, threads: int = 1) -> dict:
    """Run one experiment and write its artifacts; returns the manifest."""
    cfg = load_config(config_path)
    declared = cfg.get("experiment", kind)
    if kind == "run":
        kind = declared
    if kind not in RUNNERS:
        raise RunError("config", f"unknown experiment {kind!r}; choose from {list(KINDS)}", EXIT_CONFIG)
    if declared != kind:
        raise RunError("config", f"config declares experiment {declared!r} but {kind!r} was requested", EXIT_CONFIG)
    base = Path(config_path).resolve().parent
    out = Path(out_dir or _section(cfg, "output").get("dir", f"out/{kind}"))
    ctx = {
        "cr": cr_params(cfg),
        "rtn": rtn_params(cfg),
        "confusion": confusion(cfg),
        "durations": durations(cfg, base),
        "seeds": seeds(cfg, seed_override),
        "threads": max(1, int(threads)),
    }
    started = dt.datetime.now(dt.timezone.utc).isoformat()
    w = Writer(out)
    summary = RUNNERS[kind](cfg, w, ctx)
    manifest = {
        "experiment": kind,
        "version": __version__,
        "config_path": str(Path(config_path).resolve()),
        "config": cfg,
        "seeds": ctx["seeds"],
        "files": sorted(w.files),
        "summary": summary,
        "started": started,
        "finished": dt.datetime.now(dt.timezone.utc).isoformat(),
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(_plain(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qtoffoli", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run",) + KINDS:
        sp = sub.add_parser(name, help="experiment named in the config" if name == "run" else f"run the {name} experiment")
        sp.add_argument("config_file", nargs="?", help="TOML config (same as --config)")
        sp.add_argument("--config", dest="config", help="TOML config file")
        sp.add_argument("--out-dir", help="output directory (overrides [output].dir)")
        sp.add_argument("--seed-override", type=int, help="replace the config's base seed")
        sp.add_argument("--threads", type=int, default=1, help="worker threads for seed ensembles")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    config = args.config or args.config_file
    try:
        if not config:
            raise RunError("config", "no config file given (use --config)", EXIT_CONFIG)
        manifest = execute(args.command, config, args.out_dir, args.seed_override, args.threads)
    except RunError as exc:
        json.dump({"status": "error", "error": exc.kind, "message": str(exc), "exit_code": exc.code}, sys.stderr)
        sys.stderr.write("\n")
        return exc.code
    except Exception as exc:  # noqa: BLE001 - reported, not swallowed
        json.dump({"status": "error", "error": type(exc).__name__, "message": str(exc), "exit_code": EXIT_INTERNAL},
                  sys.stderr)
        sys.stderr.write("\n")
        return EXIT_INTERNAL
    print(json.dumps({"status": "ok", "experiment": manifest["experiment"], "files": manifest["files"]}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
