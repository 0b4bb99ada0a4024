"""Command-line front end: ``parityprobe run | report | validate``.

Exit codes: 0 success, 1 missing artifacts in ``report``, 2 invalid
configuration, 3 simulation truncation failure, 4 estimator non-convergence
(outputs that were produced are kept).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, io
from .metrics import MetricReport, j_measures, metric_report
from .opcore import QuantumInstrument
from .protocol import (OPERATOR_LABELS, ConfigError, DeviceParams, SimOptions, SubsetParitySpec,
                       TruncationError, build_schedule, fock_tail, ideal_instrument,
                       max_pointer_photons, postselect, product_state, sample_outcomes,
                       simulate_variants)
from .tomo import (ConvergenceError, RotationSet, detector_tomography, instrument_tomography,
                   synth_detector_dataset, synth_instrument_dataset)

log = logging.getLogger("parityprobe")

EXIT_OK, EXIT_MISSING, EXIT_CONFIG, EXIT_TRUNCATION, EXIT_CONVERGENCE = 0, 1, 2, 3, 4
HERALD_CHOICES = {"off": (False,), "on": (True,), "both": (False, True)}
CONFIG_KEYS = {"device", "operators", "theta", "n0", "noise", "shots", "herald", "seed", "output",
               "tomography", "scan", "simulation", "metrics"}


# ---------------------------------------------------------------------------
# Configuration


def _operator_label(op) -> str:
    if isinstance(op, str):
        return SubsetParitySpec.from_label(op).label
    if isinstance(op, (list, tuple)) and len(op) == 3 and set(op) <= {0, 1}:
        return "".join("Z" if b else "I" for b in op)
    raise ConfigError(f"operator {op!r} is neither a label like 'ZIZ' nor a 0/1 mask")


def _device(spec) -> DeviceParams:
    if spec is None or spec == "reference":
        return DeviceParams.reference()
    if spec == "ideal":
        return DeviceParams.ideal()
    if isinstance(spec, dict):
        spec = dict(spec)
        preset = spec.pop("preset", "reference")
        if preset not in ("reference", "ideal"):
            raise ConfigError(f"unknown device preset {preset!r}")
        base = _device(preset).to_dict()
        unknown = set(spec) - set(base)
        if unknown:
            raise ConfigError(f"unknown device fields: {sorted(unknown)}")
        base.update(spec)
        return DeviceParams.from_dict(base)
    raise ConfigError("device must be 'reference', 'ideal' or an object of overrides")


def normalize_config(raw: dict, seed=None, out=None, herald=None) -> dict:
    """Validate a raw config and fill in defaults; raises ConfigError."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = dict(raw)
    if seed is not None:
        cfg["seed"] = seed
    if out is not None:
        cfg["output"] = str(out)
    if herald is not None:
        cfg["herald"] = herald
    if "seed" not in cfg:
        raise ConfigError("config needs a seed")
    if not isinstance(cfg["seed"], int) or isinstance(cfg["seed"], bool) or not 0 <= cfg["seed"] < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    ops = cfg.get("operators", list(OPERATOR_LABELS))
    if not isinstance(ops, list) or not ops:
        raise ConfigError("operators must be a non-empty list")
    labels = [_operator_label(op) for op in ops]
    if len(set(labels)) != len(labels):
        raise ConfigError("operators must be distinct")
    device = _device(cfg.get("device", "reference"))
    theta = cfg.get("theta", {})
    if not isinstance(theta, dict) or set(theta) - set(labels):
        raise ConfigError("theta must map listed operator labels to angles")
    n0 = cfg.get("n0", 5.0)
    specs = [SubsetParitySpec.from_label(lab, theta.get(lab), n0).to_dict() for lab in labels]
    shots = cfg.get("shots", 0)
    if not isinstance(shots, int) or shots < 0:
        raise ConfigError("shots must be a non-negative integer")
    her = cfg.get("herald", "off")
    if her not in HERALD_CHOICES:
        raise ConfigError("herald must be one of on, off, both")
    noise = cfg.get("noise", True)
    if not isinstance(noise, bool):
        raise ConfigError("noise must be true or false")
    tomo = {"instrument": True, "rotations": "overcomplete", **cfg.get("tomography", {})}
    if tomo["rotations"] not in ("complete", "overcomplete"):
        raise ConfigError("tomography.rotations must be complete or overcomplete")
    scan = {"steps": 9, "shots": shots, **cfg.get("scan", {})}
    if int(scan["steps"]) < 2 or int(scan["shots"]) < 0:
        raise ConfigError("scan needs at least two steps and non-negative shots")
    sim = dict(cfg.get("simulation", {}))
    try:
        SimOptions(**sim)
    except TypeError as exc:
        raise ConfigError(f"simulation options: {exc}") from None
    mets = {"restarts": 64, "qi_restarts": 128, **cfg.get("metrics", {})}
    return {"device": device.to_dict(), "operators": labels, "specs": specs, "noise": noise,
            "shots": shots, "herald": her, "seed": cfg["seed"],
            "output": str(cfg.get("output", "results")), "tomography": tomo, "scan": scan,
            "simulation": sim, "metrics": mets}


def config_hash(cfg: dict) -> str:
    body = {k: v for k, v in cfg.items() if k != "output"}
    return hashlib.sha256(json.dumps(body, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def load_config(path, **overrides) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return normalize_config(raw, **overrides)


# ---------------------------------------------------------------------------
# Pipeline


def _seed(cfg, *stream) -> int:
    return int(np.random.SeedSequence([cfg["seed"], *stream]).generate_state(1)[0])


def scan_preparations(steps: int) -> list:
    """A common angle on all register qubits, then each qubit swept alone."""
    grid = np.linspace(0.0, math.pi, steps)
    preps = [(t, t, t) for t in grid]
    for q in range(3):
        preps += [tuple(t if k == q else 0.0 for k in range(3)) for t in grid]
    return [tuple(float(a) for a in p) for p in preps]


def _click_counts(qi: QuantumInstrument, rho, shots, seed):
    labels = qi.labels
    heralded = bool(labels) and isinstance(labels[0], tuple)
    if shots == 0:
        p = np.clip(qi.probabilities(rho), 0, None)
        if heralded:
            ok = sum(q for q, lab in zip(p, labels) if lab[1] == 1)
            odd = sum(q for q, lab in zip(p, labels) if lab == (1, 1))
            return {"clicks": 0, "shots": 0, "frequency": float(odd / ok) if ok > 0 else 0.0}
        return {"clicks": 0, "shots": 0, "frequency": float(sum(q for q, lab in zip(p, labels) if lab == 1))}
    rec = sample_outcomes(qi, rho, shots, seed)
    if heralded:
        n = rec.counts.get((0, 1), 0) + rec.counts.get((1, 1), 0)
        c = rec.counts.get((1, 1), 0)
    else:
        n, c = shots, rec.counts.get(1, 0)
    return {"clicks": int(c), "shots": int(n), "frequency": c / n if n else 0.0}


def _write(path: Path, payload) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    text = payload if isinstance(payload, str) else json.dumps(payload, sort_keys=True, indent=1)
    path.write_text(text)
    return str(path)


def run_operator(cfg: dict, index: int) -> dict:
    """Simulate, tomograph and score one operator; returns status and written files."""
    label = cfg["operators"][index]
    out = Path(cfg["output"]) / label
    spec = SubsetParitySpec(**cfg["specs"][index])
    params = DeviceParams.from_dict(cfg["device"])
    files, status = [], {"operator": label, "code": EXIT_OK, "errors": []}
    schedule = build_schedule(spec, params)
    files.append(_write(out / "schedule.json", schedule.to_json()))
    heralds = HERALD_CHOICES[cfg["herald"]]
    opts = SimOptions(**cfg["simulation"]) if cfg["noise"] else _noiseless(cfg["simulation"])
    log.info("%s: simulating (%s)", label, "noisy" if cfg["noise"] else "noiseless")
    try:
        variants = simulate_variants(schedule, params, cfg["noise"], heralds, opts)
    except TruncationError as exc:
        status.update(code=EXIT_TRUNCATION, errors=[f"simulation: {exc}"])
        return {"files": files, "status": status}
    ideal = ideal_instrument(spec)
    residual = params.residual_excitation[1:] if cfg["noise"] else (0.0, 0.0, 0.0)
    rot = RotationSet.named(cfg["tomography"]["rotations"])
    for h in heralds:
        tag = "heralded" if h else "unheralded"
        d = out / tag
        qi = variants[h]
        files.append(_write(d / "instrument_sim.json", io.to_json(qi)))
        shots = cfg["shots"]
        det_data = synth_detector_dataset(qi, rot, shots, _seed(cfg, index, h, 1), herald=h,
                                          operator=label)
        files.append(_write(d / "detector_data.json", det_data.to_json()))
        try:
            povm = detector_tomography(det_data)
        except ConvergenceError as exc:
            status["code"] = EXIT_CONVERGENCE
            status["errors"].append(f"{tag} detector: {exc}")
            povm = exc.result
        files.append(_write(d / "detector.json", io.to_json(povm)))
        recon = None
        if cfg["tomography"]["instrument"]:
            inst_data = synth_instrument_dataset(qi, shots, _seed(cfg, index, h, 2), herald=h,
                                                 operator=label)
            files.append(_write(d / "instrument_data.json", inst_data.to_json()))
            try:
                with warnings.catch_warnings(record=True) as caught:
                    warnings.simplefilter("always")
                    recon = instrument_tomography(inst_data)
                for w in caught:
                    log.warning("%s %s: %s", label, tag, w.message)
            except ConvergenceError as exc:
                status["code"] = EXIT_CONVERGENCE
                status["errors"].append(f"{tag} instrument: {exc}")
                recon = exc.result
            files.append(_write(d / "instrument.json", io.to_json(recon)))
        scan = []
        for k, angles in enumerate(scan_preparations(int(cfg["scan"]["steps"]))):
            rec = _click_counts(qi, product_state(angles, residual), int(cfg["scan"]["shots"]),
                                _seed(cfg, index, h, 3, k))
            scan.append({"angles": list(angles), **rec})
        files.append(_write(d / "scan.json", {"operator": label, "herald": h, "records": scan}))
        log.info("%s %s: metrics", label, tag)
        report = metric_report(spec, povm, ideal, h, instrument=recon, scan=scan,
                               restarts=int(cfg["metrics"]["restarts"]),
                               qi_restarts=int(cfg["metrics"]["qi_restarts"]),
                               seed=_seed(cfg, index, h, 4) % 2**32)
        report.optimizer["simulated_vs_ideal"] = _sim_summary(qi, ideal, h)
        files.append(_write(d / "metrics.json", report.to_json()))
    return {"files": files, "status": status}


def _noiseless(sim: dict) -> SimOptions:
    off = dict(cavity_loss=False, qubit_relaxation=False, qubit_dephasing=False, readout_error=False)
    return SimOptions(**{**sim, **off})


def _sim_summary(qi, ideal, herald):
    inst = postselect(qi) if herald else qi
    return {k: round(v, 12) for k, v in j_measures(inst, ideal).items()}


def _workers(n: int) -> int:
    raw = os.environ.get("PARITYPROBE_THREADS", "")
    try:
        cap = int(raw) if raw else 1
    except ValueError:
        raise ConfigError("PARITYPROBE_THREADS must be an integer") from None
    return max(1, min(cap, n))


def cmd_run(cfg: dict) -> int:
    out = Path(cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    n = len(cfg["operators"])
    workers = _workers(n)
    log.info("running %d operator(s) with %d worker(s)", n, workers)
    if workers == 1:
        results = [run_operator(cfg, i) for i in range(n)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_operator, [cfg] * n, range(n)))
    files = sorted(f for r in results for f in r["files"])
    entries = [{"path": str(Path(f).relative_to(out)),
                "sha256": hashlib.sha256(Path(f).read_bytes()).hexdigest()} for f in files]
    statuses = [r["status"] for r in results]
    # the output location is left out so that copies of a run compare equal
    body = {k: v for k, v in cfg.items() if k != "output"}
    manifest = {"version": __version__, "config": body, "config_hash": config_hash(cfg),
                "seed": cfg["seed"], "files": entries, "status": statuses}
    _write(out / "manifest.json", manifest)
    codes = {s["code"] for s in statuses}
    for s in statuses:
        for e in s["errors"]:
            log.error("%s: %s", s["operator"], e)
    if EXIT_TRUNCATION in codes:
        return EXIT_TRUNCATION
    if EXIT_CONVERGENCE in codes:
        return EXIT_CONVERGENCE
    return EXIT_OK


# ---------------------------------------------------------------------------
# Report

MEASURES = ("F_J", "D_J", "F_S", "D_S")


def _fmt(x):
    return "" if x is None else f"{x:.4f}"


def cmd_report(results_dir, tables_dir=None) -> int:
    root = Path(results_dir)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        log.error("no manifest.json in %s", root)
        return EXIT_MISSING
    manifest = json.loads(manifest_path.read_text())
    cfg = manifest["config"]
    heralds = HERALD_CHOICES[cfg["herald"]]
    out = Path(tables_dir) if tables_dir else root / "tables"
    out.mkdir(parents=True, exist_ok=True)
    missing = []
    reports, scans = {}, {}
    for label in cfg["operators"]:
        for h in heralds:
            tag = "heralded" if h else "unheralded"
            p = root / label / tag / "metrics.json"
            if p.exists():
                reports[label, h] = MetricReport.from_dict(json.loads(p.read_text()))
            else:
                missing.append(str(p.relative_to(root)))
            s = root / label / tag / "scan.json"
            if s.exists():
                scans[label, h] = json.loads(s.read_text())["records"]
    tags = [("heralded" if h else "unheralded", h) for h in heralds]

    def table(name, columns, row):
        with open(out / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["operator"] + [f"{t}_{c}" for t, _ in tags for c in columns])
            for label in cfg["operators"]:
                cells = [label]
                for _, h in tags:
                    r = reports.get((label, h))
                    cells += [_fmt(v) for v in row(r, columns)]
                w.writerow(cells)

    none = lambda cols: [None] * len(cols)  # noqa: E731
    table("assignment.csv", ("contrast", "offset", "F_a"),
          lambda r, c: none(c) if r is None else [r.assignment[k] for k in c])
    table("specificity.csv", ("c_I", "c_T", "c_O", "c_max", "theta_s_deg"),
          lambda r, c: none(c) if r is None else [getattr(r, k) for k in c])
    table("povm.csv", MEASURES,
          lambda r, c: none(c) if r is None else [getattr(r, k) for k in c])
    table("qi.csv", MEASURES,
          lambda r, c: none(c) if r is None else [r.instrument.get(k) for k in c])
    if scans:
        with open(out / "scan.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["operator", "herald", "theta1", "theta2", "theta3", "clicks", "shots",
                        "frequency"])
            for (label, h), recs in sorted(scans.items()):
                for r in recs:
                    w.writerow([label, int(h), *(f"{a:.6f}" for a in r["angles"]), r["clicks"],
                                r["shots"], f"{r['frequency']:.6f}"])
    for m in missing:
        log.error("missing artifact: %s", m)
    print(f"tables written to {out}")
    return EXIT_MISSING if missing else EXIT_OK


# ---------------------------------------------------------------------------
# Validate


def estimated_runtime(schedule, noise: bool) -> float:
    """Rough wall-clock seconds for one simulation (single core)."""
    if not noise:
        return 1.0
    return 1e-2 * schedule.duration(herald=True)


def cmd_validate(cfg: dict) -> int:
    params = DeviceParams.from_dict(cfg["device"])
    ok = True
    for spec_d in cfg["specs"]:
        spec = SubsetParitySpec(**spec_d)
        sched = build_schedule(spec, params, check_cutoff=False)
        t = sched.timings
        tail = fock_tail(max_pointer_photons(spec, decay=cfg["noise"]), params.fock_cutoff)
        echo = ", ".join(f"q{q}={g:.1f} ns" for q, g in t["echo_separation_ns"].items())
        print(f"{spec.label}: T = {t['T_ns']:.1f} ns; echo separations: {echo or 'none'}")
        print(f"{spec.label}: pointer overlap exp(-Delta) = {t['overlap']:.3e} "
              f"(Delta = {t['delta']:.3f})")
        print(f"{spec.label}: Fock tail mass at cutoff {params.fock_cutoff} = {tail:.3e}")
        print(f"{spec.label}: estimated runtime ~{estimated_runtime(sched, cfg['noise']):.0f} s")
        if t["overlap"] > 1e-2:
            print(f"{spec.label}: WARNING pointer overlap {t['overlap']:.3g} > 1e-2")
        if tail > 1e-8:
            print(f"{spec.label}: FAIL Fock tail mass {tail:.3g} > 1e-8")
            ok = False
    print("validation passed" if ok else "validation failed")
    return EXIT_OK if ok else EXIT_CONFIG


# ---------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="parityprobe", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="simulate, tomograph and score every configured operator")
    r.add_argument("--config", required=True)
    r.add_argument("--out")
    r.add_argument("--seed", type=int)
    r.add_argument("--herald", choices=sorted(HERALD_CHOICES))
    rep = sub.add_parser("report", help="write CSV tables from a results directory")
    rep.add_argument("dir")
    rep.add_argument("--tables", help="output directory (default <dir>/tables)")
    v = sub.add_parser("validate", help="check schedules and truncation for a config")
    v.add_argument("--config", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            cfg = load_config(args.config, seed=args.seed, out=args.out, herald=args.herald)
            return cmd_run(cfg)
        if args.command == "report":
            return cmd_report(args.dir, args.tables)
        cfg = load_config(args.config)
        return cmd_validate(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
