"""Command-line entry point: ``snn-hfo {calibrate,synth,detect,report}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from . import calibration as cal
from . import outcome, synth
from .detector import (compute_rates, read_rates_csv, write_events_csv,
                       write_rates_csv)
from .errors import EmptyCorpus, HfoError, MissingCalibration, NoAdmissibleConfig, RecordingFormatError
from .network import Network, NetworkConfig
from .pipeline import ChannelDetection, FrontendConfig, detect_channel
from .recording import Phase, Recording, open_recording

log = logging.getLogger("snn_hfo")

EXIT_OK = 0
EXIT_MISSING_CALIBRATION = 2
EXIT_BAD_INPUT = 3
EXIT_NO_ADMISSIBLE = 4

RECORDING_SUFFIXES = (".hfo", ".bin", ".csv")
CALIBRATION_FILE = "calibration.json"
BUILTIN = "builtin"


class BadInput(HfoError):
    pass


# --- configuration ----------------------------------------------------------

def load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    p = Path(path)
    try:
        return json.loads(p.read_text())
    except FileNotFoundError:
        raise BadInput(f"{p}: config file not found") from None
    except json.JSONDecodeError as exc:
        raise BadInput(f"{p}: invalid JSON ({exc})") from None


def frontend_from(args, config: dict) -> FrontendConfig:
    fe = FrontendConfig.from_dict(config)
    if args.filter_order is not None:
        fe = replace(fe, order=args.filter_order)
    if args.baseline_mode is not None:
        fe = replace(fe, baseline_mode=args.baseline_mode)
    return fe


def network_base(config: dict, seed: int) -> NetworkConfig:
    base = NetworkConfig.from_dict(config["network"]) if "network" in config else NetworkConfig()
    return replace(base, poisson_seed=seed)


def builtin_calibration_path() -> Path:
    return Path(__file__).with_name("data") / "default_calibration.json"


def resolve_calibration(args) -> Path:
    if args.calibration == BUILTIN:
        return builtin_calibration_path()
    if args.calibration:
        p = Path(args.calibration)
    else:
        p = Path(args.out) / CALIBRATION_FILE
    if not p.exists():
        raise MissingCalibration(f"{p}: calibration file not found; run 'snn-hfo calibrate' first")
    return p


# --- calibrate --------------------------------------------------------------

def cmd_calibrate(args) -> int:
    config = load_config(args.config)
    frontend = frontend_from(args, config)
    base = network_base(config, args.seed)
    grid = cal.DEFAULT_GRID
    if args.grid:
        grid = cal.CalibrationGrid.from_dict(load_config(args.grid))
    elif "calibration_grid" in config:
        grid = cal.CalibrationGrid.from_dict(config["calibration_grid"])
    corpus = synth.generate_corpus(args.n_hfo, args.n_transient, args.seed, n_noise=args.n_noise)
    try:
        result = cal.calibrate_unknowns(corpus, grid, base, frontend)
    except NoAdmissibleConfig as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return EXIT_NO_ADMISSIBLE
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = cal.save_calibration(result, out / CALIBRATION_FILE)
    r = result.report
    print(f"grid cell {result.grid_index + 1} of {grid.size}: {json.dumps(result.point, sort_keys=True)}")
    print(f"HFO {r.hfo_detected}/{r.n_hfo} detected, transients {r.transient_detected}/{r.n_transient}, "
          f"GI silenced on {r.hfo_silenced}/{r.n_hfo}")
    print(f"wrote {path}")
    return EXIT_OK


# --- synth ------------------------------------------------------------------

def cmd_synth(args) -> int:
    out = Path(args.out)
    if args.cohort:
        synth.write_cohort(out, outcome.REFERENCE_PRE_MAX, outcome.REFERENCE_POST_MAX, outcome.REFERENCE_ILAE,
                           seed=args.seed, duration=args.duration, n_channels=args.channels)
        print(f"wrote synthetic cohort of {len(outcome.REFERENCE_ILAE)} patients to {out}")
        return EXIT_OK
    corpus = synth.generate_corpus(args.n_hfo, args.n_transient, args.seed, n_noise=args.n_noise)
    path = synth.write_corpus(corpus, out)
    print(f"wrote {len(corpus)} snippets and {path}")
    return EXIT_OK


# --- detect -----------------------------------------------------------------

def discover_recordings(input_dir: Path) -> List[Path]:
    if not input_dir.is_dir():
        raise BadInput(f"{input_dir}: not a directory")
    files = sorted(p for p in input_dir.iterdir()
                   if p.suffix.lower() in RECORDING_SUFFIXES and p.name != "outcomes.csv")
    if not files:
        raise BadInput(f"{input_dir}: no recordings found")
    return files


def _detect_task(task) -> ChannelDetection:
    samples, rate, label, net_cfg, frontend, excluded, seed = task
    return detect_channel(samples, rate, label, Network(net_cfg), frontend, excluded, seed)


def run_detection(recordings: Sequence[Recording], net_cfg: NetworkConfig, frontend: FrontendConfig,
                  seed: int, workers: int = 1) -> List[Tuple[Recording, List[ChannelDetection]]]:
    """Detect on every non-excluded channel.

    Channel ``i`` (in recording order, then channel order) drives its global
    inhibitory neuron with Poisson seed ``seed ^ i``, so results do not depend
    on ``workers``.
    """
    tasks, owners = [], []
    idx = 0
    for r, rec in enumerate(recordings):
        for ch in rec.channels:
            if ch.excluded:
                continue
            tasks.append((ch.samples, rec.sample_rate, ch.label, net_cfg, frontend,
                          tuple(rec.intervals_for(ch.label)), seed ^ idx))
            owners.append(r)
            idx += 1
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_detect_task, tasks))
    else:
        results = [_detect_task(t) for t in tasks]
    grouped: List[List[ChannelDetection]] = [[] for _ in recordings]
    for r, det in zip(owners, results):
        grouped[r].append(det)
    return list(zip(recordings, grouped))


def cmd_detect(args) -> int:
    config = load_config(args.config)
    frontend = frontend_from(args, config)
    try:
        cal_path = resolve_calibration(args)
    except MissingCalibration as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_CALIBRATION
    try:
        calibration = cal.load_calibration(cal_path)
    except Exception as exc:  # schema or JSON failure
        print(f"error: {cal_path}: invalid calibration ({exc})", file=sys.stderr)
        return EXIT_BAD_INPUT
    net_cfg = network_base(config, args.seed).with_calibration(calibration)

    input_dir = Path(args.input)
    files = discover_recordings(input_dir)
    recordings = []
    for f in files:
        try:
            recordings.append(open_recording(f))
        except RecordingFormatError:
            raise
        except (ValueError, OSError) as exc:
            raise BadInput(f"{f}: {exc}") from exc
    outcomes_path = Path(args.outcomes) if args.outcomes else input_dir / "outcomes.csv"
    outcomes = None
    if outcomes_path.exists():
        try:
            outcomes = outcome.read_outcomes(outcomes_path)
        except (KeyError, ValueError) as exc:
            raise BadInput(f"{outcomes_path}: {exc}") from exc
    elif args.outcomes:
        raise BadInput(f"{outcomes_path}: outcome file not found")

    results = run_detection(recordings, net_cfg, frontend, args.seed, args.workers)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    events_path, rates_path = out / "events.csv", out / "rates.csv"
    write_events_csv(events_path, [], "", "")
    write_rates_csv(rates_path, [], "", "")
    post_max: Dict[str, float] = {}
    post_minutes: Dict[str, float] = {}
    for rec, dets in results:
        for d in dets:
            write_events_csv(events_path, d.events, rec.patient_id, rec.phase.value, append=True)
        if not dets:
            continue
        reports = compute_rates({d.label: d.events for d in dets},
                                {d.label: d.analyzed_duration / 60.0 for d in dets})
        write_rates_csv(rates_path, reports, rec.patient_id, rec.phase.value, append=True)
        if rec.phase is Phase.POST:
            post_max[rec.patient_id] = max(post_max.get(rec.patient_id, 0.0), max(r.rate for r in reports))
            post_minutes[rec.patient_id] = min(r.analyzed_duration for r in reports)

    if outcomes is not None:
        preds = []
        for pid in sorted(outcomes):
            if pid not in post_max:
                log.warning("patient %s has no post-resection recording; skipped", pid)
                continue
            preds.append(outcome.evaluate_patient(outcomes[pid], [post_max[pid]], post_minutes[pid]))
        if preds:
            ci = config.get("outcome", {})
            report = outcome.cohort_report(preds, float(ci.get("ci_level", 0.95)),
                                           ci.get("ci_method", "clopper-pearson"))
            outcome.write_cohort_json(out / "cohort.json", report)
            m = report["metrics"]
            print(f"accuracy {m['accuracy']:.3f} CI [{m['accuracy_ci'][0]:.4f}, {m['accuracy_ci'][1]:.4f}] "
                  f"(TP {m['tp']} TN {m['tn']} FP {m['fp']} FN {m['fn']})")
    n_events = sum(len(d.events) for _, dets in results for d in dets)
    print(f"{n_events} events on {sum(len(d) for _, d in results)} channels; reports in {out}")
    return EXIT_OK


# --- report -----------------------------------------------------------------

def _read_events(path: Path) -> List[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def cmd_report(args) -> int:
    out = Path(args.out)
    rates_path = out / "rates.csv"
    if not rates_path.exists():
        raise BadInput(f"{rates_path}: not found; run 'snn-hfo detect' first")
    rows = read_rates_csv(rates_path)
    events = _read_events(out / "events.csv") if (out / "events.csv").exists() else []

    with open(out / "rate_bars.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["patient", "phase", "channel", "rate_per_min", "residual"])
        for r in rows:
            w.writerow([r["patient"], r["phase"], r["channel"], repr(r["rate_per_min"]),
                        int(r["rate_per_min"] >= outcome.RESIDUAL_THRESHOLD)])
    frontend = frontend_from(args, load_config(args.config))
    with open(out / "event_windows.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["patient", "phase", "channel", "start_s", "end_s", "f_low_hz", "f_high_hz"])
        for e in events:
            w.writerow([e["patient"], e["phase"], e["channel"], e["start_s"], e["end_s"],
                        repr(frontend.low_hz), repr(frontend.high_hz)])

    per_patient: Dict[str, Dict[str, float]] = {}
    for r in rows:
        d = per_patient.setdefault(r["patient"], {"pre": 0.0, "post": 0.0})
        d[r["phase"]] = max(d.get(r["phase"], 0.0), r["rate_per_min"])
    max_rows = [{"patient": p, "pre": v["pre"], "post": v["post"]} for p, v in sorted(per_patient.items())]
    with open(out / "max_rates.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["patient", "pre_max_rate", "post_max_rate"])
        for m in max_rows:
            w.writerow([m["patient"], repr(m["pre"]), repr(m["post"])])

    written = ["rate_bars.csv", "event_windows.csv", "max_rates.csv"]
    if not args.no_figures:
        from . import plots
        plots.plot_channel_rates(rows, out / "channel_rates.png")
        plots.plot_cohort(max_rows, out / "cohort_rates.png")
        written += ["channel_rates.png", "cohort_rates.png"]
    print("wrote " + ", ".join(written))
    return EXIT_OK


# --- argument parsing -------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    common.add_argument("--workers", type=int, default=1, help="channel worker processes")
    common.add_argument("--filter-order", type=int, default=None, help="band-pass order")
    common.add_argument("--baseline-mode", choices=("static", "rolling"), default=None)
    common.add_argument("--out", default="out", help="output directory")

    p = argparse.ArgumentParser(prog="snn-hfo", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("calibrate", parents=[common], help="resolve the free neuron constants")
    c.add_argument("--n-hfo", type=int, default=11)
    c.add_argument("--n-transient", type=int, default=11)
    c.add_argument("--n-noise", type=int, default=4)
    c.add_argument("--grid", help="JSON file with one list of values per grid axis")
    c.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("synth", parents=[common], help="write a labeled snippet corpus or a pseudo-cohort")
    s.add_argument("--n-hfo", type=int, default=11)
    s.add_argument("--n-transient", type=int, default=11)
    s.add_argument("--n-noise", type=int, default=0)
    s.add_argument("--cohort", action="store_true", help="write eight pseudo-patients instead")
    s.add_argument("--duration", type=float, default=210.0, help="cohort recording length in seconds (default 210)")
    s.add_argument("--channels", type=int, default=2, help="channels per cohort recording")
    s.set_defaults(func=cmd_synth)

    d = sub.add_parser("detect", parents=[common], help="detect HFOs and predict outcomes")
    d.add_argument("--input", required=True, help="directory of recordings (.hfo, .bin or .csv)")
    d.add_argument("--calibration", help=f"calibration JSON, or '{BUILTIN}' for the shipped one "
                                         f"(default <out>/{CALIBRATION_FILE})")
    d.add_argument("--outcomes", help="outcome CSV (default <input>/outcomes.csv when present)")
    d.set_defaults(func=cmd_detect)

    r = sub.add_parser("report", parents=[common], help="plot-ready exports and figures")
    r.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    r.set_defaults(func=cmd_report)
    return p


def _setup_logging() -> None:
    level = os.environ.get("HFO_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_BAD_INPUT
    try:
        return args.func(args)
    except (BadInput, RecordingFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except EmptyCorpus as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
