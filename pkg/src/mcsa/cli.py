"""``mcsa`` command-line entry point.

Exit codes: 0 success, 1 a check ran and failed (sideband table mismatch),
2 usage or input error, 3 numeric divergence during training.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from . import __version__
from .ann import (
    TrainConfig,
    accuracy,
    classify,
    init_model,
    load_model,
    save_model,
    split_dataset,
    train,
)
from .daq import AdcConfig, Channel, ConditioningChain, capture, read_capture, write_capture
from .errors import DivergenceError, McsaError
from .features import (
    DEFAULT_FEATURE_K,
    extract_features,
    fixture_case,
    format_fixtures,
    grid_from_fixture,
    load_fixtures,
    reference_cases,
    build_dataset,
    read_dataset,
    write_dataset,
)
from .motor import (
    Component,
    REFERENCE_MOTOR,
    FaultLabel,
    FaultSignature,
    MotorParams,
    SlipState,
    compute_slip,
    fault_from_tables,
    read_waveform,
    synthesize,
    write_waveform,
)
from .sidebands import NSchedule, broken_bar_sidebands, flux_harmonics, format_grid, match_table
from .spectrum import Window, measure_peak, transform, write_spectrum

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2, 3


class UsageError(Exception):
    """Flag-level validation failure, reported with exit code 2."""


# -- helpers ---------------------------------------------------------------

def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(output, args, inputs=()) -> Path:
    """Write ``<output>.manifest.json`` describing how ``output`` was made."""
    params = [[k, v] for k, v in sorted(vars(args).items()) if k not in ("func", "inputs_")]
    manifest = {
        "command": args.command,
        "parameters": params,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "tool_version": __version__,
    }
    path = Path(str(output) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    return path


def _k_list(text: str) -> list[int]:
    try:
        return [int(k) for k in text.split(",") if k]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _schedule(text: str) -> NSchedule:
    try:
        return NSchedule.parse(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"unknown schedule {text!r}") from None


def _window(text: str) -> Window:
    try:
        return Window.parse(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"unknown window {text!r}") from None


def _component(text: str) -> Component:
    parts = text.split(":")
    try:
        values = [float(p) for p in parts]
        return Component(*values)
    except (ValueError, TypeError, McsaError):
        raise argparse.ArgumentTypeError(f"expected FREQ:AMP[:PHASE], got {text!r}") from None


def _motor(f1: float, ns: float | None, p: int | None, flag: str = "--ns") -> MotorParams:
    if p is None:
        if ns is None:
            p = 1
        else:
            ratio = 60.0 * f1 / ns
            if ratio < 1 or abs(ratio - round(ratio)) > 1e-9:
                raise UsageError(f"{flag} {ns} is not 60*f/p for an integer p at f={f1} Hz")
            p = int(round(ratio))
    try:
        return MotorParams.from_nameplate(p, f1, 2.2, 9.0)
    except McsaError as exc:
        raise UsageError(str(exc)) from None


def _slip_from_flags(args, params: MotorParams) -> float:
    if args.s is not None:
        return args.s
    if args.nr is None:
        raise UsageError("give --s or both --ns and --nr")
    try:
        return compute_slip(params, args.nr).slip
    except McsaError as exc:
        raise UsageError(f"--nr: {exc}") from None


def _format_sci(x: float, digits: int = 7) -> str:
    mant, exp = f"{x:.{digits - 1}e}".split("e")
    return f"{mant}e{int(exp)}"


def _fmt_short(x: float, digits: int = 5) -> str:
    return format(float(x), f".{digits}g")


def _grid_k(args) -> list[int]:
    return list(range(1, args.k_max + 1, 2))


# -- commands --------------------------------------------------------------

def cmd_synth(args) -> int:
    params = _motor(args.f1, args.ns, args.p)
    nr = params.sync_speed_rpm if args.nr is None else args.nr
    try:
        slip = compute_slip(params, nr)
    except McsaError as exc:
        raise UsageError(f"--nr: {exc}") from None
    fixtures_path = args.fixtures
    inputs = []
    if args.fault == "healthy":
        fault = FaultSignature.healthy()
    elif args.fault in ("ten_turns", "thirty_turns"):
        fault = fault_from_tables(args.fault, load_fixtures(fixtures_path))
        if fixtures_path:
            inputs.append(fixtures_path)
    elif args.fault == "broken_bar":
        grid = broken_bar_sidebands(slip.slip, params.supply_freq_hz, args.bb_orders)
        fault = FaultSignature(
            FaultLabel.BROKEN_BAR, [Component(e.freq_hz, args.bb_amp) for e in grid.entries]
        )
    else:
        if not args.component:
            raise UsageError("--fault custom needs at least one --component FREQ:AMP[:PHASE]")
        fault = FaultSignature(FaultLabel(args.label), args.component)
    try:
        w = synthesize(params, slip, fault, args.amp, args.fs, args.n, args.noise, args.seed)
    except McsaError as exc:
        raise UsageError(f"--fs: {exc}") from None
    write_waveform(w, args.out)
    write_manifest(args.out, args, inputs)
    print(f"wrote {len(w)} samples at {_fmt_short(args.fs, 9)} Hz to {args.out}")
    return EXIT_OK


def cmd_sidebands(args) -> int:
    params = _motor(args.f, args.ns, args.p if args.ns is None else None)
    if args.ns is not None and params.pole_pairs != args.p:
        raise UsageError(f"--ns {args.ns} implies p={params.pole_pairs}, but --p is {args.p}")
    slip = _slip_from_flags(args, params)
    try:
        if args.family == "broken_bar":
            grid = broken_bar_sidebands(slip, args.f, range(1, args.orders + 1))
        else:
            grid = flux_harmonics(slip, args.p, args.f, _grid_k(args), args.schedule)
    except McsaError as exc:
        raise UsageError(f"--s: {exc}") from None

    if args.match_case is None:
        text = format_grid(grid)
        status = EXIT_OK
    else:
        table = fixture_case(load_fixtures(args.fixtures), args.match_case)
        report = match_table(grid, table, args.tol)
        text = report.to_csv()
        print(
            f"{report.pass_count}/{len(report.rows)} rows within {args.tol} Hz of {args.match_case}",
            file=sys.stderr,
        )
        status = EXIT_OK if report.all_passed else EXIT_CHECK_FAILED
    if args.out:
        Path(args.out).write_text(text)
        write_manifest(args.out, args, [args.fixtures] if args.fixtures else [])
    else:
        sys.stdout.write(text)
    return status


def cmd_analyze(args) -> int:
    try:
        w = read_waveform(args.inp)
    except OSError as exc:
        raise UsageError(f"--in: cannot read {args.inp}: {exc.strerror}") from None
    spec = transform(w, args.window, args.n_fft)

    if args.grid_from == "fixture":
        table = fixture_case(load_fixtures(args.fixtures), args.case)
        grid = grid_from_fixture(table, args.k)
    else:
        params = _motor(args.f, args.ns, args.p if args.ns is None else None)
        grid = flux_harmonics(_slip_from_flags(args, params), params.pole_pairs, args.f, args.k, args.schedule)
    try:
        features = extract_features(spec, grid, args.normalize)
    except McsaError as exc:
        raise UsageError(f"--in: {exc}") from None

    prefix = args.out_prefix
    outputs = {
        "spectrum": Path(f"{prefix}.spectrum.csv"),
        "features": Path(f"{prefix}.features.csv"),
        "peaks": Path(f"{prefix}.peaks.csv"),
        "summary": Path(f"{prefix}.summary.txt"),
    }
    write_spectrum(spec, outputs["spectrum"])
    write_dataset([features], outputs["features"])

    peak_lines = ["k,branch,target_hz,found_hz,bin_offset,amplitude,feature"]
    for e, value in zip(grid.entries, features.values):
        pk = measure_peak(spec, e.freq_hz)
        peak_lines.append(
            f"{e.k},{e.branch.value},{e.freq_hz:.6f},{pk.found_hz:.6f},{pk.bin_offset},"
            f"{format(pk.amplitude, '.17g')},{format(float(value), '.17g')}"
        )
    outputs["peaks"].write_text("\n".join(peak_lines) + "\n")

    fundamental = measure_peak(spec, grid.supply_freq_hz).amplitude
    summary = {
        "n_samples": str(len(w)),
        "fs_hz": _fmt_short(w.sample_rate_hz, 9),
        "ts_s": _format_sci(1.0 / w.sample_rate_hz),
        "duration_s": _fmt_short(w.duration_s, 9),
        "n_fft": str(spec.n_fft),
        "bin_hz": _fmt_short(spec.bin_hz),
        "window": spec.window.value,
        "grid": grid.case_label,
        "fundamental_amplitude": _fmt_short(fundamental, 9),
    }
    text = "".join(f"{k}={v}\n" for k, v in summary.items())
    outputs["summary"].write_text(text)
    for path in outputs.values():
        write_manifest(path, args, [args.inp])
    sys.stdout.write(text)
    return EXIT_OK


def cmd_dataset(args) -> int:
    fixtures = load_fixtures(args.fixtures)
    cases = reference_cases(fixtures)
    if args.broken_bar:
        slip = SlipState.from_slip(REFERENCE_MOTOR, cases[-1][1].slip)
        grid = broken_bar_sidebands(slip.slip, REFERENCE_MOTOR.supply_freq_hz, (1, 2))
        cases.append(
            (FaultSignature(FaultLabel.BROKEN_BAR, [Component(e.freq_hz, 0.05) for e in grid.entries]), slip)
        )
    data = build_dataset(
        cases, args.per_case, args.noise, args.seed,
        k_values=args.k, schedule=args.schedule, n_samples=args.n, sample_rate_hz=args.fs,
    )
    write_dataset(data, args.out)
    write_manifest(args.out, args, [args.fixtures] if args.fixtures else [])
    print(f"wrote {len(data)} vectors of width {len(args.k) * 2} to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    try:
        data = read_dataset(args.data)
    except OSError as exc:
        raise UsageError(f"--data: cannot read {args.data}: {exc.strerror}") from None
    if not data:
        raise UsageError("--data holds no vectors")
    present = {v.label for v in data}
    labels = [lbl for lbl in FaultLabel if lbl in present]
    train_set, test_set = split_dataset(data, args.test_fraction, args.seed)
    model = init_model([len(data[0]), args.hidden, len(labels)], args.activation, args.seed, labels)
    cfg = TrainConfig(args.lr, args.epochs, min(args.batch_size, len(train_set)), args.seed, args.l2)
    try:
        model, history = train(model, train_set, cfg)
    except DivergenceError as exc:
        print(f"error: training diverged at epoch {exc.epoch}", file=sys.stderr)
        return EXIT_DIVERGED
    save_model(model, args.out)
    loss_path = Path(args.loss_out or f"{args.out}.loss.csv")
    loss_path.write_text("epoch,loss\n" + "".join(f"{i},{format(v, '.17g')}\n" for i, v in enumerate(history, 1)))
    for path in (args.out, loss_path):
        write_manifest(path, args, [args.data])
    print(f"train_accuracy={accuracy(model, train_set):.4f}")
    print(f"test_accuracy={accuracy(model, test_set):.4f}")
    print(f"final_loss={history[-1]:.6g}")
    return EXIT_OK


def cmd_classify(args) -> int:
    try:
        model = load_model(args.model)
        data = read_dataset(args.features)
    except OSError as exc:
        raise UsageError(f"cannot read input: {exc}") from None
    lines = ["label,confidence,uncertain_flag"]
    for v in data:
        if len(v) != model.n_inputs:
            raise UsageError(f"--features: width {len(v)} does not match model input {model.n_inputs}")
        c = classify(model, v, args.threshold)
        lines.append(f"{c.label.value},{c.confidence:.6f},{int(c.uncertain)}")
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_daq(args) -> int:
    try:
        if args.daq_command == "encode":
            w = read_waveform(args.inp)
            chain = ConditioningChain(Channel(args.channel))
            cap = capture(w, chain, AdcConfig(), hold_rate_hz=args.hold_rate)
            write_capture(cap, args.out)
            print(f"captured {len(cap.codes)} codes on channel {cap.channel_select}, "
                  f"{cap.saturated} saturated")
        else:
            cap = read_capture(args.inp)
            write_waveform(cap.to_volts(), args.out)
            print(f"decoded {len(cap.codes)} codes to {args.out}")
    except OSError as exc:
        raise UsageError(f"--in: cannot read {args.inp}: {exc.strerror}") from None
    write_manifest(args.out, args, [args.inp])
    return EXIT_OK


def cmd_fixtures(args) -> int:
    if args.check:
        text = Path(args.check).read_text()
        tables = load_fixtures(args.check)
        canonical = format_fixtures(tables) == text
        for t in tables:
            print(f"{t.case_id}: {len(t.rows)} rows, slip={t.meta.slip!r}")
        print(f"canonical={str(canonical).lower()}")
        return EXIT_OK if canonical else EXIT_CHECK_FAILED
    text = format_fixtures(load_fixtures())
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcsa", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize a stator-current waveform (WFM-CSV)")
    p.add_argument("--f1", type=float, default=50.0, help="supply frequency, Hz")
    p.add_argument("--ns", type=float, help="synchronous speed, rpm (default 60*f1/p)")
    p.add_argument("--p", type=int, help="pole pairs (derived from --ns when omitted)")
    p.add_argument("--nr", type=float, help="rotor speed, rpm (default synchronous)")
    p.add_argument("--fault", choices=["healthy", "ten_turns", "thirty_turns", "broken_bar", "custom"],
                   default="healthy")
    p.add_argument("--component", type=_component, action="append",
                   help="custom fault component FREQ:AMP[:PHASE]; repeatable")
    p.add_argument("--label", default="inter_turn_minor", choices=[x.value for x in FaultLabel if x.value != "healthy"],
                   help="label for --fault custom")
    p.add_argument("--bb-amp", type=float, default=0.05, help="broken-bar sideband amplitude")
    p.add_argument("--bb-orders", type=_k_list, default=[1], help="broken-bar sideband orders")
    p.add_argument("--amp", type=float, default=1.0, help="fundamental amplitude")
    p.add_argument("--fs", type=float, default=3250.0)
    p.add_argument("--n", type=int, default=390)
    p.add_argument("--noise", type=float, default=0.0, help="Gaussian noise sigma")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fixtures", help="fixture file (default: shipped tables)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sidebands", help="predict sideband grids and match them against the tables")
    p.add_argument("--s", type=float, help="slip")
    p.add_argument("--ns", type=float)
    p.add_argument("--nr", type=float)
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--f", type=float, default=50.0)
    p.add_argument("--k-max", type=int, default=21)
    p.add_argument("--schedule", type=_schedule, default=NSchedule.FIXED_ONE,
                   help="n1|fixed_one or half|half_k_plus_one")
    p.add_argument("--family", choices=["flux", "broken_bar"], default="flux")
    p.add_argument("--orders", type=int, default=1, help="broken-bar orders 1..N")
    p.add_argument("--match-case", choices=["ten_turns", "thirty_turns"])
    p.add_argument("--tol", type=float, default=1.0)
    p.add_argument("--fixtures")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sidebands)

    p = sub.add_parser("analyze", help="spectrum, sampling summary and sideband features of a waveform")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--window", type=_window, default=Window.HANN, help="hann or rect")
    p.add_argument("--n-fft", type=int)
    p.add_argument("--grid-from", choices=["flags", "fixture"], default="fixture")
    p.add_argument("--case", choices=["ten_turns", "thirty_turns"], default="thirty_turns")
    p.add_argument("--k", type=_k_list, default=list(DEFAULT_FEATURE_K))
    p.add_argument("--s", type=float)
    p.add_argument("--ns", type=float)
    p.add_argument("--nr", type=float)
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--f", type=float, default=50.0)
    p.add_argument("--schedule", type=_schedule, default=NSchedule.FIXED_ONE)
    p.add_argument("--normalize", choices=["none", "by_fundamental"], default="by_fundamental")
    p.add_argument("--fixtures")
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("dataset", help="generate a labelled feature dataset from synthetic captures")
    p.add_argument("--per-case", type=int, default=100)
    p.add_argument("--noise", type=float, default=0.02)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--k", type=_k_list, default=list(DEFAULT_FEATURE_K))
    p.add_argument("--schedule", type=_schedule, default=NSchedule.FIXED_ONE)
    p.add_argument("--fs", type=float, default=3250.0)
    p.add_argument("--n", type=int, default=3900)
    p.add_argument("--broken-bar", action="store_true", help="add a broken_bar class")
    p.add_argument("--fixtures")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("train", help="train the feed-forward classifier")
    p.add_argument("--data", required=True)
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--activation", choices=["sigmoid", "tanh"], default="sigmoid")
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--l2", type=float, default=0.0)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.add_argument("--loss-out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="classify feature vectors with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--threshold", type=float, default=0.6)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("daq", help="emulate the acquisition board and its nibble protocol")
    daq = p.add_subparsers(dest="daq_command", required=True)
    e = daq.add_parser("encode", help="waveform (physical units) -> DAQ-CAP capture")
    e.add_argument("--in", dest="inp", required=True)
    e.add_argument("--channel", choices=[c.value for c in Channel], default="current")
    e.add_argument("--hold-rate", type=float)
    e.add_argument("--out", required=True)
    d = daq.add_parser("decode", help="DAQ-CAP capture -> waveform in volts")
    d.add_argument("--in", dest="inp", required=True)
    d.add_argument("--out", required=True)
    p.set_defaults(func=cmd_daq)

    p = sub.add_parser("fixtures", help="print, export or check the harmonic tables")
    p.add_argument("--out")
    p.add_argument("--check", help="validate a fixture file and report whether it is canonical")
    p.set_defaults(func=cmd_fixtures)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.exit(EXIT_USAGE, f"mcsa {args.command}: error: {exc}\n")
    except McsaError as exc:
        parser.exit(EXIT_USAGE, f"mcsa {args.command}: error: {exc}\n")


if __name__ == "__main__":
    sys.exit(main())
