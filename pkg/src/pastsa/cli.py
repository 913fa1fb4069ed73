"""Command-line front end: enhance, mix, eval, ssn, gain-curves, init-config.

Exit status: 0 success, 1 usage, 2 bad input (files, formats, configuration),
3 numerical failure.
"""

import argparse
import csv
import json
import sys

import numpy as np

from .config import PHASE_SOURCES, VARIANTS, EnhancerConfig
from .enhancer import enhance_spectrogram, phase_track_for
from .gains import GainContext, gain_phase_blind
from .metrics import MixSpec, gen_ssn, mix_at_snr, segmental_snr, stoi
from .phase import read_f0_csv, track_f0, write_f0_csv
from .stft import analyze, synthesize
from .wavio import read_wav, write_wav

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_NUMERICAL = 3

METRICS = {"stoi": stoi, "segsnr": segmental_snr}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; this CLI reserves 2 for bad input
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _load_config(args):
    config = EnhancerConfig.load(args.config) if getattr(args, "config", None) else EnhancerConfig()
    if getattr(args, "variant", None):
        config.variant = args.variant
    if getattr(args, "phase_source", None):
        config.phase_source = args.phase_source
    return config.validate()


def cmd_enhance(args):
    config = _load_config(args)
    x, rate = read_wav(args.input)
    if rate != config.sample_rate:
        raise ValueError(f"{args.input}: sample rate {rate} Hz, configuration expects {config.sample_rate} Hz")
    geom = config.geometry
    spec = analyze(x, geom)

    needs_clean = config.variant != "phase_blind" and config.phase_source == "oracle_file"
    clean_spec = None
    if needs_clean:
        if not args.clean:
            raise UsageError("phase_source 'oracle_file' needs --clean REFERENCE.wav")
        clean, clean_rate = read_wav(args.clean)
        if clean_rate != rate or clean.size != x.size:
            raise ValueError(f"{args.clean}: clean reference must match the input's rate and length")
        clean_spec = analyze(clean, geom)
    elif args.clean:
        print("note: --clean is ignored for this variant/phase source", file=sys.stderr)

    f0 = None
    if config.phase_source == "stftpi" and config.variant != "phase_blind":
        if args.f0_track:
            f0 = read_f0_csv(args.f0_track)
        else:
            f0 = track_f0(
                x, geom, config.f0_min, config.f0_max, config.voicing_threshold, config.f0_median_frames
            )
        if args.export_f0:
            write_f0_csv(args.export_f0, f0)
    elif args.f0_track or args.export_f0:
        print("note: f0 tracks are only used with phase_source 'stftpi'", file=sys.stderr)

    track = phase_track_for(config, spec, x, clean_spec, f0)
    result = enhance_spectrogram(spec, track, config, return_details=True)
    y = synthesize(result.spectrogram, x.size)
    write_wav(args.output, y, rate, args.format)

    report = {
        "input": args.input,
        "output": args.output,
        "frames": int(spec.n_frames),
        "samples": int(x.size),
        "sample_rate": int(rate),
        "variant": config.variant,
        "phase_source": config.phase_source,
        "mean_gain": float(np.mean(result.gains)),
        "config_hash": config.config_hash(),
    }
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(text + "\n")
    print(text)


def cmd_mix(args):
    clean, rate = read_wav(args.clean)
    noise, noise_rate = read_wav(args.noise)
    if noise_rate != rate:
        raise ValueError(f"sample rates differ: {rate} Hz vs {noise_rate} Hz")
    noisy = mix_at_snr(clean, noise, MixSpec(args.snr_db, args.level_mode, args.seed))
    write_wav(args.output, noisy, rate, args.format)


def cmd_eval(args):
    names = [m.strip() for m in args.metrics.split(",") if m.strip()]
    unknown = [m for m in names if m not in METRICS]
    if not names or unknown:
        raise UsageError(f"unknown metric(s) {', '.join(unknown) or '(none)'}; choose from {', '.join(METRICS)}")
    clean, rate = read_wav(args.clean)
    processed, rate2 = read_wav(args.processed)
    if rate != rate2:
        raise ValueError(f"sample rates differ: {rate} Hz vs {rate2} Hz")
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["metric", "value"])
    for name in names:
        writer.writerow([name, f"{METRICS[name](clean, processed, rate):.6f}"])


def cmd_ssn(args):
    refs = []
    rate = None
    for path in args.reference:
        x, r = read_wav(path)
        if rate is not None and r != rate:
            raise ValueError(f"{path}: sample rate {r} Hz differs from {rate} Hz")
        rate = r
        refs.append(x)
    length = int(round(args.seconds * rate))
    noise = gen_ssn(refs, length, seed=args.seed, fs=rate)
    # unit RMS would clip as 16-bit PCM; leave headroom
    write_wav(args.output, noise * args.rms, rate, args.format)


def gain_curves(alphas, betas, mu=1.0, zeta_db=0.0, lo_db=-20.0, hi_db=30.0, step_db=1.0):
    """Rows of (gamma-1 in dB, 20 log10 G per (alpha, beta)) for the phase-blind law."""
    inst_db = np.arange(lo_db, hi_db + 0.5 * step_db, step_db)
    gamma = 1.0 + 10.0 ** (inst_db / 10.0)
    zeta = 10.0 ** (zeta_db / 10.0)
    columns, values = [], []
    for a in alphas:
        for b in betas:
            g = gain_phase_blind(GainContext(zeta=zeta, gamma=gamma, mu=mu, alpha=a, beta=b))
            columns.append(f"alpha={a:g};beta={b:g}")
            values.append(20.0 * np.log10(g))
    return inst_db, columns, np.array(values).T


def cmd_gain_curves(args):
    config = _load_config(args)
    alphas = args.alphas or [config.alpha_low, 0.5 * (config.alpha_low + config.alpha_high), config.alpha_high]
    betas = args.betas or [config.beta_low]
    inst_db, columns, table = gain_curves(alphas, betas, config.mu, args.zeta_db)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["inst_snr_db"] + columns)
        for x, row in zip(inst_db, table):
            writer.writerow([f"{x:g}"] + [f"{v:.6f}" for v in row])
    finally:
        if out is not sys.stdout:
            out.close()


def cmd_init_config(args):
    EnhancerConfig().save(args.output)


def build_parser():
    parser = _Parser(prog="pastsa", description="Phase-aware Bayesian STSA speech enhancement.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("enhance", help="enhance a noisy mono WAV")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--config", help="JSON configuration (defaults if omitted)")
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--phase-source", choices=PHASE_SOURCES)
    p.add_argument("--clean", help="clean reference WAV for the oracle phase")
    p.add_argument("--f0-track", help="CSV f0 track to use instead of the built-in tracker")
    p.add_argument("--export-f0", help="write the f0 track used to this CSV")
    p.add_argument("--report", help="also write the JSON report to this file")
    p.add_argument("--format", choices=("float32", "int16"), default="float32")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("mix", help="mix clean speech and noise at a target SNR")
    p.add_argument("clean")
    p.add_argument("noise")
    p.add_argument("snr_db", type=float)
    p.add_argument("output")
    p.add_argument("--level-mode", choices=("active_level", "rms"), default="active_level")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("float32", "int16"), default="float32")
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("eval", help="objective scores of a processed file against its clean reference")
    p.add_argument("clean")
    p.add_argument("processed")
    p.add_argument("--metrics", default="stoi,segsnr")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ssn", help="speech-shaped noise from reference recordings")
    p.add_argument("reference", nargs="+")
    p.add_argument("--output", "-o", required=True)
    p.add_argument("--seconds", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rms", type=float, default=0.1)
    p.add_argument("--format", choices=("float32", "int16"), default="float32")
    p.set_defaults(func=cmd_ssn)

    p = sub.add_parser("gain-curves", help="phase-blind gain versus instantaneous SNR as CSV")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--alphas", type=_float_list)
    p.add_argument("--betas", type=_float_list)
    p.add_argument("--zeta-db", type=float, default=0.0)
    p.set_defaults(func=cmd_gain_curves)

    p = sub.add_parser("init-config", help="write the default configuration as JSON")
    p.add_argument("output")
    p.set_defaults(func=cmd_init_config)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        print(f"pastsa {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ArithmeticError as exc:
        print(f"pastsa {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, ValueError) as exc:
        print(f"pastsa {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
