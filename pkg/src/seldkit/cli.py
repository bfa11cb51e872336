"""Command-line entry point.

Subcommands: ``synth`` (dataset generation), ``eval`` (cross-validated
scoring), ``array-response`` (steering-vector inspection), ``features``
(front-end tensors), ``estimate-ir`` (least-squares IR estimation) and
``make-sources`` (procedural source bank). A JSON config file can supply
any synth option; explicit flags win over the file.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import array_model, dsp, eval_harness, scene_synth
from .core import Doa

log = logging.getLogger("seldkit")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; we use 1
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="seldkit",
                     description="Sound-scene synthesis and SELD evaluation toolkit")
    parser.add_argument("--seed", type=int, default=None,
                        help="master seed; a generated seed is printed when omitted")
    parser.add_argument("--jobs", type=int, default=1, help="parallel render workers")
    parser.add_argument("--quiet", action="store_true", help="suppress progress logging")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("synth", parents=[], help="generate a dataset")
    p.add_argument("--sources", required=True, help="source bank root (class subdirs of wavs)")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--config", default=None, help="JSON file with synth options (flags win)")
    p.add_argument("--dev", type=int, default=None, help="development recordings (default 400)")
    p.add_argument("--eval", type=int, default=None, help="evaluation recordings (default 100)")
    p.add_argument("--splits", type=int, default=None, help="cross-validation splits (default 4)")
    p.add_argument("--formats", default=None, help="comma list: foa,mic (default both)")
    p.add_argument("--duration", type=float, default=None, help="seconds per recording (default 60)")
    p.add_argument("--snr", type=float, default=None, help="event-to-ambience SNR dB (default 30)")
    p.add_argument("--events", default=None, help="events per recording as LO,HI (default 8,14)")

    p = sub.add_parser("eval", help="score estimate CSVs against references")
    p.add_argument("--ref", required=True, help="reference annotation directory")
    p.add_argument("--est", required=True, help="estimate annotation directory")
    p.add_argument("--manifest", required=True, help="dataset manifest.json")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--fold", type=int, default=None, help="score one fold's test split")
    mode.add_argument("--pooled", action="store_true", help="accumulate all folds (default)")
    mode.add_argument("--eval-set", action="store_true", help="score the split-0 evaluation pool")
    p.add_argument("--json", dest="json_out", default=None,
                   help="write the JSON report here ('-' for stdout instead of the table)")

    p = sub.add_parser("array-response", help="emit steering-vector gains as CSV")
    p.add_argument("--format", required=True, choices=list(array_model.FORMATS))
    p.add_argument("--az", type=float, required=True, help="azimuth in degrees")
    p.add_argument("--el", type=float, required=True, help="elevation in degrees")
    p.add_argument("--freqs", default="1000", help="comma list of frequencies in Hz")
    p.add_argument("--out", default=None, help="output CSV path (default stdout)")

    p = sub.add_parser("features", help="write magnitude+phase feature sequences")
    p.add_argument("--in", dest="input", required=True, help="input multichannel wav")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--stft-config", default=None, help="JSON {sample_rate,window_len,hop,dft_size}")
    p.add_argument("--seq-len", type=int, default=128, help="frames per sequence")

    p = sub.add_parser("estimate-ir", help="least-squares IR between excitation and recording")
    p.add_argument("--reference", required=True, help="known excitation wav")
    p.add_argument("--recording", required=True, help="recorded response wav")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--stft-config", default=None)

    p = sub.add_parser("make-sources", help="synthesize a procedural source bank")
    p.add_argument("--out", required=True, help="bank root directory")
    p.add_argument("--classes", type=int, default=11)
    p.add_argument("--examples", type=int, default=20)

    return parser


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    seed = int(np.random.SeedSequence().entropy % (2 ** 63))
    print(f"seed not given; using generated seed {seed}", file=sys.stderr)
    return seed


def _cmd_synth(args) -> int:
    options = {
        "n_dev_recordings": args.dev,
        "n_eval_recordings": args.eval,
        "n_splits": args.splits,
        "formats": tuple(args.formats.split(",")) if args.formats else None,
        "duration": args.duration,
        "snr_db": args.snr,
        "n_events": tuple(int(x) for x in args.events.split(",")) if args.events else None,
    }
    if args.config:
        file_options = json.loads(Path(args.config).read_text(encoding="utf-8"))
        unknown = set(file_options) - set(options)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key, value in file_options.items():
            if options[key] is None:
                options[key] = tuple(value) if key in ("formats", "n_events") else value
    options = {k: v for k, v in options.items() if v is not None}
    cfg = scene_synth.DatasetConfig(out_dir=args.out, **options)
    bank = scene_synth.SourceBank.from_directory(args.sources)
    seed = _resolve_seed(args)
    manifest = scene_synth.generate_dataset(cfg, bank, seed, jobs=max(1, args.jobs))
    print(f"wrote {len(manifest)} recordings to {args.out} (seed {seed})")
    return EXIT_OK


def _cmd_eval(args) -> int:
    if args.fold is not None:
        mode: str = "fold"
    elif args.eval_set:
        mode = "eval-set"
    else:
        mode = "pooled"
    report = eval_harness.evaluate_cv(args.ref, args.est, args.manifest,
                                      mode=mode, fold=args.fold)
    payload = json.dumps(report.to_json_dict(), indent=2)
    if args.json_out == "-":
        print(payload)
    else:
        print(f"scored {report.n_recordings} recordings ({mode})")
        if report.missing_estimates:
            print(f"  missing estimates ({len(report.missing_estimates)}): "
                  + ", ".join(report.missing_estimates))
        print(report.pooled.table())
        for fold_index in sorted(report.per_fold):
            print(f"fold {fold_index}:")
            print(report.per_fold[fold_index].table())
        if args.json_out:
            Path(args.json_out).write_text(payload + "\n", encoding="utf-8")
            print(f"wrote {args.json_out}")
    return EXIT_OK


def _cmd_array_response(args) -> int:
    doa = Doa.from_degrees(args.az, args.el)
    freqs = np.array([float(f) for f in args.freqs.split(",")])
    sv = array_model.steering_vectors(args.format, doa, freqs)
    labels = ([ch.label for ch in array_model.EIGENMIKE_TETRA.channels]
              if args.format == array_model.FORMAT_MIC else [1, 2, 3, 4])
    rows = [["format", "channel", "azimuth_deg", "elevation_deg", "freq_hz", "real", "imag"]]
    for c, label in enumerate(labels):
        for k, f in enumerate(freqs):
            rows.append([args.format, label, f"{args.az:.6f}", f"{args.el:.6f}",
                         f"{f:.6f}", f"{sv[c, k].real:.12g}", f"{sv[c, k].imag:.12g}"])
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerows(rows)
    else:
        csv.writer(sys.stdout).writerows(rows)
    return EXIT_OK


def _load_stft_config(path: str | None) -> dsp.StftConfig:
    if path is None:
        return dsp.StftConfig()
    return dsp.StftConfig.from_json(Path(path).read_text(encoding="utf-8"))


def _cmd_features(args) -> int:
    cfg = _load_stft_config(args.stft_config)
    audio, rate = dsp.read_wav(args.input)
    if rate != cfg.sample_rate:
        raise ValueError(f"{args.input}: sample rate {rate} != config {cfg.sample_rate}")
    tensor = dsp.feature_sequences(audio, cfg, seq_len=args.seq_len)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(args.input).stem
    bin_path = out_dir / f"{stem}.bin"
    tensor.tofile(bin_path)
    sidecar = {
        "shape": list(tensor.shape),
        "dtype": "float32",
        "layout": "sequences x (mag channels + phase channels) x frames x bins",
        "seq_len": args.seq_len,
        "stft": json.loads(cfg.to_json()),
    }
    (out_dir / f"{stem}.json").write_text(json.dumps(sidecar, indent=2) + "\n",
                                          encoding="utf-8")
    print(f"wrote {bin_path} shape {tensor.shape}")
    return EXIT_OK


def _cmd_make_sources(args) -> int:
    seed = _resolve_seed(args)
    scene_synth.procedural_bank(args.out, n_classes=args.classes,
                                examples_per_class=args.examples, seed=seed)
    print(f"wrote procedural bank to {args.out} (seed {seed})")
    return EXIT_OK


def _cmd_estimate_ir(args) -> int:
    cfg = _load_stft_config(args.stft_config)
    reference, ref_rate = dsp.read_wav(args.reference)
    recording, rec_rate = dsp.read_wav(args.recording)
    if ref_rate != rec_rate:
        raise ValueError(f"sample rates differ: {ref_rate} vs {rec_rate}")
    ir = dsp.estimate_ir_stft(reference[0], recording[0], cfg)
    freqs = cfg.bin_frequencies()
    flagged = set(ir.flagged_bins.tolist())
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin", "freq_hz", "real", "imag", "flagged"])
        for k, h in enumerate(ir.transfer):
            writer.writerow([k, f"{freqs[k]:.6f}", f"{h.real:.12g}", f"{h.imag:.12g}",
                             int(k in flagged)])
    print(f"wrote {args.out} ({len(ir.transfer)} bins, {len(flagged)} flagged)")
    return EXIT_OK


def run(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    handlers = {
        "synth": _cmd_synth,
        "eval": _cmd_eval,
        "array-response": _cmd_array_response,
        "features": _cmd_features,
        "estimate-ir": _cmd_estimate_ir,
        "make-sources": _cmd_make_sources,
    }
    try:
        return handlers[args.command](args)
    except SystemExit:
        raise
    except (ValueError, FileNotFoundError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except Exception as exc:  # runtime failure: render errors, IO mid-write
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_RUNTIME


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
