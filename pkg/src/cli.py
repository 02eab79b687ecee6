"""
Command Line Interface
``asd`` subcommands: train, eval, score, features, attention-stats, params, gradcheck
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .core.config import RuntimeSettings, load_config
from .core.errors import AsdError, GradCheckError, UsageError
from .core.gradcheck import run_gradcheck_suite
from .core.logging_config import configure_logging
from .core.tensor import no_grad
from .data.dataset import LabelVocab, Split, load_clips, scan_dataset
from .data.wav import decode_wav, fit_length
from .dsp.container import write_container
from .dsp.frontend import LogMelExtractor
from .evaluation.attention import attention_statistics, export_attention, relevant_bands
from .evaluation.params import ablation_variants, count_parameters, expected_parameter_count
from .evaluation.report import evaluate_dataset, write_report
from .evaluation.scoring import anomaly_score, classification_accuracy
from .modules.detector import build_detector
from .training.checkpoint import detector_from_checkpoint, load_checkpoint
from .training.trainer import EpochLogCallback, save_training_run, train

logger = logging.getLogger(__name__)


class AsdArgumentParser(argparse.ArgumentParser):
    """Argument errors become UsageError (exit 1)"""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def _vocab_of(checkpoint) -> LabelVocab:
    if not checkpoint.vocab:
        raise UsageError("checkpoint carries no label vocabulary")
    return LabelVocab.from_labels(checkpoint.vocab)


def cmd_train(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    index, vocab = scan_dataset(args.data)
    clips = load_clips(index.select(Split.TRAIN), vocab, config.framing, workers=args.workers)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    log_path = out.with_name(f"{out.stem}.log.jsonl")
    with open(log_path, "w", encoding="utf-8") as log_stream:
        result = train(clips, config, vocab, callbacks=[EpochLogCallback(log_stream)])
    last_path, best_path = save_training_run(result, out)

    detector = detector_from_checkpoint(result.last)
    accuracy = classification_accuracy(detector, clips)
    final = result.history[-1]
    print(f"epochs={final.epoch} loss={final.loss:.6f} train_accuracy={accuracy:.4f}")
    print(f"last={last_path} best={best_path} log={log_path}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    checkpoint = load_checkpoint(args.ckpt)
    detector = detector_from_checkpoint(checkpoint)
    vocab = _vocab_of(checkpoint)
    index, _ = scan_dataset(args.data)
    clips = load_clips(index.select(Split.TEST), vocab, detector.config.framing, workers=args.workers)
    report = evaluate_dataset(detector, clips, max_fpr=detector.config.evaluation.max_fpr)
    write_report(report, args.report)

    for machine_type, pair in report.machine_types.items():
        print(f"{machine_type}\tAUC={pair.auc:.4f}\tpAUC={pair.pauc:.4f}")
    if report.overall is not None:
        print(f"overall\tAUC={report.overall.auc:.4f}\tpAUC={report.overall.pauc:.4f}")
    return 0


def cmd_score(args: argparse.Namespace) -> int:
    checkpoint = load_checkpoint(args.ckpt)
    detector = detector_from_checkpoint(checkpoint)
    label = _vocab_of(checkpoint).parse(args.label)
    framing = detector.config.framing
    waveform = decode_wav(args.wav, framing.sample_rate)
    samples = fit_length(waveform.samples, framing.n_samples)
    print(f"{anomaly_score(detector, samples, label):.8f}")
    return 0


def cmd_features(args: argparse.Namespace) -> int:
    if args.ckpt:
        detector = detector_from_checkpoint(load_checkpoint(args.ckpt))
        framing = detector.config.framing
        samples = fit_length(decode_wav(args.wav, framing.sample_rate).samples, framing.n_samples)
        detector.eval()
        with no_grad():
            stack = detector.features(samples[None, :]).stack.data[0]
        path = write_container(args.out, stack)
    else:
        framing = load_config(args.config).framing
        samples = fit_length(decode_wav(args.wav, framing.sample_rate).samples, framing.n_samples)
        path = write_container(args.out, LogMelExtractor(framing)(samples))
    print(f"wrote {path}")
    return 0


def cmd_attention_stats(args: argparse.Namespace) -> int:
    checkpoint = load_checkpoint(args.ckpt)
    detector = detector_from_checkpoint(checkpoint)
    index, _ = scan_dataset(args.data)
    clips = load_clips(index.select(Split(args.split)), _vocab_of(checkpoint), detector.config.framing,
                       workers=args.workers)
    stats = attention_statistics(detector, clips.waveforms)
    written = export_attention(stats, args.out)
    for band in relevant_bands(stats):
        kind = "emphasized" if band.emphasized else "suppressed"
        print(f"{band.low_hz:.0f}-{band.high_hz:.0f} Hz\t{kind}\tmean={band.mean:.3f}")
    print(f"wrote {len(written)} files to {args.out}")
    return 0


def cmd_params(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    report = count_parameters(build_detector(config))
    expected = expected_parameter_count(config)
    for name, count in report.breakdown.items():
        print(f"{name:<28}{count:>12,}")
    print(f"{'total':<28}{report.total:>12,}")
    if expected["total"] != report.total:
        logger.warning(f"Closed-form count {expected['total']:,} differs from built model {report.total:,}")
    if args.ablations:
        print()
        for variant in ablation_variants(config):
            print(f"{variant.name:<36}{variant.parameters:>12,}")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    suite = run_gradcheck_suite(seeds=args.seeds, include_model=not args.skip_model)
    print(f"checks={len(suite.reports)} max_rel_error={suite.max_rel_error:.3e}")
    if not suite.passed:
        for report in suite.failures:
            print(f"FAIL {report.name}: {report.max_rel_error:.3e} at {report.failing[:3]}")
        raise GradCheckError("gradient check failed", failures=len(suite.failures))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = AsdArgumentParser(prog="asd", description="Low-complexity attention-based anomalous sound detection")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="Train a detector on the normal clips of a dataset")
    p.add_argument("--config", help="key=value config file (defaults when omitted)")
    p.add_argument("--data", required=True, help="Dataset root (<type>/{train,test}/*.wav)")
    p.add_argument("--out", required=True, help="Checkpoint path for the last epoch")
    p.add_argument("--workers", type=int, default=4, help="Parallel WAV decoders")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="Score the test split and write a report")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--workers", type=int, default=4)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("score", help="Anomaly score of one clip")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--wav", required=True)
    p.add_argument("--label", required=True, help="machine_type:machine_id")
    p.set_defaults(handler=cmd_score)

    p = sub.add_parser("features", help="Export log-Mel (or, with --ckpt, the full stack) as ASDF")
    p.add_argument("--wav", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ckpt", help="Checkpoint providing learned Wavegram weights")
    p.add_argument("--config", help="Framing config for log-Mel only export")
    p.set_defaults(handler=cmd_features)

    p = sub.add_parser("attention-stats", help="Mean/std attention maps over a split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=[s.value for s in Split], default=Split.TEST.value)
    p.add_argument("--workers", type=int, default=4)
    p.set_defaults(handler=cmd_attention_stats)

    p = sub.add_parser("params", help="Parameter-count breakdown")
    p.add_argument("--config")
    p.add_argument("--ablations", action="store_true", help="Also list the ablation builds")
    p.set_defaults(handler=cmd_params)

    p = sub.add_parser("gradcheck", help="Finite-difference gradient suite")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--skip-model", action="store_true", help="Skip the full-model check")
    p.set_defaults(handler=cmd_gradcheck)
    return parser


def main(argv: Optional[Sequence[str]] = None, settings: Optional[RuntimeSettings] = None) -> int:
    """Entry point; returns the process exit code"""
    try:
        args = build_parser().parse_args(list(argv) if argv is not None else None)
        configure_logging(settings)
        return args.handler(args)
    except AsdError as exc:
        logger.error(f"{type(exc).__name__}: {exc}", extra={"details": exc.to_dict()})
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
