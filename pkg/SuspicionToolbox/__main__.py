#!/usr/bin/python3
"""
Main entry point for the SuspicionToolbox package.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint
from .concept_anchor import load_anchor_bank, random_anchor_bank, similarity_matrix
from .config import RunConfig, load_config, write_config_template
from .errors import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, DataError, SuspicionToolboxError
from .evaluator import autocorrelation, cumulative_effect, evaluate_dataset
from .event_model import load_events, validate_sequence
from .feature_container import load_feature_container
from .logger import TRACE, get_logger, level_from_name, set_log_level, setup_logging
from .modulator import init_params, modulate
from .progress import set_progress_enabled
from .suspicion_engine import CoefficientHistory, CoefficientTriple, load_curve, save_curve, score_sequence
from .svg_plot import save_line_plot
from .synth import HIGH_FREQUENCY_SCALE, LOW_FREQUENCY_SCALE, generate, load_dataset, split, write_dataset
from .trainer import gradcheck, predict, train

logger = get_logger(__name__)


class ToolboxArgumentParser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _seed(value: str) -> int:
    try:
        seed = int(value, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed '{value}'")
    if not 0 <= seed < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {value}")
    return seed


def _positive_int(value: str) -> int:
    try:
        number = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer '{value}'")
    if number < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return number


def _non_negative_int(value: str) -> int:
    try:
        number = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer '{value}'")
    if number < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {value}")
    return number


def _coefficients(value: str) -> CoefficientTriple:
    parts = value.split(',')
    try:
        alpha, beta, gamma = (float(p) for p in parts)
        return CoefficientTriple(alpha, beta, gamma)
    except (ValueError, SuspicionToolboxError):
        raise argparse.ArgumentTypeError(f"expected three positive numbers ALPHA,BETA,GAMMA, got '{value}'")


def _common_parser() -> argparse.ArgumentParser:
    common = ToolboxArgumentParser(add_help=False)
    # ------------- Parser - Run options -------------
    run_group = common.add_argument_group('Run Options')
    run_group.add_argument('--config', metavar='PATH', help='JSON configuration file (default: built-in defaults)')
    run_group.add_argument('--seed', type=_seed, metavar='SEED', help='random seed, overrides the configuration')
    run_group.add_argument('--out', metavar='DIR', default='./output', help='output directory (default: ./output)')
    run_group.add_argument('--threads', type=_positive_int, metavar='N',
                           help='worker threads for parallel-safe steps (default: 1)')
    # ------------- Parser - Logging -------------
    log_group = common.add_argument_group('Logging Options')
    log_level_group = log_group.add_mutually_exclusive_group()
    log_level_group.add_argument('-d', '--debug', action='store_true', help='Enable debug logging')
    log_level_group.add_argument('-T', '--trace', action='store_true', help='Enable trace logging (very verbose)')
    log_level_group.add_argument('-q', '--quiet', action='store_true', help='Show only warnings and errors')
    log_level_group.add_argument('-Q', '--silent', action='store_true', help='Show only errors')
    log_group.add_argument('--log-file', action='store_true', default=False,
                           help='Save logs to a timestamped file in .suspiciontoolbox folder')
    return common


def build_parser() -> argparse.ArgumentParser:
    """Create the command line parser with all subcommands."""
    common = _common_parser()
    parser = ToolboxArgumentParser(prog='suspiciontoolbox',
                                   description='Continuous suspicion scores for detected suspicious actions.')
    parser.add_argument('-v', '--version', action='version', version=f'SuspicionToolbox {__version__}',
                        help='show program version and exit')
    commands = parser.add_subparsers(dest='command', metavar='COMMAND', required=True)

    simulate = commands.add_parser('simulate', parents=[common], help='generate a synthetic labeled dataset')
    simulate.add_argument('--num-sequences', type=_positive_int, metavar='N', help='number of sequences')
    simulate.add_argument('--frames', type=_positive_int, metavar='T', help='frames per sequence (at least 50)')
    frequency = simulate.add_mutually_exclusive_group()
    frequency.add_argument('--low-frequency', action='store_true',
                           help=f'scale event arrival rates by {LOW_FREQUENCY_SCALE}')
    frequency.add_argument('--high-frequency', action='store_true',
                           help=f'scale event arrival rates by {HIGH_FREQUENCY_SCALE}')
    simulate.add_argument('--misspecified', type=float, metavar='STD', nargs='?', const=0.1,
                          help='add noise of this std to the hidden coefficients (default when given: 0.1)')

    score = commands.add_parser('score', parents=[common], help='score one sequence into a suspicion curve')
    score.add_argument('events', metavar='EVENTS', help='events JSON file')
    score.add_argument('features', metavar='FEATURES', nargs='?',
                       help='feature container directory or manifest (required with --checkpoint)')
    source = score.add_mutually_exclusive_group(required=True)
    source.add_argument('--checkpoint', metavar='PATH', help='modulator checkpoint directory or manifest')
    source.add_argument('--fixed-coeffs', type=_coefficients, metavar='ALPHA,BETA,GAMMA',
                        help='use constant coefficients instead of the modulator')

    train_cmd = commands.add_parser('train', parents=[common], help='train the modulator on a dataset')
    train_cmd.add_argument('--data', metavar='DIR', required=True, help='dataset directory written by simulate')
    train_cmd.add_argument('--epochs', type=int, metavar='N', help='number of epochs, overrides the configuration')

    evaluate = commands.add_parser('eval', parents=[common], help='compare predicted and ground-truth curves')
    evaluate.add_argument('--pred', metavar='DIR', required=True, help='directory of predicted curve CSVs')
    evaluate.add_argument('--gt', metavar='DIR', required=True, help='directory of ground-truth curve CSVs')
    evaluate.add_argument('--per-sequence', action='store_true', help='also write per_sequence.csv')

    analyze = commands.add_parser('analyze', parents=[common], help='autocorrelation and cumulative effect of a curve')
    analyze.add_argument('curve', metavar='CURVE', help='curve CSV file')
    analyze.add_argument('--max-lag', type=_positive_int, metavar='LAG', help='largest autocorrelation lag')
    analyze.add_argument('--svg', action='store_true', help='also write SVG plots')

    anchors = commands.add_parser('anchors', parents=[common], help='similarity statistics of an anchor bank')
    anchors.add_argument('--bank', metavar='PATH',
                         help='anchor bank manifest (default: a random bank drawn from --seed)')

    check = commands.add_parser('gradcheck', parents=[common], help='check analytic gradients numerically')
    check.add_argument('--trials', type=_non_negative_int, default=20, metavar='N',
                       help='number of random draws (default: 20)')
    check.add_argument('--frames', type=_positive_int, default=30, metavar='T',
                       help='frames per random sequence (default: 30)')

    validate = commands.add_parser('validate', parents=[common], help='check an events file for invariant violations')
    validate.add_argument('events', metavar='EVENTS', help='events JSON file')

    commands.add_parser('write-config', parents=[common],
                        help='write the default configuration to <out>/config.json')
    return parser


def _log_level(args) -> int | None:
    if args.trace:
        return TRACE
    if args.debug:
        return logging.DEBUG
    if args.quiet:
        return logging.WARNING
    if args.silent:
        return logging.ERROR
    return None


def _write_json(data: dict, path: str) -> None:
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2)
        f.write('\n')


def cmd_simulate(args, config: RunConfig) -> int:
    overrides = {}
    if args.num_sequences is not None:
        overrides['num_sequences'] = args.num_sequences
    if args.frames is not None:
        overrides['frames_per_sequence'] = args.frames
    if args.low_frequency:
        overrides['frequency_scale'] = LOW_FREQUENCY_SCALE
    elif args.high_frequency:
        overrides['frequency_scale'] = HIGH_FREQUENCY_SCALE
    if args.misspecified is not None:
        overrides['misspecified_noise'] = args.misspecified
    synth_config = _replace(config.synth, overrides)
    dataset = generate(synth_config)
    write_dataset(dataset, args.out)
    return EXIT_OK


def _replace(obj, overrides: dict):
    return replace(obj, **overrides) if overrides else obj


def cmd_score(args, config: RunConfig) -> int:
    seq = load_events(args.events)
    violations = validate_sequence(seq)
    if violations:
        for v in violations:
            logger.error("Event %s: %s", '-' if v.event_index is None else v.event_index, v.reason)
        raise DataError(f"{args.events} violates {len(violations)} sequence invariant(s)")
    if args.fixed_coeffs is not None:
        history = CoefficientHistory.constant(args.fixed_coeffs, seq.num_frames)
        logger.debug("Scoring '%s' with fixed coefficients %s", seq.id, args.fixed_coeffs)
    else:
        if args.features is None:
            logger.error("Scoring with a checkpoint needs the FEATURES argument")
            return EXIT_USAGE
        params = load_checkpoint(args.checkpoint)
        container = load_feature_container(args.features)
        if container.frames != seq.num_frames:
            raise DataError(f"Features have {container.frames} frames, events {seq.num_frames}")
        history = modulate(container.features, params, seq.id).history()
    curve = score_sequence(seq, history)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, f"{seq.id}.csv")
    save_curve(curve, path)
    logger.info("Wrote suspicion curve of '%s' (%d frames, peak %.4f) to %s",
                seq.id, len(curve), float(curve.scores.max()), path)
    return EXIT_OK


def cmd_train(args, config: RunConfig) -> int:
    train_config = config.train if args.epochs is None else _replace(config.train, {'epochs': args.epochs})
    dataset = load_dataset(args.data)
    train_set, val_set = split(dataset.samples, train_config.train_frac, config.seed)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(5,)))
    m = config.modulator
    params = init_params(m.hidden, rng, m.omega, m.modalities)
    params, report = train(train_set, val_set, train_config, params, checkpoint_dir=args.out)
    report.save_json(os.path.join(args.out, 'report.json'))
    pred_dir = os.path.join(args.out, 'val_predictions')
    os.makedirs(pred_dir, exist_ok=True)
    for curve in predict(val_set, params, config.threads):
        save_curve(curve, os.path.join(pred_dir, f"{curve.sequence_id}.csv"))
    logger.info("Validation predictions written to %s", pred_dir)
    return EXIT_OK


def _curve_files(directory: str) -> list[str]:
    if not os.path.isdir(directory):
        raise DataError(f"Not a directory: {directory}")
    return sorted(name for name in os.listdir(directory) if name.endswith('.csv'))


def cmd_eval(args, config: RunConfig) -> int:
    names = _curve_files(args.pred)
    if not names:
        raise DataError(f"No curve CSV files in {args.pred}")
    preds, gts = [], []
    for name in names:
        gt_path = os.path.join(args.gt, name)
        if not os.path.exists(gt_path):
            raise DataError(f"No ground-truth curve for '{name}' in {args.gt}")
        preds.append(load_curve(os.path.join(args.pred, name)))
        gts.append(load_curve(gt_path))
    report = evaluate_dataset(preds, gts, config.evaluation)
    os.makedirs(args.out, exist_ok=True)
    report.save_json(os.path.join(args.out, 'metrics.json'))
    if args.per_sequence:
        report.save_per_sequence_csv(os.path.join(args.out, 'per_sequence.csv'))
    print(json.dumps({"mse": report.mse, "mae": report.mae, "r2": report.r2, "average_map": report.map.average}))
    return EXIT_OK


def cmd_analyze(args, config: RunConfig) -> int:
    curve = load_curve(args.curve)
    if len(curve) < 2:
        raise DataError(f"Curve {args.curve} has {len(curve)} frame(s), autocorrelation needs at least 2")
    max_lag = args.max_lag
    if max_lag is None:
        max_lag = min(config.evaluation.max_lag, len(curve) - 1)
        if max_lag < config.evaluation.max_lag:
            logger.warning("Curve has %d frames, limiting autocorrelation to lag %d", len(curve), max_lag)
    acf = autocorrelation(curve, max_lag)
    cumulative = cumulative_effect(curve)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, 'autocorrelation.csv'), 'w', encoding='utf-8', newline='') as f:
        f.write('lag,autocorrelation\n')
        for lag, value in enumerate(acf):
            f.write(f"{lag},{'' if np.isnan(value) else format(value, '.9g')}\n")
    with open(os.path.join(args.out, 'cumulative.csv'), 'w', encoding='utf-8', newline='') as f:
        f.write('frame,cumulative\n')
        for t, value in enumerate(cumulative):
            f.write(f"{t},{value:.9g}\n")
    if args.svg:
        save_line_plot(acf, os.path.join(args.out, 'autocorrelation.svg'),
                       f"Autocorrelation of {curve.sequence_id}", 'lag (frames)', 'autocorrelation')
        save_line_plot(cumulative, os.path.join(args.out, 'cumulative.svg'),
                       f"Cumulative suspicion of {curve.sequence_id}", 'frame', 'cumulative score')
    logger.info("Wrote analysis of '%s' to %s", curve.sequence_id, args.out)
    return EXIT_OK


def cmd_anchors(args, config: RunConfig) -> int:
    if args.bank:
        bank = load_anchor_bank(args.bank)
    else:
        rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(6,)))
        bank = random_anchor_bank(config.synth.anchor_dim, rng)
        logger.info("No bank given, using a random %d-dimensional bank", bank.dim)
    report = similarity_matrix(bank)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, 'similarity.csv'), 'w', encoding='utf-8', newline='') as f:
        f.write(','.join(['name'] + list(bank.names)) + '\n')
        for name, row in zip(bank.names, report.matrix):
            f.write(','.join([name] + [f"{v:.9g}" for v in row]) + '\n')
    stats = {"dim": bank.dim, "mean": report.mean, "std": report.std}
    _write_json(stats, os.path.join(args.out, 'anchor_stats.json'))
    print(json.dumps(stats))
    return EXIT_OK


def cmd_gradcheck(args, config: RunConfig) -> int:
    report = gradcheck(args.trials, config.seed, config.modulator, config.loss, num_frames=args.frames)
    os.makedirs(args.out, exist_ok=True)
    _write_json(report.to_dict(), os.path.join(args.out, 'gradcheck.json'))
    for name, group in sorted(report.groups.items()):
        logger.debug("%s: %d entries, max relative error %.3g", name, group.checked, group.max_rel_error)
    if not report.passed:
        logger.error("Gradient check failed (%d entries checked)", report.checked)
        return EXIT_NUMERIC
    logger.info("Gradient check passed (%d trials, %d entries)", report.trials, report.checked)
    return EXIT_OK


def cmd_validate(args, config: RunConfig) -> int:
    seq = load_events(args.events)
    violations = validate_sequence(seq)
    for v in violations:
        where = 'sequence' if v.event_index is None else f"event {v.event_index}"
        print(f"{args.events}: {where}: {v.reason}")
    if violations:
        logger.error("%d violation(s) in %s", len(violations), args.events)
        return EXIT_DATA
    logger.info("%s is valid (%d events, %d frames)", args.events, len(seq.events), seq.num_frames)
    return EXIT_OK


def cmd_write_config(args, config: RunConfig) -> int:
    os.makedirs(args.out, exist_ok=True)
    write_config_template(os.path.join(args.out, 'config.json'))
    return EXIT_OK


COMMANDS = {
    'simulate': cmd_simulate,
    'score': cmd_score,
    'train': cmd_train,
    'eval': cmd_eval,
    'analyze': cmd_analyze,
    'anchors': cmd_anchors,
    'gradcheck': cmd_gradcheck,
    'validate': cmd_validate,
    'write-config': cmd_write_config,
}


def main(argv=None) -> int:
    """Entry point for the SuspicionToolbox application."""
    parser = build_parser()
    args = parser.parse_args(argv)

    # ------------- Logging -------------
    flag_level = _log_level(args)
    setup_logging(flag_level or logging.INFO, log_to_file=args.log_file)
    set_progress_enabled(not (args.quiet or args.silent))
    logger.debug("Starting SuspicionToolbox v%s, command %s", __version__, args.command)
    logger.debug("Command-line arguments: %s", vars(args))

    try:
        config = load_config(args.config).with_overrides(args.seed, args.threads)
        if flag_level is None and config.log_level != 'info':
            set_log_level(level_from_name(config.log_level))
            set_progress_enabled(config.log_level not in ('warning', 'error', 'critical', 'silent'))
        return COMMANDS[args.command](args, config)
    except SuspicionToolboxError as e:
        logger.error("%s", e)
        return e.exit_code
    except OSError as e:
        logger.error("I/O error: %s", e)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
