"""
Main entry point for the DSFAD pipeline.

    python main.py generate|caption|train|eval|ablate|sweep|gradcheck|pipeline [options]
"""
import argparse
import logging
import os
import sys
from dataclasses import replace

# Import configuration
from config import setup_logging
from config.loader import load_config, dump_config
from config.settings import NUM_WORKERS

# Import modules
from data.synthetic import load_dataset, generate_synthetic_dataset
from evaluation.protocols import SEARCH_MODES, SHOT_MODES
from experiments.runner import (
    run_generate, run_caption, load_inputs, run_train, run_eval, run_gradcheck,
    ablate, sweep, pipeline, all_protocols, VARIANTS, DEFAULT_GRIDS
)
from utils.exceptions import DSFADError, MissingArtifactError


def build_parser():
    parser = argparse.ArgumentParser(prog='dsfad', description='Visible-infrared person re-identification pipeline')
    commands = parser.add_subparsers(dest='command', required=True)

    def command(name, help_text):
        sub = commands.add_parser(name, help=help_text)
        sub.add_argument('--config', help='Experiment file (flat key = value lines)')
        sub.add_argument('--seed', type=int, help='Seed applied to every stage')
        sub.add_argument('--out', default=os.path.join('runs', name), help='Output directory')
        sub.add_argument('--no-plots', action='store_true', help='Skip PNG plots')
        return sub

    command('generate', 'Generate the synthetic dataset')

    caption = command('caption', 'Caption every image of a dataset')
    caption.add_argument('--dataset', help='Dataset directory (generated in memory when omitted)')
    caption.add_argument('--backend', choices=('deterministic', 'external'))

    train = command('train', 'Train a model')
    train.add_argument('--dataset', help='Dataset directory')
    train.add_argument('--captions', help='captions.tsv from the caption stage')
    train.add_argument('--resume', help='Checkpoint to continue from')

    evaluate = command('eval', 'Score a checkpoint on the test split')
    evaluate.add_argument('--checkpoint', required=True)
    evaluate.add_argument('--dataset', help='Dataset directory')
    evaluate.add_argument('--protocol', choices=SEARCH_MODES)
    evaluate.add_argument('--shots', choices=SHOT_MODES)
    evaluate.add_argument('--repeats', type=int)
    evaluate.add_argument('--all-protocols', action='store_true', help='All/indoor x single/multi-shot')

    ablation = command('ablate', 'Ablation table over model variants')
    ablation.add_argument('--variants', default=','.join(VARIANTS[:4]),
                          help=f"Comma-separated subset of {', '.join(VARIANTS)}")
    ablation.add_argument('--seeds', help='Comma-separated training seeds (median over seeds)')

    sweeping = command('sweep', 'Loss hyperparameter sweep')
    sweeping.add_argument('--param', required=True, choices=tuple(DEFAULT_GRIDS))
    sweeping.add_argument('--grid', help='Comma-separated values (defaults per parameter)')

    gradcheck = command('gradcheck', 'Central-difference audit of the training gradients')
    gradcheck.add_argument('--max-entries', type=int, default=64)
    gradcheck.add_argument('--tolerance', type=float, default=1e-3)

    command('pipeline', 'generate -> caption -> train -> eval')
    return parser


def _csv(value, cast):
    return [cast(v.strip()) for v in value.split(',') if v.strip()] if value else None


def initialize(args):
    """Set up logging and load the experiment config with the command-line overrides."""
    logger = setup_logging()
    logger.info(f"Starting dsfad {args.command}")
    config = load_config(args.config)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    if getattr(args, 'backend', None):
        config = replace(config, captions=replace(config.captions, backend=args.backend))
    if args.command == 'eval':
        overrides = {key: value for key, value in
                     (('search', args.protocol), ('shots', args.shots), ('repeats', args.repeats))
                     if value is not None}
        config = replace(config, eval=replace(config.eval, **overrides))
    config.validate()
    os.makedirs(args.out, exist_ok=True)
    dump_config(config, os.path.join(args.out, 'config.txt'))
    logger.info(f"Config hash {config.config_hash()}, output {args.out}")
    return logger, config


def run_command(args, config, logger):
    """
    Execute one command.

    Returns:
        int: Process exit code
    """
    plots = not args.no_plots

    if args.command == 'generate':
        run_generate(config, args.out)

    elif args.command == 'caption':
        dataset = load_dataset(args.dataset) if args.dataset else generate_synthetic_dataset(config.dataset)
        run_caption(config, dataset, args.out)

    elif args.command == 'train':
        if args.resume and not os.path.exists(args.resume):
            raise MissingArtifactError(f"Checkpoint {args.resume} does not exist")
        dataset, corpus = load_inputs(config, args.dataset, args.captions)
        final_path, _ = run_train(config, dataset, corpus, args.out, resume_from=args.resume, plots=plots)
        logger.info(f"Final checkpoint: {final_path}")

    elif args.command == 'eval':
        dataset = load_dataset(args.dataset) if args.dataset else generate_synthetic_dataset(config.dataset)
        protocols = all_protocols(config) if args.all_protocols else None
        run_eval(config, args.checkpoint, dataset, args.out, protocols, plots=plots)

    elif args.command == 'ablate':
        ablate(config, _csv(args.variants, str), args.out, seeds=_csv(args.seeds, int),
               workers=NUM_WORKERS, plots=plots)

    elif args.command == 'sweep':
        sweep(config, args.param, _csv(args.grid, float), args.out, workers=NUM_WORKERS, plots=plots)

    elif args.command == 'gradcheck':
        report = run_gradcheck(config, args.out, args.max_entries, args.tolerance)
        if not report.passed:
            logger.error(f"Gradient audit failed for groups {sorted(report.failed_groups)} "
                         f"(max rel. error {report.max_rel_error:.2e})")
            return 1

    elif args.command == 'pipeline':
        pipeline(config, args.out, plots=plots)

    return 0


def main(argv=None):
    """Main function: parse arguments, run the command and map failures to exit codes."""
    args = build_parser().parse_args(argv)
    logger = logging.getLogger('dsfad')
    try:
        logger, config = initialize(args)
        code = run_command(args, config, logger)

    except MissingArtifactError as e:
        logger.error(f"Missing input: {e}")
        code = 2

    except DSFADError as e:
        logger.error(f"{type(e).__name__}: {e}")
        code = 1

    except KeyboardInterrupt:
        logger.info("Stopped by user")
        code = 130

    except Exception as e:
        logger.critical(f"Critical error: {e}", exc_info=True)
        code = 1

    logger.info(f"dsfad {args.command} finished with exit code {code}")
    return code


if __name__ == "__main__":
    sys.exit(main())
