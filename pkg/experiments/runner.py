"""
Pipeline stages and the experiment harnesses built on them: generate, caption,
train, evaluate, ablation table, hyperparameter sweep and the full pipeline.
"""
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np
import pandas as pd
import torch

import visualize
from captions.client import caption_dataset, save_corpus, load_corpus
from config.settings import NUM_WORKERS
from data.sampler import pk_sample
from data.synthetic import generate_synthetic_dataset, save_dataset, load_dataset, check_dataset
from evaluation.protocols import (
    extract_embeddings, evaluate_table, save_embeddings, write_report, SEARCH_MODES, SHOT_MODES, SCHEMA_VERSION
)
from evaluation.style_probe import style_probe, style_targets
from models.checkpoint import model_from_checkpoint
from models.dsfad import DSFADModel
from training.gradient_audit import gradient_audit, dsfad_loss_fn
from training.trainer import fit, replace_loss
from utils.exceptions import ConfigurationError, MissingArtifactError
from utils.manifest import RunManifest, MANIFEST_NAME

logger = logging.getLogger('dsfad')

VARIANTS = ('baseline', '+dsfa', '+dsfa+smfd', '+dsfa+smfd+scfr', 'full-fixed-text')
VARIANT_ALIASES = {'+smfd': '+dsfa+smfd', '+scfr': '+dsfa+smfd+scfr', 'full': '+dsfa+smfd+scfr'}
SWEEP_PARAMS = {'lambda1': 'lambda1', 'lambda2': 'lambda2', 'lambda3': 'lambda3', 'm': 'margin'}
DEFAULT_GRIDS = {
    'lambda1': (0.0, 0.05, 0.1, 0.15, 0.2, 0.25),
    'lambda2': (0.0, 0.1, 0.2, 0.3, 0.4, 0.5),
    'lambda3': (0.0, 0.01, 0.02, 0.03, 0.04, 0.05),
    'm': (0.0, 0.5, 1.0, 1.5, 2.0),
}

DATASET_DIR = 'dataset'
CAPTIONS_FILE = 'captions.tsv'
METRICS_FILE = 'metrics.json'


def run_generate(config, out_dir):
    """Generate and save the synthetic dataset; returns it."""
    manifest = RunManifest('generate', config.config_hash(), config.dataset.seed)
    dataset = generate_synthetic_dataset(config.dataset)
    violations = check_dataset(dataset)
    if violations:
        raise ConfigurationError(f"Generated dataset violates its invariants: {violations[:5]}")
    save_dataset(dataset, out_dir)
    manifest.add(os.path.join(out_dir, 'meta.json'))
    manifest.write(out_dir)
    return dataset


def run_caption(config, dataset, out_dir):
    """Caption every image and write captions.tsv; returns (corpus, path)."""
    manifest = RunManifest('caption', config.config_hash(), config.captions.seed,
                           inputs={'text_mode': config.captions.text_mode, 'backend': config.captions.backend})
    corpus = caption_dataset(dataset, config.captions)
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, CAPTIONS_FILE)
    save_corpus(corpus, dataset, path)
    manifest.add(path)
    manifest.write(out_dir)
    return corpus, path


def load_inputs(config, dataset_dir=None, captions_path=None):
    """
    Dataset and corpus for a downstream stage: read from disk when paths are
    given, otherwise regenerated in memory from the config.
    """
    dataset = load_dataset(dataset_dir) if dataset_dir else generate_synthetic_dataset(config.dataset)
    if captions_path:
        if not os.path.exists(captions_path):
            raise MissingArtifactError(f"No caption corpus at {captions_path}; run the caption stage first")
        corpus = load_corpus(captions_path, config.captions.context_length)
    else:
        corpus = caption_dataset(dataset, config.captions)
    return dataset, corpus


def run_train(config, dataset, corpus, out_dir, resume_from=None, plots=True):
    """Train with the experiment config; returns (final checkpoint path, log frame)."""
    manifest = RunManifest('train', config.config_hash(), config.trainer.seed)
    final_path, log = fit(config.trainer, dataset, corpus, out_dir, model_config=config.model,
                          augment_config=config.augment if config.augment.enabled else None,
                          config_hash=config.config_hash(), resume_from=resume_from)
    manifest.add(final_path, os.path.join(out_dir, 'train_log.tsv'))
    manifest.add(*[os.path.join(out_dir, f) for f in sorted(os.listdir(out_dir)) if f.endswith('.ckpt')])
    if plots:
        manifest.add(visualize.plot_training_curves(log, out_dir))
    manifest.write(out_dir)
    return final_path, log


def run_eval(config, checkpoint_path, dataset, out_dir, protocols=None, plots=True, save_tables=True):
    """
    Score a checkpoint on the test split under one or more gallery protocols.

    Args:
        config (ExperimentConfig): Supplies eval settings and the config hash
        checkpoint_path (str): Trained model
        dataset (Dataset): Dataset holding the test split
        out_dir (str): Receives metrics.json, embeddings and plots
        protocols (list): GalleryProtocols; defaults to config.eval.protocols()
        plots (bool): Write rank_curve.png
        save_tables (bool): Write the embedding tables

    Returns:
        dict: The metrics document written to metrics.json
    """
    manifest = RunManifest('eval', config.config_hash(), config.eval.seed, inputs={'checkpoint': checkpoint_path})
    model, checkpoint = model_from_checkpoint(checkpoint_path)
    if checkpoint.config_hash and checkpoint.config_hash != config.config_hash():
        logger.warning(f"Checkpoint was trained with config {checkpoint.config_hash}, evaluating under "
                       f"{config.config_hash()}")
    os.makedirs(out_dir, exist_ok=True)

    records = dataset.split_records('test')
    table = extract_embeddings(model, records)
    tables = {'f_res': table}
    if model.config.decouple:
        tables['f_stl'] = extract_embeddings(model, records, kind='f_stl')
    if save_tables:
        for name, t in tables.items():
            save_embeddings(t, out_dir, name)
            manifest.add(os.path.join(out_dir, f"{name}.tsv"), os.path.join(out_dir, f"{name}.bin"))

    reports = [evaluate_table(table, protocol, config_hash=config.config_hash())
               for protocol in (protocols or config.eval.protocols())]
    probe = None
    if 'f_stl' in tables:
        probe = style_probe({name: t.features for name, t in tables.items()}, style_targets(records),
                            config.eval.probe_alpha, config.eval.probe_test_fraction, config.eval.seed).to_dict()

    document = {
        'schema_version': SCHEMA_VERSION,
        'config_hash': config.config_hash(),
        'checkpoint_config_hash': checkpoint.config_hash,
        'reports': [r.to_dict() for r in reports],
        'style_probe': probe,
    }
    path = os.path.join(out_dir, METRICS_FILE)
    write_report(document, path)
    manifest.add(path)
    if plots:
        manifest.add(visualize.plot_rank_curve({r.protocol['name']: r for r in reports}, out_dir))
    manifest.write(out_dir)
    return document


def variant_config(config, tag):
    """
    Experiment config of one ablation row.

    baseline: L_id + L_mse only, no decoupling and no text; +dsfa adds the
    contrastive loss; +dsfa+smfd adds IN decoupling and the margin loss;
    +dsfa+smfd+scfr adds SE restitution and the consistency loss;
    full-fixed-text is the full model trained on single-template captions.
    """
    tag = VARIANT_ALIASES.get(tag, tag)
    if tag not in VARIANTS:
        raise ConfigurationError(f"Unknown ablation variant '{tag}', expected one of {VARIANTS}")
    model, trainer, captions = config.model, config.trainer, config.captions
    if tag == 'baseline':
        model = replace(model, decouple=False, restitute=False)
        trainer = replace_loss(trainer, lambda1=0.0, lambda2=0.0, lambda3=0.0)
    elif tag == '+dsfa':
        model = replace(model, decouple=False, restitute=False)
        trainer = replace_loss(trainer, lambda2=0.0, lambda3=0.0)
    elif tag == '+dsfa+smfd':
        model = replace(model, decouple=True, restitute=False)
        trainer = replace_loss(trainer, lambda3=0.0)
    else:
        model = replace(model, decouple=True, restitute=True)
        if tag == 'full-fixed-text':
            captions = replace(captions, text_mode='fixed')
    return replace(config, model=model, trainer=trainer, captions=captions)


def _train_and_score(job):
    """Worker body: train one configuration and score its default protocol."""
    config, dataset_dir, captions_path, out_dir = job
    if NUM_WORKERS > 1:
        torch.set_num_threads(1)
    dataset = load_dataset(dataset_dir)
    corpus = load_corpus(captions_path, config.captions.context_length)
    final_path, _ = run_train(config, dataset, corpus, out_dir, plots=False)
    document = run_eval(config, final_path, dataset, os.path.join(out_dir, 'eval'), [config.eval.protocol()],
                        plots=False, save_tables=False)
    report = document['reports'][0]
    return {'rank1': report['rank']['1'], 'mAP': report['mAP'], 'mINP': report['mINP']}


def _run_jobs(jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [_train_and_score(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_train_and_score, jobs))


def _prepare_shared(config, out_dir, text_modes):
    """Dataset plus one caption corpus per text mode, shared by every run of a harness."""
    dataset_dir = os.path.join(out_dir, DATASET_DIR)
    dataset = run_generate(config, dataset_dir)
    corpora = {}
    for mode in sorted(text_modes):
        mode_config = replace(config, captions=replace(config.captions, text_mode=mode))
        _, corpora[mode] = run_caption(mode_config, dataset, os.path.join(out_dir, f"captions_{mode}"))
    return dataset_dir, corpora


def ablate(config, variants, out_dir, seeds=None, workers=NUM_WORKERS, plots=True):
    """
    Train every variant with shared seeds and tabulate Rank-1/mAP with deltas to the first row.

    Returns:
        pd.DataFrame: One row per variant (medians over seeds)
    """
    if not variants:
        raise ConfigurationError("Ablation needs at least one variant")
    variant_configs = [(VARIANT_ALIASES.get(tag, tag), variant_config(config, tag)) for tag in variants]
    seeds = list(seeds or [config.trainer.seed])
    manifest = RunManifest('ablate', config.config_hash(), seeds[0], inputs={'variants': list(variants), 'seeds': seeds})
    dataset_dir, corpora = _prepare_shared(config, out_dir, {c.captions.text_mode for _, c in variant_configs})

    jobs, keys = [], []
    for tag, variant in variant_configs:
        for seed in seeds:
            seeded = replace(variant, trainer=replace(variant.trainer, seed=seed))
            run_dir = os.path.join(out_dir, 'runs', f"{tag.strip('+').replace('+', '_')}_seed{seed}")
            jobs.append((seeded, dataset_dir, corpora[variant.captions.text_mode], run_dir))
            keys.append((tag, seed))
    logger.info(f"Ablation: {len(variant_configs)} variant(s) x {len(seeds)} seed(s), {workers} worker(s)")
    results = _run_jobs(jobs, workers)

    runs = pd.DataFrame([{'variant': tag, 'seed': seed, **result} for (tag, seed), result in zip(keys, results)])
    table = runs.groupby('variant', sort=False)[['rank1', 'mAP', 'mINP']].median().reset_index()
    table['delta_rank1'] = table['rank1'] - table['rank1'].iloc[0]
    table['delta_mAP'] = table['mAP'] - table['mAP'].iloc[0]

    runs.to_csv(os.path.join(out_dir, 'ablation_runs.tsv'), sep='\t', index=False)
    table_path = os.path.join(out_dir, 'ablation.tsv')
    table.to_csv(table_path, sep='\t', index=False)
    write_report({'schema_version': SCHEMA_VERSION, 'config_hash': config.config_hash(), 'seeds': seeds,
                  'rows': table.to_dict(orient='records')}, os.path.join(out_dir, 'ablation.json'))
    manifest.add(table_path, os.path.join(out_dir, 'ablation.json'), os.path.join(out_dir, 'ablation_runs.tsv'))
    if plots:
        manifest.add(visualize.plot_ablation(table, out_dir))
    manifest.write(out_dir)
    logger.info("Ablation table:\n" + table.to_string(index=False))
    return table


def sweep(config, param, grid=None, out_dir='sweep', workers=NUM_WORKERS, plots=True):
    """
    One training run per grid value of a loss hyperparameter (lambda1, lambda2, lambda3 or m).

    Returns:
        pd.DataFrame: value, rank1, mAP, mINP per grid point
    """
    if param not in SWEEP_PARAMS:
        raise ConfigurationError(f"Unknown sweep parameter '{param}', expected one of {tuple(SWEEP_PARAMS)}")
    grid = list(DEFAULT_GRIDS[param] if grid is None else grid)
    if not grid or any(v < 0 for v in grid):
        raise ConfigurationError(f"Sweep grid must be non-empty with values >= 0, got {grid}")
    manifest = RunManifest('sweep', config.config_hash(), config.trainer.seed, inputs={'param': param, 'grid': grid})
    dataset_dir, corpora = _prepare_shared(config, out_dir, {config.captions.text_mode})

    jobs = []
    for value in grid:
        point = replace(config, trainer=replace_loss(config.trainer, **{SWEEP_PARAMS[param]: float(value)}))
        jobs.append((point, dataset_dir, corpora[config.captions.text_mode],
                     os.path.join(out_dir, 'runs', f"{param}_{value:g}")))
    logger.info(f"Sweep over {param}: {grid}")
    results = _run_jobs(jobs, workers)

    table = pd.DataFrame([{'value': float(v), **r} for v, r in zip(grid, results)])
    table_path = os.path.join(out_dir, f"sweep_{param}.tsv")
    table.to_csv(table_path, sep='\t', index=False)
    manifest.add(table_path)
    if plots:
        manifest.add(visualize.plot_sweep(table, param, out_dir))
    manifest.write(out_dir)
    logger.info(f"Sweep table:\n{table.to_string(index=False)}")
    return table


def all_protocols(config):
    """All/indoor search x single/multi-shot, in each configured direction."""
    protocols = []
    for direction_protocol in config.eval.protocols():
        for search in SEARCH_MODES:
            for shots in SHOT_MODES:
                protocols.append(replace(direction_protocol, search=search, shots=shots))
    return protocols


def pipeline(config, out_dir, plots=True):
    """
    generate -> caption -> train -> eval (four protocols and the style probe),
    each stage writing its own directory and manifest, plus a top-level
    manifest listing the stage manifests.

    Returns:
        dict: The metrics document of the eval stage
    """
    manifest = RunManifest('pipeline', config.config_hash(), config.trainer.seed)
    stage_dirs = {stage: os.path.join(out_dir, name)
                  for stage, name in (('generate', DATASET_DIR), ('caption', 'captions'), ('train', 'train'),
                                      ('eval', 'eval'))}

    # 1. Synthetic dataset
    dataset = run_generate(config, stage_dirs['generate'])

    # 2. Captions
    _, captions_path = run_caption(config, dataset, stage_dirs['caption'])

    # 3. Training, from the persisted artifacts
    dataset, corpus = load_inputs(config, stage_dirs['generate'], captions_path)
    final_path, _ = run_train(config, dataset, corpus, stage_dirs['train'], plots=plots)

    # 4. Evaluation
    document = run_eval(config, final_path, dataset, stage_dirs['eval'], all_protocols(config), plots=plots)
    for report in document['reports']:
        logger.info(f"{report['protocol']['name']}: R1={report['rank']['1']:.2%} mAP={report['mAP']:.2%}")

    manifest.inputs['stages'] = list(stage_dirs)
    manifest.add(*(os.path.join(directory, MANIFEST_NAME) for directory in stage_dirs.values()))
    manifest.write(out_dir)
    return document


def run_gradcheck(config, out_dir, max_entries=64, tolerance=1e-3):
    """
    Central-difference audit of the full training loss on a 2-sample-per-modality
    float64 batch (P=1, K=2, no augmentation).

    Returns:
        AuditReport: Per-entry errors, also written to gradcheck.tsv / gradcheck.json
    """
    manifest = RunManifest('gradcheck', config.config_hash(), config.trainer.seed,
                           inputs={'max_entries': max_entries, 'tolerance': tolerance})
    dataset, corpus = load_inputs(config)
    batch = pk_sample(dataset, corpus, P=1, K=2, rng=np.random.default_rng(config.trainer.seed))
    torch.manual_seed(config.trainer.seed)
    model = DSFADModel(config.model).to(torch.float64)
    report = gradient_audit(model, dsfad_loss_fn(batch, config.loss), tolerance=tolerance,
                            max_entries=max_entries, seed=config.trainer.seed)

    os.makedirs(out_dir, exist_ok=True)
    table_path = os.path.join(out_dir, 'gradcheck.tsv')
    report.to_frame().to_csv(table_path, sep='\t', index=False, float_format='%.10g')
    json_path = os.path.join(out_dir, 'gradcheck.json')
    write_report({'schema_version': SCHEMA_VERSION, 'config_hash': config.config_hash(), **report.to_dict()},
                 json_path)
    manifest.add(table_path, json_path)
    manifest.write(out_dir)
    return report
