"""
Single-stage end-to-end training: PK batches, total objective, Adam updates
with the step-decay schedule, epoch-end checkpoints and the loss log.
"""
import copy
import logging
import math
import os
import queue
import threading
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
import torch

from config.settings import (
    EPOCHS, DROP_EPOCHS, DROP_FACTOR, LR_VISUAL, LR_TEXT, NUM_PIDS, NUM_POS, TRAIN_SEED,
    CHECKPOINT_INTERVAL, CLIP_GRAD_NORM, ADAM_BETAS, ADAM_EPS, FULL_EPOCHS, FULL_DROP_EPOCHS
)
from data.sampler import pk_sample
from models.checkpoint import save_checkpoint, load_checkpoint, restore_model, restore_optimizer
from models.dsfad import DSFADModel, ModelConfig
from models.losses import LossConfig, LOSS_TERMS, compute_loss_parts, total_loss
from training.schedule import lr_at
from utils.exceptions import ConfigurationError, CheckpointError

logger = logging.getLogger('dsfad')

LOG_COLUMNS = ['step', 'epoch', 'lr_visual', 'lr_text'] + list(LOSS_TERMS) + ['total']
DTYPES = {'float32': torch.float32, 'float64': torch.float64}


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = EPOCHS
    lr_visual: float = LR_VISUAL
    lr_text: float = LR_TEXT
    drop_epochs: tuple = tuple(DROP_EPOCHS)
    drop_factor: float = DROP_FACTOR
    P: int = NUM_PIDS
    K: int = NUM_POS
    seed: int = TRAIN_SEED
    checkpoint_interval: int = CHECKPOINT_INTERVAL  # epochs; the final epoch is always saved
    clip_grad_norm: float = CLIP_GRAD_NORM
    betas: tuple = ADAM_BETAS
    eps: float = ADAM_EPS
    dtype: str = 'float32'
    prefetch: bool = True
    loss: LossConfig = field(default_factory=LossConfig)

    @classmethod
    def full_scale(cls, **overrides):
        """120 epochs with drops at 40 and 70."""
        return cls(**{'epochs': FULL_EPOCHS, 'drop_epochs': tuple(FULL_DROP_EPOCHS), **overrides})

    @property
    def torch_dtype(self):
        return DTYPES[self.dtype]

    def validate(self):
        if self.epochs < 1:
            raise ConfigurationError(f"trainer.epochs must be >= 1, got {self.epochs}")
        drops = list(self.drop_epochs)
        if any(b <= a for a, b in zip(drops, drops[1:])) or any(d < 0 or d >= self.epochs for d in drops):
            raise ConfigurationError(f"trainer.drop_epochs must be strictly increasing and inside [0, {self.epochs}), "
                                     f"got {drops}")
        if self.lr_visual <= 0 or self.lr_text <= 0:
            raise ConfigurationError(f"Learning rates must be positive, got {self.lr_visual}, {self.lr_text}")
        if self.P < 1 or self.K < 1:
            raise ConfigurationError(f"trainer.P and trainer.K must be positive, got {self.P}, {self.K}")
        if self.dtype not in DTYPES:
            raise ConfigurationError(f"trainer.dtype must be one of {tuple(DTYPES)}, got '{self.dtype}'")
        if self.checkpoint_interval < 1:
            raise ConfigurationError(f"trainer.checkpoint_interval must be >= 1, got {self.checkpoint_interval}")
        self.loss.validate()


@dataclass
class TrainState:
    """Everything needed to continue training exactly: weights, Adam moments, rng and counters."""
    config: TrainConfig
    model: DSFADModel
    optimizer: torch.optim.Adam
    rng: np.random.Generator
    epoch: int = 0
    step: int = 0

    def clone(self):
        return copy.deepcopy(self)

    def set_learning_rates(self, visual, text):
        for group in self.optimizer.param_groups:
            group['lr'] = visual if group['name'] == 'visual' else text

    def apply_schedule(self, epoch):
        self.set_learning_rates(lr_at(self.config, epoch, 'visual'), lr_at(self.config, epoch, 'text'))

    def learning_rates(self):
        return {group['name']: group['lr'] for group in self.optimizer.param_groups}

    def counters(self):
        return {'epoch': self.epoch, 'step': self.step, 'rng_state': self.rng.bit_generator.state}


def init_state(config, model_config=None):
    """
    Build a fresh model, optimizer and sampling rng from a seed.

    Args:
        config (TrainConfig): Training hyperparameters
        model_config (ModelConfig): Network configuration

    Returns:
        TrainState: State at step 0
    """
    config.validate()
    torch.manual_seed(config.seed)
    model = DSFADModel(model_config or ModelConfig()).to(config.torch_dtype)
    visual, text = model.parameter_groups()
    optimizer = torch.optim.Adam(
        [{'params': visual, 'lr': config.lr_visual, 'name': 'visual'},
         {'params': text, 'lr': config.lr_text, 'name': 'text'}],
        betas=tuple(config.betas), eps=config.eps, weight_decay=0.0,
    )
    state = TrainState(config=config, model=model, optimizer=optimizer, rng=np.random.default_rng(config.seed))
    state.apply_schedule(0)
    logger.info(f"Initialized training state: epochs={config.epochs}, P={config.P}, K={config.K}, "
                f"lr=({config.lr_visual}, {config.lr_text}), drops={list(config.drop_epochs)}, dtype={config.dtype}")
    return state


def batch_to_tensors(batch, dtype=torch.float32, with_text=True):
    """Images, labels, modality flags and (optionally) caption tokens as tensors."""
    images = torch.from_numpy(np.ascontiguousarray(batch.pixels)).to(dtype)
    labels = torch.from_numpy(batch.labels)
    modalities = torch.from_numpy(batch.modalities)
    tokens = torch.from_numpy(batch.tokens) if with_text else None
    return images, labels, modalities, tokens


def batch_loss(model, batch, loss_config, dtype=torch.float32):
    """Forward pass and loss breakdown for one batch; returns (total tensor, LossParts)."""
    images, labels, modalities, tokens = batch_to_tensors(batch, dtype, with_text=loss_config.uses_text)
    output = model.forward_full(images, tokens)
    parts = compute_loss_parts(output, labels, modalities, loss_config)
    return total_loss(parts, loss_config), parts


def train_step(state, batch):
    """
    One forward/backward pass and Adam update at the current learning rates.

    Args:
        state (TrainState): Mutable training state; updated in place
        batch (Batch): PK batch with captions

    Returns:
        tuple: (state, dict of loss terms and total)
    """
    batch.check()
    state.model.train()
    loss, parts = batch_loss(state.model, batch, state.config.loss, state.config.torch_dtype)

    state.optimizer.zero_grad(set_to_none=True)
    loss.backward()
    if state.config.clip_grad_norm > 0:
        torch.nn.utils.clip_grad_norm_(state.model.parameters(), state.config.clip_grad_norm)
    state.optimizer.step()
    state.step += 1

    breakdown = parts.as_floats()
    breakdown['total'] = float(loss)
    logger.debug(f"step {state.step}: " + ', '.join(f"{k}={v:.5f}" for k, v in breakdown.items()))
    return state, breakdown


def steps_per_epoch(dataset, config):
    """ceil(train images / 2PK)."""
    return math.ceil(len(dataset.split_records('train')) / (2 * config.P * config.K))


class BatchPrefetcher:
    """
    Prepares one epoch of batches on a background thread and hands them over in order.

    Only the producer draws from the sampling rng while the epoch runs, so the
    sequence of batches equals the one a synchronous loop would draw. A consumer
    that stops early must call close() (or close the iterator) to release the
    producer.
    """

    _DONE = object()
    _POLL_SECONDS = 0.05

    def __init__(self, sample, count, depth=2):
        self.sample = sample
        self.count = count
        self.queue = queue.Queue(maxsize=depth)
        self.error = None
        self.stop = threading.Event()
        self.thread = threading.Thread(target=self._produce, name='batch-prefetch', daemon=True)

    def _put(self, item):
        while not self.stop.is_set():
            try:
                self.queue.put(item, timeout=self._POLL_SECONDS)
                return True
            except queue.Full:
                continue
        return False

    def _produce(self):
        try:
            for _ in range(self.count):
                if self.stop.is_set() or not self._put(self.sample()):
                    return
        except Exception as e:
            self.error = e
        finally:
            self._put(self._DONE)

    def close(self):
        """Stop the producer and wait for it to exit; safe to call more than once."""
        self.stop.set()
        if self.thread.is_alive():
            self.thread.join()

    def __iter__(self):
        self.thread.start()
        try:
            while True:
                item = self.queue.get()
                if item is self._DONE:
                    break
                yield item
        finally:
            self.close()
        if self.error is not None:
            raise self.error


def _epoch_batches(state, dataset, corpus, count, augment_config):
    def sample():
        return pk_sample(dataset, corpus, state.config.P, state.config.K, state.rng, augment_config)

    if state.config.prefetch:
        return BatchPrefetcher(sample, count)
    return (sample() for _ in range(count))


def _write_log(rows, path):
    pd.DataFrame(rows, columns=LOG_COLUMNS).to_csv(path, sep='\t', index=False, float_format='%.10g')


def resume_state(path, config, model_config=None):
    """Restore a TrainState saved at the end of an epoch; training continues with the next epoch."""
    checkpoint = load_checkpoint(path)
    counters = checkpoint.trainer_state
    if 'rng_state' not in counters:
        raise CheckpointError(f"{path} holds weights only and cannot resume training")
    state = init_state(config, model_config or checkpoint.model_config)
    restore_model(state.model, checkpoint)
    restore_optimizer(state.optimizer, state.model, checkpoint)
    state.rng.bit_generator.state = counters['rng_state']
    state.epoch = counters['epoch'] + 1
    state.step = counters['step']
    logger.info(f"Resuming from {path} at epoch {state.epoch}, step {state.step}")
    return state


def fit(config, dataset, corpus, out_dir, model_config=None, augment_config=None, config_hash='', resume_from=None):
    """
    Train for config.epochs epochs of ceil(train images / 2PK) steps each.

    Args:
        config (TrainConfig): Training hyperparameters and loss weights
        dataset (Dataset): Training data (train split is used)
        corpus (CaptionCorpus): Caption per image
        out_dir (str): Receives checkpoints and train_log.tsv
        model_config (ModelConfig): Network configuration
        augment_config (AugmentConfig): Training transforms, None disables augmentation
        config_hash (str): Tag stored in every checkpoint
        resume_from (str): Optional checkpoint to continue from

    Returns:
        tuple: (path of the final checkpoint, training log DataFrame)
    """
    os.makedirs(out_dir, exist_ok=True)
    log_path = os.path.join(out_dir, 'train_log.tsv')
    if resume_from:
        state = resume_state(resume_from, config, model_config)
        rows = []
        if os.path.exists(log_path):
            previous = pd.read_csv(log_path, sep='\t')
            rows = previous[previous['step'] <= state.step].values.tolist()
    else:
        state = init_state(config, model_config)
        rows = []

    per_epoch = steps_per_epoch(dataset, config)
    final_path = os.path.join(out_dir, 'final.ckpt')
    logger.info(f"Training {config.epochs} epochs x {per_epoch} steps into {out_dir}")
    try:
        for epoch in range(state.epoch, config.epochs):
            state.epoch = epoch
            state.apply_schedule(epoch)
            rates = state.learning_rates()
            epoch_totals = []
            batches = _epoch_batches(state, dataset, corpus, per_epoch, augment_config)
            try:
                for batch in batches:
                    _, breakdown = train_step(state, batch)
                    rows.append([state.step, epoch, rates['visual'], rates['text']]
                                + [breakdown[term] for term in LOSS_TERMS] + [breakdown['total']])
                    epoch_totals.append(breakdown['total'])
            finally:
                batches.close()
            logger.info(f"Epoch {epoch + 1}/{config.epochs}: mean loss {np.mean(epoch_totals):.4f}, "
                        f"lr_visual={rates['visual']:.2e}")

            last = epoch == config.epochs - 1
            if last or (epoch + 1) % config.checkpoint_interval == 0:
                path = final_path if last else os.path.join(out_dir, f"epoch_{epoch + 1:03d}.ckpt")
                save_checkpoint(path, state.model, state.optimizer, config_hash, state.counters())
    finally:
        # partial logs survive a divergence or interruption
        _write_log(rows, log_path)

    log = pd.read_csv(log_path, sep='\t')
    return final_path, log


def replace_loss(config, **changes):
    """Copy of a TrainConfig with some LossConfig fields changed."""
    return replace(config, loss=replace(config.loss, **changes))

