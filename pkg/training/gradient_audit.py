"""
Central-difference check of autograd gradients on a random subset of parameter entries.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import torch

from training.trainer import batch_loss
from utils.exceptions import ConfigurationError

logger = logging.getLogger('dsfad')

SPLIT_GROUPS = ('heads',)  # groups reported per sub-module


@dataclass
class AuditEntry:
    group: str
    parameter: str
    index: int
    numeric: float
    analytic: float
    rel_error: float


@dataclass
class AuditReport:
    tolerance: float
    step: float
    entries: list = field(default_factory=list)

    @property
    def max_rel_error(self):
        return max((e.rel_error for e in self.entries), default=0.0)

    def group_errors(self):
        """Maximum relative error per parameter group."""
        errors = {}
        for entry in self.entries:
            errors[entry.group] = max(errors.get(entry.group, 0.0), entry.rel_error)
        return errors

    @property
    def failed_groups(self):
        return {group for group, error in self.group_errors().items() if error > self.tolerance}

    @property
    def passed(self):
        return not self.failed_groups

    def to_frame(self):
        return pd.DataFrame([e.__dict__ for e in self.entries])

    def to_dict(self):
        return {
            'tolerance': self.tolerance,
            'step': self.step,
            'checked_entries': len(self.entries),
            'max_rel_error': self.max_rel_error,
            'group_max_rel_error': self.group_errors(),
            'failed_groups': sorted(self.failed_groups),
        }


def parameter_group(name):
    """First component of a parameter path, two components for split groups (heads.identity)."""
    parts = name.split('.')
    if parts[0] in SPLIT_GROUPS and len(parts) > 1:
        return '.'.join(parts[:2])
    return parts[0]


def _sample_entries(model, rng, samples_per_tensor, max_entries):
    chosen = []
    for name, param in model.named_parameters():
        if not param.requires_grad:
            continue
        count = min(samples_per_tensor, param.numel())
        for index in rng.choice(param.numel(), size=count, replace=False):
            chosen.append((name, param, int(index)))
    if max_entries is not None and len(chosen) > max_entries:
        keep = sorted(rng.choice(len(chosen), size=max_entries, replace=False))
        chosen = [chosen[i] for i in keep]
    return chosen


def gradient_audit(model, loss_fn, tolerance=1e-3, step=1e-6, samples_per_tensor=2, max_entries=None,
                   abs_floor=1e-5, seed=0):
    """
    Compare autograd gradients with central differences.

    Args:
        model (torch.nn.Module): Float64 model under test
        loss_fn (callable): model -> scalar loss tensor; must be deterministic
        tolerance (float): Largest accepted relative error per group
        step (float): Central-difference step h
        samples_per_tensor (int): Entries drawn from each parameter tensor
        max_entries (int): Optional cap on the total number of checked entries
        abs_floor (float): Lower bound of the relative-error denominator
        seed (int): Seed of the entry draw

    Returns:
        AuditReport: One entry per checked parameter element; failures are report entries
    """
    dtypes = {p.dtype for p in model.parameters()}
    if dtypes != {torch.float64}:
        raise ConfigurationError(f"Gradient audit needs a float64 model, got parameter dtypes {dtypes}")
    # train mode keeps the transformer on its differentiable reference path
    model.train()

    model.zero_grad(set_to_none=True)
    loss_fn(model).backward()
    analytic = {name: (p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p))
                for name, p in model.named_parameters()}
    model.zero_grad(set_to_none=True)

    report = AuditReport(tolerance=tolerance, step=step)
    rng = np.random.default_rng(seed)
    with torch.no_grad():
        for name, param, index in _sample_entries(model, rng, samples_per_tensor, max_entries):
            flat = param.view(-1)
            original = flat[index].item()
            flat[index] = original + step
            plus = loss_fn(model).item()
            flat[index] = original - step
            minus = loss_fn(model).item()
            flat[index] = original
            numeric = (plus - minus) / (2 * step)
            exact = analytic[name].view(-1)[index].item()
            rel = abs(numeric - exact) / max(abs(numeric), abs(exact), abs_floor)
            report.entries.append(AuditEntry(parameter_group(name), name, index, numeric, exact, rel))

    for group, error in sorted(report.group_errors().items()):
        status = 'FAIL' if error > tolerance else 'ok'
        logger.info(f"Gradient audit {group}: max rel. error {error:.2e} [{status}]")
    if report.failed_groups:
        logger.warning(f"Gradient audit failed for {sorted(report.failed_groups)}")
    return report


def dsfad_loss_fn(batch, loss_config):
    """Total training loss of a fixed batch as a function of the model, at float64."""
    def loss_fn(model):
        return batch_loss(model, batch, loss_config, torch.float64)[0]
    return loss_fn
