"""
Versioned binary checkpoint container.

Layout: 8-byte magic `DSFADCKP`, uint32 format version, uint32 header length,
a UTF-8 JSON header, then the raw little-endian tensor payloads in header order.
"""
import json
import logging
import os
import struct
from dataclasses import dataclass, field

import numpy as np
import torch

from models.dsfad import DSFADModel, ModelConfig
from utils.exceptions import CheckpointError, MissingArtifactError

logger = logging.getLogger('dsfad')

MAGIC = b'DSFADCKP'
FORMAT_VERSION = 1
OPTIMIZER_PREFIX = 'optimizer/'
MOMENTS = ('exp_avg', 'exp_avg_sq')


@dataclass
class Checkpoint:
    """A decoded checkpoint: JSON header plus named numpy tensors."""
    header: dict
    tensors: dict = field(default_factory=dict)

    @property
    def model_config(self):
        return ModelConfig.from_dict(self.header['model_config'])

    @property
    def config_hash(self):
        return self.header.get('config_hash', '')

    @property
    def trainer_state(self):
        return self.header.get('trainer', {})

    def parameters(self):
        return {name: t for name, t in self.tensors.items() if not name.startswith(OPTIMIZER_PREFIX)}


def _storage_dtype(tensor):
    return '<f8' if tensor.dtype == torch.float64 else '<f4'


def save_checkpoint(path, model, optimizer=None, config_hash='', trainer_state=None):
    """
    Write model parameters (and optionally Adam moments) to a checkpoint file.

    Args:
        path (str): Output file
        model (DSFADModel): Model whose parameters are stored
        optimizer (torch.optim.Adam): Optional optimizer whose moments are stored
        config_hash (str): Experiment config hash tagged into the header
        trainer_state (dict): JSON-serializable counters and rng state
    """
    arrays = []
    for name, param in model.named_parameters():
        arrays.append((name, param.detach().cpu().numpy().astype(_storage_dtype(param))))

    optimizer_steps = {}
    if optimizer is not None:
        for name, param in model.named_parameters():
            state = optimizer.state.get(param)
            if not state:
                continue
            optimizer_steps[name] = int(state['step'])
            for moment in MOMENTS:
                tensor = state[moment]
                arrays.append((f"{OPTIMIZER_PREFIX}{name}/{moment}",
                               tensor.detach().cpu().numpy().astype(_storage_dtype(tensor))))

    directory = []
    offset = 0
    for name, array in arrays:
        directory.append({'name': name, 'dtype': array.dtype.str, 'shape': list(array.shape),
                          'offset': offset, 'nbytes': array.nbytes})
        offset += array.nbytes

    header = {
        'format_version': FORMAT_VERSION,
        'model_config': model.config.to_dict(),
        'config_hash': config_hash,
        'tensors': directory,
        'optimizer_steps': optimizer_steps,
        'trainer': trainer_state or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode('utf-8')

    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp_path = path + '.tmp'
    with open(tmp_path, 'wb') as handle:
        handle.write(MAGIC)
        handle.write(struct.pack('<II', FORMAT_VERSION, len(header_bytes)))
        handle.write(header_bytes)
        for _, array in arrays:
            handle.write(array.tobytes())
    os.replace(tmp_path, path)
    logger.info(f"Saved checkpoint {path} ({len(arrays)} tensors, hash={config_hash or '-'})")


def load_checkpoint(path):
    """
    Read a checkpoint file.

    Raises:
        MissingArtifactError: when the file does not exist
        CheckpointError: when the file is not a readable checkpoint
    """
    if not os.path.exists(path):
        raise MissingArtifactError(f"No checkpoint at {path}; run the train stage first")
    with open(path, 'rb') as handle:
        blob = handle.read()
    if blob[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path} is not a DSFAD checkpoint (bad magic)")
    version, header_len = struct.unpack('<II', blob[len(MAGIC):len(MAGIC) + 8])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path} has format version {version}, this build reads version {FORMAT_VERSION}")
    start = len(MAGIC) + 8
    try:
        header = json.loads(blob[start:start + header_len].decode('utf-8'))
    except ValueError as e:
        raise CheckpointError(f"{path} has a corrupt header: {e}") from e

    payload = start + header_len
    tensors = {}
    for entry in header['tensors']:
        begin = payload + entry['offset']
        chunk = blob[begin:begin + entry['nbytes']]
        if len(chunk) != entry['nbytes']:
            raise CheckpointError(f"{path} is truncated inside tensor {entry['name']}")
        tensors[entry['name']] = np.frombuffer(chunk, dtype=entry['dtype']).reshape(entry['shape']).copy()
    return Checkpoint(header=header, tensors=tensors)


def parameter_diff(model, checkpoint):
    """Lines describing every parameter whose presence or shape differs between model and checkpoint."""
    expected = {name: tuple(p.shape) for name, p in model.named_parameters()}
    found = {name: tuple(t.shape) for name, t in checkpoint.parameters().items()}
    diff = []
    for name in sorted(set(expected) | set(found)):
        if name not in found:
            diff.append(f"{name}: missing from checkpoint (model expects {list(expected[name])})")
        elif name not in expected:
            diff.append(f"{name}: not in model (checkpoint has {list(found[name])})")
        elif expected[name] != found[name]:
            diff.append(f"{name}: model expects {list(expected[name])}, checkpoint has {list(found[name])}")
    return diff


def restore_model(model, checkpoint):
    """Copy checkpoint parameters into a model, rejecting any shape mismatch with a per-parameter diff."""
    diff = parameter_diff(model, checkpoint)
    if diff:
        logger.error(f"Checkpoint does not match model: {len(diff)} parameter(s) differ")
        raise CheckpointError("Checkpoint parameters do not match the model", diff)
    stored = checkpoint.parameters()
    with torch.no_grad():
        for name, param in model.named_parameters():
            param.copy_(torch.from_numpy(stored[name]).to(param.dtype))
    return model


def restore_optimizer(optimizer, model, checkpoint):
    """Reinstate Adam moments and step counts saved by save_checkpoint."""
    steps = checkpoint.header.get('optimizer_steps', {})
    for name, param in model.named_parameters():
        if name not in steps:
            continue
        state = optimizer.state[param]
        state['step'] = torch.tensor(float(steps[name]), dtype=torch.float32)
        for moment in MOMENTS:
            key = f"{OPTIMIZER_PREFIX}{name}/{moment}"
            if key not in checkpoint.tensors:
                raise CheckpointError(f"Checkpoint lacks optimizer moment {key}")
            state[moment] = torch.from_numpy(checkpoint.tensors[key]).to(param.dtype).clone()
    return optimizer


def model_from_checkpoint(path, dtype=None):
    """
    Rebuild a model from the config stored in a checkpoint and load its weights.

    Args:
        path (str): Checkpoint file
        dtype (torch.dtype): Optional dtype; defaults to the stored parameter dtype

    Returns:
        tuple: (DSFADModel in eval mode, Checkpoint)
    """
    checkpoint = load_checkpoint(path)
    model = DSFADModel(checkpoint.model_config)
    if dtype is None:
        stored = next(iter(checkpoint.parameters().values()), None)
        dtype = torch.float64 if stored is not None and stored.dtype == np.float64 else torch.float32
    model = model.to(dtype)
    restore_model(model, checkpoint)
    model.eval()
    return model, checkpoint
