"""
Experiment configuration files.

An experiment file is flat `key = value` text, one entry per line, with the
section given by a dotted prefix:

    dataset.num_train_ids = 32
    model.decouple = true
    loss.lambda2 = 0.3
    trainer.drop_epochs = 10,18
    eval.search = indoor

Unset keys keep the defaults from config.settings (and therefore from the
DSFAD_* environment variables).
"""
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field, fields, asdict, replace

from dotenv import dotenv_values

from captions.client import CaptionConfig
from data.augmentation import AugmentConfig
from data.synthetic import DatasetSpec
from evaluation.protocols import EvalConfig
from models.dsfad import ModelConfig
from models.losses import LossConfig
from training.trainer import TrainConfig
from utils.exceptions import ConfigurationError, MissingArtifactError

logger = logging.getLogger('dsfad')

SECTIONS = ('dataset', 'augment', 'captions', 'model', 'loss', 'trainer', 'eval')
_TRUE = ('true', '1', 'yes', 'on')
_FALSE = ('false', '0', 'no', 'off')


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    captions: CaptionConfig = field(default_factory=CaptionConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    trainer: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    @property
    def loss(self):
        return self.trainer.loss

    def resolved(self):
        """Tie the classifier width to the train split and the text tower to the caption context."""
        model = replace(self.model, num_classes=self.dataset.num_train_ids,
                        context_length=self.captions.context_length)
        return replace(self, model=model)

    def validate(self):
        self.dataset.validate()
        self.augment.validate()
        self.captions.validate()
        self.model.validate()
        self.trainer.validate()
        self.eval.validate()
        return self

    def with_seed(self, seed):
        """Apply one seed to every stage: dataset, captions, training and gallery sampling."""
        return replace(
            self,
            dataset=replace(self.dataset, seed=seed),
            captions=replace(self.captions, seed=seed),
            trainer=replace(self.trainer, seed=seed),
            eval=replace(self.eval, seed=seed),
        )

    def to_dict(self):
        return json.loads(json.dumps(asdict(self)))

    def config_hash(self):
        """First 12 hex digits of the SHA-256 of the canonical JSON form."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()[:12]


def _coerce(key, raw, default):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            lowered = raw.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(f"not a boolean: '{raw}'")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, (tuple, list)):
            element = type(default[0]) if default else int
            return tuple(element(v.strip()) for v in raw.split(',') if v.strip())
        return raw
    except ValueError as e:
        raise ConfigurationError(f"Cannot parse {key} = '{raw}': {e}") from e


def _apply(section_obj, section, values):
    known = {f.name: f for f in fields(section_obj)}
    updates = {}
    for name, raw in values.items():
        if name not in known or name == 'loss':
            raise ConfigurationError(f"Unknown config key '{section}.{name}'")
        updates[name] = _coerce(f"{section}.{name}", raw, getattr(section_obj, name))
    return replace(section_obj, **updates)


def parse_config(values):
    """
    Build an ExperimentConfig from flat dotted key/value pairs.

    Args:
        values (dict): 'section.key' -> string value

    Returns:
        ExperimentConfig: Validated configuration with derived fields resolved
    """
    grouped = {section: {} for section in SECTIONS}
    for key, raw in values.items():
        section, _, name = key.partition('.')
        if section not in grouped or not name:
            raise ConfigurationError(f"Unknown config key '{key}'; expected one of the sections {SECTIONS}")
        if raw is None:
            raise ConfigurationError(f"Config key '{key}' has no value")
        grouped[section][name] = raw

    base = ExperimentConfig()
    loss = _apply(base.trainer.loss, 'loss', grouped['loss'])
    trainer = replace(_apply(base.trainer, 'trainer', grouped['trainer']), loss=loss)
    config = ExperimentConfig(
        dataset=_apply(base.dataset, 'dataset', grouped['dataset']),
        augment=_apply(base.augment, 'augment', grouped['augment']),
        captions=_apply(base.captions, 'captions', grouped['captions']),
        model=_apply(base.model, 'model', grouped['model']),
        trainer=trainer,
        eval=_apply(base.eval, 'eval', grouped['eval']),
    )
    return config.resolved().validate()


def load_config(path=None):
    """
    Load an experiment file; with no path the defaults are returned.

    Raises:
        MissingArtifactError: when the file does not exist
        ConfigurationError: on unknown keys or unparsable values
    """
    if path is None:
        return ExperimentConfig().resolved().validate()
    if not os.path.exists(path):
        raise MissingArtifactError(f"Config file {path} does not exist")
    config = parse_config(dict(dotenv_values(path)))
    logger.info(f"Loaded config {path} (hash={config.config_hash()})")
    return config


def dump_config(config, path):
    """Write every key of a config in the flat experiment-file format."""
    lines = []
    for section, values in config.to_dict().items():
        for name, value in values.items():
            if section == 'trainer' and name == 'loss':
                for loss_name, loss_value in value.items():
                    lines.append(f"loss.{loss_name} = {_format(loss_value)}")
                continue
            lines.append(f"{section}.{name} = {_format(value)}")
    with open(path, 'w') as handle:
        handle.write('\n'.join(lines) + '\n')


def _format(value):
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, (list, tuple)):
        return ','.join(str(v) for v in value)
    return str(value)
