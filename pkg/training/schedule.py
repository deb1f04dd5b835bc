"""
Step-decay learning-rate schedule with two parameter groups.
"""
from utils.exceptions import ConfigurationError

GROUPS = ('visual', 'text')


def base_rate(config, group):
    if group == 'visual':
        return config.lr_visual
    if group == 'text':
        return config.lr_text
    raise ConfigurationError(f"Unknown parameter group '{group}', expected one of {GROUPS}")


def lr_at(config, epoch, group):
    """
    Learning rate of a parameter group at a (0-based) epoch.

    The base rate is multiplied by drop_factor once for every drop epoch
    already reached.

    Args:
        config (TrainConfig): Base rates, drop epochs and drop factor
        epoch (int): Epoch in [0, epochs)
        group (str): 'visual' or 'text'

    Returns:
        float: Learning rate for that epoch
    """
    if not 0 <= epoch < config.epochs:
        raise ConfigurationError(f"Epoch {epoch} is outside the schedule [0, {config.epochs})")
    drops = sum(1 for d in config.drop_epochs if d <= epoch)
    return base_rate(config, group) * config.drop_factor ** drops
