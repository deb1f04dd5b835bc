"""
Models package initialization.
"""
from models.dsfad import DSFADModel, ModelConfig, ForwardOutput
from models.losses import LossConfig, LossParts, total_loss, compute_loss_parts
from models.checkpoint import save_checkpoint, load_checkpoint, restore_model, model_from_checkpoint
