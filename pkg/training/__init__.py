"""
Training package initialization.
"""
from training.schedule import lr_at
from training.trainer import TrainConfig, TrainState, train_step, fit
from training.gradient_audit import gradient_audit, AuditReport
