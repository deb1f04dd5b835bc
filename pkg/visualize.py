"""
Plots for training runs, retrieval reports, ablations and hyperparameter sweeps.
"""
import os

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import pandas as pd

from models.losses import LOSS_TERMS

PLOT_STYLE = 'seaborn-v0_8-darkgrid'


def _save(path):
    plt.grid(True)
    plt.tight_layout()
    plt.savefig(path)
    plt.close('all')
    return path


def plot_rank_curve(reports, output_dir):
    """
    Rank-k curve of one or more metrics reports.

    Args:
        reports (dict): Label -> MetricsReport
        output_dir (str): Directory for rank_curve.png

    Returns:
        str: Path of the saved figure
    """
    os.makedirs(output_dir, exist_ok=True)
    plt.style.use(PLOT_STYLE)
    plt.figure(figsize=(8, 5))
    for label, report in reports.items():
        ks = sorted(report.rank)
        plt.plot(ks, [report.rank[k] * 100 for k in ks], marker='o', linewidth=2,
                 label=f"{label} (mAP {report.mAP:.1%})")
    plt.title('Rank-k Accuracy')
    plt.xlabel('k')
    plt.ylabel('Accuracy (%)')
    plt.legend(loc='lower right')
    return _save(os.path.join(output_dir, 'rank_curve.png'))


def plot_training_curves(train_log, output_dir):
    """Per-term and total loss against step from a train_log.tsv frame."""
    os.makedirs(output_dir, exist_ok=True)
    plt.style.use(PLOT_STYLE)
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(10, 8), sharex=True)

    ax1.plot(train_log['step'], train_log['total'], linewidth=2, label='total')
    ax1.set_ylabel('Total loss')
    ax1.legend(loc='upper right')

    for term in LOSS_TERMS:
        if (train_log[term] != 0).any():
            ax2.plot(train_log['step'], train_log[term], linewidth=1.5, label=term)
    ax2.set_xlabel('Step')
    ax2.set_ylabel('Loss term')
    ax2.legend(loc='upper right')

    fig.suptitle('Training Loss')
    return _save(os.path.join(output_dir, 'training_curves.png'))


def plot_sweep(sweep_table, param, output_dir):
    """Rank-1 and mAP against the swept value."""
    os.makedirs(output_dir, exist_ok=True)
    plt.style.use(PLOT_STYLE)
    table = sweep_table.sort_values('value')
    plt.figure(figsize=(8, 5))
    plt.plot(table['value'], table['rank1'] * 100, marker='o', linewidth=2, label='Rank-1')
    plt.plot(table['value'], table['mAP'] * 100, marker='s', linewidth=2, label='mAP')
    plt.title(f"Sensitivity to {param}")
    plt.xlabel(param)
    plt.ylabel('Accuracy (%)')
    plt.legend(loc='best')
    return _save(os.path.join(output_dir, f"sweep_{param}.png"))


def plot_ablation(ablation_table, output_dir):
    """Grouped bars of Rank-1 and mAP per variant."""
    os.makedirs(output_dir, exist_ok=True)
    plt.style.use(PLOT_STYLE)
    table = pd.DataFrame(ablation_table)
    positions = range(len(table))
    plt.figure(figsize=(9, 5))
    plt.bar([p - 0.2 for p in positions], table['rank1'] * 100, width=0.4, label='Rank-1')
    plt.bar([p + 0.2 for p in positions], table['mAP'] * 100, width=0.4, label='mAP')
    plt.xticks(list(positions), table['variant'])
    plt.title('Ablation')
    plt.ylabel('Accuracy (%)')
    plt.legend(loc='upper left')
    return _save(os.path.join(output_dir, 'ablation.png'))
