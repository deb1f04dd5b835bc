"""
Ridge probes from embeddings to the synthetic style factors.

A high held-out R^2 means the embedding still carries that style factor.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from sklearn.linear_model import Ridge
from sklearn.metrics import r2_score
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from config.settings import PROBE_ALPHA, PROBE_TEST_FRACTION
from utils.exceptions import ConfigurationError

logger = logging.getLogger('dsfad')

STYLE_FACTORS = ('illumination', 'contrast')


@dataclass
class ProbeReport:
    r2: dict = field(default_factory=dict)  # feature name -> factor -> held-out R^2
    notes: list = field(default_factory=list)

    def mean_r2(self, feature):
        values = [v for v in self.r2.get(feature, {}).values() if v is not None]
        return float(np.mean(values)) if values else None

    def to_dict(self):
        return {'r2': self.r2, 'mean_r2': {name: self.mean_r2(name) for name in self.r2}, 'notes': self.notes}


def style_targets(records):
    """Illumination and contrast of each record, in record order."""
    return {name: np.array([getattr(r.style, name) for r in records], dtype=np.float64) for name in STYLE_FACTORS}


def _split(n, test_fraction, rng):
    order = rng.permutation(n)
    n_test = max(1, int(round(n * test_fraction)))
    return order[n_test:], order[:n_test]


def style_probe(features, targets, alpha=PROBE_ALPHA, test_fraction=PROBE_TEST_FRACTION, seed=0):
    """
    Fit one standardized ridge probe per (feature kind, style factor).

    Args:
        features (dict): Feature name -> [n, d] array (rows aligned with the targets)
        targets (dict): Factor name -> [n] values
        alpha (float): Ridge penalty
        test_fraction (float): Held-out share of the rows
        seed (int): Seed of the train/test split, shared by every probe

    Returns:
        ProbeReport: Held-out R^2 per feature and factor; constant factors are skipped with a note
    """
    sizes = {len(v) for v in features.values()} | {len(v) for v in targets.values()}
    if len(sizes) != 1:
        raise ConfigurationError(f"Probe inputs have mismatched row counts {sorted(sizes)}")
    n = sizes.pop()
    if n < 4:
        raise ConfigurationError(f"Style probe needs at least 4 rows, got {n}")
    train, test = _split(n, test_fraction, np.random.default_rng(seed))

    report = ProbeReport()
    for feature_name, X in features.items():
        X = np.asarray(X, dtype=np.float64)
        report.r2[feature_name] = {}
        for factor, y in targets.items():
            y = np.asarray(y, dtype=np.float64)
            if np.ptp(y) == 0 or np.ptp(y[test]) == 0:
                note = f"{factor} is constant; probe on {feature_name} skipped"
                if note not in report.notes:
                    logger.warning(note)
                    report.notes.append(note)
                report.r2[feature_name][factor] = None
                continue
            probe = make_pipeline(StandardScaler(), Ridge(alpha=alpha))
            probe.fit(X[train], y[train])
            report.r2[feature_name][factor] = float(r2_score(y[test], probe.predict(X[test])))
        logger.info(f"Style probe {feature_name}: " +
                    ', '.join(f"{k}={v:.3f}" for k, v in report.r2[feature_name].items() if v is not None))
    return report
