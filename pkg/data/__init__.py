"""
Data package initialization.
"""
from data.synthetic import DatasetSpec, Dataset, Identity, ImageRecord, StyleFactors, generate_synthetic_dataset
from data.sampler import Batch, pk_sample
