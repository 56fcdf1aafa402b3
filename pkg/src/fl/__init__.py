"""
Desk-scale federated learning harness
"""

from .data_loader import ToyDataset, make_blobs, partition, train_test_split
from .models import ToyModel, local_train

__all__ = [
    'ToyDataset',
    'ToyModel',
    'local_train',
    'make_blobs',
    'partition',
    'train_test_split'
]
