"""
Utility functions package
"""

from .network_utils import (
    connect_with_retries,
    find_free_port,
    parse_address
)

__all__ = [
    'connect_with_retries',
    'find_free_port',
    'parse_address'
]
