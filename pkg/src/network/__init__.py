"""
Server-to-server transport with byte and round accounting
"""

from .transport import (
    Endpoint,
    InProcessEndpoint,
    TcpEndpoint,
    TranscriptCounters,
    in_process_pair,
    run_pair,
    tcp_pair
)

__all__ = [
    'Endpoint',
    'InProcessEndpoint',
    'TcpEndpoint',
    'TranscriptCounters',
    'in_process_pair',
    'run_pair',
    'tcp_pair'
]
