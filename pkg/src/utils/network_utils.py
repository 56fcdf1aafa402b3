import socket
import time
from typing import Optional, Tuple
import logging

logger = logging.getLogger(__name__)


def parse_address(address: str, default_host: str = '127.0.0.1') -> Tuple[str, int]:
    """
    Split a ``host:port`` string.

    Args:
        address: ``host:port`` or a bare ``port``
        default_host: Host used when only a port is given

    Returns:
        Tuple of (host, port)
    """
    host, sep, port = address.rpartition(':')
    if not sep:
        return default_host, int(port)
    return host or default_host, int(port)


def find_free_port(host: str = '127.0.0.1') -> int:
    """
    Ask the OS for a currently unused TCP port.

    Args:
        host: Interface to bind the temporary socket on

    Returns:
        Port number that was free at the time of the call
    """
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as sock:
        sock.bind((host, 0))
        return sock.getsockname()[1]


def connect_with_retries(
    host: str,
    port: int,
    retries: int = 50,
    delay: float = 0.2,
    timeout: Optional[float] = None
) -> socket.socket:
    """
    Open a TCP connection, retrying while the peer is still starting up.

    Args:
        host: Peer host
        port: Peer port
        retries: Number of attempts before giving up
        delay: Seconds to wait between attempts
        timeout: Timeout of each connection attempt

    Returns:
        Connected socket

    Raises:
        ConnectionError: if every attempt failed
    """
    last_error: Optional[OSError] = None
    for attempt in range(1, retries + 1):
        try:
            return socket.create_connection((host, port), timeout=timeout)
        except OSError as e:
            last_error = e
            if attempt % 10 == 0:
                logger.warning(f"Still waiting for peer at {host}:{port} (attempt {attempt}/{retries})")
            time.sleep(delay)
    logger.error(f"Could not connect to peer at {host}:{port} after {retries} attempts")
    raise ConnectionError(f"peer {host}:{port} unreachable: {last_error}")
