import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

from config_utils.config_manager import ConfigManager
from core.config_keys import ConfigKeys
from core.errors import ConfigError
from utils.common.logger import get_logger

T = TypeVar("T")

THREADS_ENV = "MSFA_FORGE_THREADS"

logger = get_logger("msfa_forge.parallel")


def _parse_threads(raw: str | int, source: str) -> int:
    if isinstance(raw, int):
        value = raw
    else:
        text = raw.strip().lower()
        if text in ("", "auto", "all"):
            return os.cpu_count() or 1
        try:
            value = int(text)
        except ValueError:
            raise ConfigError("parallel", source, f"thread count must be 'auto' or an integer, got {raw!r}") from None
    if value < 1:
        raise ConfigError("parallel", source, f"thread count must be >= 1, got {value}")
    return value


def resolve_threads(flag: str | int | None = None) -> int:
    """
    Resolve the worker count.
    Order of precedence:
      1) --threads flag
      2) MSFA_FORGE_THREADS environment variable
      3) 'threads' property (config/msfa.properties)
    """
    if flag is not None:
        return _parse_threads(flag, "--threads")
    env_value = os.getenv(THREADS_ENV)
    if env_value:
        return _parse_threads(env_value, THREADS_ENV)
    try:
        prop = ConfigManager().get(ConfigKeys.THREADS)
    except ConfigError:
        prop = None
    return _parse_threads(prop or "auto", "threads")


def chunk_bounds(count: int, chunks: int) -> list[tuple[int, int]]:
    """Split range(count) into at most `chunks` contiguous, nearly equal [start, stop) pieces."""
    chunks = max(1, min(chunks, count))
    base, extra = divmod(count, chunks)
    bounds = []
    start = 0
    for i in range(chunks):
        stop = start + base + (1 if i < extra else 0)
        bounds.append((start, stop))
        start = stop
    return bounds


def run_chunked(fn: Callable[[int, int], T], count: int, threads: int = 1) -> list[T]:
    """
    Run fn(start, stop) over contiguous chunks of range(count).
    Results come back in chunk order regardless of scheduling, so callers can reduce
    them in a fixed order. threads=1 (or count<=1) runs inline.
    """
    if count <= 0:
        return []
    if threads <= 1 or count == 1:
        return [fn(0, count)]
    bounds = chunk_bounds(count, threads)
    logger.debug(f"Running {len(bounds)} chunks on {threads} threads")
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, start, stop) for start, stop in bounds]
        return [f.result() for f in futures]
