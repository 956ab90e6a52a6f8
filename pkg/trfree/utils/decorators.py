import inspect
import logging
import time
from functools import wraps

from trfree.exceptions import ContractViolationError


def oracle_guard(fn):
    """Refuse brute-force oracle calls whose vertex count exceeds ORACLE_MAX_N.

    The wrapped function must take an ``n`` argument; the ceiling is read from the
    active settings on every call so tests can lower or raise it.
    """
    signature = inspect.signature(fn)

    @wraps(fn)
    def decorated_function(*args, **kwargs):
        from trfree import get_settings

        bound = signature.bind(*args, **kwargs)
        n = bound.arguments["n"]
        ceiling = get_settings().ORACLE_MAX_N
        if n > ceiling:
            logging.warning(
                "oracle_guard: %s refused for n=%s (ceiling %s).", fn.__name__, n, ceiling
            )
            raise ContractViolationError(
                f"{fn.__name__} is a brute-force oracle limited to n <= {ceiling}, got n={n}"
            )
        return fn(*args, **kwargs)

    return decorated_function


def timed(label):
    """Log the wall-clock duration of the wrapped call at INFO under ``label``."""

    def wrapper(fn):
        @wraps(fn)
        def decorator(*args, **kwargs):
            started = time.perf_counter()
            try:
                return fn(*args, **kwargs)
            finally:
                logging.getLogger(fn.__module__).info(
                    "%s finished in %.3fs", label, time.perf_counter() - started
                )

        return decorator

    return wrapper
