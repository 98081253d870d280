# runtime settings read from the environment
import os

THREADS_ENV_VAR = "NOSB_THREADS"


def get_num_threads() -> int:
    raw = os.environ.get(THREADS_ENV_VAR, "")
    if not raw:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(
            f"{THREADS_ENV_VAR} must be a positive integer, got {raw!r}"
        )
    if n < 1:
        raise ValueError(f"{THREADS_ENV_VAR} must be >= 1, got {n}")
    return n
