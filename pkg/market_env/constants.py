from typing import Literal

# paths are drawn in fixed-size blocks; block b of stream s uses its own
# Philox counter so that path i only depends on (seed, stream, i)
PATH_BLOCK_SIZE = 1024

# stream 0 is reserved for out-of-sample evaluation, training iteration i
# draws from stream i + 1
EVAL_STREAM = 0

NEVER = -1

MARTINGALE_TOL = 1e-10
ROUND_TRIP_TOL = 1e-12
PSD_TOL = 1e-12

MAX_LATTICE_ASSETS = 3
MAX_LATTICE_NODES = 5_000_000

PayoffKind = Literal["max_call", "min_call", "custom_stat"]
CoordinateKind = Literal["max_call_coords", "min_call_2d_coords"]

PAYOFF_KINDS = ("max_call", "min_call", "custom_stat")
COORDINATE_KINDS = ("max_call_coords", "min_call_2d_coords")
