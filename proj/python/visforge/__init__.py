"""Python access to the visforge core: budgets, tools, trace parsing and masks."""

from ._visforge import (
    VisforgeError,
    apply_tool,
    apportion,
    compute_mask,
    masked_nll,
    parse_budget,
    parse_command,
    parse_turn,
    raster_digest,
    resample,
    scan_stream,
    segment_trace,
    smart_resize,
)

__all__ = [
    "VisforgeError",
    "apply_tool",
    "apportion",
    "compute_mask",
    "masked_nll",
    "parse_budget",
    "parse_command",
    "parse_turn",
    "raster_digest",
    "resample",
    "scan_stream",
    "segment_trace",
    "smart_resize",
]
