"""Figure rendering for subdeq experiment CSVs.

Consumes only the documented CSV schemas (``variant,k,residual`` for
residual traces, ``step,loss`` for training curves); no import coupling to
the experiment package, so either side runs without the other.
"""

from .plotting import TraceParseError, plot_loss, plot_residuals, read_loss, read_traces

__all__ = ["TraceParseError", "plot_loss", "plot_residuals", "read_loss", "read_traces"]

__version__ = "0.1.0"
