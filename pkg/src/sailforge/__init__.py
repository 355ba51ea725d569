"""Self-rewarding preference alignment for small diffusion models.

A numpy denoiser is pretrained on a synthetic two-mode task, aligned by
diffusion DPO on a small oracle-labelled seed set, and then iteratively
improved on pairs it ranks itself with its implicit reward.
"""

__version__ = "0.1.0"

from .errors import ArtifactIOError, ConfigError, DegenerateSetError, NumericError, SailError  # noqa: E402

__all__ = [
    "ArtifactIOError",
    "ConfigError",
    "DegenerateSetError",
    "NumericError",
    "SailError",
    "__version__",
]
