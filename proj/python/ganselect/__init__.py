"""Python bindings for the ganselect GAN laboratory."""

from ganselect._core import *  # noqa: F401,F403
from ganselect._core import ConfigError, IngestionError, NumericError, __version__  # noqa: F401
