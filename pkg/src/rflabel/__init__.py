"""rflabel: automatic pixelwise annotation of RGB-D sequences by matching
visually detected instances to RFID tag responses via correlated motion."""

from .config import PipelineConfig
from .errors import InputError, ParseError, PipelineError

__all__ = ["PipelineConfig", "InputError", "ParseError", "PipelineError"]
__version__ = "0.1.0"
