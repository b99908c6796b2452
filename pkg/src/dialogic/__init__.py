"""Detection of dialogic instructions in one-on-one classroom recordings."""

from dialogic.corpus import InstructionType

__version__ = "0.1.0"

__all__ = ["InstructionType", "__version__"]
