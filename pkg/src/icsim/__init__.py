"""Two-car intersection crossing protocol simulator over a lossy slotted V2V channel."""

__version__ = "0.1.0"
