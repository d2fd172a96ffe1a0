"""Instance-level analysis of moving-foreground masks using optical flow."""

__version__ = "0.1.0"
