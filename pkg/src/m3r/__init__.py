"""Localized rainfall nowcasting from radar composites and personal weather stations."""

__version__ = "0.1.0"
