"""Offline rendering of figures from ebmlab CSV run artifacts.

This package only reads, groups, and draws: every number it plots was
computed by the training side and shipped across the CSV boundary. Deleting
it changes nothing about the training package or its checks.
"""

from .figures import FigureSpec, PlotsError, render_check_report, render_run

__version__ = "0.1.0"

__all__ = ["FigureSpec", "PlotsError", "render_check_report", "render_run",
           "__version__"]
