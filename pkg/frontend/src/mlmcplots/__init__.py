"""Plotting companion for mlmc-bench CSV files."""

from .render import EmptyInputError, SchemaError, build_figure, main

__all__ = ["EmptyInputError", "SchemaError", "build_figure", "main"]
