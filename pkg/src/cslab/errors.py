"""Shared exception base for data and format errors."""


class LabError(Exception):
    """Raised for bad input data, malformed files, and violated preconditions.

    The CLI maps this (and OSError) to exit code 2.
    """
