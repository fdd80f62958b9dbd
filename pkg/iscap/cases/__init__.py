"""Builtin scenario documents."""
