"""Boundaries to the conic solver and the SDPA interchange format."""
