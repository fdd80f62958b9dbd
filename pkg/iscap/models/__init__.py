"""Validated domain types."""
