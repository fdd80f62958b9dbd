"""Stdlib names added after Python 3.10, re-exported for older interpreters."""

import sys

if sys.version_info >= (3, 11):
    from enum import StrEnum
    from typing import Self
else:  # pragma: no cover - exercised only on Python 3.10
    from enum import Enum

    from typing_extensions import Self

    class StrEnum(str, Enum):
        """Backport of :class:`enum.StrEnum` (Python 3.11)."""

        __str__ = str.__str__
        __format__ = str.__format__

        @staticmethod
        def _generate_next_value_(name, start, count, last_values):  # noqa: ARG004
            return name.lower()


__all__ = ["Self", "StrEnum"]
