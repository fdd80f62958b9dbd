"""
SDPA sparse interchange files.

A ConicProblem is written in SDPA dual form

    maximize    F0 . Y
    subject to  Fi . Y = ci,  Y block-diagonal and PSD

after normalization. Each Hermitian block X_j becomes the real symmetric
embedding [[Re X, -Im X], [Im X, Re X]] so that Re tr(C X) equals
(1/2) emb(C) . emb(X). A trailing diagonal (LP) block holds the split free
objective theta = t+ - t- and one slack per constraint row.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from structlog import get_logger

from iscap.core.exceptions import ArtifactError, ContractViolationError
from iscap.models.conic import ConicProblem, Sense
from iscap.types.arrays import HermitianMatrix

logger = get_logger()

RealMatrix = NDArray[np.float64]


@dataclass(frozen=True)
class SdpaProblem:
    """
    Dense SDPA data.

    ``matrices[i][b]`` is F_i restricted to block b (i = 0 is the objective).
    The LP block is stored as a dense diagonal matrix; ``block_sizes`` uses
    the SDPA sign convention (negative for a diagonal block).
    """

    c: NDArray[np.float64]
    block_sizes: tuple[int, ...]
    matrices: tuple[tuple[RealMatrix, ...], ...]
    header: tuple[str, ...] = ()

    @property
    def constraint_count(self) -> int:
        return len(self.c)

    def same_data(self, other: SdpaProblem) -> bool:
        """Exact equality of everything but the header comments."""
        if self.block_sizes != other.block_sizes or not np.array_equal(self.c, other.c):
            return False
        return all(
            np.array_equal(a, b)
            for mine, theirs in zip(self.matrices, other.matrices, strict=True)
            for a, b in zip(mine, theirs, strict=True)
        )


def real_embedding(matrix: HermitianMatrix) -> RealMatrix:
    """[[Re, -Im], [Im, Re]]: symmetric whenever ``matrix`` is Hermitian."""
    re = matrix.real
    im = matrix.imag
    return np.block([[re, -im], [im, re]]).astype(np.float64)


def to_sdpa(problem: ConicProblem) -> SdpaProblem:
    """Normalize ``problem`` and lay it out as SDPA dual-form data."""
    normalized = problem.normalized()
    scaled = normalized.problem
    rows = scaled.constraints
    lp = 2 + len(rows)

    sizes = tuple(2 * n for n in scaled.block_dims) + (-lp,)

    def empty() -> list[RealMatrix]:
        return [np.zeros((abs(s), abs(s))) for s in sizes]

    objective = empty()
    objective[-1][0, 0] = 1.0
    objective[-1][1, 1] = -1.0
    matrices: list[tuple[RealMatrix, ...]] = [tuple(objective)]

    for i, row in enumerate(rows):
        blocks = empty()
        for j, coefficient in row.coefficients.items():
            blocks[j] = 0.5 * real_embedding(coefficient)
        blocks[-1][0, 0] = row.theta
        blocks[-1][1, 1] = -row.theta
        blocks[-1][2 + i, 2 + i] = -1.0 if row.sense is Sense.GE else 1.0
        matrices.append(tuple(blocks))

    header = (
        f"problem: {problem.label or 'unnamed'}",
        "sense: maximize F0.Y (SDPA dual form); F0 selects theta = Y[t+] - Y[t-]",
        "blocks: "
        + ", ".join(
            f"{name} (Hermitian {n}x{n} as real {2 * n}x{2 * n})"
            for name, n in zip(scaled.block_names, scaled.block_dims, strict=True)
        )
        + f", LP block of {lp} (t+, t-, one slack per row)",
        "rows: " + ", ".join(f"{r.label} {r.sense.value}" for r in rows),
        f"units: X = {normalized.variable_scale:.17g} * X_hat, "
        f"theta = {normalized.theta_scale:.17g} * theta_hat",
    )
    return SdpaProblem(
        c=np.array([row.rhs for row in rows], dtype=np.float64),
        block_sizes=sizes,
        matrices=tuple(matrices),
        header=header,
    )


def _format_sdpa(data: SdpaProblem) -> str:
    lines = [f"* {text}" for text in data.header]
    lines.append(f"{data.constraint_count}")
    lines.append(f"{len(data.block_sizes)}")
    lines.append(" ".join(str(s) for s in data.block_sizes))
    lines.append(" ".join(f"{v:.17g}" for v in data.c) if data.constraint_count else "")
    for i, blocks in enumerate(data.matrices):
        for b, matrix in enumerate(blocks):
            rows, cols = np.nonzero(np.triu(matrix))
            for r, c in zip(rows.tolist(), cols.tolist(), strict=True):
                lines.append(f"{i} {b + 1} {r + 1} {c + 1} {matrix[r, c]:.17g}")
    return "\n".join(lines) + "\n"


def export_sdpa(problem: ConicProblem, path: Path) -> SdpaProblem:
    """
    Write ``problem`` as an SDPA sparse file.

    Export is syntactic: infeasible problems are written like any other.

    Raises:
        ArtifactError: If the file cannot be written
    """
    data = to_sdpa(problem)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(_format_sdpa(data), encoding="utf-8")
    except OSError as exc:
        raise ArtifactError(path, f"cannot write SDPA file: {exc}") from exc
    logger.info(
        "sdpa_exported",
        path=str(path),
        constraints=data.constraint_count,
        blocks=len(data.block_sizes),
    )
    return data


def read_sdpa(path: Path) -> SdpaProblem:
    """
    Parse an SDPA sparse file written by ``export_sdpa``.

    Raises:
        ArtifactError: On I/O failure or malformed content
    """
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ArtifactError(path, f"cannot read SDPA file: {exc}") from exc

    header: list[str] = []
    body: list[str] = []
    for line in text.splitlines():
        if line.startswith(("*", '"')):
            header.append(line[1:].strip())
        elif line.strip() or len(body) == 3:
            body.append(line)

    try:
        m = int(body[0].split()[0])
        count = int(body[1].split()[0])
        sizes = tuple(int(v) for v in body[2].replace(",", " ").split()[:count])
        c = np.array([float(v) for v in body[3].replace(",", " ").split()[:m]], dtype=np.float64)
        matrices = [[np.zeros((abs(s), abs(s))) for s in sizes] for _ in range(m + 1)]
        for line in body[4:]:
            if not line.strip():
                continue
            mat, blk, r, col, value = line.split()
            i, b, rr, cc = int(mat), int(blk) - 1, int(r) - 1, int(col) - 1
            matrices[i][b][rr, cc] = float(value)
            matrices[i][b][cc, rr] = float(value)
    except (IndexError, ValueError) as exc:
        raise ArtifactError(path, f"malformed SDPA content: {exc}") from exc

    if len(c) != m:
        raise ContractViolationError(f"{path}: expected {m} objective entries, found {len(c)}")
    return SdpaProblem(c, sizes, tuple(tuple(b) for b in matrices), tuple(header))
