import re
from fractions import Fraction

_INT = re.compile(r"^\d+$")


def parse_int_matrix(text: str) -> list[list[int]] | None:
    """Parse "0,1;2,0" into [[0, 1], [2, 0]]. Returns None if malformed or ragged."""
    rows = [row.strip() for row in text.strip().split(";")]
    if not rows or any(not row for row in rows):
        return None
    matrix = []
    for row in rows:
        cells = [c.strip() for c in row.split(",")]
        if not all(_INT.match(c) for c in cells):
            return None
        matrix.append([int(c) for c in cells])
    if len({len(row) for row in matrix}) != 1:
        return None
    return matrix


def parse_rational_matrix(text: str) -> list[list[Fraction]] | None:
    """Parse "1/2,0;0,1" into rows of Fractions. Returns None if malformed or ragged."""
    rows = [row.strip() for row in text.strip().split(";")]
    try:
        matrix = [[Fraction(c.strip()) for c in row.split(",")] for row in rows]
    except (ValueError, ZeroDivisionError):
        return None
    if len({len(row) for row in matrix}) != 1:
        return None
    return matrix


def parse_float_list(text: str) -> list[float] | None:
    """Parse "1e-2,5e-3" into floats. Returns None if malformed."""
    try:
        values = [float(c) for c in text.strip().split(",")]
    except ValueError:
        return None
    return values or None


def parse_point(text: str) -> list[complex] | None:
    """Parse "1+2j,0" into complex coordinates. Returns None if malformed."""
    try:
        return [complex(c.strip().replace(" ", "")) for c in text.strip().split(",")]
    except ValueError:
        return None
