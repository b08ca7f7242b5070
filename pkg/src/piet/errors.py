"""Exception hierarchy shared by the overlay engine and the CLI."""

from __future__ import annotations


class PietError(Exception):
    """Base class for every error raised by the package."""

    exit_code = 2


class DegenerateGeometryError(PietError, ValueError):
    pass


class InvalidGeometryError(PietError, ValueError):
    pass


class LayerParseError(PietError, ValueError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(f"{where}{message}")


class ArrangementOverflowError(PietError):
    """Too many carrier lines participate in one grid cell."""

    exit_code = 3

    def __init__(self, n_lines: int, limit: int, grid_cell: tuple[int, int] | None = None):
        self.n_lines = n_lines
        self.limit = limit
        self.grid_cell = grid_cell
        where = f" in grid cell {grid_cell}" if grid_cell is not None else ""
        super().__init__(f"{n_lines} carrier lines{where} exceed the cap of {limit}")


class StoreError(PietError):
    pass


class ManifestMismatchError(StoreError):
    pass


class MissingCombinationError(StoreError, KeyError):
    def __str__(self) -> str:  # KeyError would repr() the message
        return str(self.args[0]) if self.args else ""


class SchemaError(PietError, ValueError):
    pass


class UnknownGeometryError(PietError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class UnmappedMemberError(PietError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class QuerySyntaxError(PietError, ValueError):
    def __init__(self, message: str, pos: int | None = None, text: str | None = None):
        self.pos = pos
        self.text = text
        if pos is not None:
            message = f"{message} (at position {pos})"
        super().__init__(message)


class QueryError(PietError, ValueError):
    pass


class UnsupportedAggregateError(PietError, ValueError):
    pass
