from fractions import Fraction
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

Provenance = Literal["paper-formula", "derived-oracle", "golden-regression"]


class RegulatorWindow(BaseModel):
    eps: float = Field(gt=0)
    L: float = Field(gt=0)

    @model_validator(mode="after")
    def _ordered(self):
        if not self.eps < self.L < float("inf"):
            raise ValueError(f"Regulator window needs 0 < eps < L < inf, got eps={self.eps}, L={self.L}")
        return self


class WheelData(BaseModel):
    """Vertex count k and the d x k matrix of holomorphic derivative orders."""

    k: int = Field(ge=2)
    n: list[list[int]]

    @model_validator(mode="after")
    def _shape(self):
        if not self.n or any(len(row) != self.k for row in self.n):
            raise ValueError(f"Derivative matrix must be d x {self.k}, got {self.n}")
        if any(entry < 0 for row in self.n for entry in row):
            raise ValueError(f"Derivative orders must be nonnegative, got {self.n}")
        return self

    @property
    def d(self) -> int:
        return len(self.n)

    def column(self, alpha: int) -> tuple[int, ...]:
        """Derivative orders at vertex alpha (1-based)."""
        return tuple(row[alpha - 1] for row in self.n)

    def order(self, alpha: int) -> int:
        return sum(self.column(alpha))


class AnomalyWheelData(BaseModel):
    wd: WheelData
    distinguished_edge: int | None = None

    @model_validator(mode="after")
    def _edge(self):
        if self.distinguished_edge is None:
            self.distinguished_edge = self.wd.k
        if not 1 <= self.distinguished_edge <= self.wd.k:
            raise ValueError(f"Distinguished edge {self.distinguished_edge} is not one of the {self.wd.k} wheel edges")
        return self


class TestFunction(BaseModel):
    """Polynomial times a product of isotropic Gaussians on (C^d)^k.

    Polynomial keys are exponent vectors of length 2kd: the holomorphic exponents of
    z^alpha_i in (alpha, i) order, followed by the antiholomorphic ones. An empty
    polynomial means the constant 1.
    """

    __test__ = False
    model_config = ConfigDict(arbitrary_types_allowed=True)

    d: int = Field(ge=1)
    k: int = Field(ge=1)
    centers: list[list[tuple[float, float]]]
    width: float = Field(gt=0)
    poly: dict[tuple[int, ...], Fraction] = {}

    @model_validator(mode="after")
    def _shape(self):
        if len(self.centers) != self.k or any(len(c) != self.d for c in self.centers):
            raise ValueError(f"Expected {self.k} centers in C^{self.d}, got {self.centers}")
        for key in self.poly:
            if len(key) != 2 * self.k * self.d or min(key, default=0) < 0:
                raise ValueError(f"Polynomial exponent {key} does not match (C^{self.d})^{self.k}")
        return self


class KernelValue(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    coefficient: complex
    form_index: int | Literal["scalar"]


class WeightEstimate(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    value: complex
    error: float = 0.0
    scheme: str
    converged: bool = True
    evaluations: int = 0
    exact_zero: bool = False


class ConvergenceReport(BaseModel):
    """One ε-sweep at fixed L.

    extrapolated holds the Richardson sequence built from the tail rate. When the
    raw values have not settled but that sequence has, its last entry is the limit.
    scale is the largest |value| on the grid; limits below sweep_rtol·scale count as zero.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    L: float
    eps_grid: list[float]
    values: list[complex | None] = []
    error_bars: list[float | None] = []
    cauchy_deltas: list[float] = []
    fitted_rate: float | None = None
    tail_rate: float | None = None
    extrapolated: list[complex] = []
    extrapolated_limit: complex | None = None
    scale: float = 0.0
    envelope_ratios: list[float] = []
    converged: bool = False
    inconclusive: bool = False
    skipped: bool = False
    note: str | None = None

    @model_validator(mode="after")
    def _grid(self):
        if any(b >= a for a, b in zip(self.eps_grid, self.eps_grid[1:])):
            raise ValueError(f"eps grid must be strictly decreasing, got {self.eps_grid}")
        if any(e is not None and e < 0 for e in self.error_bars):
            raise ValueError("error bars must be nonnegative")
        return self

    @property
    def limit(self) -> complex | None:
        if self.extrapolated_limit is not None:
            return self.extrapolated_limit
        known = [v for v in self.values if v is not None]
        return known[-1] if known else None


class AnomalyScanReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    L_grid: list[float]
    inner: list[ConvergenceReport] = []
    limits: list[complex | None] = []
    iterated_limit: complex | None = None
    relative_to_first: float | None = None
    verdict: Literal["vanishing", "stable", "inconclusive"] = "inconclusive"


class GreensReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    d: int
    value: complex
    phi_at_origin: complex
    sign_convention: int
    error: float


class Assertion(BaseModel):
    name: str
    provenance: Provenance
    passed: bool
    observed: Any = None
    expected: Any = None
    tolerance: float | None = None


class RunReport(BaseModel):
    schema_version: str = "1"
    command: str
    inputs: dict[str, Any] = {}
    results: dict[str, Any] = {}
    assertions: list[Assertion] = []
    seed: int = 0
    wall_time: float | None = None

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)
