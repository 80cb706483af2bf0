"""Monte Carlo result containers shared across estimator modules."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class Estimate:
    """A Monte Carlo point estimate with its provenance and diagnostics.

    diagnostics is always populated; common keys are tail_bound,
    boundary_touch_rate, n2_bound, kill_rate, bracket_low, bracket_high.
    """

    value: float
    std_error: float
    samples: int
    seed: int
    diagnostics: dict = field(default_factory=dict)
    wall_time_s: float = 0.0

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError("std_error must be >= 0")

    def compatible_with(self, other: float, n_sigma: float = 3.0) -> bool:
        return abs(self.value - other) <= n_sigma * max(self.std_error, 1e-300)


@dataclass
class ScanPoint:
    param: float
    estimate: Estimate
    reference: float

    @property
    def ratio(self) -> float:
        return self.estimate.value / self.reference if self.reference else float("nan")


@dataclass
class ScanResult:
    """Scan over a geometric parameter with theory reference values.

    Reference values are recomputed from the potential-theory and
    loop-measure modules at run time, never hard-coded.
    """

    kind: str
    points: list[ScanPoint]
    meta: dict = field(default_factory=dict)
