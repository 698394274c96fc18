"""Nondimensional flow parameters shared by the approximation and the solver."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

FAMILIES = ("rsw", "isentropic", "ideal")


@dataclass(frozen=True)
class FlowParams:
    """
    Rossby number ``tau``, Froude/Mach number ``sigma`` and equation family.

    ``delta = tau / sigma**2`` is derived.  The symmetrized pressure variable
    ``p`` obeys ``1 + a*sigma*p = sqrt(1 + sigma*h)`` with ``a = sqrt(gamma-1)/2``
    and carries the wave coefficient ``c*(1/sigma + a*p)``, ``c = sqrt(gamma-1)``.
    """

    tau: float
    sigma: float
    gamma: float = 2.0
    family: str = "rsw"
    n: int = 64
    cfl: float = 0.5

    def __post_init__(self):
        for name in ("tau", "sigma", "gamma", "cfl"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ValueError(f"{name} must be a finite number, got {v!r}")
        if self.tau <= 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if self.gamma <= 1:
            raise ValueError(f"gamma must be > 1, got {self.gamma}")
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.family == "rsw" and self.gamma != 2.0:
            raise ValueError(f"gamma must be 2 for the rsw family, got {self.gamma}")
        if self.cfl <= 0:
            raise ValueError(f"cfl must be > 0, got {self.cfl}")
        if int(self.n) != self.n or self.n < 16 or self.n % 2:
            raise ValueError(f"n must be an even integer >= 16, got {self.n!r}")

    @property
    def delta(self) -> float:
        return self.tau / self.sigma**2

    @property
    def period(self) -> float:
        return 2.0 * math.pi * self.tau

    @property
    def c_gamma(self) -> float:
        return math.sqrt(self.gamma - 1.0)

    @property
    def a_gamma(self) -> float:
        return 0.5 * math.sqrt(self.gamma - 1.0)

    @property
    def has_entropy(self) -> bool:
        return self.family == "ideal"

    @classmethod
    def from_any(cls, tau=None, sigma=None, delta=None, **kw):
        """Build from any two of ``tau``, ``sigma``, ``delta``; a third must agree."""
        given = sum(v is not None for v in (tau, sigma, delta))
        if given < 2:
            raise ValueError("need at least two of tau, sigma, delta")
        if tau is None:
            tau = delta * sigma**2
        elif sigma is None:
            if delta is None or delta <= 0:
                raise ValueError(f"delta must be > 0, got {delta}")
            sigma = math.sqrt(tau / delta)
        elif delta is not None and not math.isclose(delta, tau / sigma**2, rel_tol=1e-12):
            raise ValueError(
                f"inconsistent tau={tau}, sigma={sigma}, delta={delta}: "
                f"tau/sigma^2 = {tau / sigma**2}"
            )
        return cls(tau=float(tau), sigma=float(sigma), **kw)

    def with_(self, **changes) -> "FlowParams":
        d = asdict(self)
        d.update(changes)
        return FlowParams(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["delta"] = self.delta
        return d
