"""Run configuration files and atomic persistence of reports."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from rotlab.errors import ConfigError
from rotlab.params import FAMILIES, FlowParams
from rotlab.reports import RunReport

SUBCOMMANDS = ("threshold", "pressureless", "approx", "simulate", "compare", "sweep", "lifespan", "nio")

CONFIG_KEYS = (
    "subcommand", "tau", "sigma", "delta", "gamma", "family", "n", "cfl", "t_end",
    "data", "amplitude", "seed", "out", "tolerances", "spec",
)


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    params: FlowParams
    data: str = "zero"
    amplitude: float | None = None
    seed: int = 0
    out: str | None = None
    t_end: float | None = None
    tolerances: dict = field(default_factory=dict)
    spec: dict | None = None

    def to_dict(self) -> dict:
        p = self.params
        return {
            "subcommand": self.subcommand,
            "tau": p.tau,
            "sigma": p.sigma,
            "gamma": p.gamma,
            "family": p.family,
            "n": p.n,
            "cfl": p.cfl,
            "t_end": self.t_end,
            "data": self.data,
            "amplitude": self.amplitude,
            "seed": self.seed,
            "out": self.out,
            "tolerances": dict(self.tolerances),
            "spec": self.spec,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _number(doc, key, positive=True):
    v = doc.get(key)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(key, f"must be a number, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(key, f"must be > 0, got {v!r}")
    return float(v)


def parse_config(doc: dict) -> RunConfig:
    """Validate a config mapping; every problem names its key."""
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    for key in doc:
        if key not in CONFIG_KEYS:
            raise ConfigError(key, "unknown key")
    sub = doc.get("subcommand")
    if sub not in SUBCOMMANDS:
        raise ConfigError("subcommand", f"must be one of {', '.join(SUBCOMMANDS)}, got {sub!r}")
    tau = _number(doc, "tau")
    sigma = _number(doc, "sigma")
    delta = _number(doc, "delta")
    gamma = _number(doc, "gamma")
    family = doc.get("family", "rsw")
    if family not in FAMILIES:
        raise ConfigError("family", f"must be one of {', '.join(FAMILIES)}, got {family!r}")
    n = doc.get("n", 64)
    if isinstance(n, bool) or not isinstance(n, int) or n < 16 or n % 2:
        raise ConfigError("n", f"must be an even integer >= 16, got {n!r}")
    cfl = _number(doc, "cfl")
    params = build_params(tau, sigma, delta, gamma=gamma, family=family, n=n, cfl=cfl)
    t_end = _number(doc, "t_end")
    amp = _number(doc, "amplitude", positive=False)
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed", f"must be a non-negative integer, got {seed!r}")
    data = doc.get("data", "zero")
    if not isinstance(data, str):
        raise ConfigError("data", f"must be a preset name or path, got {data!r}")
    out = doc.get("out")
    if out is not None and not isinstance(out, str):
        raise ConfigError("out", "must be a directory path")
    tol = doc.get("tolerances", {})
    if not isinstance(tol, dict) or any(not isinstance(v, (int, float)) or isinstance(v, bool) for v in tol.values()):
        raise ConfigError("tolerances", "must map names to numbers")
    spec = doc.get("spec")
    if spec is not None and not isinstance(spec, dict):
        raise ConfigError("spec", "must be an object")
    return RunConfig(sub, params, data, amp, seed, out, t_end, {k: float(v) for k, v in tol.items()}, spec)


def build_params(tau=None, sigma=None, delta=None, **kw) -> FlowParams:
    """
    ``FlowParams`` from any two of ``tau``, ``sigma``, ``delta``.  With one
    given, ``sigma`` defaults to 1 (or ``tau`` to ``delta * sigma**2``); with
    none, ``tau = 0.1`` and ``sigma = 1``.
    """
    kw = {k: v for k, v in kw.items() if v is not None}
    for key, v in (("tau", tau), ("sigma", sigma), ("delta", delta)):
        if v is not None and not v > 0:
            raise ConfigError(key, f"must be > 0, got {v!r}")
    given = sum(v is not None for v in (tau, sigma, delta))
    if given == 0:
        tau, sigma = 0.1, 1.0
    elif given == 1:
        if sigma is None:
            sigma = 1.0
        if tau is None and delta is None:
            tau = 0.1
    try:
        return FlowParams.from_any(tau=tau, sigma=sigma, delta=delta, **kw)
    except ValueError as exc:
        msg = str(exc)
        key = next((k for k in ("tau", "sigma", "delta", "gamma", "family", "cfl", "n") if msg.startswith(k)), "delta")
        raise ConfigError(key, msg) from None


def load_config(path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"invalid JSON: {exc}") from None
    return parse_config(doc)


def atomic_write(path, data) -> Path:
    """Write ``data`` (str or bytes) via a sibling temp file and ``os.replace``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def persist_report(report: RunReport, directory, stem: str | None = None, figures: bool = True) -> list:
    """Write ``<stem>.csv``, ``<stem>.json`` and (optionally) ``<stem>.png``."""
    directory = Path(directory)
    stem = stem or report.kind
    paths = [
        atomic_write(directory / f"{stem}.csv", report.csv_text()),
        atomic_write(directory / f"{stem}.json", report.json_text()),
    ]
    if figures and report.rows:
        from rotlab.plotting import render_report

        paths.append(render_report(report, directory / f"{stem}.png"))
    return paths


def load_report(directory, stem: str) -> RunReport:
    directory = Path(directory)
    return RunReport.from_text((directory / f"{stem}.csv").read_text(), (directory / f"{stem}.json").read_text())
