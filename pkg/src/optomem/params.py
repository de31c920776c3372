"""Relaxation-model parameter sets and their bias-voltage interpolation.

The default parameter table ships as ``data/decay_params.json`` and can be
replaced by any user file with the same schema::

    [
      {"bias_V": 0.0,
       "set": {"g_steady_nS": ..., "dg_nS": ..., "gamma": ...,
               "tau1_s": ..., "tau2_s": ..., "beta": ...},
       "opt": {"dg_nS": ..., "gamma": ..., "tau1_s": ..., "tau2_s": ...}},
      ...
    ]

``opt.g_steady_nS`` is optional and records the steady conductance baseline
seen in optical-relaxation measurements; it falls back to ``set.g_steady_nS``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

__all__ = [
    "SetDecayParams",
    "OpticalDecayParams",
    "PhotoresponseLaw",
    "BiasEntry",
    "ParameterTable",
    "default_table",
]

#: Reference optical power density used throughout (mW/cm^2).
P_REF_MW_CM2 = 65.0


@dataclass(frozen=True)
class SetDecayParams:
    """Electrical (SET) relaxation parameters: steady level, jump amplitude,
    exponential/stretched-exponential mixing weight, two time constants and
    the stretching exponent."""

    g_steady: float  # nS
    delta_g: float   # nS
    gamma: float
    tau1: float      # s
    tau2: float      # s
    beta: float

    def validate(self) -> None:
        if self.g_steady < 0 or self.delta_g < 0 or self.gamma < 0:
            raise ValueError("g_steady, delta_g and gamma must be >= 0")
        if self.tau1 <= 0 or self.tau2 <= 0:
            raise ValueError("time constants must be > 0")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")


@dataclass(frozen=True)
class OpticalDecayParams:
    """Optical relaxation parameters: jump amplitude, mixing weight and two
    plain-exponential time constants."""

    delta_g: float  # nS
    gamma: float
    tau1: float     # s
    tau2: float     # s

    def validate(self) -> None:
        if self.delta_g < 0 or self.gamma < 0:
            raise ValueError("delta_g and gamma must be >= 0")
        if self.tau1 <= 0 or self.tau2 <= 0:
            raise ValueError("time constants must be > 0")


@dataclass(frozen=True)
class PhotoresponseLaw:
    """Power-law photoresponse: dG = dg_ref * (G0/g_ref)^k_g * (P/p_ref)^k_p.

    Defaults reproduce the measured square-root dependence on the conductance
    state (k_g = 0.50) and the near-square-root dependence on optical power
    (k_p = 0.52), normalised so that G0 in nS at the reference power density
    maps onto dG = G0^0.5 in nS.
    """

    k_g: float = 0.50
    k_p: float = 0.52
    g_ref: float = 1.0            # nS
    p_ref: float = P_REF_MW_CM2   # mW/cm^2
    dg_ref: float = 1.0           # nS

    def validate(self) -> None:
        if self.k_g <= 0 or self.k_p <= 0:
            raise ValueError("exponents must be > 0")
        if self.g_ref <= 0 or self.p_ref <= 0 or self.dg_ref <= 0:
            raise ValueError("reference scales must be > 0")


@dataclass(frozen=True)
class BiasEntry:
    """One tabulated bias point: SET and optical parameter rows plus the
    steady baseline observed in the optical measurements."""

    bias: float  # V
    set_params: SetDecayParams
    opt_params: OpticalDecayParams
    opt_g_steady: float  # nS


def _lin(a: float, b: float, w: float) -> float:
    return a + (b - a) * w


def _loglin(a: float, b: float, w: float) -> float:
    return math.exp(_lin(math.log(a), math.log(b), w))


class ParameterTable:
    """Bias-indexed table of relaxation parameters with interpolation.

    Between tabulated biases, time constants interpolate log-linearly (they
    span orders of magnitude) while amplitudes, weights and exponents
    interpolate linearly.  Lookups outside the tabulated range clamp to the
    nearest endpoint.
    """

    def __init__(self, entries: list[BiasEntry]):
        if not entries:
            raise ValueError("parameter table needs at least one bias entry")
        self.entries = sorted(entries, key=lambda e: e.bias)
        biases = [e.bias for e in self.entries]
        if len(set(biases)) != len(biases):
            raise ValueError("duplicate bias entries in parameter table")
        for e in self.entries:
            e.set_params.validate()
            e.opt_params.validate()

    @property
    def biases(self) -> list[float]:
        return [e.bias for e in self.entries]

    def clamp(self, bias: float) -> float:
        return min(max(bias, self.entries[0].bias), self.entries[-1].bias)

    def _bracket(self, bias: float) -> BiasEntry:
        bias = self.clamp(bias)
        for e in self.entries:
            if bias == e.bias:
                return e
        hi = next(e for e in self.entries if e.bias > bias)
        lo = [e for e in self.entries if e.bias < bias][-1]
        w = (bias - lo.bias) / (hi.bias - lo.bias)
        sp = SetDecayParams(
            g_steady=_lin(lo.set_params.g_steady, hi.set_params.g_steady, w),
            delta_g=_lin(lo.set_params.delta_g, hi.set_params.delta_g, w),
            gamma=_lin(lo.set_params.gamma, hi.set_params.gamma, w),
            tau1=_loglin(lo.set_params.tau1, hi.set_params.tau1, w),
            tau2=_loglin(lo.set_params.tau2, hi.set_params.tau2, w),
            beta=_lin(lo.set_params.beta, hi.set_params.beta, w),
        )
        op = OpticalDecayParams(
            delta_g=_lin(lo.opt_params.delta_g, hi.opt_params.delta_g, w),
            gamma=_lin(lo.opt_params.gamma, hi.opt_params.gamma, w),
            tau1=_loglin(lo.opt_params.tau1, hi.opt_params.tau1, w),
            tau2=_loglin(lo.opt_params.tau2, hi.opt_params.tau2, w),
        )
        return BiasEntry(bias=bias, set_params=sp, opt_params=op,
                         opt_g_steady=_lin(lo.opt_g_steady, hi.opt_g_steady, w))

    def lookup(self, bias: float) -> BiasEntry:
        """Exact tabulated entry at a stored bias, interpolated otherwise."""
        return self._bracket(bias)

    def set_params(self, bias: float) -> SetDecayParams:
        return self.lookup(bias).set_params

    def opt_params(self, bias: float) -> OpticalDecayParams:
        return self.lookup(bias).opt_params

    def steady_baseline(self, bias: float) -> float:
        """Steady conductance observed before any SET activity (nS)."""
        return self.lookup(bias).opt_g_steady

    # -- JSON I/O -----------------------------------------------------------

    @classmethod
    def from_dicts(cls, rows: list[dict]) -> "ParameterTable":
        entries = []
        for i, row in enumerate(rows):
            try:
                s = row["set"]
                o = row["opt"]
                sp = SetDecayParams(
                    g_steady=float(s["g_steady_nS"]), delta_g=float(s["dg_nS"]),
                    gamma=float(s["gamma"]), tau1=float(s["tau1_s"]),
                    tau2=float(s["tau2_s"]), beta=float(s["beta"]),
                )
                op = OpticalDecayParams(
                    delta_g=float(o["dg_nS"]), gamma=float(o["gamma"]),
                    tau1=float(o["tau1_s"]), tau2=float(o["tau2_s"]),
                )
                entries.append(BiasEntry(
                    bias=float(row["bias_V"]), set_params=sp, opt_params=op,
                    opt_g_steady=float(o.get("g_steady_nS", s["g_steady_nS"])),
                ))
            except KeyError as exc:
                raise ValueError(f"parameter table entry {i}: missing key {exc}") from exc
        return cls(entries)

    def to_dicts(self) -> list[dict]:
        rows = []
        for e in self.entries:
            rows.append({
                "bias_V": e.bias,
                "set": {
                    "g_steady_nS": e.set_params.g_steady, "dg_nS": e.set_params.delta_g,
                    "gamma": e.set_params.gamma, "tau1_s": e.set_params.tau1,
                    "tau2_s": e.set_params.tau2, "beta": e.set_params.beta,
                },
                "opt": {
                    "dg_nS": e.opt_params.delta_g, "gamma": e.opt_params.gamma,
                    "tau1_s": e.opt_params.tau1, "tau2_s": e.opt_params.tau2,
                    "g_steady_nS": e.opt_g_steady,
                },
            })
        return rows

    @classmethod
    def from_json(cls, path: str | Path) -> "ParameterTable":
        with open(path, encoding="utf-8") as fh:
            rows = json.load(fh)
        if not isinstance(rows, list):
            raise ValueError("parameter table JSON must be a list of bias entries")
        return cls.from_dicts(rows)

    def to_json(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dicts(), fh, indent=2, sort_keys=True)
            fh.write("\n")


_DEFAULT_TABLE: ParameterTable | None = None


def default_table() -> ParameterTable:
    """The bundled parameter table (cached)."""
    global _DEFAULT_TABLE
    if _DEFAULT_TABLE is None:
        text = resources.files("optomem").joinpath("data/decay_params.json").read_text()
        _DEFAULT_TABLE = ParameterTable.from_dicts(json.loads(text))
    return _DEFAULT_TABLE
