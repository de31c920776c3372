"""Conductance dynamics of a dynamic electro-optical memristor.

The device is modelled as a steady conductance level plus a superposition of
additive relaxation kernels, one per past SET or optical event.  Electrical
SET events relax as a weighted sum of one exponential and one stretched
exponential; optical events relax as a double exponential.  The conductance
jump induced by an optical pulse follows a power law in the instantaneous
conductance state and in the optical power density.

All conductances are in nS, times in s, voltages in V and optical power
densities in mW/cm^2.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .params import (
    OpticalDecayParams,
    ParameterTable,
    PhotoresponseLaw,
    SetDecayParams,
    default_table,
)

__all__ = [
    "KernelKind",
    "DecayKernel",
    "DeviceState",
    "set_decay_value",
    "optical_decay_value",
    "mean_time_constant",
    "photoresponse",
    "bias_params",
    "apply_set_event",
    "apply_optical_pulse",
    "conductance_at",
    "steady_drift",
]

#: Kernels contributing less than this (nS) at the current clock are dropped.
DEFAULT_PRUNE_THRESHOLD = 1e-3

#: Default first-order relaxation time of the steady level under bias (s).
DEFAULT_DRIFT_TAU = 100.0


def _relax(x, gamma: float, tau1: float, tau2: float, beta: float):
    """Normalised relaxation profile (gamma*e1 + e2)/(gamma + 1).

    Equals exactly 1.0 at x = 0 for any gamma >= 0 and decays strictly to 0.
    Accepts scalars or arrays; x must be non-negative.
    """
    x = np.asarray(x, dtype=float)
    e1 = np.exp(-x / tau1)
    e2 = np.exp(-((x / tau2) ** beta))
    out = (gamma * e1 + e2) / (gamma + 1.0)
    if out.ndim == 0:
        return float(out)
    return out


def set_decay_value(p: SetDecayParams, t, t0: float):
    """Conductance of the SET relaxation model at time t for an event at t0."""
    p.validate()
    x = np.asarray(t, dtype=float) - t0
    if np.any(x < 0):
        raise ValueError("t must be >= t0")
    return p.g_steady + p.delta_g * _relax(x, p.gamma, p.tau1, p.tau2, p.beta)


def optical_decay_value(p: OpticalDecayParams, baseline, t, t0: float):
    """Conductance of the optical relaxation model on top of a baseline."""
    p.validate()
    x = np.asarray(t, dtype=float) - t0
    if np.any(x < 0):
        raise ValueError("t must be >= t0")
    return baseline + p.delta_g * _relax(x, p.gamma, p.tau1, p.tau2, 1.0)


def mean_time_constant(tau2: float, beta: float) -> float:
    """Mean relaxation time of a stretched exponential: (tau2/beta)*Gamma(1/beta)."""
    if tau2 <= 0:
        raise ValueError("tau2 must be > 0")
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"beta must be in (0, 1], got {beta}")
    return (tau2 / beta) * math.gamma(1.0 / beta)


def photoresponse(law: PhotoresponseLaw, g0: float, p_opt: float) -> float:
    """Conductance jump (nS) induced by an optical pulse.

    Power law in both the conductance state g0 and the pulse power density
    p_opt; returns 0 when either is zero.
    """
    if g0 < 0:
        raise ValueError("g0 must be >= 0")
    if p_opt < 0:
        raise ValueError("p_opt must be >= 0")
    return law.dg_ref * (g0 / law.g_ref) ** law.k_g * (p_opt / law.p_ref) ** law.k_p


def bias_params(bias: float, table: ParameterTable | None = None) -> tuple[SetDecayParams, OpticalDecayParams]:
    """SET and optical parameter rows at a bias voltage (clamped, interpolated)."""
    table = table if table is not None else default_table()
    entry = table.lookup(bias)
    return entry.set_params, entry.opt_params


class KernelKind(enum.Enum):
    SET = "set"
    OPTICAL = "optical"


@dataclass(frozen=True)
class DecayKernel:
    """One additive relaxation kernel spawned by a past event.

    The kernel value equals ``amplitude`` exactly at t = t0 and decays
    strictly monotonically to zero.  Optical kernels have beta = 1 (plain
    double exponential).
    """

    kind: KernelKind
    t0: float
    amplitude: float
    gamma: float
    tau1: float
    tau2: float
    beta: float = 1.0

    def value(self, t):
        x = np.asarray(t, dtype=float) - self.t0
        if np.any(x < 0):
            raise ValueError(f"kernel at t0={self.t0} queried at earlier t")
        return self.amplitude * _relax(x, self.gamma, self.tau1, self.tau2, self.beta)


@dataclass(frozen=True)
class DeviceState:
    """Value-semantic device state: steady level, event kernels, bias, clock.

    All operations return a new state; a state is never mutated in place, so
    distinct devices can be evolved in parallel without coordination.
    """

    g_steady: float
    bias: float = 0.0
    clock: float = 0.0
    kernels: tuple[DecayKernel, ...] = ()
    table: ParameterTable = field(default_factory=default_table, repr=False)
    law: PhotoresponseLaw = field(default_factory=PhotoresponseLaw)
    prune_threshold: float = DEFAULT_PRUNE_THRESHOLD

    @classmethod
    def at_steady(cls, bias: float = 0.0, clock: float = 0.0,
                  table: ParameterTable | None = None, **kwargs) -> "DeviceState":
        """Fresh device resting at the steady baseline for the given bias."""
        table = table if table is not None else default_table()
        return cls(g_steady=table.steady_baseline(bias), bias=bias,
                   clock=clock, table=table, **kwargs)


def conductance_at(state: DeviceState, t) -> float:
    """Total conductance at time t: steady level plus all kernel values.

    Queries are exact for any t at or after the most recent kernel origin;
    earlier queries raise, because kernels negligible at the current clock
    may already have been pruned.
    """
    if state.kernels:
        latest = max(k.t0 for k in state.kernels)
        if np.any(np.asarray(t, dtype=float) < latest):
            raise ValueError(f"query at t={t} precedes latest kernel origin {latest}")
    total = np.asarray(t, dtype=float) * 0.0 + state.g_steady
    for k in state.kernels:
        total = total + k.value(t)
    if total.ndim == 0:
        return float(total)
    return total


def _pruned(kernels: tuple[DecayKernel, ...], at: float, threshold: float) -> tuple[DecayKernel, ...]:
    return tuple(k for k in kernels if k.value(at) >= threshold)


def apply_set_event(state: DeviceState, at: float, amplitude: float | None = None) -> DeviceState:
    """Apply an electrical SET event at time ``at``.

    Spawns a SET kernel with the bias-dependent relaxation parameters; the
    amplitude defaults to the tabulated SET jump for the device bias and may
    be overridden for uncharacterised waveforms.
    """
    if at < state.clock:
        raise ValueError(f"event at t={at} precedes device clock {state.clock}")
    sp, _ = bias_params(state.bias, state.table)
    amp = sp.delta_g if amplitude is None else float(amplitude)
    if amp < 0:
        raise ValueError("SET amplitude must be >= 0")
    kern = DecayKernel(kind=KernelKind.SET, t0=at, amplitude=amp,
                       gamma=sp.gamma, tau1=sp.tau1, tau2=sp.tau2, beta=sp.beta)
    kernels = _pruned(state.kernels, at, state.prune_threshold) + (kern,)
    return replace(state, kernels=kernels, clock=at)


def apply_optical_pulse(state: DeviceState, p_opt: float, width: float, at: float) -> DeviceState:
    """Apply an optical pulse of power density p_opt starting at ``at``.

    The pulse is modelled as an instantaneous conductance step at pulse end:
    the jump is the photoresponse of the conductance state at pulse start,
    and the resulting optical kernel is anchored at ``at + width``.
    """
    if at < state.clock:
        raise ValueError(f"pulse at t={at} precedes device clock {state.clock}")
    if width <= 0:
        raise ValueError("pulse width must be > 0")
    g0 = conductance_at(state, at)
    dg = photoresponse(state.law, g0, p_opt)
    _, op = bias_params(state.bias, state.table)
    kern = DecayKernel(kind=KernelKind.OPTICAL, t0=at + width, amplitude=dg,
                       gamma=op.gamma, tau1=op.tau1, tau2=op.tau2, beta=1.0)
    kernels = _pruned(state.kernels, at, state.prune_threshold) + (kern,)
    return replace(state, kernels=kernels, clock=at + width)


def steady_drift(state: DeviceState, dt: float, tau_drift: float = DEFAULT_DRIFT_TAU,
                 target: float | None = None) -> DeviceState:
    """Relax the steady level first-order toward its bias-dependent target.

    The target defaults to the tabulated SET-model steady conductance at the
    device bias.  Drift is disabled by passing ``tau_drift = math.inf``.
    """
    if dt < 0:
        raise ValueError("dt must be >= 0")
    if target is None:
        target = bias_params(state.bias, state.table)[0].g_steady
    if dt == 0 or math.isinf(tau_drift):
        g = state.g_steady
    else:
        g = target + (state.g_steady - target) * math.exp(-dt / tau_drift)
    return replace(state, g_steady=g, clock=state.clock + dt)
