"""Explicit time integration with stability-bounded steps and detection.

SSP-RK3 (Shu-Osher) over the transport form of the dynamics. Steps are
capped by an advective CFL bound and a fractional-diffusion bound; the
run loop watches for vacuum, non-finite values, and blow-up indicators
(collapsing dt, runaway density or gradient, or a capped accumulation of
the squared-gradient history).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .model import RHO_FLOOR, NonFiniteError, SimState, VacuumError, advance, recover_velocity, rhs
from .spectral import derivative


class RunStatus(enum.Enum):
    COMPLETED = "completed"
    BLOWUP = "blowup_detected"
    VACUUM = "vacuum_detected"
    NAN = "nan_detected"


@dataclass(frozen=True)
class StepControl:
    """Step-size policy for a run up to t_end."""

    t_end: float
    cfl_advect: float = 0.4
    cfl_diffuse: float = 0.3
    dt_min: float = 1e-12
    dt_max: float = 0.1

    def __post_init__(self) -> None:
        vals = (self.t_end, self.cfl_advect, self.cfl_diffuse, self.dt_min, self.dt_max)
        if any(v <= 0 for v in vals):
            raise ValueError("all step-control parameters must be positive")
        if self.dt_min >= self.dt_max:
            raise ValueError("dt_min must be below dt_max")


@dataclass(frozen=True)
class DetectionThresholds:
    """Blow-up / vacuum detector settings.

    Defaults are far outside anything a regular run reaches; control
    scenarios (no alignment) override them to taste.
    """

    rho_max_factor: float = 1e6  # fire when max rho exceeds factor * rho_bar
    grad_rho_max: float = 1e8
    bkm_cap: float = math.inf  # cap on the running integral of |d rho/dx|_inf^2
    rho_floor: float = RHO_FLOOR


@dataclass
class RunOutcome:
    status: RunStatus
    t_final: float
    steps: int
    state: SimState
    detail: str = ""
    log: object | None = None  # first monitor exposing a .log attribute, if any

    @property
    def completed(self) -> bool:
        return self.status is RunStatus.COMPLETED


def _raw_dt(state: SimState, ctl: StepControl) -> float:
    d = recover_velocity(state, check_vacuum=False)
    u_inf = float(np.max(np.abs(d.u)))
    dx = state.grid.dx
    dt_adv = ctl.cfl_advect * dx / u_inf if u_inf > 0 else math.inf
    kern = state.kernel
    denom = (2 * np.pi) ** kern.alpha * kern.c * float(np.max(np.abs(state.rho)))
    denom += kern.psi_l.sup_norm() * state.rho_bar
    pot = state.potential
    forcing_scale = (abs(pot.k) + pot.kreg.second_derivative_sup()) * state.rho_bar
    denom += forcing_scale
    dt_dif = ctl.cfl_diffuse * dx**kern.alpha / denom if denom > 0 else math.inf
    return min(dt_adv, dt_dif)


def stable_dt(state: SimState, ctl: StepControl) -> float:
    """Stability-bounded step: min of the CFL bounds and dt_max, clamped
    below by dt_min."""
    return max(min(_raw_dt(state, ctl), ctl.dt_max), ctl.dt_min)


def step_ssprk3(state: SimState, dt: float, rho_floor: float = RHO_FLOOR) -> SimState:
    """One three-stage strong-stability-preserving RK3 update.

    Raises VacuumError / NonFiniteError if any stage leaves the valid
    region; the returned state has its invariants re-checked.
    """

    def euler(rho, g, s):
        drho, dg = rhs(advance(s, rho, g, 0.0), rho_floor)
        return rho + dt * drho, g + dt * dg

    def guard(rho, g, stage):
        if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(g))):
            raise NonFiniteError(f"non-finite values in RK stage {stage} at t={state.t:.6f}")
        if float(np.min(rho)) <= rho_floor:
            raise VacuumError(f"density floor crossed in RK stage {stage} at t={state.t:.6f}")

    r0, g0 = state.rho, state.g
    r1, g1 = euler(r0, g0, state)
    guard(r1, g1, 1)
    r1e, g1e = euler(r1, g1, state)
    r2 = 0.75 * r0 + 0.25 * r1e
    g2 = 0.75 * g0 + 0.25 * g1e
    guard(r2, g2, 2)
    r2e, g2e = euler(r2, g2, state)
    rn = (r0 + 2.0 * r2e) / 3.0
    gn = (g0 + 2.0 * g2e) / 3.0
    guard(rn, gn, 3)
    new = advance(state, rn, gn, dt)
    new.validate(rho_floor)
    return new


def run(state: SimState, ctl: StepControl, monitors: tuple = (),
        detection: DetectionThresholds = DetectionThresholds()) -> RunOutcome:
    """March the state to ctl.t_end or until a detector fires.

    Monitors are callables ``monitor(step, state)`` invoked after every
    accepted step (and once for the initial state); they own their own
    cadence decisions and see read-only snapshots.
    """
    steps = 0
    bkm = 0.0
    prev_sq = float(np.max(np.abs(derivative(state.rho, state.grid)))) ** 2
    for m in monitors:
        m(0, state)

    def outcome(status, detail=""):
        log = next((m.log for m in monitors if hasattr(m, "log")), None)
        return RunOutcome(status=status, t_final=state.t, steps=steps,
                          state=state, detail=detail, log=log)

    while state.t < ctl.t_end - 1e-12:
        rho_max = float(np.max(state.rho))
        grad_inf = float(np.max(np.abs(derivative(state.rho, state.grid))))
        if rho_max > detection.rho_max_factor * state.rho_bar:
            return outcome(RunStatus.BLOWUP, f"max density {rho_max:.3e}")
        if grad_inf > detection.grad_rho_max:
            return outcome(RunStatus.BLOWUP, f"density gradient {grad_inf:.3e}")
        if bkm > detection.bkm_cap:
            return outcome(RunStatus.BLOWUP, f"squared-gradient accumulation {bkm:.3e}")
        raw = _raw_dt(state, ctl)
        if raw < ctl.dt_min:
            return outcome(RunStatus.BLOWUP, f"stable step collapsed to {raw:.3e}")
        dt = min(raw, ctl.dt_max, ctl.t_end - state.t)
        try:
            state = step_ssprk3(state, dt, detection.rho_floor)
        except VacuumError as exc:
            return outcome(RunStatus.VACUUM, str(exc))
        except (NonFiniteError, FloatingPointError) as exc:
            return outcome(RunStatus.NAN, str(exc))
        steps += 1
        cur_sq = float(np.max(np.abs(derivative(state.rho, state.grid)))) ** 2
        bkm += 0.5 * (prev_sq + cur_sq) * dt
        prev_sq = cur_sq
        for m in monitors:
            m(steps, state)
    return outcome(RunStatus.COMPLETED)
