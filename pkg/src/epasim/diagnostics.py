"""Verification of the a-priori bounds along simulated trajectories.

Implements the explicit constants of the density envelopes and the bound
on the transported ratio f = g/rho:

    min rho(t)  >=  C_m exp(-A_m t)
    max rho(t)  <=  max(max rho_0, 3 rho_bar, (F_M(t)/C_1)^(1/alpha))
    |f(t)|_inf  <=  F_M(t) = |f_0|_inf + |k| t + kappa rho_bar/(A_m C_m) e^{A_m t}

with A_m = (kappa/psi_m)(1+eps), C_m = min(min rho_0, eps e rho_bar),
kappa = |k| + |K_reg''|_inf, and eps a chosen fraction of

    eps_* = ( sqrt(1 + 4 psi_m / (e (psi_m + |psi_l|_inf + |f_0|_inf))) - 1 ) / 2.

It also implements the two-branch modulus-of-continuity gauge

    w_B(xi) = B xi - (B xi)^(1+alpha/2)          for xi <  delta/B
            = gamma log(B xi/delta) + delta - delta^(1+alpha/2)  otherwise

together with the recipe that selects (delta, gamma, B) from the envelope
values at a horizon T, a pairwise grid check of the gauge, and the
accumulation of |d rho/dx|_inf^2 whose finiteness is the regularity
criterion.

Grid extrema under-sample continuum extrema, so every envelope comparison
carries the slack factor 1 + 10 dx; margins are reported with the slack
folded in, so margin >= 1 always means "pass".
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .kernels import kernel_min
from .model import RHO_FLOOR, SimState, recover_velocity
from .spectral import Grid, derivative, mean

ENVELOPE_SLACK = 10.0  # slack factor 1 + ENVELOPE_SLACK * dx on grid extrema
F_BOUND_ATOL = 1e-12  # absolute floor so roundoff-level f fields compare sanely

CSV_COLUMNS = (
    "t", "rho_min", "rho_max", "F_inf", "drho_inf", "bkm",
    "mass", "momentum", "env_lower_margin", "env_upper_margin",
    "moc_pass", "moc_min_B",
)


def _trapz(y, x):
    f = getattr(np, "trapezoid", None) or np.trapz
    return float(f(np.asarray(y), np.asarray(x)))


# ---------------------------------------------------------------------------
# bound constants


@dataclass(frozen=True)
class BoundConstants:
    """Explicit envelope constants derived from an initial state."""

    alpha: float
    rho_bar: float
    psi_m: float
    psi_l_sup: float
    kxx_sup: float
    k: float
    f0_inf: float
    q0_inf: float
    rho0_min: float
    rho0_max: float
    eps_star: float
    eps: float
    a_m: float
    c_m: float
    a_big: float
    c_big: float
    c1: float
    general: bool

    @property
    def kappa(self) -> float:
        """Combined forcing coefficient |k| + |K_reg''|_inf."""
        return abs(self.k) + self.kxx_sup

    def rho_min_envelope(self, t) -> np.ndarray | float:
        return self.c_m * np.exp(-self.a_m * np.asarray(t, dtype=float))

    def rho_max_envelope(self, t) -> np.ndarray | float:
        return self.c_big * np.exp(self.a_big * np.asarray(t, dtype=float))

    def f_bound(self, t) -> np.ndarray | float:
        """Growth envelope F_M(t) for the transported ratio."""
        t = np.asarray(t, dtype=float)
        out = np.full_like(t, self.f0_inf)
        if self.kappa > 0:
            out = out + abs(self.k) * t
            out = out + self.kappa * self.rho_bar / (self.a_m * self.c_m) * np.exp(self.a_m * t)
        return out if out.ndim else float(out)

    def rho_max_bound(self, t) -> np.ndarray | float:
        """Pointwise-in-time upper bound on max rho (three/four branch)."""
        t = np.asarray(t, dtype=float)
        fac = 2.0 if self.general else 1.0
        branch = (fac * np.asarray(self.f_bound(t)) / self.c1) ** (1.0 / self.alpha)
        out = np.maximum(np.maximum(self.rho0_max, 3.0 * self.rho_bar), branch)
        if self.general and self.psi_l_sup > 0:
            lip = (2.0 * self.psi_l_sup * self.rho_bar / self.c1) ** (1.0 / (1.0 + self.alpha))
            out = np.maximum(out, lip)
        return out if out.ndim else float(out)


def bound_constants(state: SimState, eps_fraction: float = 0.5, c1: float = 1.0) -> BoundConstants:
    """Evaluate every envelope constant from the initial state.

    ``eps_fraction`` places eps inside (0, eps_*); ``c1`` is the
    user-supplied nonlinear-maximum-principle constant (no numeric value
    is derivable here, so it defaults to 1 and the upper-envelope check
    additionally reports the value fitted from the run).
    """
    if not 0.0 < eps_fraction < 1.0:
        raise ValueError("eps_fraction must be in (0, 1)")
    if not state.kernel.enabled:
        raise ValueError("bound constants require an active alignment kernel")
    if float(np.min(state.rho)) <= 0.0:
        raise ValueError("bound constants require strictly positive initial density")
    alpha = state.kernel.alpha
    if alpha >= 1.0:
        warnings.warn(
            "envelope constants are derived for alpha < 1; "
            "monitors run but should be read as advisory",
            stacklevel=2,
        )
    psi_m = kernel_min(state.kernel)
    if psi_m <= 0.0:
        raise ValueError("effective kernel has no positive lower bound")
    psi_l_sup = state.kernel.psi_l.sup_norm()
    kxx_sup = state.potential.kreg.second_derivative_sup()
    f0 = state.g / state.rho
    f0_inf = float(np.max(np.abs(f0)))
    q0_inf = float(np.max(np.abs(derivative(f0, state.grid) / state.rho)))
    eps_star = 0.5 * (
        math.sqrt(1.0 + 4.0 * psi_m / (math.e * (psi_m + psi_l_sup + f0_inf))) - 1.0
    )
    eps = eps_fraction * eps_star
    kappa = abs(state.potential.k) + kxx_sup
    a_m = kappa / psi_m * (1.0 + eps)
    c_m = min(float(np.min(state.rho)), eps * math.e * state.rho_bar)
    general = (psi_l_sup > 0.0) or (kxx_sup > 0.0)
    fac = 2.0 if general else 1.0
    if kappa > 0:
        peak = f0_inf + abs(state.potential.k) / (math.e * a_m) + kappa * state.rho_bar / (a_m * c_m)
    else:
        peak = f0_inf
    branch3 = (fac * peak / c1) ** (1.0 / alpha)
    c_big = max(float(np.max(state.rho)), 3.0 * state.rho_bar, branch3)
    if general and psi_l_sup > 0:
        c_big = max(c_big, (2.0 * psi_l_sup * state.rho_bar / c1) ** (1.0 / (1.0 + alpha)))
    return BoundConstants(
        alpha=alpha,
        rho_bar=state.rho_bar,
        psi_m=psi_m,
        psi_l_sup=psi_l_sup,
        kxx_sup=kxx_sup,
        k=state.potential.k,
        f0_inf=f0_inf,
        q0_inf=q0_inf,
        rho0_min=float(np.min(state.rho)),
        rho0_max=float(np.max(state.rho)),
        eps_star=eps_star,
        eps=eps,
        a_m=a_m,
        c_m=c_m,
        a_big=a_m / alpha,
        c_big=c_big,
        c1=c1,
        general=general,
    )


# ---------------------------------------------------------------------------
# modulus of continuity


@dataclass(frozen=True)
class ModulusParams:
    """Parameters of the two-branch concave gauge w_B.

    The invariants keep the gauge strictly increasing and concave on
    (0, 1/2]: the power branch must not bend over before the joint and
    the log branch must not out-slope it.
    """

    delta: float
    gamma: float
    b: float
    alpha: float

    def __post_init__(self) -> None:
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must be in (0, 1)")
        if self.gamma <= 0.0:
            raise ValueError("gamma must be positive")
        if self.b < 1.0:
            raise ValueError("b must be at least 1")
        if not 0.0 < self.alpha <= 2.0:
            raise ValueError("alpha must be in (0, 2]")
        bend = (1.0 + self.alpha / 2.0) * self.delta ** (self.alpha / 2.0)
        if bend >= 1.0:
            raise ValueError("power branch not increasing: delta too large for this alpha")
        head = self.delta - self.delta ** (1.0 + self.alpha / 2.0)
        tol = 1.0 + 1e-9
        if self.gamma > head / (2.0 * math.log(2.0)) * tol:
            raise ValueError("gamma exceeds (delta - delta^(1+a/2)) / (2 log 2)")
        if self.gamma > self.delta * (1.0 - bend) * tol:
            raise ValueError("gamma breaks concavity at the branch joint")


def omega_b(xi, p: ModulusParams) -> np.ndarray | float:
    """Evaluate the gauge w_B on distances xi in (0, 1/2]."""
    xi = np.asarray(xi, dtype=float)
    if np.any(xi <= 0.0) or np.any(xi > 0.5):
        raise ValueError("xi must lie in (0, 1/2]")
    head = p.delta - p.delta ** (1.0 + p.alpha / 2.0)
    if math.isinf(p.b):
        out = np.full_like(xi, np.inf)
        return out if out.ndim else float(out)
    bxi = p.b * xi
    mask = bxi < p.delta
    out = np.empty_like(xi)
    out[mask] = bxi[mask] - bxi[mask] ** (1.0 + p.alpha / 2.0)
    # log evaluated additively so huge b never overflows the argument
    out[~mask] = p.gamma * (math.log(p.b) + np.log(xi[~mask]) - math.log(p.delta)) + head
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class MocReport:
    passed: bool
    margin: float  # min over pairs of w_B(d) - |rho(x) - rho(y)|
    distance: float
    pair: tuple[int, int]


def moc_check(rho: np.ndarray, p: ModulusParams, grid: Grid) -> MocReport:
    """Check |rho(x) - rho(y)| < w_B(d(x, y)) over all grid pairs.

    Cost O(n^2); returns the pair with the smallest gap.
    """
    rho = np.asarray(rho, dtype=float)
    lags = np.arange(1, grid.n // 2 + 1)
    dists = lags / grid.n
    gauge = np.asarray(omega_b(dists, p))
    worst = (math.inf, 0.5, (0, 0))
    for lag, d, w in zip(lags, dists, gauge):
        diff = np.abs(rho - np.roll(rho, -int(lag)))
        i = int(np.argmax(diff))
        gap = float(w - diff[i])
        if gap < worst[0]:
            worst = (gap, float(d), (i, (i + int(lag)) % grid.n))
    return MocReport(passed=worst[0] > 0.0, margin=worst[0], distance=worst[1], pair=worst[2])


def moc_min_b(rho: np.ndarray, delta: float, gamma: float, alpha: float, grid: Grid,
              b_cap: float = 1e290, rtol: float = 0.01) -> float:
    """Smallest b (within rtol, bisected in log space) passing the check.

    Returns 1.0 when even the smallest admissible b passes (constant
    fields), and +inf when no b below ``b_cap`` does.
    """

    def ok(b: float) -> bool:
        return moc_check(rho, ModulusParams(delta, gamma, b, alpha), grid).passed

    if ok(1.0):
        return 1.0
    if not ok(b_cap):
        return math.inf
    lo, hi = math.log(1.0), math.log(b_cap)
    while hi - lo > math.log1p(rtol):
        mid = 0.5 * (lo + hi)
        if ok(math.exp(mid)):
            hi = mid
        else:
            lo = mid
    return math.exp(hi)


def certified_modulus_params(state0: SimState, bc: BoundConstants, t_end: float,
                             c2: float = 1.0, c3: float = 1.0,
                             c_f: float | None = None,
                             margin: float = 0.99) -> ModulusParams:
    """Select (delta, gamma, B) from the envelope values at horizon t_end.

    c2 and c3 are the alpha-dependent constants of the gauge-transport
    estimates (no numeric values are derivable; defaults 1). c_f is the
    Lipschitz-transfer constant; when omitted it is computed exactly in
    the forcing-free case (where the ratio gradient is transported) and
    defaults to 1 otherwise. All strict inequalities are applied with the
    given safety margin. The certified B is double-exponential in the
    inputs and may overflow to +inf; data-driven monitoring should prefer
    moc_min_b.
    """
    if c2 <= 0 or c3 <= 0 or t_end < 0:
        raise ValueError("c2, c3 must be positive and t_end nonnegative")
    if c_f is not None and c_f < 0:
        raise ValueError("c_f must be nonnegative")
    alpha = bc.alpha
    rho_m = float(bc.rho_min_envelope(t_end))
    rho_big = max(float(bc.rho_max_envelope(t_end)), 1.0)
    f_big = float(bc.f_bound(t_end))
    if c_f is None:
        c_f = rho_big * bc.q0_inf if bc.kappa == 0 else 1.0
    denom = max(4.0 * c2, 12.0 * rho_big * f_big, 6.0 * rho_big**2 * c_f)
    bend_cap = (1.0 / (1.0 + alpha / 2.0)) ** (2.0 / alpha)
    rho0_sup = bc.rho0_max
    drho0 = float(np.max(np.abs(derivative(state0.rho, state0.grid))))
    slope_cap = 2.0 * rho0_sup / drho0 if drho0 > 0 else math.inf
    delta = margin * min(1.0, slope_cap, (c3 * rho_m / denom) ** (2.0 / alpha), bend_cap)
    if not 0.0 < delta < 1.0:
        raise ValueError(f"selected delta {delta} is out of (0, 1)")
    head = delta - delta ** (1.0 + alpha / 2.0)
    bend = (1.0 + alpha / 2.0) * delta ** (alpha / 2.0)
    gamma = margin * min(
        c3 / (4.0 * c2) * rho_m,
        min(1.0 / (2.0 * math.log(2.0)), alpha) * head,
        delta * (1.0 - bend),
        1.0,
    )
    if gamma <= 0.0:
        raise ValueError("selected gamma is not positive")
    log_b = 0.0
    if drho0 > 0:
        log_b = max(log_b, math.log(delta * drho0 / (2.0 * rho0_sup)) + 2.0 * rho0_sup / gamma)
    log_b = max(log_b, math.log(2.0 * delta) + 6.0 * rho_big**2 * f_big / (c3 * gamma * rho_m))
    log_b -= math.log(margin)
    b = math.exp(log_b) if log_b < math.log(1e308) else math.inf
    return ModulusParams(delta=delta, gamma=gamma, b=max(b, 1.0), alpha=alpha)


# ---------------------------------------------------------------------------
# run log and recorder


@dataclass
class DiagnosticsLog:
    """Column-oriented time series of the monitored quantities."""

    n: int
    alpha: float
    k: float
    config_hash: str = ""
    t: list = field(default_factory=list)
    rho_min: list = field(default_factory=list)
    rho_max: list = field(default_factory=list)
    f_inf: list = field(default_factory=list)
    drho_inf: list = field(default_factory=list)
    bkm: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    momentum: list = field(default_factory=list)
    env_lower_margin: list = field(default_factory=list)
    env_upper_margin: list = field(default_factory=list)
    moc_pass: list = field(default_factory=list)
    moc_min_b: list = field(default_factory=list)

    _FIELDS = ("t", "rho_min", "rho_max", "f_inf", "drho_inf", "bkm", "mass",
               "momentum", "env_lower_margin", "env_upper_margin", "moc_pass", "moc_min_b")

    @property
    def dx(self) -> float:
        return 1.0 / self.n

    def column(self, name: str) -> np.ndarray:
        return np.asarray(getattr(self, name), dtype=float)

    def to_csv(self, stream) -> None:
        close = False
        if isinstance(stream, (str, bytes)):
            stream = open(stream, "w", encoding="utf-8")
            close = True
        try:
            stream.write(f"# config={self.config_hash}\n")
            stream.write(f"# n={self.n} alpha={self.alpha!r} k={self.k!r}\n")
            stream.write(",".join(CSV_COLUMNS) + "\n")
            for row in zip(*(getattr(self, f) for f in self._FIELDS)):
                stream.write(",".join(f"{v:.17g}" for v in row) + "\n")
        finally:
            if close:
                stream.close()

    @classmethod
    def from_csv(cls, stream) -> "DiagnosticsLog":
        close = False
        if isinstance(stream, (str, bytes)):
            stream = open(stream, "r", encoding="utf-8")
            close = True
        try:
            header = {}
            line = stream.readline()
            while line.startswith("#"):
                for tok in line[1:].split():
                    if "=" in tok:
                        key, val = tok.split("=", 1)
                        header[key] = val
                line = stream.readline()
            cols = line.strip().split(",")
            if cols != list(CSV_COLUMNS):
                raise ValueError(f"unexpected diagnostics columns {cols}")
            log = cls(
                n=int(header.get("n", 0)),
                alpha=float(header.get("alpha", "nan")),
                k=float(header.get("k", "nan")),
                config_hash=header.get("config", ""),
            )
            for line in stream:
                if not line.strip():
                    continue
                vals = [float(v) for v in line.strip().split(",")]
                for name, v in zip(log._FIELDS, vals):
                    getattr(log, name).append(v)
            return log
        finally:
            if close:
                stream.close()

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()


class DiagnosticsRecorder:
    """Monitor collecting the diagnostics log during a run.

    Scalar quantities are recorded every ``record_every`` steps; the
    O(n^2) modulus check runs every ``moc_every`` steps (rows in between
    carry NaN in the modulus columns).
    """

    def __init__(self, bounds: BoundConstants | None = None,
                 moc: ModulusParams | None = None,
                 record_every: int = 1, moc_every: int = 10,
                 min_b_trace: bool = True, rho_floor: float = RHO_FLOOR,
                 config_hash: str = ""):
        self.bounds = bounds
        self.moc = moc
        self.record_every = max(1, int(record_every))
        self.moc_every = max(1, int(moc_every))
        self.min_b_trace = min_b_trace
        self.rho_floor = rho_floor
        self._hash = config_hash
        self.log: DiagnosticsLog | None = None

    def __call__(self, step: int, state: SimState) -> None:
        if self.log is None:
            self.log = DiagnosticsLog(
                n=state.grid.n, alpha=state.kernel.alpha, k=state.potential.k,
                config_hash=self._hash,
            )
        if step % self.record_every != 0:
            return
        log = self.log
        grid = state.grid
        t = state.t
        rho_min = float(np.min(state.rho))
        rho_max = float(np.max(state.rho))
        drho = float(np.max(np.abs(derivative(state.rho, grid))))
        d = recover_velocity(state, check_vacuum=False)
        with np.errstate(divide="ignore", invalid="ignore"):
            f_inf = float(np.max(np.abs(state.g / state.rho)))
        momentum = mean(state.rho * d.u)
        if log.t:
            bkm = log.bkm[-1] + 0.5 * (log.drho_inf[-1] ** 2 + drho**2) * (t - log.t[-1])
        else:
            bkm = 0.0
        slack = 1.0 + ENVELOPE_SLACK * grid.dx
        if self.bounds is not None:
            low = rho_min * slack / float(self.bounds.rho_min_envelope(t))
            up = float(self.bounds.rho_max_bound(t)) * slack / rho_max
        else:
            low = up = math.nan
        if self.moc is not None and step % self.moc_every == 0:
            rep = moc_check(state.rho, self.moc, grid)
            moc_pass = 1.0 if rep.passed else 0.0
            if self.min_b_trace:
                min_b = moc_min_b(state.rho, self.moc.delta, self.moc.gamma,
                                  self.moc.alpha, grid)
            else:
                min_b = math.nan
        else:
            moc_pass = math.nan
            min_b = math.nan
        log.t.append(t)
        log.rho_min.append(rho_min)
        log.rho_max.append(rho_max)
        log.f_inf.append(f_inf)
        log.drho_inf.append(drho)
        log.bkm.append(bkm)
        log.mass.append(mean(state.rho))
        log.momentum.append(momentum)
        log.env_lower_margin.append(low)
        log.env_upper_margin.append(up)
        log.moc_pass.append(moc_pass)
        log.moc_min_b.append(min_b)


# ---------------------------------------------------------------------------
# offline checks over a log


@dataclass(frozen=True)
class CheckReport:
    passed: bool
    margin: float
    worst_t: float
    detail: str = ""
    c1_fit: float = math.nan


def check_lower_envelope(log: DiagnosticsLog, bc: BoundConstants) -> CheckReport:
    """min rho(t) >= C_m exp(-A_m t) at every logged time (with slack)."""
    t = log.column("t")
    if t.size == 0:
        return CheckReport(False, math.nan, math.nan, "empty log")
    slack = 1.0 + ENVELOPE_SLACK * log.dx
    margins = log.column("rho_min") * slack / np.asarray(bc.rho_min_envelope(t))
    i = int(np.argmin(margins))
    return CheckReport(bool(margins[i] >= 1.0), float(margins[i]), float(t[i]))


def check_upper_envelope(log: DiagnosticsLog, bc: BoundConstants) -> CheckReport:
    """max rho(t) <= its three/four-branch bound; also fit the largest
    maximum-principle constant consistent with the run."""
    t = log.column("t")
    if t.size == 0:
        return CheckReport(False, math.nan, math.nan, "empty log")
    slack = 1.0 + ENVELOPE_SLACK * log.dx
    rho_max = log.column("rho_max")
    margins = np.asarray(bc.rho_max_bound(t)) * slack / rho_max
    i = int(np.argmin(margins))
    # times where only the growth branch can cover the observed maximum
    fac = 2.0 if bc.general else 1.0
    flat = max(bc.rho0_max, 3.0 * bc.rho_bar)
    if bc.general and bc.psi_l_sup > 0:
        flat = max(flat, (2.0 * bc.psi_l_sup * bc.rho_bar / bc.c1) ** (1.0 / (1.0 + bc.alpha)))
    binding = rho_max / slack > flat
    if np.any(binding):
        c1_fit = float(np.min(
            fac * np.asarray(bc.f_bound(t))[binding] / (rho_max[binding] / slack) ** bc.alpha
        ))
    else:
        c1_fit = math.inf
    return CheckReport(bool(margins[i] >= 1.0), float(margins[i]), float(t[i]), c1_fit=c1_fit)


def check_f_bound(log: DiagnosticsLog, bc: BoundConstants) -> CheckReport:
    """|f(t)|_inf <= F_M(t) at every logged time (slack plus tiny floor)."""
    t = log.column("t")
    if t.size == 0:
        return CheckReport(False, math.nan, math.nan, "empty log")
    slack = 1.0 + ENVELOPE_SLACK * log.dx
    bound = np.asarray(bc.f_bound(t)) * slack + F_BOUND_ATOL
    gaps = bound - log.column("f_inf")
    i = int(np.argmin(gaps))
    return CheckReport(bool(gaps[i] >= 0.0), float(gaps[i]), float(t[i]))


def check_f_transported(log: DiagnosticsLog, atol: float = 1e-6) -> CheckReport:
    """Forcing-free property: |f|_inf never increases along the log.

    ``atol`` absorbs integrator-level fluctuation (scaled by the initial
    size); only meaningful when k = 0 and the regular potential is off.
    """
    f = log.column("f_inf")
    if f.size == 0:
        return CheckReport(False, math.nan, math.nan, "empty log")
    tol = atol * max(1.0, f[0])
    steps = np.diff(f)
    gaps = tol - steps
    i = int(np.argmin(gaps)) if steps.size else 0
    worst = float(gaps[i]) if steps.size else math.inf
    t = log.column("t")
    return CheckReport(bool(worst >= 0.0), worst, float(t[i + 1] if steps.size else t[0]))


def bkm_accumulate(log: DiagnosticsLog) -> float:
    """Trapezoidal accumulation of |d rho/dx|_inf^2 over the logged times."""
    return _trapz(log.column("drho_inf") ** 2, log.column("t"))
