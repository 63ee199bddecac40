"""Entropies, secrecy bounds, Devetak-Winter rates, and the searches built on them."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, fields, replace
from enum import Enum

import numpy as np
from scipy.optimize import minimize
from scipy.special import entr

from spsqss.heralding import heralding_probability
from spsqss.noise import NoiseParams, Strategy, chsh_value, total_qber

SQRT2 = math.sqrt(2.0)
S_MAX = 2.0 * SQRT2
LN2 = math.log(2.0)


# --------------------------------------------------------------------------
# entropies


def binary_entropy(x):
    """Binary Shannon entropy in bits, with 0 log 0 = 0. Accepts arrays."""
    x = np.asarray(x, dtype=float)
    if np.any((x < 0.0) | (x > 1.0)):
        raise ValueError("binary entropy argument must lie in [0, 1]")
    out = (entr(x) + entr(1.0 - x)) / LN2
    return float(out) if out.ndim == 0 else out


def g_func(x: float) -> float:
    return 1.0 - binary_entropy(0.5 + 0.5 * x)


def _clamp_chsh(S: float) -> float | None:
    if S < 2.0:
        if S < 2.0 - 1e-12:
            warnings.warn(f"CHSH value {S} below 2; secrecy bound is 0", stacklevel=3)
        return None
    if S > S_MAX:
        if S > S_MAX + 1e-12:
            warnings.warn(f"CHSH value {S} above 2*sqrt(2); clamped", stacklevel=3)
        return S_MAX
    return S


def _g_correlation(e: float, q: float) -> float:
    # shared form: e is the correlation strength in [0, 1]
    e = min(max(e, 0.0), 1.0)
    noisy = math.sqrt((1.0 - 2.0 * q) ** 2 + 4.0 * q * (1.0 - q) * e * e)
    return 1.0 - binary_entropy(0.5 + 0.5 * e) + binary_entropy(0.5 + 0.5 * min(noisy, 1.0))


def g_func_q(S: float, q: float) -> float:
    """Noisy-preprocessing secrecy function evaluated at CHSH value ``S``."""
    if not 0.0 <= q <= 0.5:
        raise ValueError(f"q must lie in [0, 0.5], got {q}")
    S = _clamp_chsh(S)
    if S is None:
        return 0.0
    return _g_correlation(math.sqrt(max(S * S / 4.0 - 1.0, 0.0)), q)


# --------------------------------------------------------------------------
# secrecy providers


class Provider(str, Enum):
    IDEAL = "ideal"
    PIRONIO = "pironio"
    TRANSCRIBED = "transcribed"


@dataclass(frozen=True)
class SecrecyProvider:
    variant: Provider = Provider.PIRONIO
    grid: int = 17
    refine: int = 6
    tol: float = 1e-9

    def __str__(self):
        return self.variant.value


class ProviderDomainError(ValueError):
    """The chosen provider is undefined at the requested CHSH value."""


@dataclass(frozen=True)
class OptimizationPoint:
    s: float
    c: float
    g: float
    h: float
    delta: float

    def objective(self, lam: float) -> float:
        return _objective(self.s, self.c, self.g, self.h, self.delta, lam)

    def violations(self, S: float) -> dict:
        """Signed amounts by which each constraint is violated (<= 0 means satisfied)."""
        return {
            "chsh": S / 2.0 - (self.c * self.g + self.s * self.h),
            "g": self.g**2 - 1.0,
            "h": self.h**2 - 1.0,
            "delta": self.delta**2 - 1.0,
            "coupling": self.g**2 * self.h**2 * self.delta**2 - (1.0 - self.g**2) * (1.0 - self.h**2),
            "circle": abs(self.c**2 + self.s**2 - 1.0),
        }

    def feasible(self, S: float, tol: float = 1e-9) -> bool:
        return all(v <= tol for v in self.violations(S).values())


def _objective(s, c, g, h, d, lam):
    return s * s * g * g + c * c * h * h + 2.0 * (2.0 * lam - 1.0) * s * c * g * h * d


@dataclass(frozen=True)
class OptimizationResult:
    S: float
    lam: float
    value: float
    point: OptimizationPoint
    degenerate: bool

    @property
    def correlation(self) -> float:
        return math.sqrt(max(self.value, 0.0))


def maximize_transcribed(S: float, lam: float, grid: int = 17, refine: int = 6, tol: float = 1e-9) -> OptimizationResult:
    """Maximize the transcribed quadratic program by grid scan plus SLSQP polish.

    Decision variables are ``(theta, g, h, delta)`` with ``c = cos theta`` and
    ``s = sin theta``. ``degenerate`` is set when the optimum reaches 1 while
    ``S`` is strictly below the Tsirelson value, in which case the bound carries
    no information about ``S``.
    """
    if S > S_MAX + tol:
        raise ValueError(f"S = {S} exceeds 2*sqrt(2); the program is infeasible")
    grid = grid | 1  # keep 0 and +-1 on the grid
    n_theta = 8 * ((grid + 1) // 2)
    theta = np.linspace(0.0, 2.0 * np.pi, n_theta, endpoint=False)
    lin = np.linspace(-1.0, 1.0, grid)
    th, g, h, d = np.meshgrid(theta, lin, lin, lin, indexing="ij", sparse=True)
    c, s = np.cos(th), np.sin(th)
    ok = (c * g + s * h >= S / 2.0 - tol) & ((1 - g * g) * (1 - h * h) >= g * g * h * h * d * d - tol)
    obj = np.where(ok, _objective(s, c, g, h, d, lam), -np.inf)
    flat = obj.ravel()
    if not np.isfinite(flat).any():
        raise RuntimeError(f"no feasible grid point at S = {S}; increase grid density")
    top = np.argsort(flat)[::-1][:refine]

    cons = [
        {"type": "ineq", "fun": lambda x: math.cos(x[0]) * x[1] + math.sin(x[0]) * x[2] - S / 2.0},
        {"type": "ineq", "fun": lambda x: (1 - x[1] ** 2) * (1 - x[2] ** 2) - (x[1] * x[2] * x[3]) ** 2},
    ]
    bounds = [(None, None), (-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)]
    best, best_x = -np.inf, None
    shape = np.broadcast_shapes(th.shape, g.shape, h.shape, d.shape)
    for flat_idx in top:
        if not np.isfinite(flat[flat_idx]):
            break
        it, ig, ih, idl = np.unravel_index(flat_idx, shape)
        x0 = np.array([theta[it], lin[ig], lin[ih], lin[idl]])
        candidates = [x0]
        res = minimize(
            lambda x: -_objective(math.sin(x[0]), math.cos(x[0]), x[1], x[2], x[3], lam),
            x0,
            method="SLSQP",
            bounds=bounds,
            constraints=cons,
            options={"ftol": 1e-14, "maxiter": 200},
        )
        candidates.append(res.x)
        for x in candidates:
            pt = OptimizationPoint(math.sin(x[0]), math.cos(x[0]), float(x[1]), float(x[2]), float(x[3]))
            if not pt.feasible(S, tol):
                continue
            val = pt.objective(lam)
            if val > best:
                best, best_x = val, pt
    value = min(best, 1.0)
    degenerate = value >= 1.0 - 1e-9 and S < S_MAX - 1e-9
    return OptimizationResult(float(S), float(lam), float(value), best_x, bool(degenerate))


def sample_feasible_points(S: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` feasible ``(s, c, g, h, delta)`` rows for the transcribed program.

    Angles come from the window around pi/4 where ``c g + s h >= S/2`` can hold,
    then ``g``, ``h`` from the remaining corner; the coupling constraint is
    enforced by rejection. Used to check the optimizer from below.
    """
    if not 2.0 <= S <= S_MAX:
        raise ValueError(f"S must lie in [2, 2*sqrt(2)], got {S}")
    half_width = math.acos(min(S / S_MAX, 1.0))
    rows = []
    for _ in range(1000):
        if sum(len(r) for r in rows) >= n:
            break
        m = 4 * n
        th = rng.uniform(math.pi / 4 - half_width, math.pi / 4 + half_width, m)
        c, s = np.cos(th), np.sin(th)
        g_lo = np.clip((S / 2.0 - s) / c, -1.0, 1.0)
        g = rng.uniform(g_lo, 1.0)
        h_lo = np.clip((S / 2.0 - c * g) / s, -1.0, 1.0)
        h = rng.uniform(h_lo, 1.0)
        d = rng.uniform(-1.0, 1.0, m)
        ok = (c * g + s * h >= S / 2.0) & ((1 - g * g) * (1 - h * h) >= (g * h * d) ** 2)
        rows.append(np.stack([s, c, g, h, d], axis=1)[ok])
    else:
        raise RuntimeError(f"feasible set at S = {S} too thin to sample")
    return np.concatenate(rows)[:n]


def secrecy_bound(S: float, lam: float = 0.5, q: float = 0.0, provider: SecrecyProvider | None = None) -> float:
    """Lower bound on Eve's uncertainty H(A|E) in bits."""
    provider = provider or SecrecyProvider()
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    if not 0.0 <= q <= 0.5:
        raise ValueError(f"q must lie in [0, 0.5], got {q}")
    if S <= 2.0:
        return 0.0
    variant = provider.variant
    if variant is Provider.IDEAL:
        if S >= S_MAX - 1e-9:
            return 1.0
        raise ProviderDomainError(f"ideal provider is only defined at S = 2*sqrt(2), got S = {S:.12g}")
    if variant is Provider.PIRONIO:
        return g_func_q(S, q)
    res = maximize_transcribed(min(S, S_MAX), lam, provider.grid, provider.refine, provider.tol)
    return _g_correlation(res.correlation, q)


# --------------------------------------------------------------------------
# channel configuration and rates


@dataclass(frozen=True)
class ChannelConfig:
    T: float = 0.5
    alpha: float = 0.2
    d: float = 0.0
    eta_c: float = 1.0
    eta_m: float = 1.0
    eta_d: float = 1.0
    F: float = 1.0
    R_rep: float = 1e7
    P_c: float = 0.5
    p: float = 0.5
    q: float = 0.0
    strategy: Strategy = Strategy.NONE
    provider: SecrecyProvider = field(default_factory=SecrecyProvider)
    key_bases: int = 2

    def __post_init__(self):
        for name in ("T", "eta_c", "eta_m", "eta_d", "F", "P_c", "p"):
            x = getattr(self, name)
            if not 0.0 <= x <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {x}")
        if not 0.0 <= self.q <= 0.5:
            raise ValueError(f"q must lie in [0, 0.5], got {self.q}")
        if self.alpha < 0 or self.d < 0 or self.R_rep < 0:
            raise ValueError("alpha, d and R_rep must be non-negative")
        if self.key_bases not in (1, 2):
            raise ValueError(f"key_bases must be 1 or 2, got {self.key_bases}")
        if not isinstance(self.strategy, Strategy):
            object.__setattr__(self, "strategy", Strategy(self.strategy))

    @property
    def eta_t(self) -> float:
        return 10.0 ** (-self.alpha * self.d / 10.0)

    @property
    def eta_l(self) -> float:
        return self.eta_c * self.eta_m * self.eta_d

    @property
    def lam(self) -> float:
        p, pb = self.p, 1.0 - self.p
        return p * p / (p * p + pb * pb)

    @property
    def noise(self) -> NoiseParams:
        return NoiseParams(self.F, self.eta_l)

    @property
    def effective_q(self) -> float:
        return self.q if self.strategy is Strategy.ADVANCED else 0.0

    def with_local_efficiency(self, eta_l: float) -> "ChannelConfig":
        """Put all local loss into the coupling term."""
        return replace(self, eta_c=eta_l, eta_m=1.0, eta_d=1.0)

    def as_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, Enum):
                v = v.value
            elif isinstance(v, SecrecyProvider):
                v = v.variant.value
            out[f.name] = v
        return out


BREAKDOWN_COLUMNS = ("S", "S_ABC", "delta", "H_AE", "r_111", "r_212", "R_inf", "P_d", "E_c")


@dataclass(frozen=True)
class KeyRateBreakdown:
    S: float
    S_ABC: float
    delta: float
    H_AE: float
    r_111: float
    r_212: float
    R_inf: float
    P_d: float
    E_c: float

    @property
    def terminated(self) -> bool:
        return self.S <= 2.0

    def as_dict(self) -> dict:
        return {c: getattr(self, c) for c in BREAKDOWN_COLUMNS}


def devetak_winter(config: ChannelConfig) -> KeyRateBreakdown:
    noise = config.noise
    S = chsh_value(noise)
    q = config.effective_q
    delta = total_qber(noise, config.strategy, q)
    H_AE = secrecy_bound(S, config.lam, q, config.provider)
    h_delta = binary_entropy(delta)
    # both key combinations see the same error rate, so H(A_1|B_1,C_1) = H(A_2|B_1,C_2)
    r_111 = H_AE - h_delta
    r_212 = H_AE - h_delta
    p, pb = config.p, 1.0 - config.p
    if config.key_bases == 2:
        lam = config.lam
        R_inf = (p * p + pb * pb) * (H_AE - (lam * h_delta + (1.0 - lam) * h_delta))
    else:
        R_inf = p * p * r_111
    P_d = heralding_probability(config.T, config.eta_t)
    E_c = (1.0 - config.P_c) * config.R_rep * P_d * max(R_inf, 0.0)
    vals = (S, 2.0 * S, delta, H_AE, r_111, r_212, R_inf, P_d, E_c)
    return KeyRateBreakdown(*map(float, vals))


def practical_rate(config: ChannelConfig) -> float:
    return devetak_winter(config).E_c


# --------------------------------------------------------------------------
# root finding


def _bisect(f, lo, hi, f_lo, done, max_iter=400):
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if done(mid, f_mid) or mid in (lo, hi):
            return mid, f_mid
        if (f_mid < 0) == (f_lo < 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return mid, f_mid


@dataclass(frozen=True)
class SearchResult:
    value: float | None
    residual: float | None = None
    reason: str = ""

    @property
    def found(self) -> bool:
        return self.value is not None


def distance_at_rate(config: ChannelConfig, target: float, rtol: float = 1e-9) -> SearchResult:
    """Fibre length at which the practical rate drops to ``target`` bit/s."""
    if target <= 0:
        raise ValueError("target rate must be positive")
    base = replace(config, d=0.0)
    e0 = practical_rate(base)
    if e0 <= target:
        return SearchResult(None, reason=f"rate at d=0 is {e0:.6g} bit/s, not above target {target:g}")
    if base.alpha == 0:
        return SearchResult(None, reason="lossless fibre: rate never drops to target")

    def f(d):
        return math.log(practical_rate(replace(base, d=d)) / target)

    hi = 1.0
    while f(hi) > 0:
        hi *= 2.0
        if hi > 1e7:
            return SearchResult(None, reason="target not reached within 1e7 km")
    d, fd = _bisect(f, 0.0, hi, f(0.0), lambda x, fx: abs(math.expm1(fx)) < rtol)
    return SearchResult(d, math.expm1(fd) * target)


THRESHOLD_INTERVALS = {"eta_l": (0.5, 1.0), "F": (0.0, 1.0)}


def _set_parameter(config: ChannelConfig, name: str, value: float) -> ChannelConfig:
    if name == "eta_l":
        return config.with_local_efficiency(value)
    if name in ("F", "q", "d", "p", "T"):
        return replace(config, **{name: value})
    raise ValueError(f"unknown parameter {name!r}")


def threshold_bisect(config: ChannelConfig, parameter: str = "eta_l", interval=None, atol: float = 1e-10) -> SearchResult:
    """Zero crossing of R_inf in ``eta_l`` or ``F``, everything else held fixed."""
    if parameter not in THRESHOLD_INTERVALS:
        raise ValueError(f"threshold parameter must be one of {sorted(THRESHOLD_INTERVALS)}")
    lo, hi = interval or THRESHOLD_INTERVALS[parameter]

    def f(x):
        return devetak_winter(_set_parameter(config, parameter, x)).R_inf

    try:
        f_lo, f_hi = f(lo), f(hi)
    except ProviderDomainError as exc:
        # the provider only exists at the ideal point, where the rate is positive
        return SearchResult(None, reason=f"no threshold: {exc}")
    if (f_lo < 0) == (f_hi < 0):
        return SearchResult(None, reason=f"R_inf has one sign on [{lo}, {hi}] ({f_lo:.3g}, {f_hi:.3g})")
    try:
        x, fx = _bisect(f, lo, hi, f_lo, lambda _x, fx: abs(fx) < atol)
    except ProviderDomainError as exc:
        return SearchResult(None, reason=f"no threshold: {exc}")
    return SearchResult(x, fx)


SWEEP_AXES = ("d", "eta_l", "F", "q")


@dataclass(frozen=True)
class SweepRow:
    value: float
    config: ChannelConfig
    breakdown: KeyRateBreakdown


def sweep(config: ChannelConfig, axis: str, lo: float, hi: float, steps: int) -> list[SweepRow]:
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if hi < lo or (hi == lo and steps > 1) or (steps == 1 and hi != lo):
        raise ValueError(f"empty or inverted range [{lo}, {hi}] for {steps} steps")
    rows = []
    for x in np.linspace(lo, hi, steps):
        cfg = _set_parameter(config, axis, float(x))
        rows.append(SweepRow(float(x), cfg, devetak_winter(cfg)))
    return rows
