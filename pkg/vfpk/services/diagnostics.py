"""
Norms and functionals sampled along an evolution.

Perturbations are stored as g_n = sqrt(rho_star) a_n where f = sum a_n H_n and
F = F_star (1 + f). In these variables

    |f|^2_{L2(F*)}        = sum_n int g_n^2
    |d_v f|^2             = sum_n n int g_n^2
    |d_x f|^2             = sum_n int (d g_n + V*' g_n / 2)^2
    <d_v f, d_x f>        = sum_n sqrt(n+1) int g_{n+1} (d g_n + V*' g_n / 2)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Literal, Optional, Sequence, Tuple

import numpy as np
import scipy.fft as sp_fft

from vfpk.config_loader import thread_count
from vfpk.core.errors import ConfigError, FitError, GridError
from vfpk.core.logging import get_logger, log_fields
from vfpk.models import kernels
from vfpk.models.kernels import InteractionKernel, KernelSplit
from vfpk.services import hermite, macro
from vfpk.services.hermite import PhaseSpaceState
from vfpk.services.steady import SteadyState

logger = get_logger(__name__)

BASE_COLUMNS = (
    "t", "mass", "free_energy", "l2_fstar", "h1x_fstar", "gradx_fstar", "gradv_l2", "twisted", "e0", "e11",
)
MOMENT_COLUMNS = ("mean_x", "mean_v", "m_xx", "m_xv", "m_vv")
DISSIPATION_COLUMNS = ("dissipation", "odd_work")
MIN_FIT_SAMPLES = 10

DEFAULT_EPS = 0.1
_LYAPUNOV_SCALE = 0.5
DEFAULT_A = _LYAPUNOV_SCALE**16
DEFAULT_B = _LYAPUNOV_SCALE**20
DEFAULT_C = _LYAPUNOV_SCALE**21


@dataclass
class NormRecord:
    t: float
    mass: float
    free_energy: Optional[float] = None
    l2: Optional[float] = None
    h1x: Optional[float] = None
    gradx: Optional[float] = None
    gradv: Optional[float] = None
    twisted: Optional[float] = None
    e0: Optional[float] = None
    e11: Optional[float] = None
    extras: Dict[str, Optional[float]] = field(default_factory=dict)

    def as_row(self) -> Dict[str, Optional[float]]:
        row = {
            "t": self.t,
            "mass": self.mass,
            "free_energy": self.free_energy,
            "l2_fstar": self.l2,
            "h1x_fstar": self.h1x,
            "gradx_fstar": self.gradx,
            "gradv_l2": self.gradv,
            "twisted": self.twisted,
            "e0": self.e0,
            "e11": self.e11,
        }
        row.update(self.extras)
        return row


@dataclass
class DiagnosticSeries:
    columns: List[str] = field(default_factory=lambda: list(BASE_COLUMNS))
    rows: List[Dict[str, Optional[float]]] = field(default_factory=list)

    def append(self, record: NormRecord) -> None:
        row = record.as_row()
        for name in row:
            if name not in self.columns:
                self.columns.append(name)
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise FitError(f"unknown diagnostic column '{name}'")
        return np.array([np.nan if row.get(name) is None else row[name] for row in self.rows], dtype=float)

    def add_column(self, name: str, values: Sequence[Optional[float]]) -> None:
        if len(values) != len(self.rows):
            raise FitError("column length does not match the series", column=name)
        if name not in self.columns:
            self.columns.append(name)
        for row, value in zip(self.rows, values):
            row[name] = None if value is None or not np.isfinite(value) else float(value)

    @classmethod
    def from_rows(cls, columns: Sequence[str], rows: Iterable[Dict[str, Optional[float]]]) -> "DiagnosticSeries":
        return cls(columns=list(columns), rows=[dict(r) for r in rows])


# ---------------------------------------------------------------------------
# F_star-weighted norms of perturbations
# ---------------------------------------------------------------------------


def relative_perturbation(state: PhaseSpaceState, steady: SteadyState) -> PhaseSpaceState:
    """g = (C - C_star)/sqrt(rho_star) for a Maxwellian-weighted state."""
    coeffs = np.array(state.coeffs)
    coeffs[0] = coeffs[0] - steady.rho_star.values
    coeffs = coeffs / np.sqrt(steady.rho_star.values)[None, :]
    return PhaseSpaceState(coeffs, state.grid, state.time, representation="fstar")


def perturbation_state(a: np.ndarray, steady: SteadyState, time: float = 0.0) -> PhaseSpaceState:
    """Build the stored state from Hermite coefficients a_n(x) of f."""
    return PhaseSpaceState(np.asarray(a) * np.sqrt(steady.rho_star.values)[None, :], steady.grid, time, "fstar")


def _x_gradient(g: np.ndarray, steady: SteadyState) -> np.ndarray:
    """Rows d g_n + V*' g_n / 2, i.e. sqrt(rho_star) d_x a_n."""
    slope = np.gradient(steady.v_star, steady.grid.h, edge_order=2)
    return np.gradient(g, steady.grid.h, axis=1, edge_order=2) + 0.5 * slope[None, :] * g


def _row_integral(rows: np.ndarray, state_grid) -> float:
    return float(sum(state_grid.integrate(row) for row in rows))


def l2_norm(g_state: PhaseSpaceState) -> float:
    return float(np.sqrt(_row_integral(g_state.coeffs**2, g_state.grid)))


def gradv_squared(g_state: PhaseSpaceState) -> float:
    n = g_state.basis.mode_index[:, None]
    return _row_integral(n * g_state.coeffs**2, g_state.grid)


def gradx_squared(g_state: PhaseSpaceState, steady: SteadyState) -> float:
    return _row_integral(_x_gradient(g_state.coeffs, steady) ** 2, g_state.grid)


def cross_term(g_state: PhaseSpaceState, steady: SteadyState) -> float:
    g = g_state.coeffs
    dx = _x_gradient(g, steady)
    weights = np.sqrt(np.arange(1, g.shape[0], dtype=float))[:, None]
    return _row_integral(weights * g[1:] * dx[:-1], g_state.grid)


def h1x_norm(g_state: PhaseSpaceState, steady: SteadyState) -> float:
    return float(np.sqrt(l2_norm(g_state) ** 2 + gradx_squared(g_state, steady)))


def hs_norm(g_state: PhaseSpaceState, s: float) -> float:
    """H^s_x norm through the multiplier (1 + xi^2)^{s/2} on the zero-padded box, rows summed."""
    grid = g_state.grid
    size = 2 * grid.size
    spectrum = sp_fft.rfft(g_state.coeffs, n=size, axis=1, workers=thread_count())
    xi = 2.0 * np.pi * sp_fft.rfftfreq(size, d=grid.h)
    weights = np.full(xi.shape, 2.0)
    weights[0] = 1.0
    if size % 2 == 0:
        weights[-1] = 1.0
    multiplier = (1.0 + xi**2) ** s
    total = np.sum(weights[None, :] * multiplier[None, :] * np.abs(spectrum) ** 2) * grid.h / size
    return float(np.sqrt(total))


def twisted_norm(g_state: PhaseSpaceState, steady: SteadyState, k_split: Optional[KernelSplit]) -> float:
    """|||f|||^2 = |f|^2_{L2(F*)} + int (K^e rho_f) rho_f with rho_f = sqrt(rho_star) g_0."""
    squared = l2_norm(g_state) ** 2
    if k_split is not None and k_split.source.family != "zero":
        rho_f = np.sqrt(steady.rho_star.values) * g_state.coeffs[0]
        squared += g_state.grid.integrate(kernels.convolve_values(k_split.even, rho_f, g_state.grid) * rho_f)
    if squared < 0:
        logger.warning("twisted norm is not positive; coercivity smallness fails", extra=log_fields(value=squared))
    return float(np.sqrt(max(squared, 0.0)))


def e0_functional(
    g_state: PhaseSpaceState,
    steady: SteadyState,
    k_split: Optional[KernelSplit],
    eps: float = DEFAULT_EPS,
    geometry: Optional[macro.MacroGeometry] = None,
) -> float:
    """1/2 |||f|||^2 + eps <<A f, f>>."""
    if not 0.0 < eps <= 0.5:
        raise ConfigError("diagnostics.eps", f"eps must lie in (0, 1/2], got {eps}")
    geometry = geometry or macro.MacroGeometry.from_steady(steady, k_split)
    pairing, _ = macro.auxiliary_pairing(g_state.coeffs, geometry)
    return 0.5 * twisted_norm(g_state, steady, k_split) ** 2 + eps * pairing


def _check_lyapunov_weights(a: float, b: float, c: float) -> None:
    if a < 0 or c < 0 or b * b > a * c:
        raise ConfigError("diagnostics.weights", f"need a, c >= 0 and b^2 <= ac (a={a}, b={b}, c={c})")


def e11_functional(
    g_state: PhaseSpaceState,
    steady: SteadyState,
    k_split: Optional[KernelSplit],
    a: float = DEFAULT_A,
    b: float = DEFAULT_B,
    c: float = DEFAULT_C,
    eps: float = DEFAULT_EPS,
    geometry: Optional[macro.MacroGeometry] = None,
) -> float:
    _check_lyapunov_weights(a, b, c)
    return (
        e0_functional(g_state, steady, k_split, eps, geometry)
        + a * gradv_squared(g_state)
        + b * cross_term(g_state, steady)
        + c * gradx_squared(g_state, steady)
    )


def g_functional(
    g_state: PhaseSpaceState,
    steady: SteadyState,
    k_split: Optional[KernelSplit],
    t: float,
    eps: float = DEFAULT_EPS,
    a: float = DEFAULT_A,
    b: float = DEFAULT_B,
    c: float = DEFAULT_C,
    geometry: Optional[macro.MacroGeometry] = None,
) -> float:
    """E_0 + a tau |d_v f|^2 + b tau^2 <d_v f, d_x f> + c tau^3 |d_x f|^2 with tau = min(1, t)."""
    _check_lyapunov_weights(a, b, c)
    tau = min(1.0, max(t, 0.0))
    return (
        e0_functional(g_state, steady, k_split, eps, geometry)
        + a * tau * gradv_squared(g_state)
        + b * tau**2 * cross_term(g_state, steady)
        + c * tau**3 * gradx_squared(g_state, steady)
    )


# ---------------------------------------------------------------------------
# Nonlinear free energy and its dissipation
# ---------------------------------------------------------------------------


def kinetic_free_energy(
    state: PhaseSpaceState,
    v_field: np.ndarray,
    k_split: Optional[KernelSplit],
    velocity: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> float:
    """int F log F + F (v^2/2 + V + Psi_F/2); entropy nodes below the floor contribute zero."""
    grid = state.grid
    rho = state.coeffs[0]
    mass = grid.integrate(rho)
    if mass < 0:
        raise GridError("state has negative mass", mass=mass)
    v, weights = velocity or hermite.velocity_grid(state.n_modes)
    F = hermite.evaluate_on_velocity_grid(state, v)
    M = hermite.maxwellian(v)[None, :]
    positive = F > hermite.DENSITY_FLOOR
    safe = np.where(positive, F, 1.0)
    relative = np.where(positive, F * np.log(safe / M), 0.0)
    entropy = grid.integrate(relative @ weights) - 0.5 * np.log(2.0 * np.pi) * mass
    energy = grid.integrate(v_field * rho)
    if k_split is not None and k_split.source.family != "zero":
        energy += 0.5 * grid.integrate(kernels.convolve_values(k_split.even, rho, grid) * rho)
    return float(entropy + energy)


def dissipation_terms(
    state: PhaseSpaceState,
    k_split: Optional[KernelSplit],
    nu: float,
    velocity: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> Dict[str, float]:
    """nu int F |d_v log(F/M)|^2 and the odd-kernel work int d_x psi^o j."""
    grid = state.grid
    v, weights = velocity or hermite.velocity_grid(state.n_modes)
    basis = hermite.hermite_polynomials(state.n_modes, v)
    M = hermite.maxwellian(v)
    F = (state.coeffs.T @ basis) * M[None, :]
    # d_v (F/M) = sum sqrt(n) C_n H_{n-1}
    lowered = (state.basis.annihilation @ state.coeffs).T @ basis
    positive = F > hermite.DENSITY_FLOOR
    integrand = np.where(positive, (lowered * M[None, :]) ** 2 / np.where(positive, F, 1.0), 0.0)
    dissipation = nu * grid.integrate(integrand @ weights)

    odd_work = 0.0
    if k_split is not None and k_split.source.family != "zero":
        psi_odd = kernels.convolve_values(k_split.odd, state.coeffs[0], grid)
        odd_work = grid.integrate(np.gradient(psi_odd, grid.h, edge_order=2) * state.coeffs[1])
    return {"dissipation": float(dissipation), "odd_work": float(odd_work)}


def dissipation_residual(series: DiagnosticSeries) -> float:
    """Mean of |dE/dt + dissipation + odd_work| over the samples."""
    t = series.column("t")
    energy = series.column("free_energy")
    if len(t) < 3:
        raise FitError("dissipation residual needs at least three samples")
    rate = np.gradient(energy, t, edge_order=2)
    residual = np.abs(rate + series.column("dissipation") + series.column("odd_work"))
    return float(np.nanmean(residual))


def moment_columns(state: PhaseSpaceState) -> Dict[str, float]:
    """Mass-normalized (mean_x, mean_v, E[x^2], E[xv], E[v^2]) of a Maxwellian-weighted state."""
    grid = state.grid
    x = grid.axis()
    c = state.coeffs
    mass = grid.integrate(c[0])
    second_v = c[0] + (np.sqrt(2.0) * c[2] if state.n_modes > 2 else 0.0)
    values = (
        grid.integrate(x * c[0]),
        grid.integrate(c[1]),
        grid.integrate(x**2 * c[0]),
        grid.integrate(x * c[1]),
        grid.integrate(second_v),
    )
    return {name: float(value / mass) for name, value in zip(MOMENT_COLUMNS, values)}


# ---------------------------------------------------------------------------
# Sampling along an evolution
# ---------------------------------------------------------------------------


@dataclass
class DiagnosticContext:
    steady: Optional[SteadyState]
    kernel: InteractionKernel
    v_field: np.ndarray
    mode: str = "nonlinear"
    nu: float = 1.0
    eps: float = DEFAULT_EPS
    a: float = DEFAULT_A
    b: float = DEFAULT_B
    c: float = DEFAULT_C
    hs_orders: Sequence[float] = ()
    moments: bool = False
    g_functional: bool = False
    dissipation: bool = True

    def __post_init__(self) -> None:
        grid = self.steady.grid if self.steady is not None else None
        self.k_split = None
        if grid is not None and grid.is_symmetric:
            self.k_split = kernels.even_odd_split(self.kernel, grid)
        self.geometry = macro.MacroGeometry.from_steady(self.steady, self.k_split) if self.steady else None
        self._velocity = None

    @property
    def linear(self) -> bool:
        return self.mode == "linearized"

    @property
    def columns(self) -> List[str]:
        columns = list(BASE_COLUMNS)
        if not self.linear and self.dissipation:
            columns += list(DISSIPATION_COLUMNS)
        if self.moments:
            columns += list(MOMENT_COLUMNS)
        columns += [hs_column(s) for s in self.hs_orders]
        if self.g_functional:
            columns.append("g_functional")
        return columns

    def mass(self, state: PhaseSpaceState) -> float:
        if self.linear:
            return state.grid.integrate(np.sqrt(self.steady.rho_star.values) * state.coeffs[0])
        return state.grid.integrate(state.coeffs[0])

    def _split_for(self, state: PhaseSpaceState) -> Optional[KernelSplit]:
        if self.k_split is None and state.grid.is_symmetric and self.kernel.family != "zero":
            self.k_split = kernels.even_odd_split(self.kernel, state.grid)
        return self.k_split

    def sample(self, state: PhaseSpaceState) -> NormRecord:
        record = NormRecord(t=state.time, mass=self.mass(state))
        split = self._split_for(state)
        if not self.linear:
            if self._velocity is None:
                self._velocity = hermite.velocity_grid(state.n_modes)
            record.free_energy = kinetic_free_energy(state, self.v_field, split, self._velocity)
            if self.dissipation:
                record.extras.update(dissipation_terms(state, split, self.nu, self._velocity))
            if self.moments:
                record.extras.update(moment_columns(state))
        if self.steady is None:
            for s in self.hs_orders:
                record.extras[hs_column(s)] = None
            return record

        g_state = state if self.linear else relative_perturbation(state, self.steady)
        record.l2 = l2_norm(g_state)
        record.h1x = h1x_norm(g_state, self.steady)
        record.gradx = float(np.sqrt(gradx_squared(g_state, self.steady)))
        record.gradv = float(np.sqrt(gradv_squared(g_state)))
        record.twisted = twisted_norm(g_state, self.steady, split)
        record.e0 = e0_functional(g_state, self.steady, split, self.eps, self.geometry)
        record.e11 = (
            record.e0
            + self.a * gradv_squared(g_state)
            + self.b * cross_term(g_state, self.steady)
            + self.c * gradx_squared(g_state, self.steady)
        )
        for s in self.hs_orders:
            record.extras[hs_column(s)] = hs_norm(g_state, s)
        if self.g_functional:
            record.extras["g_functional"] = g_functional(
                g_state, self.steady, split, state.time, self.eps, self.a, self.b, self.c, self.geometry
            )
        return record


def hs_column(s: float) -> str:
    return f"hs_{s:g}"


# ---------------------------------------------------------------------------
# Rates and weights
# ---------------------------------------------------------------------------


FitKind = Literal["exponential", "power", "combined"]


@dataclass(frozen=True)
class RateFit:
    lambda_hat: float
    exponent_hat: float
    window: Tuple[float, float]
    r_squared: float
    samples: int

    def to_dict(self) -> dict:
        return {
            "lambda_hat": self.lambda_hat,
            "exponent_hat": self.exponent_hat,
            "window": list(self.window),
            "r_squared": self.r_squared,
            "samples": self.samples,
        }


def fit_rates(
    t: Sequence[float],
    values: Sequence[float],
    window: Tuple[float, float],
    kind: FitKind = "exponential",
) -> RateFit:
    """
    Least squares on log(values) restricted to window.

    exponential: log y = c - lambda t
    power:       log y = c + p log t
    combined:    log y = c - lambda t + p log t
    """
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    inside = (t >= window[0]) & (t <= window[1]) & np.isfinite(values)
    t, values = t[inside], values[inside]
    if t.size < MIN_FIT_SAMPLES:
        raise FitError("too few samples in the fit window", samples=int(t.size), window=list(window))
    if np.any(values <= 0):
        raise FitError("rate fits need positive samples", min=float(values.min()))
    if kind != "exponential" and np.any(t <= 0):
        raise FitError("power fits need t > 0", window=list(window))

    target = np.log(values)
    columns = [np.ones_like(t)]
    if kind in ("exponential", "combined"):
        columns.append(-t)
    if kind in ("power", "combined"):
        columns.append(np.log(t))
    design = np.stack(columns, axis=1)
    coefficients, *_ = np.linalg.lstsq(design, target, rcond=None)
    fitted = design @ coefficients
    total = np.sum((target - target.mean()) ** 2)
    r_squared = 1.0 if total == 0 else float(max(0.0, 1.0 - np.sum((target - fitted) ** 2) / total))

    lambda_hat = float(coefficients[1]) if kind in ("exponential", "combined") else 0.0
    exponent_hat = float(coefficients[-1]) if kind in ("power", "combined") else 0.0
    fit = RateFit(lambda_hat, exponent_hat, (float(window[0]), float(window[1])), r_squared, int(t.size))
    logger.debug("rate fit", extra=log_fields(kind=kind, **fit.to_dict()))
    return fit


def fit_series(series: DiagnosticSeries, column: str, window: Tuple[float, float], kind: FitKind = "exponential") -> RateFit:
    return fit_rates(series.column("t"), series.column(column), window, kind)


def critical_smoothness(d: int, q: float) -> float:
    """s_c = max(0, 3/2 (d/q - 1/3))."""
    ratio = 0.0 if np.isinf(q) else d / q
    return max(0.0, 1.5 * (ratio - 1.0 / 3.0))


def weight(t: np.ndarray, lambda_hat: float, sigma: float) -> np.ndarray:
    """w_sigma(t) = e^{lambda t} min(1, t)^{sigma/2}."""
    t = np.asarray(t, dtype=float)
    return np.exp(lambda_hat * t) * np.minimum(1.0, t) ** (0.5 * sigma)


def weighted_columns(
    series: DiagnosticSeries,
    lambda_hat: float,
    weights: Dict[str, float],
) -> DiagnosticSeries:
    """Add w<sigma>_<column> = w_sigma(t) * column for each configured column -> sigma."""
    t = series.column("t")
    for column, sigma in weights.items():
        scaled = weight(t, lambda_hat, sigma) * series.column(column)
        series.add_column(f"w{sigma:g}_{column}", list(scaled))
    return series
