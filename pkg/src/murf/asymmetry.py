"""Asymmetry spectra: experimental construction, forward model and chi-squared.

The forward model runs the full pipeline (bond scaling, driven evolution
of each cluster orientation, orientation averaging) and converts the
muon polarization P(t) to an asymmetry in percent:

    A(t) = A0 * P(t) + A1 * exp(-lambda1 * t) + A2

The drive parameters are tied to the nominal RF frequency f0 through the
dimensionless factors f_rel (frequency pull) and g_rel (coupling):
omega_c = 2 pi f_rel f0 and B_y = g_rel * omega_c / gamma_mu.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Mapping, Sequence

import numpy as np

from .constants import GAMMA_MUON_MHZ_T, NEV_PER_RAD_US, gamma_rad_us_mt
from .dynamics import PolarizationSeries, evolve, initial_state, muon_z_operator
from .errors import DataError
from .hamiltonian import Cluster, DriveSpec, dipole_hamiltonian, drive_operator, DrivenHamiltonian, scale_bonds

DEFAULT_CHI2_CUTOFF_US = 12.5


@dataclass(frozen=True)
class FitParams:
    """The nine free parameters of the joint RF-on/off asymmetry fit."""

    s_f12: float
    s_li12: float
    s_f34: float
    f_rel: float
    g_rel: float
    a0: float  # %
    a1: float  # %
    lambda1: float  # 1/us
    a2: float  # %

    def bond_scales(self) -> dict[str, float]:
        return {"F12": self.s_f12, "Li12": self.s_li12, "F34": self.s_f34}

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)], dtype=float)

    @classmethod
    def from_array(cls, x: Sequence[float]) -> "FitParams":
        names = [f.name for f in fields(cls)]
        if len(x) != len(names):
            raise ValueError(f"expected {len(names)} parameters, got {len(x)}")
        return cls(**{n: float(v) for n, v in zip(names, x)})

    @classmethod
    def names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def derived(self, f0_khz: float) -> "DerivedQuantities":
        f_c_khz = self.f_rel * f0_khz
        omega_c = 2.0 * math.pi * f_c_khz * 1e-3  # rad/us
        e_c_nev = omega_c * NEV_PER_RAD_US
        g_c_nev = self.g_rel * e_c_nev
        b_y_mt = self.g_rel * omega_c / gamma_rad_us_mt(GAMMA_MUON_MHZ_T)
        return DerivedQuantities(
            f_c_khz=f_c_khz, omega_c_rad_us=omega_c, e_c_nev=e_c_nev,
            g_c_nev=g_c_nev, b_y_mt=b_y_mt,
        )


@dataclass(frozen=True)
class DerivedQuantities:
    """Drive quantities implied by (f_rel, g_rel) at a nominal frequency."""

    f_c_khz: float
    omega_c_rad_us: float
    e_c_nev: float
    g_c_nev: float
    b_y_mt: float


@dataclass
class Spectrum:
    """An asymmetry time series in percent with 1-sigma uncertainties."""

    times: np.ndarray  # us
    values: np.ndarray  # %
    sigma: np.ndarray | None = None  # %
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.sigma is not None:
            self.sigma = np.asarray(self.sigma, dtype=float)
            if self.sigma.shape != self.times.shape:
                raise DataError("sigma/time shape mismatch")
        if self.values.shape != self.times.shape:
            raise DataError("values/time shape mismatch")

    @property
    def valid(self) -> np.ndarray:
        ok = np.isfinite(self.values)
        if self.sigma is not None:
            ok &= np.isfinite(self.sigma) & (self.sigma > 0)
        return ok


@dataclass(frozen=True)
class SolverOptions:
    """Propagation choices threaded through the forward model."""

    method: str = "expm"
    substeps_per_period: int = 40
    dtype: type = np.complex128
    factorized: bool = False
    tol: float | None = None
    align_grid: bool | None = None  # align substeps to a uniform output grid

    def resolved_align(self) -> bool:
        if self.align_grid is not None:
            return self.align_grid
        return self.method == "split"


def experimental_asymmetry(
    times: Sequence[float],
    n_forward: Sequence[float],
    n_backward: Sequence[float],
    alpha: float,
) -> Spectrum:
    """A(t) = (N_F - alpha N_B) / (N_F + alpha N_B), in percent.

    Uncertainties follow Poisson counting statistics; bins with a zero
    denominator or zero counts on either detector are flagged invalid
    (NaN) and excluded from fits.
    """
    if alpha <= 0:
        raise DataError("alpha must be positive")
    nf = np.asarray(n_forward, dtype=float)
    nb = np.asarray(n_backward, dtype=float)
    if np.any(nf < 0) or np.any(nb < 0):
        raise DataError("counts must be non-negative")
    denom = nf + alpha * nb
    good = (denom > 0) & (nf > 0) & (nb > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(good, (nf - alpha * nb) / denom, np.nan)
        var = 4.0 * alpha**2 * (nb**2 * nf + nf**2 * nb) / denom**4
        sig = np.where(good, np.sqrt(var), np.nan)
    return Spectrum(times=np.asarray(times, dtype=float), values=100.0 * a, sigma=100.0 * sig)


def drive_for(params: FitParams, f0_khz: float, rf_on: bool) -> DriveSpec:
    """DriveSpec implied by (f_rel, g_rel) at nominal frequency f0."""
    if not rf_on:
        return DriveSpec.off()
    d = params.derived(f0_khz)
    return DriveSpec(amplitude_mt=d.b_y_mt, omega_rad_us=d.omega_c_rad_us)


def _aligned_max_step(times: np.ndarray, period_us: float, m: int) -> float | None:
    """Largest step dividing the output spacing while keeping >= m substeps/period."""
    if len(times) < 2:
        return None
    dt = np.diff(times)
    if np.max(np.abs(dt - dt[0])) > 1e-9 * dt[0]:
        return None  # non-uniform grid; exact partial steps handle it
    target = period_us / m
    k = max(1, int(math.ceil(dt[0] / target - 1e-9)))
    return dt[0] / k


def model_polarization(
    params: FitParams,
    f0_khz: float,
    rf_on: bool,
    clusters: Sequence[Cluster],
    times: Sequence[float],
    solver: SolverOptions = SolverOptions(),
) -> PolarizationSeries:
    """Orientation-averaged muon polarization for the given parameters."""
    times = np.asarray(times, dtype=float)
    drive = drive_for(params, f0_khz, rf_on)
    curves = []
    for cluster in clusters:
        scales = {k: v for k, v in params.bond_scales().items() if k in cluster.groups}
        scaled = scale_bonds(cluster, scales)
        h0 = dipole_hamiltonian(scaled)
        ham = DrivenHamiltonian(h0=h0, v=drive_operator(scaled), drive=drive)
        layout = scaled.layout
        rho0 = initial_state(layout)
        jz = muon_z_operator(layout)
        max_step = None
        if drive.enabled and solver.resolved_align():
            max_step = _aligned_max_step(times, drive.period_us, solver.substeps_per_period)
        ev = evolve(
            ham, rho0, times,
            method=solver.method if drive.enabled else "auto",
            observables={"jz": jz},
            substeps_per_period=solver.substeps_per_period,
            max_step=max_step,
            factorized=solver.factorized,
            dtype=solver.dtype,
            tol=solver.tol,
        )
        curves.append(2.0 * ev.expect["jz"])
    return PolarizationSeries(times=times, values=np.mean(curves, axis=0))


def apply_asymmetry_model(p: PolarizationSeries, params: FitParams) -> np.ndarray:
    """Asymmetry in percent from a polarization series (affine in A0, A1, A2)."""
    return params.a0 * p.values + params.a1 * np.exp(-params.lambda1 * p.times) + params.a2


def model_asymmetry(
    params: FitParams,
    f0_khz: float,
    rf_on: bool,
    clusters: Sequence[Cluster],
    times: Sequence[float],
    solver: SolverOptions = SolverOptions(),
) -> Spectrum:
    """Full forward model: scaled clusters -> driven evolution -> asymmetry."""
    p = model_polarization(params, f0_khz, rf_on, clusters, times, solver)
    values = apply_asymmetry_model(p, params)
    meta = {"model": True, "rf": "on" if rf_on else "off", "f0_khz": f0_khz}
    return Spectrum(times=p.times, values=values, meta=meta)


def difference_spectrum(a_on: Spectrum, a_off: Spectrum) -> Spectrum:
    """Pointwise a_on - a_off with uncertainties added in quadrature."""
    if a_on.times.shape != a_off.times.shape or not np.allclose(
        a_on.times, a_off.times, rtol=0, atol=1e-9
    ):
        raise DataError("difference requires identical time grids")
    sigma = None
    if a_on.sigma is not None or a_off.sigma is not None:
        s_on = a_on.sigma if a_on.sigma is not None else 0.0
        s_off = a_off.sigma if a_off.sigma is not None else 0.0
        sigma = np.sqrt(np.square(s_on) + np.square(s_off))
    meta = {"difference": True}
    for key in ("f0_khz",):
        if key in a_on.meta:
            meta[key] = a_on.meta[key]
    return Spectrum(times=a_on.times.copy(), values=a_on.values - a_off.values, sigma=sigma, meta=meta)


def chi_squared_reduced(
    model: Spectrum,
    data: Spectrum,
    cutoff_us: float = DEFAULT_CHI2_CUTOFF_US,
    n_free_params: int = 0,
) -> float:
    """(1/(N_p - v)) sum [(A_exp - A_fit)/sigma]^2 over valid bins with t <= cutoff."""
    if cutoff_us <= 0:
        raise ValueError("cutoff must be positive")
    if data.sigma is None:
        raise DataError("data spectrum carries no uncertainties")
    if model.times.shape != data.times.shape or not np.allclose(
        model.times, data.times, rtol=0, atol=1e-9
    ):
        raise DataError("model/data time grids differ")
    sel = data.valid & (data.times <= cutoff_us)
    n_p = int(np.count_nonzero(sel))
    if n_p <= n_free_params:
        raise DataError(
            f"insufficient points: {n_p} valid bins below cutoff for {n_free_params} parameters"
        )
    resid = (data.values[sel] - model.values[sel]) / data.sigma[sel]
    return float(np.sum(resid**2) / (n_p - n_free_params))


def pooled_chi_squared(
    pairs: Sequence[tuple[Spectrum, Spectrum]],
    cutoff_us: float = DEFAULT_CHI2_CUTOFF_US,
    n_free_params: int = 0,
) -> float:
    """Reduced chi-squared pooled over several (model, data) pairs with equal weight."""
    total = 0.0
    n_total = 0
    for model, data in pairs:
        if data.sigma is None:
            raise DataError("data spectrum carries no uncertainties")
        sel = data.valid & (data.times <= cutoff_us)
        n_total += int(np.count_nonzero(sel))
        resid = (data.values[sel] - model.values[sel]) / data.sigma[sel]
        total += float(np.sum(resid**2))
    if n_total <= n_free_params:
        raise DataError("insufficient points in pooled chi-squared")
    return total / (n_total - n_free_params)


def joint_objective(
    params: FitParams,
    data_on: Spectrum,
    data_off: Spectrum,
    clusters: Sequence[Cluster],
    f0_khz: float,
    cutoff_us: float = DEFAULT_CHI2_CUTOFF_US,
    n_free_params: int = 9,
    solver: SolverOptions = SolverOptions(),
) -> float:
    """Pooled chi^2_red over RF-on and RF-off data with a shared parameter vector."""
    model_on = model_asymmetry(params, f0_khz, True, clusters, data_on.times, solver)
    model_off = model_asymmetry(params, f0_khz, False, clusters, data_off.times, solver)
    return pooled_chi_squared(
        [(model_on, data_on), (model_off, data_off)], cutoff_us, n_free_params
    )
