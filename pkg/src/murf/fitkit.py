"""Fit drivers: synthetic data, the picklable joint objective, reports."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .asymmetry import (
    DEFAULT_CHI2_CUTOFF_US,
    FitParams,
    SolverOptions,
    Spectrum,
    joint_objective,
    model_asymmetry,
)
from .diffevo import DEResult, DESettings, differential_evolution
from .hamiltonian import Cluster, scale_bonds

# solver used inside fit objectives: single-precision split stepping on the
# factorized state; validated against the exact propagator in the test suite
FIT_SOLVER = SolverOptions(
    method="split", substeps_per_period=40, dtype=np.complex64, factorized=True
)


def make_synthetic_spectra(
    params: FitParams,
    clusters: Sequence[Cluster],
    f0_khz: float,
    times: np.ndarray,
    noise_pct: float,
    seed: int,
    solver: SolverOptions = SolverOptions(),
) -> tuple[Spectrum, Spectrum]:
    """RF-on and RF-off model spectra with Gaussian noise of width noise_pct."""
    rng = np.random.default_rng(seed)
    out = []
    for rf_on in (True, False):
        model = model_asymmetry(params, f0_khz, rf_on, clusters, times, solver)
        noisy = model.values + rng.normal(scale=noise_pct, size=model.values.shape)
        out.append(
            Spectrum(
                times=model.times.copy(),
                values=noisy,
                sigma=np.full_like(model.times, noise_pct),
                meta={"rf": "on" if rf_on else "off", "f0_khz": f0_khz, "synthetic": True},
            )
        )
    return out[0], out[1]


@dataclass(frozen=True)
class JointAsymmetryObjective:
    """chi^2_red(params) for simultaneous RF-on/off data; picklable for pools."""

    clusters: tuple[Cluster, ...]
    f0_khz: float
    data_on: Spectrum
    data_off: Spectrum
    cutoff_us: float = DEFAULT_CHI2_CUTOFF_US
    n_free_params: int = 9
    solver: SolverOptions = FIT_SOLVER

    def __call__(self, x: np.ndarray) -> float:
        try:
            params = FitParams.from_array(x)
            return joint_objective(
                params, self.data_on, self.data_off, self.clusters, self.f0_khz,
                self.cutoff_us, self.n_free_params, self.solver,
            )
        except Exception:
            return math.inf  # candidate rejection, never a fit abort


@dataclass
class FitOutcome:
    params: FitParams
    chi2_red: float
    de: DEResult


def run_fit(
    clusters: Sequence[Cluster],
    data_on: Spectrum,
    data_off: Spectrum,
    f0_khz: float,
    bounds: Sequence[tuple[float, float]],
    settings: DESettings,
    cutoff_us: float = DEFAULT_CHI2_CUTOFF_US,
    solver: SolverOptions = FIT_SOLVER,
) -> FitOutcome:
    objective = JointAsymmetryObjective(
        clusters=tuple(clusters), f0_khz=f0_khz, data_on=data_on, data_off=data_off,
        cutoff_us=cutoff_us, solver=solver,
    )
    result = differential_evolution(objective, bounds, settings)
    params = FitParams.from_array(result.x)
    return FitOutcome(params=params, chi2_red=result.fun, de=result)


def fit_report(
    params: FitParams,
    f0_khz: float,
    chi2_red: float | None,
    clusters: Sequence[Cluster] | None = None,
) -> str:
    """Delimited parameter table with the derived-quantity block."""
    lines = ["quantity,value,unit"]
    for name in FitParams.names():
        unit = {"a0": "%", "a1": "%", "a2": "%", "lambda1": "1/us"}.get(name, "1")
        lines.append(f"{name},{getattr(params, name):.6f},{unit}")
    if clusters:
        scaled = scale_bonds(
            clusters[0], {k: v for k, v in params.bond_scales().items() if k in clusters[0].groups}
        )
        for label, dist in scaled.muon_distances().items():
            lines.append(f"r_mu_{label},{dist:.4f},angstrom")
    d = params.derived(f0_khz)
    lines.append(f"f0,{f0_khz:.4f},kHz")
    lines.append(f"f_c,{d.f_c_khz:.4f},kHz")
    lines.append(f"omega_c,{d.omega_c_rad_us:.6f},rad/us")
    lines.append(f"E_c,{d.e_c_nev:.4f},neV")
    lines.append(f"g_c,{d.g_c_nev:.4f},neV")
    lines.append(f"B_y,{d.b_y_mt:.4f},mT")
    if chi2_red is not None:
        lines.append(f"chi2_red,{chi2_red:.4f},1")
    return "\n".join(lines) + "\n"
