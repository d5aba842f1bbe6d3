"""Density-matrix evolution under static or RF-driven Hamiltonians.

The Liouville-von Neumann equation d(rho)/dt = -i [H(t), rho] is solved
by one of three unitary schemes:

* ``expm``     piecewise-constant H sampled at substep midpoints with an
               exact matrix exponential per substep (default for driven
               Hamiltonians; unconditionally unitary).
* ``split``    Strang splitting exp(-i c V dt/2) exp(-i H0 dt) exp(-i c V dt/2)
               evaluated in the drive-operator eigenbasis; same order of
               accuracy as ``expm`` at a fraction of the cost per step.
* ``rk``       adaptive Dormand-Prince (DOP853) integration.

Static Hamiltonians are propagated exactly through their spectral
decomposition (``spectral``).  All schemes accept an initial density
matrix; internally the mixed state is factored into weighted pure states
when ``factorized=True``, which quarters the cost for high-rank states.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp
from scipy.ndimage import gaussian_filter1d

from .errors import NumericsError
from .hamiltonian import DrivenHamiltonian
from .operators import HilbertLayout, angular_momentum, embed, is_hermitian

MIN_SUBSTEPS_PER_PERIOD = 40
_HERM_DRIFT = 1e-12  # re-symmetrize when Hermiticity/trace drift exceeds this


def initial_state(layout: HilbertLayout, muon_axis: Sequence[float] = (0.0, 0.0, 1.0)) -> np.ndarray:
    """rho(0): muon pure state along `muon_axis`, everything else maximally mixed."""
    axis = np.asarray(muon_axis, dtype=float)
    if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
        raise ValueError("muon_axis must be a unit vector")
    if layout.dims[0] != 2:
        raise ValueError("site 0 (the muon) must be spin-1/2")
    theta = math.acos(np.clip(axis[2], -1.0, 1.0))
    phi = math.atan2(axis[1], axis[0])
    ket = np.array([math.cos(theta / 2.0), math.sin(theta / 2.0) * np.exp(1j * phi)])
    rho_mu = np.outer(ket, ket.conj())
    d_env = layout.dim_without(0)
    return np.kron(rho_mu, np.eye(d_env, dtype=complex) / d_env)


def muon_z_operator(layout: HilbertLayout) -> np.ndarray:
    """J_{mu,z} embedded in the full space (muon = site 0)."""
    return embed(angular_momentum(layout.spin(0)).jz, 0, layout)


@dataclass
class Evolution:
    """Result of `evolve`: observable series and optionally the states."""

    times: np.ndarray
    expect: dict[str, np.ndarray]
    states: list[np.ndarray] | None
    reported_tol: float
    method: str
    stats: dict = field(default_factory=dict)


@dataclass(frozen=True)
class PolarizationSeries:
    """Dimensionless muon polarization on a time grid (us)."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.times.shape != self.values.shape:
            raise ValueError("times/values shape mismatch")


def muon_polarization(rhos: Sequence[np.ndarray], layout: HilbertLayout, times: Sequence[float]) -> PolarizationSeries:
    """P(t) = 2 Tr[rho(t) J_{mu,z}] for a sequence of density matrices."""
    op = muon_z_operator(layout)
    vals = np.array([2.0 * np.einsum("ij,ji->", rho, op).real for rho in rhos])
    return PolarizationSeries(times=np.asarray(times, dtype=float), values=vals)


def orientation_average(p1: PolarizationSeries, p2: PolarizationSeries) -> PolarizationSeries:
    """Pointwise mean of two polarization series on identical grids."""
    if p1.times.shape != p2.times.shape or not np.allclose(p1.times, p2.times, rtol=0, atol=1e-12):
        raise ValueError("polarization series have different time grids")
    return PolarizationSeries(times=p1.times, values=0.5 * (p1.values + p2.values))


def smear_pulse(series: PolarizationSeries, fwhm_us: float) -> PolarizationSeries:
    """Optional Gaussian smearing emulating a finite beam-pulse width.

    Off by default everywhere; requires a uniform time grid.
    """
    t = series.times
    if len(t) < 3:
        return series
    dt = np.diff(t)
    if np.max(np.abs(dt - dt[0])) > 1e-9 * dt[0]:
        raise ValueError("pulse smearing requires a uniform time grid")
    sigma_bins = fwhm_us / (2.0 * math.sqrt(2.0 * math.log(2.0))) / dt[0]
    return PolarizationSeries(times=t, values=gaussian_filter1d(series.values, sigma_bins, mode="nearest"))


@dataclass(frozen=True)
class EigenPopulations:
    """Populations of H0 eigenstates, summed per degenerate subspace."""

    energies: np.ndarray  # one per subspace
    degeneracies: np.ndarray
    populations: np.ndarray


def eigen_populations(rho: np.ndarray, h0: np.ndarray, gap_tol: float = 1e-8) -> EigenPopulations:
    """n_k = <k|rho|k> grouped over degenerate subspaces of h0."""
    w, vecs = np.linalg.eigh(h0)
    pops = np.einsum("ik,ij,jk->k", vecs.conj(), rho, vecs).real
    scale = max(np.max(np.abs(w)), 1.0)
    groups = np.concatenate([[0], np.cumsum(np.diff(w) > gap_tol * scale)])
    n_groups = groups[-1] + 1
    energies = np.array([w[groups == g].mean() for g in range(n_groups)])
    degs = np.array([np.sum(groups == g) for g in range(n_groups)])
    sums = np.array([pops[groups == g].sum() for g in range(n_groups)])
    return EigenPopulations(energies=energies, degeneracies=degs, populations=sums)


# ---------------------------------------------------------------------------
# internal helpers


class _HermEighCache:
    """Tiny content-addressed cache for Hermitian eigendecompositions."""

    def __init__(self, maxsize: int = 8):
        self.maxsize = maxsize
        self._store: dict[bytes, tuple[np.ndarray, np.ndarray]] = {}

    @staticmethod
    def _key(a: np.ndarray) -> bytes:
        return hashlib.sha1(np.ascontiguousarray(a).view(np.uint8)).digest()

    def get(self, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        key = self._key(a)
        hit = self._store.get(key)
        if hit is None:
            hit = sla.eigh(a)
            if len(self._store) >= self.maxsize:
                self._store.pop(next(iter(self._store)))
            self._store[key] = hit
        return hit


_eigh_cache = _HermEighCache()


def _as_driven(ham) -> DrivenHamiltonian | None:
    if isinstance(ham, DrivenHamiltonian):
        return ham
    if isinstance(ham, np.ndarray):
        from .hamiltonian import DriveSpec

        return DrivenHamiltonian(h0=ham, v=np.zeros_like(ham), drive=DriveSpec.off())
    return None  # generic callable


def _factor_rho(rho0: np.ndarray, cutoff: float = 1e-14) -> tuple[np.ndarray, np.ndarray]:
    """rho0 = B diag(w) B^dag with near-zero weights dropped."""
    n = rho0.shape[0]
    diag = np.diag(rho0)
    if np.max(np.abs(rho0 - np.diag(diag))) < 1e-15:
        w = diag.real
        keep = w > cutoff
        b = np.eye(n, dtype=complex)[:, keep]
        return w[keep], b
    w, vecs = np.linalg.eigh(rho0)
    keep = w > cutoff
    return w[keep], vecs[:, keep]


def _check_times(times) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or len(t) == 0:
        raise ValueError("times must be a non-empty 1-d array")
    if t[0] < 0 or np.any(np.diff(t) <= 0):
        raise ValueError("times must be non-negative and strictly increasing")
    return t


class _BlockState:
    """Weighted pure-state block (N x r), or a full density matrix (r = N)."""

    def __init__(self, rho0: np.ndarray, factorized: bool, dtype):
        self.factorized = factorized
        if factorized:
            w, b = _factor_rho(rho0)
            self.w = w
            self.psi = np.ascontiguousarray(b.astype(dtype))
        else:
            self.rho = np.ascontiguousarray(rho0.astype(dtype))
        self.steps_since_fix = 0

    def apply(self, u: np.ndarray) -> None:
        if self.factorized:
            self.psi = u @ self.psi
        else:
            self.rho = u @ self.rho @ u.conj().T
            self.steps_since_fix += 1
            if self.steps_since_fix >= 16:
                self._resymmetrize()

    def apply_diag(self, phase: np.ndarray) -> None:
        if self.factorized:
            self.psi *= phase[:, None]
        else:
            self.rho = phase[:, None] * self.rho * phase.conj()[None, :]

    def _resymmetrize(self) -> None:
        drift = np.max(np.abs(self.rho - self.rho.conj().T))
        tr = self.rho.trace().real
        if drift > _HERM_DRIFT:
            self.rho = 0.5 * (self.rho + self.rho.conj().T)
        if abs(tr - 1.0) > _HERM_DRIFT and tr != 0.0:
            self.rho = self.rho / tr
        self.steps_since_fix = 0

    def density(self) -> np.ndarray:
        if self.factorized:
            return np.asarray((self.psi * self.w) @ self.psi.conj().T, dtype=complex)
        return np.asarray(self.rho, dtype=complex)

    def expect(self, op: np.ndarray) -> float:
        if self.factorized:
            return float(np.einsum("ic,ic,c->", self.psi.conj(), op @ self.psi, self.w).real)
        return float(np.einsum("ij,ji->", self.rho, op).real)


class _ExpmStepper:
    """Exact exponential of the midpoint-sampled Hamiltonian per substep."""

    def __init__(self, ham: DrivenHamiltonian, dtype):
        self.ham = ham
        self.dtype = dtype
        self._eigs: dict[float, tuple[np.ndarray, np.ndarray]] = {}
        self._props: dict[tuple[float, float], np.ndarray] = {}
        self.n_eigh = 0

    def _eig(self, c: float) -> tuple[np.ndarray, np.ndarray]:
        key = round(c, 14)
        hit = self._eigs.get(key)
        if hit is None:
            h = self.ham.h0 if c == 0.0 else self.ham.h0 + c * self.ham.v
            hit = sla.eigh(h.astype(self.dtype))
            self.n_eigh += 1
            if len(self._eigs) > 64:
                self._eigs.pop(next(iter(self._eigs)))
            self._eigs[key] = hit
        return hit

    def step(self, state: _BlockState, t0: float, dt: float) -> None:
        c = float(self.ham.drive.envelope(t0 + dt / 2.0)) if self.ham.is_driven else 0.0
        key = (round(c, 14), round(dt, 14))
        u = self._props.get(key)
        if u is None:
            w, vecs = self._eig(c)
            u = (vecs * np.exp(-1j * w * dt)) @ vecs.conj().T
            u = u.astype(self.dtype)
            if len(self._props) > 64:
                self._props.pop(next(iter(self._props)))
            self._props[key] = u
        state.apply(u)


class _SplitStepper:
    """Strang splitting in the drive-operator eigenbasis.

    The state is kept in the eigenbasis of V, where the drive factors are
    diagonal phases; only exp(-i H0 dt) costs a matrix product per step.
    Observables are transformed into the same basis once.
    """

    def __init__(self, ham: DrivenHamiltonian, dtype):
        self.ham = ham
        self.dtype = dtype
        self.wv, self.uv = _eigh_cache.get(ham.v.astype(dtype))
        w0, g = _eigh_cache.get(ham.h0.astype(dtype))
        self.w0 = w0
        self.gt = np.ascontiguousarray((self.uv.conj().T @ g).astype(dtype))
        self._m: dict[float, np.ndarray] = {}
        self.n_eigh = 0

    def free_propagator(self, dt: float) -> np.ndarray:
        key = round(dt, 14)
        m = self._m.get(key)
        if m is None:
            m = (self.gt * np.exp(-1j * self.w0 * dt)).astype(self.dtype) @ self.gt.conj().T
            if len(self._m) > 8:
                self._m.pop(next(iter(self._m)))
            self._m[key] = m
        return m

    def to_basis(self, state: _BlockState) -> None:
        u = self.uv.conj().T.astype(self.dtype)
        state.apply(u)

    def from_basis_op(self, op: np.ndarray) -> np.ndarray:
        return (self.uv.conj().T @ op @ self.uv).astype(self.dtype)

    def step(self, state: _BlockState, t0: float, dt: float) -> None:
        c = float(self.ham.drive.envelope(t0 + dt / 2.0)) if self.ham.is_driven else 0.0
        if c != 0.0:
            half = np.exp(-1j * c * self.wv * dt / 2.0).astype(self.dtype)
            state.apply_diag(half)
            state.apply(self.free_propagator(dt))
            state.apply_diag(half)
        else:
            state.apply(self.free_propagator(dt))


def _run_stepping(
    ham: DrivenHamiltonian,
    rho0: np.ndarray,
    times: np.ndarray,
    method: str,
    substeps_per_period: int,
    max_step: float | None,
    observables: Mapping[str, np.ndarray],
    keep_states: bool,
    factorized: bool,
    dtype,
) -> tuple[dict[str, np.ndarray], list[np.ndarray] | None, dict]:
    if ham.is_driven:
        h = ham.drive.period_us / max(substeps_per_period, 1)
        if max_step is not None:
            h = min(h, max_step)
    else:
        h = max_step if max_step is not None else max(times[-1], 1e-6)
    if h < 1e-9:
        raise NumericsError("substep underflow: step below 1 fs requested")

    state = _BlockState(rho0, factorized=factorized, dtype=dtype)
    if method == "split":
        stepper = _SplitStepper(ham, dtype)
        stepper.to_basis(state)
        obs = {name: stepper.from_basis_op(op) for name, op in observables.items()}
        back = stepper.uv.astype(dtype)
    else:
        stepper = _ExpmStepper(ham, dtype)
        obs = {name: op.astype(dtype) for name, op in observables.items()}
        back = None

    expect = {name: np.empty(len(times)) for name in obs}
    states: list[np.ndarray] | None = [] if keep_states else None
    n_steps = 0
    t = 0.0
    for k, target in enumerate(times):
        remaining = target - t
        if remaining > 1e-12:
            n_full = int(math.floor(remaining / h + 1e-9))
            for _ in range(n_full):
                stepper.step(state, t, h)
                t += h
                n_steps += 1
            dt = target - t
            if dt > 1e-12:
                stepper.step(state, t, dt)
                n_steps += 1
        t = target
        for name, op in obs.items():
            expect[name][k] = state.expect(op)
        if keep_states:
            rho = state.density()
            if back is not None:
                rho = back @ rho @ back.conj().T
            states.append(rho)
    stats = {"n_substeps": n_steps, "substep_us": h, "n_eigh": getattr(stepper, "n_eigh", 0)}
    return expect, states, stats


def _run_spectral(
    h0: np.ndarray,
    rho0: np.ndarray,
    times: np.ndarray,
    observables: Mapping[str, np.ndarray],
    keep_states: bool,
    dtype=np.complex128,
) -> tuple[dict[str, np.ndarray], list[np.ndarray] | None]:
    w, g = _eigh_cache.get(np.ascontiguousarray(h0.astype(dtype)))
    w = w.astype(float)
    g = g.astype(complex)
    rho_t0 = g.conj().T @ rho0 @ g
    # <O>(t) = sum_ab W_ab p_a(t) conj(p_b(t)) with p(t) = exp(-i w t)
    phases = np.exp(np.outer(-1j * times, w))  # (T, N)
    expect: dict[str, np.ndarray] = {}
    for name, op in observables.items():
        ot = g.conj().T @ op @ g
        weights = rho_t0 * ot.T  # (a,b) -> rho~_ab * O~_ba
        expect[name] = np.einsum("ka,ka->k", phases @ weights, phases.conj()).real
    states = None
    if keep_states:
        states = []
        for t in times:
            phase = np.exp(-1j * w * t)
            states.append(g @ (phase[:, None] * rho_t0 * phase.conj()[None, :]) @ g.conj().T)
    return expect, states


def _run_rk(
    ham,
    rho0: np.ndarray,
    times: np.ndarray,
    tol: float,
    observables: Mapping[str, np.ndarray],
    keep_states: bool,
    factorized: bool,
) -> tuple[dict[str, np.ndarray], list[np.ndarray] | None, dict]:
    driven = _as_driven(ham)
    h_of_t: Callable[[float], np.ndarray] = driven if driven is not None else ham
    n = rho0.shape[0]
    if factorized:
        w, b = _factor_rho(rho0)
        shape = b.shape

        def rhs(t, y):
            psi = y.reshape(shape)
            return (-1j * (h_of_t(t) @ psi)).ravel()

        y0 = b.astype(complex).ravel()
    else:
        shape = (n, n)

        def rhs(t, y):
            rho = y.reshape(shape)
            h = h_of_t(t)
            return (-1j * (h @ rho - rho @ h)).ravel()

        y0 = rho0.astype(complex).ravel()

    max_step = np.inf
    if driven is not None and driven.is_driven:
        max_step = driven.drive.period_us / 8.0
    t_eval = times
    t_span = (0.0, float(times[-1])) if times[-1] > 0 else (0.0, 1e-12)
    sol = solve_ivp(
        rhs, t_span, y0, t_eval=t_eval, method="DOP853",
        rtol=tol, atol=tol * 1e-2, max_step=max_step,
    )
    if not sol.success:
        raise NumericsError(f"ODE integration failed: {sol.message}")
    expect = {name: np.empty(len(times)) for name in observables}
    states = [] if keep_states else None
    for k in range(len(times)):
        y = sol.y[:, k].reshape(shape)
        if factorized:
            rho = (y * w) @ y.conj().T
        else:
            rho = y.reshape(n, n)
            rho = 0.5 * (rho + rho.conj().T)
        for name, op in observables.items():
            expect[name][k] = np.einsum("ij,ji->", rho, op).real
        if keep_states:
            states.append(rho)
    return expect, states, {"nfev": sol.nfev}


def _probe_error(
    ham: DrivenHamiltonian,
    rho0: np.ndarray,
    times: np.ndarray,
    method: str,
    m: int,
    observables: Mapping[str, np.ndarray],
    factorized: bool,
    dtype,
) -> float:
    """Richardson estimate: compare m and 2m substeps over a short window,
    scale linearly to the full duration."""
    t_probe = min(2.0 * ham.drive.period_us, float(times[-1]))
    if t_probe <= 0:
        return 0.0
    probe_times = np.linspace(t_probe / 8.0, t_probe, 8)
    probes = observables if observables else {"_state": None}
    if "_state" in probes:
        out = []
        for mm in (m, 2 * m):
            _, states, _ = _run_stepping(
                ham, rho0, probe_times, method, mm, None, {}, True, factorized, dtype
            )
            out.append(states)
        diffs = [np.linalg.norm(a - b) for a, b in zip(*out)]
        est = max(diffs) * math.sqrt(rho0.shape[0])
    else:
        series = []
        for mm in (m, 2 * m):
            expect, _, _ = _run_stepping(
                ham, rho0, probe_times, method, mm, None, probes, False, factorized, dtype
            )
            series.append(expect)
        est = max(
            float(np.max(np.abs(series[0][name] - series[1][name]))) for name in probes
        )
    est *= 4.0 / 3.0  # Richardson factor for a second-order scheme
    return est * max(1.0, float(times[-1]) / t_probe)


def evolve(
    ham,
    rho0: np.ndarray,
    times: Sequence[float],
    *,
    tol: float | None = None,
    method: str = "auto",
    observables: Mapping[str, np.ndarray] | None = None,
    keep_states: bool = False,
    substeps_per_period: int = MIN_SUBSTEPS_PER_PERIOD,
    max_step: float | None = None,
    factorized: bool = False,
    error_estimate: bool | None = None,
    dtype=np.complex128,
) -> Evolution:
    """Propagate rho0 under H(t) and report observables at `times`.

    `ham` is a DrivenHamiltonian, a plain Hermitian matrix (static), or a
    callable t -> matrix (rk/expm only).  `observables` maps names to
    Hermitian operators; their expectation values are streamed so the
    full state history is only stored with ``keep_states=True``.

    Accuracy: static Hamiltonians are propagated exactly.  For driven
    stepping schemes a Richardson probe estimates the discretization error
    on the requested observables; passing an explicit `tol` escalates the
    substep density until the estimate falls below it.  With ``tol=None``
    the substep density stays at `substeps_per_period` and the achieved
    estimate is reported (or NaN when ``error_estimate=False``).
    """
    times = _check_times(times)
    if tol is not None and tol <= 0:
        raise ValueError("tol must be positive")
    observables = dict(observables or {})
    driven = _as_driven(ham)
    if driven is not None and not is_hermitian(driven.h0, 1e-10):
        raise NumericsError("non-Hermitian Hamiltonian")

    if method == "auto":
        if driven is None:
            method = "rk"
        elif driven.is_driven:
            method = "expm"
        else:
            method = "spectral"

    if method == "spectral":
        if driven is None or driven.is_driven:
            raise ValueError("spectral propagation requires a static Hamiltonian")
        expect, states = _run_spectral(driven.h0, rho0, times, observables, keep_states, dtype)
        reported = 1e-12 if dtype == np.complex128 else 1e-5
        return Evolution(times, expect, states, reported_tol=reported, method=method)

    if method == "rk":
        rk_tol = tol if tol is not None else 1e-8
        expect, states, stats = _run_rk(ham, rho0, times, rk_tol, observables, keep_states, factorized)
        return Evolution(times, expect, states, reported_tol=rk_tol, method=method, stats=stats)

    if method not in ("expm", "split"):
        raise ValueError(f"unknown method {method!r}")
    if driven is None:
        raise ValueError(f"method {method!r} requires a matrix or DrivenHamiltonian")

    m = max(1, substeps_per_period)
    if error_estimate is None:
        error_estimate = tol is not None
    est = np.nan
    if error_estimate and driven.is_driven:
        est = _probe_error(driven, rho0, times, method, m, observables, factorized, dtype)
        if tol is not None and est > tol:
            # second-order scheme: error ~ 1/m^2; target tol/2 for margin
            m = int(math.ceil(m * math.sqrt(est / (0.5 * tol))))
            est = _probe_error(driven, rho0, times, method, m, observables, factorized, dtype)
    expect, states, stats = _run_stepping(
        driven, rho0, times, method, m, max_step, observables, keep_states, factorized, dtype
    )
    # the piecewise exponential of a constant H is exact
    reported = 1e-12 if not driven.is_driven else est
    stats["substeps_per_period"] = m
    return Evolution(times, expect, states, reported_tol=reported, method=method, stats=stats)
