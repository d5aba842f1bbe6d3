"""Closed-form eigensystem of the linear F-mu-F three-spin complex.

For a linear, equidistant complex with only the two muon-fluorine dipole
couplings retained, the eight eigenstates form four doubly-degenerate
levels with energies (in units of the dipole frequency omega_D)
{-1, (1-sqrt(3))/2, 0, (1+sqrt(3))/2}.  This module hardcodes that
solution as an independent oracle for the numeric Hamiltonian pipeline,
provides level diagrams versus applied field, the RF-drive transition
table, and the muon-entanglement witness (reduced purity).

Basis convention everywhere: product basis |m_mu m_F1 m_F2> with the
muon first and m ordered +1/2, -1/2 per site ("up" = index 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .constants import GAMMA_F19_MHZ_T, GAMMA_MUON_MHZ_T, dipole_coupling_rad_us
from .hamiltonian import Cluster, dipole_hamiltonian, zeeman_hamiltonian
from .operators import HilbertLayout, angular_momentum, partial_trace, purity

FMUF_LAYOUT = HilbertLayout((2, 2, 2))

# allowed-transition cut: |element| above this fraction of the largest element
ALLOWED_ELEMENT_CUT = 1e-6


@dataclass(frozen=True)
class EigenLevel:
    """One (possibly degenerate) energy level with its eigenvectors."""

    energy: float  # units of the reference dipole frequency omega_D
    degeneracy: int
    vectors: tuple[np.ndarray, ...]  # columns in the product basis


@dataclass(frozen=True)
class Transition:
    """A drive-coupled pair of levels."""

    from_level: int
    to_level: int
    frequency: float  # |dE| in omega_D units
    frequency_khz: float | None
    element: float  # |<k'| sum_i gamma_i J_iy |k>|, max over degenerate members
    allowed: bool


def _ket(pattern: str) -> np.ndarray:
    """Product basis vector from a string like 'uud' (muon first)."""
    v = np.array([1.0])
    for ch in pattern:
        v = np.kron(v, np.array([1.0, 0.0]) if ch == "u" else np.array([0.0, 1.0]))
    return v.astype(complex)


def fmuf_energies() -> np.ndarray:
    """The four level energies in omega_D units, ascending."""
    s3 = math.sqrt(3.0)
    return np.array([-1.0, (1.0 - s3) / 2.0, 0.0, (1.0 + s3) / 2.0])


def fmuf_eigensystem() -> list[EigenLevel]:
    """Analytic levels of the linear equidistant complex (mu-F terms only)."""
    s3 = math.sqrt(3.0)
    a_low = math.sqrt((3.0 + s3) / 12.0)
    a_high = math.sqrt((3.0 - s3) / 12.0)
    v1 = _ket("uuu")
    v2 = _ket("ddd")
    v3 = a_low * ((1.0 - s3) * _ket("duu") + _ket("uud") + _ket("udu"))
    v4 = a_low * ((1.0 - s3) * _ket("udd") + _ket("ddu") + _ket("dud"))
    v5 = (_ket("uud") - _ket("udu")) / math.sqrt(2.0)
    v6 = (_ket("ddu") - _ket("dud")) / math.sqrt(2.0)
    v7 = a_high * ((1.0 + s3) * _ket("duu") + _ket("uud") + _ket("udu"))
    v8 = a_high * ((1.0 + s3) * _ket("udd") + _ket("ddu") + _ket("dud"))
    e = fmuf_energies()
    return [
        EigenLevel(energy=e[0], degeneracy=2, vectors=(v1, v2)),
        EigenLevel(energy=e[1], degeneracy=2, vectors=(v3, v4)),
        EigenLevel(energy=e[2], degeneracy=2, vectors=(v5, v6)),
        EigenLevel(energy=e[3], degeneracy=2, vectors=(v7, v8)),
    ]


def fmuf_hamiltonian(
    r1: float = 1.0,
    r2: float | None = None,
    include_ff: bool = False,
    unit_coupling: bool = True,
) -> np.ndarray:
    """8x8 dipole Hamiltonian of a linear F-mu-F complex along z.

    Built locally from single-spin operators (independently of the cluster
    pipeline) so it can serve as a numeric cross-check.  With
    ``unit_coupling`` the nearest-bond coupling is 1 (energies in omega_D
    units); otherwise physical gammas and distances in angstrom are used
    and the result is in rad/us.
    """
    if r2 is None:
        r2 = r1
    ops = angular_momentum(0.5)
    eye = np.eye(2, dtype=complex)

    def pair(op_a_idx: int, op_b_idx: int) -> np.ndarray:
        out = np.zeros((8, 8), dtype=complex)
        for ax in range(3):
            mats = [eye, eye, eye]
            weight = -2.0 if ax == 2 else 1.0  # J.J - 3 Jz Jz along the bond (z)
            mats[op_a_idx] = ops.vector()[ax]
            mats[op_b_idx] = ops.vector()[ax]
            out += weight * np.kron(np.kron(mats[0], mats[1]), mats[2])
        return out

    if unit_coupling:
        d1, d2 = 1.0, (r1 / r2) ** 3  # omega_D referenced to bond r1
    else:
        d1 = dipole_coupling_rad_us(GAMMA_MUON_MHZ_T, GAMMA_F19_MHZ_T, r1)
        d2 = dipole_coupling_rad_us(GAMMA_MUON_MHZ_T, GAMMA_F19_MHZ_T, r2)
    h = d1 * pair(0, 1) + d2 * pair(0, 2)
    if include_ff:
        if unit_coupling:
            dff = (GAMMA_F19_MHZ_T / GAMMA_MUON_MHZ_T) * (r1 / (r1 + r2)) ** 3
        else:
            dff = dipole_coupling_rad_us(GAMMA_F19_MHZ_T, GAMMA_F19_MHZ_T, r1 + r2)
        h += dff * pair(1, 2)
    return h


def drive_coupling_operator(
    layout: HilbertLayout,
    gammas_mhz_t: Sequence[float],
    axis: Sequence[float] = (0.0, 1.0, 0.0),
) -> np.ndarray:
    """sum_i gamma_i (J_i . axis); gammas in MHz/T set the relative weights."""
    from .operators import embed

    n = np.asarray(axis, dtype=float)
    out = np.zeros((layout.size, layout.size), dtype=complex)
    for i, g in enumerate(gammas_mhz_t):
        ops = angular_momentum(layout.spin(i))
        out += g * embed(ops.along(n), i, layout)
    return out


def transition_table(
    levels: Sequence[EigenLevel],
    gammas_mhz_t: Sequence[float] = (GAMMA_MUON_MHZ_T, GAMMA_F19_MHZ_T, GAMMA_F19_MHZ_T),
    layout: HilbertLayout = FMUF_LAYOUT,
    drive_axis: Sequence[float] = (0.0, 1.0, 0.0),
    omega_d_rad_us: float | None = None,
) -> list[Transition]:
    """All level pairs with their drive matrix elements.

    Frequencies are |dE| in the levels' energy units; if the physical
    dipole frequency `omega_d_rad_us` is given they are also quoted in kHz.
    Pairs whose largest member-to-member element falls below
    ALLOWED_ELEMENT_CUT of the global maximum are flagged forbidden.
    """
    v = drive_coupling_operator(layout, gammas_mhz_t, drive_axis)
    elements = np.zeros((len(levels), len(levels)))
    for a, la in enumerate(levels):
        for b, lb in enumerate(levels):
            if b <= a:
                continue
            elems = [abs(np.vdot(x, v @ y)) for x in la.vectors for y in lb.vectors]
            elements[a, b] = max(elems)
    cut = ALLOWED_ELEMENT_CUT * max(elements.max(), 1e-300)
    out = []
    for a in range(len(levels)):
        for b in range(a + 1, len(levels)):
            freq = abs(levels[b].energy - levels[a].energy)
            khz = None
            if omega_d_rad_us is not None:
                khz = freq * omega_d_rad_us / (2.0 * math.pi) * 1e3
            out.append(
                Transition(
                    from_level=a,
                    to_level=b,
                    frequency=freq,
                    frequency_khz=khz,
                    element=float(elements[a, b]),
                    allowed=bool(elements[a, b] > cut),
                )
            )
    return out


def on_resonance_transition(transitions: Sequence[Transition]) -> Transition:
    """The highest-frequency allowed transition (the driven pair)."""
    allowed = [t for t in transitions if t.allowed and t.frequency > 0]
    if not allowed:
        raise ValueError("no allowed transitions")
    return max(allowed, key=lambda t: t.frequency)


@dataclass(frozen=True)
class LevelSweep:
    """Eigenvalues tracked across a field sweep (continuity by overlap)."""

    b_values: np.ndarray  # mT
    energies: np.ndarray  # (n_levels, n_fields), rad/us


def levels_vs_field(
    cluster: Cluster,
    b_axis: Sequence[float],
    b_values_mt: Sequence[float],
) -> LevelSweep:
    """Spectrum of H0 + H1(B) along a field sweep, with level tracking.

    Levels are connected across neighbouring fields by maximal eigenvector
    overlap, not by energy ordering, so near-crossings track correctly.
    """
    b_axis = np.asarray(b_axis, dtype=float)
    if abs(np.linalg.norm(b_axis) - 1.0) > 1e-9:
        raise ValueError("b_axis must be a unit vector")
    b_values = np.asarray(b_values_mt, dtype=float)
    if not np.all(np.isfinite(b_values)):
        raise ValueError("field values must be finite")
    h0 = dipole_hamiltonian(cluster)
    zee = zeeman_hamiltonian(cluster, b_axis)  # per mT
    energies = np.empty((h0.shape[0], len(b_values)))
    prev_vecs = None
    order = np.arange(h0.shape[0])
    for k, b in enumerate(b_values):
        w, vecs = np.linalg.eigh(h0 + b * zee)
        if prev_vecs is not None:
            overlap = np.abs(prev_vecs.conj().T @ vecs) ** 2
            _, cols = linear_sum_assignment(-overlap)
            w, vecs = w[cols], vecs[:, cols]
        energies[order, k] = w
        prev_vecs = vecs
    return LevelSweep(b_values=b_values, energies=energies)


def muon_reduced_purity(state: np.ndarray, layout: HilbertLayout) -> float:
    """Tr[(Tr_env |psi><psi|)^2]; equals 1 iff the muon factorizes."""
    psi = np.asarray(state, dtype=complex).ravel()
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > 1e-9:
        raise ValueError("state must be normalized")
    rho = np.outer(psi, psi.conj())
    rho_mu = partial_trace(rho, keep=[0], layout=layout)
    return purity(rho_mu)
