"""Dipolar and Zeeman Hamiltonians for a configured spin cluster.

All Hamiltonians are returned divided by hbar, as Hermitian matrices in
rad/us (see `constants` for the unit bridge).  Site 0 of a cluster is
always the muon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .constants import dipole_coupling_rad_us, gamma_rad_us_mt
from .operators import HilbertLayout, embed, embed_two_site, site_spin_operators

BOND_SCALE_RANGE = (0.5, 1.5)  # sanity bounds for bond-length scale factors


@dataclass(frozen=True)
class SpinSite:
    """One magnetic moment: spin, gyromagnetic ratio and lab-frame position."""

    label: str
    j: float
    gamma_mhz_t: float  # gamma/(2pi) in MHz/T
    position: tuple[float, float, float]  # angstrom, lab frame

    @property
    def gamma(self) -> float:
        """gamma in rad/us/mT."""
        return gamma_rad_us_mt(self.gamma_mhz_t)

    def moved_to(self, position: Sequence[float]) -> "SpinSite":
        return replace(self, position=tuple(float(x) for x in position))


@dataclass(frozen=True)
class Cluster:
    """Ordered spin sites (muon first) for one crystallographic orientation.

    `groups` maps a bond-scale group name to the labels it covers, e.g.
    {"F12": ("F1", "F2")}; scaling a group moves those sites along their
    displacement from the muon.
    """

    sites: tuple[SpinSite, ...]
    orientation_id: int = 1
    groups: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        labels = [s.label for s in self.sites]
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate site labels")
        for name, members in self.groups.items():
            unknown = set(members) - set(labels)
            if unknown:
                raise ValueError(f"group {name} references unknown sites {sorted(unknown)}")

    @property
    def muon(self) -> SpinSite:
        return self.sites[0]

    @property
    def layout(self) -> HilbertLayout:
        return HilbertLayout.from_spins([s.j for s in self.sites])

    def positions(self) -> np.ndarray:
        return np.array([s.position for s in self.sites], dtype=float)

    def site(self, label: str) -> SpinSite:
        for s in self.sites:
            if s.label == label:
                return s
        raise KeyError(label)

    def muon_distances(self) -> dict[str, float]:
        r0 = np.asarray(self.muon.position)
        return {
            s.label: float(np.linalg.norm(np.asarray(s.position) - r0))
            for s in self.sites[1:]
        }

    def subset(self, labels: Sequence[str]) -> "Cluster":
        """Sub-cluster restricted to the muon plus the given labels."""
        want = [self.sites[0].label] + [l for l in labels if l != self.sites[0].label]
        sites = tuple(self.site(l) for l in want)
        groups = {
            name: tuple(l for l in members if l in want)
            for name, members in self.groups.items()
        }
        groups = {k: v for k, v in groups.items() if v}
        return Cluster(sites=sites, orientation_id=self.orientation_id, groups=groups)

    def translated(self, delta: Sequence[float]) -> "Cluster":
        d = np.asarray(delta, dtype=float)
        sites = tuple(s.moved_to(np.asarray(s.position) + d) for s in self.sites)
        return replace(self, sites=sites)


def scale_bonds(cluster: Cluster, scales: Mapping[str, float]) -> Cluster:
    """Scale muon-site displacement vectors per group; the muon stays put.

    r'_i = s * (r_i - r_mu) + r_mu for every site i in the group.
    """
    lo, hi = BOND_SCALE_RANGE
    for name, s in scales.items():
        if not (lo < s < hi):
            raise ValueError(f"bond scale {name}={s} outside sanity range ({lo}, {hi})")
        if name not in cluster.groups:
            raise KeyError(f"unknown bond group {name!r}")
    r_mu = np.asarray(cluster.muon.position)
    by_label = {}
    for name, s in scales.items():
        for label in cluster.groups[name]:
            by_label[label] = s
    new_sites = [cluster.sites[0]]
    for site in cluster.sites[1:]:
        s = by_label.get(site.label)
        if s is None:
            new_sites.append(site)
        else:
            new_sites.append(site.moved_to(s * (np.asarray(site.position) - r_mu) + r_mu))
    return replace(cluster, sites=tuple(new_sites))


def dipole_hamiltonian(cluster: Cluster, pairs: Sequence[tuple[str, str]] | None = None) -> np.ndarray:
    """H0/hbar: all-pair magnetic dipole couplings, in rad/us.

    H0 = (1/2) sum_{i != j} D_ij [J_i.J_j - 3 (J_i.n_ij)(J_j.n_ij)]
    with D_ij = mu0 hbar g_i g_j / (4 pi r_ij^3); the symmetric double sum
    collapses to a single sum over unordered pairs.  All pairs are included
    by default; `pairs` restricts to the named couples (oracle comparisons).
    """
    layout = cluster.layout
    n = len(cluster.sites)
    ops = site_spin_operators(layout.dims)
    h = np.zeros((layout.size, layout.size), dtype=complex)
    pos = cluster.positions()
    wanted = None
    if pairs is not None:
        wanted = {frozenset(p) for p in pairs}
    for i in range(n):
        for k in range(i + 1, n):
            if wanted is not None and frozenset(
                (cluster.sites[i].label, cluster.sites[k].label)
            ) not in wanted:
                continue
            rvec = pos[k] - pos[i]
            r = float(np.linalg.norm(rvec))
            if r < 1e-9:
                raise ValueError(
                    f"sites {cluster.sites[i].label} and {cluster.sites[k].label} coincide"
                )
            nhat = rvec / r
            d = dipole_coupling_rad_us(cluster.sites[i].gamma_mhz_t, cluster.sites[k].gamma_mhz_t, r)
            a, b = ops[i], ops[k]
            # two-site operator on the small (d_i x d_k) space, then one embed
            t = sum(np.kron(a.vector()[ax], b.vector()[ax]) for ax in range(3))
            t = t - 3.0 * np.kron(a.along(nhat), b.along(nhat))
            h += d * embed_two_site(t, i, k, layout)
    return h


def zeeman_hamiltonian(cluster: Cluster, b_mt: Sequence[float]) -> np.ndarray:
    """H1/hbar = -sum_i gamma_i (J_i . B), in rad/us for B in mT."""
    layout = cluster.layout
    ops = site_spin_operators(layout.dims)
    b = np.asarray(b_mt, dtype=float)
    h = np.zeros((layout.size, layout.size), dtype=complex)
    if not np.any(b):
        return h
    for i, site in enumerate(cluster.sites):
        h += embed(-site.gamma * ops[i].along(b), i, layout)
    return h


def drive_operator(cluster: Cluster, axis: Sequence[float] = (0.0, 1.0, 0.0)) -> np.ndarray:
    """Zeeman coupling operator per unit field (mT) along `axis`."""
    return zeeman_hamiltonian(cluster, axis)


@dataclass(frozen=True)
class DriveSpec:
    """Linearly polarized RF drive B(t) = amplitude * cos(omega t + phase) along y."""

    amplitude_mt: float
    omega_rad_us: float
    phase: float = 0.0
    enabled: bool = True

    def __post_init__(self):
        if self.amplitude_mt < 0:
            raise ValueError("drive amplitude must be >= 0")
        if self.enabled and self.omega_rad_us <= 0:
            raise ValueError("drive frequency must be > 0 when enabled")

    @property
    def period_us(self) -> float:
        return 2.0 * math.pi / self.omega_rad_us

    def envelope(self, t) -> np.ndarray:
        """Instantaneous field amplitude in mT at time(s) t."""
        if not self.enabled or self.amplitude_mt == 0.0:
            return np.zeros_like(np.asarray(t, dtype=float))
        return self.amplitude_mt * np.cos(self.omega_rad_us * np.asarray(t, dtype=float) + self.phase)

    @classmethod
    def off(cls) -> "DriveSpec":
        return cls(amplitude_mt=0.0, omega_rad_us=1.0, enabled=False)


@dataclass(frozen=True)
class DrivenHamiltonian:
    """H(t) = h0 + cos(omega t + phase) * amplitude * v, all in rad/us.

    Callable like a plain function of time; the factored form (h0, v,
    drive) is what the propagators consume.
    """

    h0: np.ndarray
    v: np.ndarray  # drive coupling per mT
    drive: DriveSpec

    def __call__(self, t: float) -> np.ndarray:
        if not self.is_driven:
            return self.h0
        return self.h0 + float(self.drive.envelope(t)) * self.v

    @property
    def is_driven(self) -> bool:
        return self.drive.enabled and self.drive.amplitude_mt != 0.0

    @property
    def dim(self) -> int:
        return self.h0.shape[0]


def driven_hamiltonian(
    cluster: Cluster,
    drive: DriveSpec,
    static_b_mt: Sequence[float] | None = None,
) -> DrivenHamiltonian:
    """Assemble H(t) = H0 (+ static Zeeman) + RF Zeeman drive along y."""
    h0 = dipole_hamiltonian(cluster)
    if static_b_mt is not None and np.any(np.asarray(static_b_mt, dtype=float)):
        h0 = h0 + zeeman_hamiltonian(cluster, static_b_mt)
    v = drive_operator(cluster)
    return DrivenHamiltonian(h0=h0, v=v, drive=drive)
