import numpy as np
import pytest

from murf.constants import GAMMA_F19_MHZ_T, GAMMA_MUON_MHZ_T, gamma_rad_us_mt
from murf.dynamics import (
    PolarizationSeries,
    eigen_populations,
    evolve,
    initial_state,
    muon_polarization,
    muon_z_operator,
    orientation_average,
    smear_pulse,
)
from murf.errors import NumericsError
from murf.fmuf import fmuf_eigensystem
from murf.hamiltonian import (
    Cluster,
    DriveSpec,
    SpinSite,
    dipole_hamiltonian,
    driven_hamiltonian,
)
from murf.operators import HilbertLayout, angular_momentum, embed, partial_trace, purity

GAMMA_MU = gamma_rad_us_mt(GAMMA_MUON_MHZ_T)


def single_muon():
    return Cluster(sites=(SpinSite("mu", 0.5, GAMMA_MUON_MHZ_T, (0, 0, 0)),))


def fmuf_cluster(r=1.17):
    return Cluster(
        sites=(
            SpinSite("mu", 0.5, GAMMA_MUON_MHZ_T, (0, 0, 0)),
            SpinSite("F1", 0.5, GAMMA_F19_MHZ_T, (0, 0, r)),
            SpinSite("F2", 0.5, GAMMA_F19_MHZ_T, (0, 0, -r)),
        )
    )


# --- initial state -----------------------------------------------------------


def test_initial_state_single_muon():
    rho = initial_state(HilbertLayout((2,)))
    assert np.allclose(rho, np.diag([1.0, 0.0]))


def test_initial_state_full_cluster(clusters):
    layout = clusters[0].layout
    rho = initial_state(layout)
    assert np.isclose(np.trace(rho).real, 1.0, atol=1e-12)
    assert np.linalg.matrix_rank(rho) == 256
    assert np.isclose(purity(rho), 1.0 / 256.0)
    jz = muon_z_operator(layout)
    assert np.isclose(2.0 * np.einsum("ij,ji->", rho, jz).real, 1.0)


def test_initial_state_rejects_non_unit_axis():
    with pytest.raises(ValueError):
        initial_state(HilbertLayout((2, 2)), muon_axis=(0, 0, 2))


def test_initial_state_requires_spin_half_muon():
    with pytest.raises(ValueError):
        initial_state(HilbertLayout((4, 2)))


# --- evolve: trivial and oracle cases ---------------------------------------


def test_zero_hamiltonian_is_static():
    layout = HilbertLayout((2, 2))
    rho0 = initial_state(layout)
    times = np.linspace(0, 3, 7)
    ev = evolve(np.zeros((4, 4)), rho0, times, keep_states=True, method="rk")
    for rho in ev.states:
        assert np.max(np.abs(rho - rho0)) < 1e-9


def test_commuting_state_is_stationary():
    c = fmuf_cluster()
    h = dipole_hamiltonian(c)
    rho0 = np.eye(8) / 8.0  # fully maximally mixed, commutes with any H
    times = np.linspace(0, 10, 11)
    ev = evolve(h, rho0, times, method="spectral", keep_states=True)
    for rho in ev.states:
        assert np.max(np.abs(rho - rho0)) < 1e-12


def test_larmor_precession_all_methods():
    c = single_muon()
    bz = 1.7
    ham = driven_hamiltonian(c, DriveSpec.off(), static_b_mt=(0, 0, bz))
    layout = c.layout
    rho0 = initial_state(layout, muon_axis=(1, 0, 0))
    jx = embed(angular_momentum(0.5).jx, 0, layout)
    times = np.linspace(0, 4, 61)
    expected = 0.5 * np.cos(GAMMA_MU * bz * times)
    for method, kw in (
        ("spectral", {}),
        ("expm", {"max_step": 0.05}),
        ("split", {"max_step": 0.05}),
        ("rk", {"tol": 1e-10}),
    ):
        ev = evolve(ham, rho0, times, method=method, observables={"jx": jx}, **kw)
        assert np.max(np.abs(ev.expect["jx"] - expected)) < 1e-8, method


def test_resonant_rabi_oscillation_matches_rwa():
    c = single_muon()
    bz = 1.0
    omega0 = GAMMA_MU * bz
    by = 0.02 * omega0 / GAMMA_MU
    ham = driven_hamiltonian(
        c, DriveSpec(amplitude_mt=by, omega_rad_us=omega0), static_b_mt=(0, 0, bz)
    )
    layout = c.layout
    rho0 = initial_state(layout)
    omega_rabi = GAMMA_MU * by / 2.0
    times = np.linspace(0, 2 * np.pi / omega_rabi, 160)
    p_down = embed(np.diag([0.0, 1.0]), 0, layout)
    ev = evolve(ham, rho0, times, method="expm", observables={"pd": p_down})
    rwa = np.sin(omega_rabi * times / 2.0) ** 2
    assert np.max(np.abs(ev.expect["pd"] - rwa)) < 0.01


def test_driven_methods_agree():
    c = fmuf_cluster()
    drive = DriveSpec(amplitude_mt=0.3, omega_rad_us=2.4)
    ham = driven_hamiltonian(c, drive)
    rho0 = initial_state(c.layout)
    jz = muon_z_operator(c.layout)
    times = np.linspace(0, 8, 41)
    ref = evolve(ham, rho0, times, method="rk", tol=1e-11, observables={"jz": jz})
    for method, tol in (("expm", 2e-5), ("split", 1e-4)):
        ev = evolve(ham, rho0, times, method=method, substeps_per_period=120,
                    observables={"jz": jz})
        assert np.max(np.abs(ev.expect["jz"] - ref.expect["jz"])) < tol, method


def test_factorized_matches_direct():
    c = fmuf_cluster()
    drive = DriveSpec(amplitude_mt=0.25, omega_rad_us=3.0)
    ham = driven_hamiltonian(c, drive)
    rho0 = initial_state(c.layout)
    jz = muon_z_operator(c.layout)
    times = np.linspace(0, 6, 25)
    a = evolve(ham, rho0, times, method="expm", observables={"jz": jz}, factorized=False)
    b = evolve(ham, rho0, times, method="expm", observables={"jz": jz}, factorized=True)
    assert np.max(np.abs(a.expect["jz"] - b.expect["jz"])) < 1e-12


def test_conservation_small_cluster_driven():
    c = fmuf_cluster()
    drive = DriveSpec(amplitude_mt=0.3, omega_rad_us=2.8)
    ham = driven_hamiltonian(c, drive)
    rho0 = initial_state(c.layout)
    times = np.linspace(0, 15, 16)
    ev = evolve(ham, rho0, times, method="expm", keep_states=True)
    p0 = purity(rho0)
    for rho in ev.states:
        assert abs(np.trace(rho).real - 1.0) < 1e-9
        assert np.max(np.abs(rho - rho.conj().T)) < 1e-10
        assert np.linalg.eigvalsh(rho).min() > -1e-8
        assert abs(purity(rho) - p0) < 1e-6


def test_energy_conserved_rf_off():
    c = fmuf_cluster()
    h0 = dipole_hamiltonian(c)
    rho0 = initial_state(c.layout)
    times = np.linspace(0, 15, 6)
    ev = evolve(h0, rho0, times, method="expm", max_step=0.1, keep_states=True)
    e0 = np.einsum("ij,ji->", rho0, h0).real
    for rho in ev.states:
        e = np.einsum("ij,ji->", rho, h0).real
        assert abs(e - e0) <= 1e-8 * max(abs(e0), 1.0)


def test_self_convergence_driven():
    c = fmuf_cluster()
    drive = DriveSpec(amplitude_mt=0.3, omega_rad_us=2.4)
    ham = driven_hamiltonian(c, drive)
    rho0 = initial_state(c.layout)
    jz = muon_z_operator(c.layout)
    times = np.linspace(0.5, 10, 20)
    tol = 1e-6
    a = evolve(ham, rho0, times, method="expm", tol=tol, observables={"jz": jz})
    b = evolve(ham, rho0, times, method="expm", tol=tol / 2, observables={"jz": jz})
    assert a.reported_tol <= tol
    assert np.max(np.abs(2 * a.expect["jz"] - 2 * b.expect["jz"])) < a.reported_tol + tol


def test_reported_tol_estimates_real_error():
    c = fmuf_cluster()
    drive = DriveSpec(amplitude_mt=0.4, omega_rad_us=2.4)
    ham = driven_hamiltonian(c, drive)
    rho0 = initial_state(c.layout)
    jz = muon_z_operator(c.layout)
    times = np.linspace(0.5, 10, 20)
    ev = evolve(ham, rho0, times, method="expm", substeps_per_period=40,
                observables={"jz": jz}, error_estimate=True)
    ref = evolve(ham, rho0, times, method="rk", tol=1e-11, observables={"jz": jz})
    actual = np.max(np.abs(ev.expect["jz"] - ref.expect["jz"]))
    assert actual < 10 * ev.reported_tol  # the estimate is the right order


def test_non_hermitian_rejected():
    h = np.array([[0.0, 1.0], [0.5, 0.0]], dtype=complex)
    with pytest.raises(NumericsError):
        evolve(h, np.diag([1.0, 0.0]).astype(complex), [0.0, 1.0], method="expm")


def test_times_validation():
    h = np.zeros((2, 2), dtype=complex)
    rho = np.diag([1.0, 0.0]).astype(complex)
    with pytest.raises(ValueError):
        evolve(h, rho, [1.0, 0.5], method="expm")
    with pytest.raises(ValueError):
        evolve(h, rho, [-1.0, 0.5], method="expm")


# --- polarization ------------------------------------------------------------


def test_polarization_initial_and_mixed(clusters):
    layout = clusters[0].layout
    rho0 = initial_state(layout)
    p = muon_polarization([rho0, np.eye(512) / 512.0], layout, [0.0, 1.0])
    assert np.isclose(p.values[0], 1.0)
    assert np.isclose(p.values[1], 0.0, atol=1e-12)


def test_rf_off_polarization_matches_spectral_oracle():
    """Stepping propagator vs independent sum-over-eigenstates reconstruction."""
    c = fmuf_cluster()
    h0 = dipole_hamiltonian(c)
    layout = c.layout
    rho0 = initial_state(layout)
    jz = muon_z_operator(layout)
    times = np.linspace(0, 15, 151)
    ev = evolve(h0, rho0, times, method="expm", max_step=0.05, observables={"jz": jz})
    p_prop = 2.0 * ev.expect["jz"]
    # oracle: brute-force spectral decomposition, explicit cosine sum
    w, vecs = np.linalg.eigh(h0)
    rho_e = vecs.conj().T @ rho0 @ vecs
    jz_e = vecs.conj().T @ jz @ vecs
    p_oracle = np.array(
        [
            2.0
            * np.sum(rho_e * jz_e.T * np.exp(-1j * (w[:, None] - w[None, :]) * t)).real
            for t in times
        ]
    )
    assert np.isclose(p_prop[0], 1.0, atol=1e-10)
    assert np.max(np.abs(p_prop - p_oracle)) < 1e-6


def test_orientation_average():
    t = np.linspace(0, 1, 5)
    p1 = PolarizationSeries(times=t, values=np.ones(5))
    p2 = PolarizationSeries(times=t, values=np.zeros(5))
    avg = orientation_average(p1, p2)
    assert np.allclose(avg.values, 0.5)
    same = orientation_average(p1, p1)
    assert np.allclose(same.values, p1.values)
    with pytest.raises(ValueError):
        orientation_average(p1, PolarizationSeries(times=t + 0.1, values=np.zeros(5)))


def test_smear_pulse_preserves_mean():
    t = np.linspace(0, 2, 101)
    p = PolarizationSeries(times=t, values=np.cos(8 * t))
    smeared = smear_pulse(p, fwhm_us=0.08)
    assert smeared.values.shape == p.values.shape
    assert np.max(np.abs(smeared.values)) < np.max(np.abs(p.values))


# --- eigenstate populations ---------------------------------------------------


def test_eigen_populations_maximally_mixed():
    c = fmuf_cluster()
    h0 = dipole_hamiltonian(c, pairs=[("mu", "F1"), ("mu", "F2")])
    pops = eigen_populations(np.eye(8) / 8.0, h0)
    assert np.isclose(pops.populations.sum(), 1.0)
    assert np.allclose(pops.populations, pops.degeneracies / 8.0)


def test_eigen_populations_pair_members_differ():
    # project rho(0) onto the analytic eigenvectors: within each degenerate
    # pair the all-up partner is favoured by the polarized muon
    layout = HilbertLayout((2, 2, 2))
    rho0 = initial_state(layout)
    levels = fmuf_eigensystem()
    pop = lambda v: float(np.einsum("i,ij,j->", v.conj(), rho0, v).real)
    for level in levels:
        a, b = level.vectors
        assert not np.isclose(pop(a), pop(b), atol=1e-3)
    assert np.isclose(pop(levels[0].vectors[0]), 0.25)
    assert np.isclose(pop(levels[0].vectors[1]), 0.0, atol=1e-12)


def test_eigen_populations_constant_rf_off():
    c = fmuf_cluster()
    h0 = dipole_hamiltonian(c)
    rho0 = initial_state(c.layout)
    times = [0.0, 3.7, 11.0]
    ev = evolve(h0, rho0, times, method="spectral", keep_states=True)
    ref = eigen_populations(ev.states[0], h0).populations
    for rho in ev.states[1:]:
        pops = eigen_populations(rho, h0).populations
        assert np.max(np.abs(pops - ref)) < 1e-10


def test_muon_reduced_purity_decays(clusters, ref_params):
    """Polarization leaks into the cluster: muon purity at 10 us below 0.6."""
    from murf.hamiltonian import scale_bonds

    params, _ = ref_params
    scaled = scale_bonds(clusters[0], params.bond_scales())
    h0 = dipole_hamiltonian(scaled)
    layout = scaled.layout
    rho0 = initial_state(layout)
    ev = evolve(h0, rho0, [0.0, 10.0], method="spectral", keep_states=True)
    mu0 = partial_trace(ev.states[0], [0], layout)
    mu10 = partial_trace(ev.states[1], [0], layout)
    assert np.isclose(purity(mu0), 1.0, atol=1e-9)
    assert purity(mu10) < 0.6
