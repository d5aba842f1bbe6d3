import math

import numpy as np
import pytest

from murf.constants import GAMMA_F19_MHZ_T, GAMMA_MUON_MHZ_T, dipole_coupling_rad_us
from murf.fmuf import (
    FMUF_LAYOUT,
    fmuf_eigensystem,
    fmuf_energies,
    fmuf_hamiltonian,
    levels_vs_field,
    muon_reduced_purity,
    on_resonance_transition,
    transition_table,
)
from murf.hamiltonian import Cluster, SpinSite

S3 = math.sqrt(3.0)


def test_analytic_energies():
    assert np.allclose(fmuf_energies(), [-1.0, (1 - S3) / 2, 0.0, (1 + S3) / 2])


def test_numeric_diagonalization_matches_analytic():
    w = np.sort(np.linalg.eigvalsh(fmuf_hamiltonian()))
    expected = np.sort(np.repeat(fmuf_energies(), 2))
    assert np.max(np.abs(w - expected)) < 1e-12


def test_analytic_vectors_are_eigenvectors():
    h = fmuf_hamiltonian()
    for level in fmuf_eigensystem():
        for v in level.vectors:
            assert np.isclose(np.linalg.norm(v), 1.0)
            assert np.linalg.norm(h @ v - level.energy * v) < 1e-12


def test_level_five_muon_factorized_fluorine_singlet():
    level = fmuf_eigensystem()[2]
    v5 = level.vectors[0]
    # |up> x (|ud> - |du>)/sqrt(2) in the muon-first product basis
    expected = np.zeros(8, dtype=complex)
    expected[1] = 1 / math.sqrt(2)  # |u u d>
    expected[2] = -1 / math.sqrt(2)  # |u d u>
    assert abs(abs(np.vdot(expected, v5)) - 1.0) < 1e-12
    assert np.isclose(muon_reduced_purity(v5, FMUF_LAYOUT), 1.0)


def test_ff_interaction_preserves_entangled_form():
    # with the F-F coupling on, the high level keeps the a|duu> + b|uud> + b|udu> form
    h = fmuf_hamiltonian(include_ff=True)
    w, vecs = np.linalg.eigh(h)
    top = vecs[:, np.argmax(w)]
    # support only on |duu>(4), |uud>(1), |udu>(2)
    support = np.zeros(8, dtype=bool)
    support[[1, 2, 4]] = True
    assert np.max(np.abs(top[~support])) < 1e-10
    assert abs(abs(top[1]) - abs(top[2])) < 1e-10  # b coefficients equal
    assert abs(top[4]) > 1e-3  # nonzero a
    assert muon_reduced_purity(top, FMUF_LAYOUT) < 1.0


def test_three_allowed_transitions():
    table = transition_table(fmuf_eigensystem())
    freqs = sorted({round(t.frequency, 9) for t in table if t.allowed and t.frequency > 0})
    assert len(freqs) == 3
    assert np.allclose(freqs, [(3 - S3) / 2, S3, (3 + S3) / 2])


def test_on_resonance_is_highest_allowed():
    table = transition_table(fmuf_eigensystem())
    res = on_resonance_transition(table)
    assert np.isclose(res.frequency, (3 + S3) / 2)
    # it connects the separable ground level to an entangled level
    levels = fmuf_eigensystem()
    assert np.isclose(muon_reduced_purity(levels[res.from_level].vectors[0], FMUF_LAYOUT), 1.0)
    assert muon_reduced_purity(levels[res.to_level].vectors[0], FMUF_LAYOUT) < 1.0


def test_transition_frequency_khz_scale():
    omega_d = dipole_coupling_rad_us(GAMMA_MUON_MHZ_T, GAMMA_F19_MHZ_T, 1.2)
    table = transition_table(fmuf_eigensystem(), omega_d_rad_us=omega_d)
    res = on_resonance_transition(table)
    # approximately half a megahertz for a 1.2 A bond
    assert 400.0 < res.frequency_khz < 600.0


def test_drive_elements_symmetric():
    from murf.fmuf import drive_coupling_operator

    v = drive_coupling_operator(FMUF_LAYOUT, (GAMMA_MUON_MHZ_T, GAMMA_F19_MHZ_T, GAMMA_F19_MHZ_T))
    levels = fmuf_eigensystem()
    for la in levels:
        for lb in levels:
            for x in la.vectors:
                for y in lb.vectors:
                    assert np.isclose(abs(np.vdot(x, v @ y)), abs(np.vdot(y, v @ x)))


def test_energy_sum_weighted_by_degeneracy_is_zero():
    levels = fmuf_eigensystem()
    total = sum(l.energy * l.degeneracy for l in levels)
    assert abs(total) < 1e-12


def test_purity_witnesses():
    levels = fmuf_eigensystem()
    assert np.isclose(muon_reduced_purity(levels[0].vectors[0], FMUF_LAYOUT), 1.0)
    assert np.isclose(muon_reduced_purity(levels[3].vectors[0], FMUF_LAYOUT), 2.0 / 3.0)


def test_purity_rejects_unnormalized():
    with pytest.raises(ValueError):
        muon_reduced_purity(np.ones(8), FMUF_LAYOUT)


def _linear_fmuf_cluster(r=1.2):
    return Cluster(
        sites=(
            SpinSite("mu", 0.5, GAMMA_MUON_MHZ_T, (0, 0, 0)),
            SpinSite("F1", 0.5, GAMMA_F19_MHZ_T, (0, 0, r)),
            SpinSite("F2", 0.5, GAMMA_F19_MHZ_T, (0, 0, -r)),
        )
    )


def test_levels_vs_field_zero_column_and_splitting():
    cluster = _linear_fmuf_cluster()
    sweep = levels_vs_field(cluster, (0, 0, 1.0), [0.0, 0.05, 0.5])
    col0 = np.sort(sweep.energies[:, 0])
    # B=0: doubly degenerate quartet (full H0 including the F-F term)
    assert np.max(np.abs(col0[1::2] - col0[0::2])) < 1e-12
    col = np.sort(sweep.energies[:, 1])
    assert np.min(np.abs(col[1::2] - col[0::2])) > 1e-6  # degeneracies split


def test_levels_vs_field_symmetric_in_b():
    cluster = _linear_fmuf_cluster()
    sweep = levels_vs_field(cluster, (0, 0, 1.0), [-0.4, 0.4])
    assert np.allclose(np.sort(sweep.energies[:, 0]), np.sort(sweep.energies[:, 1]), atol=1e-12)


def test_levels_vs_field_large_field_slopes():
    from murf.constants import gamma_rad_us_mt

    cluster = _linear_fmuf_cluster()
    b = [49.0, 51.0]
    sweep = levels_vs_field(cluster, (0, 0, 1.0), b)
    slopes = (sweep.energies[:, 1] - sweep.energies[:, 0]) / (b[1] - b[0])
    gm = gamma_rad_us_mt(GAMMA_MUON_MHZ_T)
    gf = gamma_rad_us_mt(GAMMA_F19_MHZ_T)
    expected_extreme = (gm + 2 * gf) / 2
    assert np.isclose(np.max(np.abs(slopes)), expected_extreme, rtol=1e-3)


def test_levels_vs_field_validates_axis():
    with pytest.raises(ValueError):
        levels_vs_field(_linear_fmuf_cluster(), (0, 0, 2.0), [0.0])
    with pytest.raises(ValueError):
        levels_vs_field(_linear_fmuf_cluster(), (0, 0, 1.0), [np.inf])
