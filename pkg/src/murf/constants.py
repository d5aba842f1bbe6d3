"""Physical constants and the unit system used throughout.

Internal units: lengths in angstrom, times in microseconds, magnetic
fields in millitesla, and all Hamiltonians divided by hbar so that
matrix entries are angular frequencies in rad/us.  Spin operators are
dimensionless (J/hbar).  With these choices every matrix entry of the
problem is O(1)-O(10) and no 1e-34 factors survive into the numerics.
"""

import math

import scipy.constants as sc

# Gyromagnetic ratios, quoted as gamma/(2*pi) in MHz/T.
GAMMA_MUON_MHZ_T = 135.5388
GAMMA_F19_MHZ_T = 40.053
GAMMA_LI7_MHZ_T = 16.548

MUON_LIFETIME_US = 2.1969811

# gamma/(2pi) [MHz/T] -> gamma [rad/us/mT]:  2*pi * 1e6 [1/s/T] * 1e-6 [s/us] * 1e-3 [T/mT]
RAD_US_MT_PER_MHZ_T = 2.0 * math.pi * 1.0e-3

# Dipole coupling bridge.  For two moments with gamma/(2pi) in MHz/T at
# distance r in angstrom the coupling
#     D = mu0 * hbar * gamma_i * gamma_j / (4 pi r^3)
# in rad/us is DIPOLE_COEFF * g_i * g_j / r_A^3 where
#     DIPOLE_COEFF = (mu0/4pi)[T m/A] * hbar[J s] * (2pi 1e6)^2 [rad^2 s^-2 (MHz)^-2 T^2(!)]
#                    / (1e-10 m/A)^3 * 1e-6 [s/us]
DIPOLE_COEFF = (sc.mu_0 / (4.0 * math.pi)) * sc.hbar * (2.0e6 * math.pi) ** 2 * 1.0e30 * 1.0e-6

# hbar * (1 rad/us) expressed in neV; converts angular frequencies to energies.
NEV_PER_RAD_US = sc.hbar * 1.0e6 / sc.elementary_charge * 1.0e9


def gamma_rad_us_mt(gamma_mhz_t: float) -> float:
    """Convert gamma/(2pi) in MHz/T to gamma in rad/us/mT."""
    return gamma_mhz_t * RAD_US_MT_PER_MHZ_T


def dipole_coupling_rad_us(gamma1_mhz_t: float, gamma2_mhz_t: float, r_angstrom: float) -> float:
    """Dipolar coupling mu0*hbar*g1*g2/(4 pi r^3) in rad/us."""
    return DIPOLE_COEFF * gamma1_mhz_t * gamma2_mhz_t / r_angstrom**3
