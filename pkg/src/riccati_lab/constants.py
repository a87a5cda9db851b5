"""Default numerical tolerances, expressed relative to operator norms.

Every module pulls its defaults from here so a verification run has a single
place where tolerance provenance can be audited.
"""

# linear algebra substrate
SPECTRAL_RECONSTRUCTION_RTOL = 1e-10   # ||V diag(lam) V^-1 - A|| / ||A||
FRACTIONAL_POWER_INVERSE_RTOL = 1e-10  # ||(-A)^a (-A)^-a - I||
LYAPUNOV_RESIDUAL_RTOL = 1e-10         # vs ||A|| ||X|| + ||Q||
EIGENVECTOR_COND_MAX = 1e8             # reject near-defective generators
EXPM_RTOL = 1e-12

# Riccati solutions
SYMMETRY_ATOL = 1e-12
PSD_EIG_FLOOR = -1e-10
ARE_RESIDUAL_RTOL = 1e-9
DRE_BLOWUP_NORM = 1e12
NEWTON_KLEINMAN_MAX_ITER = 100

# infinite-horizon truncation: T chosen so M exp(-omega T) <= this
TAIL_TARGET = 1e-6

# graded quadrature (geometric refinement toward the singular endpoint)
GRADED_T_MIN = 1e-12
GRADED_NODES_DEFAULT = 256

# probing
DEFAULT_PROBES = 64
