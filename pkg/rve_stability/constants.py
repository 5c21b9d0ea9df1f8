from math import pi
from os.path import dirname, join

from ovos_config.locations import get_xdg_data_save_path

RESULTS_PATH = get_xdg_data_save_path('rve_stability')
DEFAULT_CONFIG_PATH = join(dirname(__file__), "res", "default_config.json")

# Voigt-like ordering of 2x2 tensors used everywhere: (11, 21, 12, 22)
VOIGT_ORDER = ((0, 0), (1, 0), (0, 1), (1, 1))

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 25
SINGULAR_PIVOT_RATIO = 1e-12
PAIRING_REL_TOL = 1e-8
FD_STEP = 1e-6
BISECT_TOL = 1e-5
STRESS_TOL = 1e-8
BETA_ZERO_THRESHOLD = 1e-8
BETA_ROUNDOFF_GUARD = 1e-12
B_CRITICAL_THRESHOLD = 1e-6
MULTIPLICITY_TOL = 1e-6
MODE_DROP_RATIO = 1e-8
DENSE_EIGEN_LIMIT = 2000
ORIGIN_JUMP_RATIO = 1e-2
PREFILTER_MARGIN = 1e-3
ANGLE_STEP = pi / 720
SHEAR_COSINE = 0.05
SPLITTING_COSINE = 0.95
