""" Finite-strain homogenization and multiscale stability analysis of periodic cells. """
from rve_stability.version import VERSION_MAJOR, VERSION_MINOR, VERSION_BUILD, VERSION_ALPHA

__version__ = f"{VERSION_MAJOR}.{VERSION_MINOR}.{VERSION_BUILD}" + \
    (f"a{VERSION_ALPHA}" if VERSION_ALPHA else "")
