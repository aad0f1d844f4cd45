from . import cokernel, domain, harmonic, manifold, newton, norms, pregluing
from .errors import GluingError

__version__ = "0.1.0"
