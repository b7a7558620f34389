"""Two-valued measures, valuation functions and contextuality on finite ray sets.

Exact and floating-point linear algebra over C^d, projection lattices and
contexts, a certificate-producing colourability search, density-operator
measures with GNS tools on ⊕ M_n, and the spectral/state presheaf views.
"""

__version__ = "0.1.0"

from .datasets import load
from .errors import KslatError
from .exact import Surd
from .linalg import BorelFunction, Operator, spectral_decompose
from .projlattice import (
    Projection,
    RayConfiguration,
    enumerate_contexts,
    load_ray_configuration,
    projection_family,
)
from .search import search_two_valued_measure, verify_certificate

__all__ = [
    "BorelFunction",
    "KslatError",
    "Operator",
    "Projection",
    "RayConfiguration",
    "Surd",
    "enumerate_contexts",
    "load",
    "load_ray_configuration",
    "projection_family",
    "search_two_valued_measure",
    "spectral_decompose",
    "verify_certificate",
]
