"""Gauge-fixed quantization of N-body systems in rotating frames.

Modules:
    rotation  SO(3) charts, chart matrices and Haar integration
    gauge     linear gauge conditions, their geometry and quantum potentials
    weylalg   exact polynomial differential operators and commutator audits
    spectra   oscillator-basis Hamiltonians and Eckart-model spectra
    gribov    counting gauge-equivalent frames of a configuration
    geometry  curvilinear metric, finite-difference oracles and quadrature
    cli       JSON-configured experiments (``rotframe`` command)
"""

from .errors import *  # noqa: F401,F403
from .rotation import chart_matrices, haar_integrate, rotation
from .gauge import (Configuration, ExtendedBasis, GaugeGeometry, GaugeSpec, eckart_gauge,
                    embed_coords, eval_gauge, eval_geometry, eval_quantum_potentials,
                    extend_basis, project_coords)
from .weylalg import AngularSector, CommutatorAudit, DiffOperator, commutator
from .spectra import (SpectrumTable, closed_form_spectrum_n3, degenerate_perturbation,
                      diagonalize)
from .gribov import find_copies, verify_identity_resolution
from .systems import axis_gauge, tetrahedron, triangle

__version__ = "0.1.0"
