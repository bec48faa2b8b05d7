"""Covariant tomography on star-shaped domains.

Exact exterior-calculus primitives (homotopy operator, geometric
decomposition, Hodge duals), Neumann-series transport solvers, boundary
extension operators, tomographic recovery of currents and connections, and
the tower reduction of composed first-order systems down to the Maxwell
reconstruction.
"""

from .algebra import Polynomial, degree_cap
from .domain import StarDomain
from .forms import (
    Connection,
    FiberSpec,
    Form,
    convergence_radius,
    exterior_d,
    insert_radial,
    insert_vector,
    pullback_center,
    sup_norm,
    wedge,
)
from .homotopy import Decomposition, decompose, homotopy, verify_identities
from .metric import (
    MetricContext,
    codecompose,
    codifferential,
    cohomotopy,
    hodge_star,
    laplacian,
)
from .grid import BoundaryData, GridForm, discrete_d, quadrature_H, sample, solve_harmonic, solve_heat
from .transport import (
    SeriesConfig,
    TransportSolution,
    check_no_zero_divisors,
    solve_exact_source,
    solve_general,
    solve_homogeneous,
    transport_operator,
)
from .extension import (
    Distribution1D,
    ExtensionResult,
    extend_harmonic,
    extend_heat,
    extend_radial,
    extension_current,
)
from .tomography import (
    RecoveryReport,
    RegularizationWeights,
    recover_connection,
    recover_current,
    recover_joint,
)
from .tower import LevelSpec, TowerSpec, decompose_operator, maxwell_reconstruct, solve_tower

__version__ = "0.1.0"
