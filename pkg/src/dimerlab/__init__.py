"""Square-lattice dimer models at close packing.

Exact solution of the non-interacting model, the complete first-order
perturbation theory of the plaquette-interacting model (dressed Fermi data,
arc integrals, amplitude/exponent coefficients and their scaling relation),
and a Metropolis sampler with an exact small-torus Gibbs oracle.
"""

from .errors import (
    DegenerateFrame,
    DimerlabError,
    InsufficientSamples,
    MaxSubdivisions,
    NonGenericTilt,
    NonGenericWeights,
    NotFlippable,
    RatioMismatch,
    SizeLimitExceeded,
)
from .free_dimer import (
    FermiData,
    Weights,
    dimer_correlation,
    edge_density,
    fermi_points,
    free_variance_table,
    g_v,
    height_variance_free,
    k_inverse,
    mu,
    slope,
)
from .lattice import (
    DimerConfig,
    EdgeRef,
    Face,
    FacePath,
    TorusGeometry,
    canonical_path,
    enumerate_matchings,
    height_difference,
    is_perfect_matching,
    make_edge_offsets,
    winding_numbers,
)
from .montecarlo import (
    ChainState,
    Estimate,
    MCParams,
    exact_gibbs,
    estimate_dimer_correlation,
    estimate_height_variance,
    fit_log_prefactor,
    metropolis_sweep,
    plaquette_f,
)
from .perturbation import (
    A_first_order,
    FirstOrderData,
    coefficient_a,
    dressed_fermi,
    first_order_data,
    haldane_residual,
    nu_first_order,
    w_vertex,
)
from .quadrature import QuadResult, integrate_1d, integrate_torus_2d

__version__ = "0.1.0"
