"""Minimum-trip-time routing for battery electric vehicles.

Trip time includes time spent at charging stations (battery swaps,
superchargers, regular chargers). The exact search propagates constant-size
labels carrying the last station's charging curve; speedups combine a
partial bicriteria contraction hierarchy with SoC-aware A* potentials.
"""

from .cfp import (
    CfpEngine,
    ItineraryResult,
    Label,
    PlainView,
    Stop,
    VerificationError,
    cfp_query,
    dominates,
    min_feasible_trip_time,
    soc_function_eval,
    switching_candidates,
    verify_itinerary,
)
from .charge import QueryPlan, charge_query, core_bounds
from .instance_io import (
    assign_scenario,
    generate_rank_queries,
    generate_synthetic,
    parse_instance,
    parse_queries,
    render_instance,
    render_queries,
    station_function,
)
from .model import (
    EPS,
    ChargingFunction,
    Graph,
    ModelError,
    apply_profile,
    curve_function,
    identity_profile,
    link_profiles,
    make_arc_profile,
    profile_dominates,
    swap_function,
)
from .oracle import bsp_query, grid_dp_query, grid_tolerance, validate_instance
from .overlay import Overlay, ch_preprocess, ed_dn_cq_priority, witness_search
from .potentials import (
    OmegaPotential,
    PiPotential,
    PiSearch,
    ZeroPotential,
    bound_eval,
    compute_omega_tables,
    extend_bound,
    link_convex_bounds,
    merge_bounds,
    pi_backward_search,
    plain_backward_adjacency,
    shift_bound,
)

__version__ = "0.1.0"
