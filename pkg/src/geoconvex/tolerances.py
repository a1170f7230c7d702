"""Central tolerance profile.

Every numeric threshold used by the library lives here so that property
tests and scenarios share a single knob.  Values are absolute unless the
name says otherwise.
"""

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class ToleranceProfile:
    # metric / chart validity
    metric_spd_min_eig: float = 1e-12
    embedding_pullback: float = 1e-6

    # geodesic integration
    ode_rtol: float = 1e-10
    ode_atol: float = 1e-12
    constant_speed: float = 1e-6
    length_energy_rel: float = 1e-8

    # log map / distance
    shooting_residual: float = 1e-10
    exp_log_roundtrip: float = 1e-6
    distance_symmetry: float = 1e-8
    ambiguity_gap: float = 1e-4

    # parallel transport
    transport_isometry: float = 1e-7

    # curvature
    fd_step: float = 1e-5
    degenerate_plane_gram: float = 1e-12
    curvature_margin: float = 0.10

    # hessian
    hessian_fd_step: float = 1e-4
    hessian_symmetry_rel: float = 1e-6

    # fermi chart
    fermi_roundtrip: float = 1e-6
    fermi_min_halfwidth: float = 1e-3

    # sets / projection
    contains_slack: float = 1e-9
    segment_contains: float = 1e-7
    boundary_residual: float = 1e-8
    projection_value_check: float = 1e-7
    projection_grid_match: float = 2e-4
    duplicate_gap: float = 1e-3
    midpoint_chain: float = 1e-7

    # proximal cone
    cone_convex_slack: float = 1e-9
    cone_witness_min: float = 1e-7
    cone_sigma_cap: float = 2.0**10
    cone_angle_tol: float = 1e-4
    projection_member_value: float = 1e-6
    projection_member_foot: float = 1e-4
    normal_cluster_spread: float = 0.2

    # tubular neighborhood
    tube_foot_error: float = 1e-4
    tube_distance_check: float = 1e-6

    # separation
    support_equality: float = 1e-5
    support_one_sided: float = 1e-7
    support_strict_fraction: float = 0.95

    # variations / convexity lab
    jacobi_residual: float = 1e-4
    index_minimality: float = 1e-6
    witness_first_diff: float = 1e-4
    witness_strict_max: float = -1e-6
    witness_profile_concavity: float = 1e-7
    second_diff_step: float = 1e-2
    convexity_second_diff: float = 1e-6
    signed_distance_gradient: float = 1e-4
    sff_symmetry: float = 1e-4
    sff_hessian_match: float = 1e-3

    # superjets
    jet_local_max_slack: float = 1e-9
    jet_eig_floor: float = -1e-6
    chord_violation_min: float = 1e-6
    certificate_interior_margin: float = 1e-3
    certificate_boundary_slack: float = 1e-7

    def with_overrides(self, **kwargs) -> "ToleranceProfile":
        """Return a copy with the named fields replaced."""
        return replace(self, **kwargs)


DEFAULT = ToleranceProfile()
