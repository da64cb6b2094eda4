"""Miscellaneous constants used by toricding."""

MAX_DIMENSION = 6
"Largest dimension accepted by the polytope validation (facet enumeration by vertex subsets)."

HULL_CHECK_MAX_DIMENSION = 4
"Facets found exactly are compared with a Qhull enumeration up to this dimension."

MAX_SOLVE_DIMENSION = 3
"Largest dimension for which the Monge-Ampere solver runs."

DEFAULT_REFINEMENT = 2
"Sample set of the potential family is the polytope intersected with (1/k)Z^n for this k."

DEFAULT_SPACING = 0.25
"Default quadrature node spacing in log coordinates."

EPS_TAIL = 1e-10
"Default bound on the mass of exp(-phi) outside the quadrature box."

EPS_PUSHFORWARD = 1e-7
"Default relative mass of the pushforward density allowed outside the quadrature box."

NEWTON_TOL = 1e-10
NEWTON_MAX_STEPS = 60
BOUNDARY_TOL = 1e-9

GUILLEMIN_RTOL = 1e-10

WEDGE_SHRINK = (9, 10)
"Ratio between consecutive cut depths of the wedge family, as a fraction."

SOLVER_TOLERANCE = 1e-8
SOLVER_MAX_ITERATIONS = 5000
ARMIJO = 1e-4
BACKTRACK = 0.5

ORACLE_TOLERANCE = 1e-10
ORACLE_MAX_SWEEPS = 10_000

CHUNK_SIZE = 32_768
"Number of quadrature nodes evaluated at once."
