"""Pseudo-spectral solver for 2D incompressible viscoelastic flow.

Importing the package honours ``VSPC_THREADS``: when set, the usual BLAS and
OpenMP thread-count variables are pinned before numpy loads, which keeps runs
reproducible on machines with aggressive thread defaults.
"""

import os as _os

__version__ = "0.1.0"

if "VSPC_THREADS" in _os.environ:
    _count = _os.environ["VSPC_THREADS"]
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                 "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        _os.environ.setdefault(_var, _count)

from .fields import (  # noqa: E402
    GridSpec, ScalarField, VectorField, TensorField,
    ConjugateSymmetryError, read_snapshot, write_snapshot,
    to_physical, to_spectral, ensure_physical, ensure_spectral,
    dealias, l2_norm, max_abs,
)
from .operators import (  # noqa: E402
    ConstraintWarning, InequalityViolationError, SobolevOrder, CommutatorReport,
    gradient, divergence, curl, laplacian, leray_project, convective_term,
    pressure_gradient, lambda_s, sobolev_norm, commutator_check,
)
from .solver import (  # noqa: E402
    BlowupError, ForcingSpec, RunResult, SolverConfig, State,
    rhs, step, adaptive_dt, divergence_drift, simulate,
    state_from_arrays, state_sup_distance,
    taylor_green_state, steady_identity_state, perturbed_identity_state,
)
from .diagnostics import (  # noqa: E402
    DiagnosticsRecord, DiagnosticsEngine, CertificateReport, BkmReport,
    energy_certificate, lp_growth_certificate, h1_growth_certificate,
    bkm_report, certificate_bundle, curl_report,
    write_records_csv, read_records_csv,
)
from .exact import (  # noqa: E402
    PoleError, ZghParams, ZghFields, Manufactured, LinearProfileState,
    zgh_amplitude, zgh_fields, zgh_residual, zgh_bkm_integral,
    zgh_synthetic_history, ode_reduce_step, manufactured,
)
from .flowmap import (  # noqa: E402
    MissingDataError, ParticleSet, AnalyticFlow, SnapshotSampler,
    advect, evolve_jacobian, tensor_sampler, compare_with_eulerian,
    write_trajectories_csv,
)
