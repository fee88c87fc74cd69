"""Distributed-order Caputo calculus with weakly singular resolvent kernels.

Public names are resolved lazily so that ``distcaputo --threads N`` can set
the BLAS thread count before numpy is first imported.
"""

import importlib

__version__ = "0.1.0"

_EXPORTS = {
    "weight": ["WeightFunction", "WeightExponents", "analyze", "bump", "indicator", "order_index_m", "uniform"],
    "kernels": ["KernelTable", "PowerMeasure", "SpectralKernel", "build_table", "c_mu_T", "g_upper_bound",
                "kernel_k", "kernel_k_m", "resolvent_g", "resolvent_g_m", "verify_resolvent_identity"],
    "fraccalc": ["SampledTrajectory", "TimeGrid", "caputo", "distributed_caputo", "frac_integral",
                 "mittag_leffler", "rl_derivative", "singular_convolve"],
    "gronwall": ["certify_dominance", "gronwall_majorant", "iterated_convolution"],
    "galerkin": ["Domain", "EllipticCoefficients", "GalerkinSolution", "eigenpairs", "galerkin_solve", "mollify",
                 "solve_volterra"],
    "diagnostics": ["coercivity_check", "continuity_report", "energy_estimate_check", "energy_identity_residual",
                    "reconstruction_identity", "regularity_monitor"],
    "scenario": ["Scenario", "parse_scenario"],
    "errors": ["DistCaputoError", "ValidationError", "ParseError", "PicardStall", "HypothesisViolation",
               "EstimateViolation", "OrderMismatch", "ProvenanceMismatch", "MassBelowTolerance"],
}
_WHERE = {name: mod for mod, names in _EXPORTS.items() for name in names}
__all__ = sorted(_WHERE)


def __getattr__(name):
    mod = _WHERE.get(name)
    if mod is None:
        raise AttributeError(f"module 'distcaputo' has no attribute {name!r}")
    value = getattr(importlib.import_module(f".{mod}", __name__), name)
    globals()[name] = value
    return value


def __dir__():
    return sorted(list(globals()) + __all__)
