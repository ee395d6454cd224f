"""Coarse correlated equilibria for symmetric stochastic differential
games and their mean field limit, with a fully explicit bang-bang
instance: closed-form equilibrium-region tests, Monte Carlo gap
estimation, propagation-of-chaos and consistency diagnostics."""

from .analytic import (AffineCoeffs, DeviceProbs, RegionGrid, cce_margin,
                       consistency_weights, diagonal_hk, finite_n_gap_oracle,
                       hk_coefficients, mean_field_payoffs, region_sweep,
                       worst_case_deviation)
from .backend import active_backend, available_backends, use_backend
from .correlation import (ConsistencyReport, CorrelationDevice, Scenario,
                          build_example_device, null_band, sample_scenario,
                          verify_consistency)
from .engine import (ConstantStrategy, MkvResult, SimulationBatch,
                     SimulationError, TimeGrid, mckean_vlasov_fixed_point,
                     simulate_ensemble, simulate_n_player,
                     simulate_representative)
from .equilibrium import (CostEstimate, GapReport, PocResult, cce_gap_nplayer,
                          estimate_cost, mean_field_gap_mc, poc_curve)
from .flows import GaussianMixtureFlow, ParticleFlow, device_flow
from .metrics import (GaussianMixture1D, w2_empirical_1d,
                      w2_vs_gaussian_mixture_1d)
from .model import (ActionBox, GaussianInitial, LipschitzReport, MeasureView,
                    ModelSpec, PointMass, build_bang_bang_model,
                    validate_lipschitz)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
