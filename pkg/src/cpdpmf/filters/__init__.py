from .common import CpdFilterConfig, dynamics_blocks, predictive_grid, psd_moments
from .kalman import UkfParams, kf_predict, sigma_points, ukf_step, ukf_update
from .lgbf_cpd import (BackProjectionMap, FilterStateCpd, advect_cpd, advect_factors,
                       back_projection_map, diffuse_cpd, init_cpd_state, lgbf_cpd_step,
                       lift_likelihood, measurement_update_cpd)
from .lgbf_full import (FilterStateFull, advect_full, diffuse_full, init_full_state,
                        lgbf_full_step, likelihood_tensor, measurement_update_full)
from .particle import init_particles, pf_bootstrap_step, systematic_resample
