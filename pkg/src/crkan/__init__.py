"""Cauchy-Riemann regularized spline-edge networks for complex dynamics.

Learns holomorphic velocity fields on the complex plane with small
Kolmogorov-Arnold networks, extracts symbolic function families from the
trained spline edges, and analyzes the learned dynamics through escape-time
fractals, Lyapunov exponents, and trajectory integration.
"""

from .systems import Domain, DomainSample, Family, SystemId, SystemSpec, make_system, sample_domain, velocity
from .splines import KnotGrid, basis_derivatives, basis_values
from .model import EdgeRecord, KanNetwork, MlpNetwork, calibrate_hidden_grid
from .training import (AdamState, LossReport, TrainConfig, TrainHistory, adam_step,
                       clip_gradient, cr_loss, fine_tune, inject_noise, mse_loss,
                       parameter_gradient, train, trajectory_gradient, trajectory_loss,
                       warmup_weight)
from .symbolic import (Candidate, EdgeFit, EdgeSweep, FamilyReport, best_fit,
                       classify_family, extract_family, fit_candidate, sweep_edges)
from .analysis import (AnalyticField, EscapeMask, EvalGrid, FieldMetrics, IterationMode,
                       LyapunovReport, ModelField, Stability, Trajectory,
                       boundary_agreement, build_eval_grid, escape_mask, evaluate_field,
                       integrate_trajectory, lyapunov_grid)
from .io import ResultTable, load_checkpoint, read_pgm, save_checkpoint, write_pgm

__version__ = "0.1.0"
