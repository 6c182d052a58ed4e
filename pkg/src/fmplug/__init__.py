"""Flow-matching priors for linear inverse problems, at desk scale."""

from .autodiff import Tensor, grad, no_grad
from .degrade import ForwardOperator, apply, gaussian_kernel, lift, observe
from .flow import FlowModel, PathSchedule, VelocityField, fm_loss, interpolate, target_velocity, train_fm
from .ode import IntegrationSpec, generate, integrate, invert
from .quality import MetricReport, concentration_diag, psnr, shell_overlap_diag, ssim
from .solve import (
    SolveResult,
    SolverConfig,
    chi2_nll,
    dflow_init,
    estimate_path_variance,
    solve,
    sphere_project,
    variance_calibrate,
)

__version__ = "0.1.0"
