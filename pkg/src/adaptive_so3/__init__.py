"""SO(3)-equivariant Fourier nonlinearities on fixed and input-adaptive sampling grids."""
from .adaptive import adaptive_apply, adaptive_nonlinearity, build_generator, generate_A
from .diagnostics import epsilon1, epsilon2, equivariance_error, ortho_report
from .fourier import fourier_nonlinearity, ft_pinv, ift, sampling_matrix
from .harmonics import real_sph_harm, wigner_d_real
from .model import Classifier, ModelConfig
from .reptypes import FieldType, delta_hat, field_type, rho_apply
from .rotations import Grid, Rotation, cubic_group, make_grid

__version__ = "0.1.0"
