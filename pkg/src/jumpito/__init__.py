"""Numerical verification of Ito formulas for jump semimartingales and L_p-valued fields."""

from .calculus import FunctionJet, PNormJet, i_operator, j_operator
from .drivers import JumpStream, MarkSpace, TimeGrid, WienerBundle, path_rng, sample_jump_stream, sample_wiener
from .errors import ConfigurationError, DomainError, JumpitoError, PreconditionError
from .field import FieldDrivers, FieldPath, FieldSetup, SpaceGrid, build_field_path
from .fubini import ParamMeasure, fubini_cond_value, fubini_pi_check, fubini_tilde_check
from .lp_verifier import LpTermBreakdown, eval_ito1_simple, eval_ito_lp
from .mollifier import MollKernel, mollify, mollify_pathwise
from .semimartingale import DriverFD, FDSetup, PathFD, TermBreakdown, build_path_fd, eval_ito_fd

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "DomainError", "DriverFD", "FDSetup", "FieldDrivers", "FieldPath", "FieldSetup",
    "FunctionJet", "JumpStream", "JumpitoError", "LpTermBreakdown", "MarkSpace", "MollKernel", "PNormJet",
    "ParamMeasure", "PathFD", "PreconditionError", "SpaceGrid", "TermBreakdown", "TimeGrid", "WienerBundle",
    "build_field_path", "build_path_fd", "eval_ito1_simple", "eval_ito_fd", "eval_ito_lp", "fubini_cond_value",
    "fubini_pi_check", "fubini_tilde_check", "i_operator", "j_operator", "mollify", "mollify_pathwise",
    "path_rng", "sample_jump_stream", "sample_wiener",
]
