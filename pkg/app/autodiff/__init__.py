"""Reverse-mode tape, complex real-pair carrier, second-order jets and the surrogate MLP."""
from app.autodiff.complex import CArray, solve
from app.autodiff.functional import lu_factorize, solve_adjoint
from app.autodiff.jet import Jet2
from app.autodiff.mlp import MlpParams, init_params, load_params, mlp_forward, save_params, surface_jet
from app.autodiff.tape import Gradients, Tape, Var, backward, record

__all__ = [
    "CArray",
    "Gradients",
    "Jet2",
    "MlpParams",
    "Tape",
    "Var",
    "backward",
    "init_params",
    "load_params",
    "lu_factorize",
    "mlp_forward",
    "record",
    "save_params",
    "solve",
    "solve_adjoint",
    "surface_jet",
]
