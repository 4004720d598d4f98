from .forward import Dual2, first_order
from .tape import Tape, Var, backward
from .values import PDual
from .api import (value_and_gradient, loss_gradient, hessian_vector, hessian,
                  eig_symmetric)

__all__ = ["Dual2", "first_order", "Tape", "Var", "backward", "PDual",
           "value_and_gradient",
           "loss_gradient", "hessian_vector", "hessian", "eig_symmetric"]
