"""Orthomartingale random fields on Z^d: exact conditioning, quenched limit experiments and their CLI/service."""

__version__ = "0.1.0"

from .errors import (ArgumentError, CapacityError, ConfigError, ContractError, LatticeRangeError,  # noqa: E402
                     OrthofieldError, ParameterError, StructuralError)
from .innovations import InnovationSpec, make_frozen_past, sample_innovations  # noqa: E402
from .lattice import Rect, build_prefix_table, rect_sum, scaled_path  # noqa: E402
from .models import (FieldModel, bounded_u_field, check_lin, check_volt, coboundary_model, iid_model,  # noqa: E402
                     linear_model, make_u_field, product_omd, volterra_model)
from .conditional import (check_con1, cond_exp, projection, truncation_split, verify_commuting,  # noqa: E402
                          verify_ortho)

__all__ = [
    "ArgumentError", "CapacityError", "ConfigError", "ContractError", "LatticeRangeError", "OrthofieldError",
    "ParameterError", "StructuralError", "InnovationSpec", "make_frozen_past", "sample_innovations", "Rect",
    "build_prefix_table", "rect_sum", "scaled_path", "FieldModel", "bounded_u_field", "check_lin", "check_volt",
    "coboundary_model", "iid_model", "linear_model", "make_u_field", "product_omd", "volterra_model", "check_con1",
    "cond_exp", "projection", "truncation_split", "verify_commuting", "verify_ortho",
]
