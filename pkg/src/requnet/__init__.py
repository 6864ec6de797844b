"""Weight-bounded ReQU networks that reproduce tensor-product splines."""

from requnet.compiler import CompileSpec, CompiledModel, analytic_order, compile, compile_function
from requnet.gadgets import Gadget, bspline_net, bspline_net_quadratic, const_mult, identity_gadget, product2, product_k
from requnet.network import Architecture, Network, concat, forward, identity_network, parallel, stack
from requnet.quasi_interpolant import TargetFunction, TensorSplineCoeffs, eval_spline, eval_spline_deriv, fit_coeffs
from requnet.spline_core import KnotVector, make_knots

__version__ = "0.1.0"

__all__ = [
    "Architecture",
    "CompileSpec",
    "CompiledModel",
    "Gadget",
    "KnotVector",
    "Network",
    "TargetFunction",
    "TensorSplineCoeffs",
    "analytic_order",
    "bspline_net",
    "bspline_net_quadratic",
    "compile",
    "compile_function",
    "concat",
    "const_mult",
    "eval_spline",
    "eval_spline_deriv",
    "fit_coeffs",
    "forward",
    "identity_gadget",
    "identity_network",
    "make_knots",
    "parallel",
    "product2",
    "product_k",
    "stack",
]
