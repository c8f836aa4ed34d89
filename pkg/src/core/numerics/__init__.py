from core.numerics.functional import grad_check, l2_normalize, softmax
from core.numerics.rng import Rng
from core.numerics.tensor import Tensor, as_tensor, concat, no_grad

__all__ = ["Tensor", "Rng", "as_tensor", "concat", "grad_check", "l2_normalize", "no_grad", "softmax"]
