from .autograd import Tensor, concat, linear, minimum, no_grad, softmax, where
from .checkpoint import FORMAT_VERSION, load_into, load_params, save_params
from .layers import (
    LOG_STD_MAX,
    LOG_STD_MIN,
    Linear,
    Mlp,
    MlpSpec,
    flat_grad,
    flat_params,
    gaussian_entropy,
    gaussian_head,
    gaussian_kl,
    gaussian_log_prob,
    hard_update,
    q_input,
    set_flat_params,
    soft_update,
    unflatten,
)
from .gradcheck import analytic_grad, directional_error, numeric_grad, relative_error
from .optim import Adam, AdamState, adam_step, clip_grad_norm

forward = Mlp.__call__


def backward(loss: Tensor) -> None:
    loss.backward()
