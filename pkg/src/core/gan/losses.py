"""Non-saturating logistic adversarial losses."""
from __future__ import annotations

from typing import Tuple, Union

import numpy as np

from core.numerics.tensor import Tensor, as_tensor

Logits = Union[Tensor, np.ndarray]


def generator_loss(d_fake_logits: Logits) -> Tensor:
    """L_G = mean softplus(-D(G(z)))."""
    return (-as_tensor(d_fake_logits)).softplus().mean()


def discriminator_loss(d_real_logits: Logits, d_fake_logits: Logits) -> Tensor:
    """L_D = mean softplus(-D(x)) + mean softplus(D(G(z)))."""
    return (-as_tensor(d_real_logits)).softplus().mean() + as_tensor(d_fake_logits).softplus().mean()


def adversarial_losses(d_real_logits: Logits, d_fake_logits: Logits) -> Tuple[Tensor, Tensor]:
    return discriminator_loss(d_real_logits, d_fake_logits), generator_loss(d_fake_logits)
