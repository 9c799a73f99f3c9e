"""Post-hoc temperature scaling: a single scalar dividing logits, fitted to
validation NLL, falling back to T = 1 when fitting does not help."""

import math
from dataclasses import dataclass

import numpy as np

from .metrics import PROB_FLOOR
from .network import softmax

T_MIN = 0.05
T_MAX = 20.0
FIT_TOL = 1e-4


@dataclass
class Temperature:
    value: float = 1.0
    converged: bool = True
    fell_back: bool = False

    def __post_init__(self):
        if self.value <= 0:
            raise ValueError("temperature must be positive")


def apply_temperature(z, temp):
    """softmax(z / T); preserves argmax for every positive T."""
    t = temp.value if isinstance(temp, Temperature) else float(temp)
    if t <= 0:
        raise ValueError("temperature must be positive")
    return softmax(np.asarray(z, dtype=np.float64) / t)


def _mean_nll(logits, labels, t):
    probs = apply_temperature(logits, t)
    p_true = probs[np.arange(len(labels)), labels]
    return float(np.mean(-np.log(np.maximum(p_true, PROB_FLOOR))))


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def fit_temperature(val_logits, val_labels, t_min=T_MIN, t_max=T_MAX,
                    tol=FIT_TOL):
    """Golden-section search for the NLL-minimizing T over log-temperature.

    The 1-D objective is smooth and in practice unimodal, so bracketed search
    gives a guaranteed interval; if the fitted T is no better than T = 1 on
    the validation set, T = 1 is returned.
    """
    val_logits = np.asarray(val_logits, dtype=np.float64)
    val_labels = np.asarray(val_labels, dtype=np.int64)
    if val_logits.shape[0] == 0:
        raise ValueError("validation batch is empty")

    def f(log_t):
        return _mean_nll(val_logits, val_labels, math.exp(log_t))

    a, b = math.log(t_min), math.log(t_max)
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    max_iter = 200
    converged = False
    for _ in range(max_iter):
        if abs(b - a) < tol:
            converged = True
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    t_star = math.exp((a + b) / 2.0)
    if _mean_nll(val_logits, val_labels, t_star) > _mean_nll(val_logits,
                                                             val_labels, 1.0):
        return Temperature(1.0, converged=converged, fell_back=True)
    return Temperature(t_star, converged=converged)
