import numpy as np
from scipy.special import expit, log_softmax, softmax

PROB_FLOOR = 1e-12

sigmoid = expit


def class_probs(logits):
    """Class-probability matrix (m, k) from logits (m, k); one logit column means binary."""
    logits = np.asarray(logits, dtype=float)
    if logits.shape[-1] == 1:
        p1 = expit(logits[..., 0])
        return np.stack([1.0 - p1, p1], axis=-1)
    return softmax(logits, axis=-1)


def log_class_probs(logits):
    logits = np.asarray(logits, dtype=float)
    if logits.shape[-1] == 1:
        f = logits[..., 0]
        return np.stack([-np.logaddexp(0.0, f), -np.logaddexp(0.0, -f)], axis=-1)
    return log_softmax(logits, axis=-1)
