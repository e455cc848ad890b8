"""Central finite-difference gradient oracle.

Independent of the tape's backward rules: the numeric gradient is built by
re-running the forward function with perturbed inputs, element by element.
Use 64-bit tensors; float32 rounding swamps the comparison.
"""

import numpy as np

from ibert.numerics.tensor import backward, new_tape


def finite_diff_check(f, x, step=1e-5):
    """Compare autodiff and central-difference gradients of ``f`` at ``x``.

    ``f`` maps the tensor ``x`` to a scalar tensor and must be deterministic.
    Returns the maximum elementwise relative error, where the denominator is
    ``max(|analytic|, |numeric|, 1e-8)``.
    """
    x.grad = None
    with new_tape():
        y = f(x)
        backward(y)
    analytic = np.array(
        x.grad if x.grad is not None else np.zeros_like(x.data), copy=True
    )

    flat = x.data.reshape(-1)
    numeric = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = float(f(x).data)
        flat[i] = orig - step
        fm = float(f(x).data)
        flat[i] = orig
        numeric[i] = (fp - fm) / (2.0 * step)
    numeric = numeric.reshape(x.data.shape)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float((np.abs(analytic - numeric) / denom).max())
