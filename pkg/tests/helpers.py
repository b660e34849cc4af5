import numpy as np

from posesmooth.model import backward, forward, layer_shapes, loss_and_grad


def fd_gradient_errors(cfg, weights, x, y, loss="pose_plus_accel", h=1e-5, floor=1e-6):
    """Worst relative error between analytic and central-difference gradients.

    The denominator is floored at ``floor`` so exactly-zero gradients (L1 sign
    terms can cancel) are compared against round-off rather than divided by it.
    """
    tape = []
    out = forward(cfg, weights, x, tape)
    _, g_out = loss_and_grad(out, y, loss)
    grads = backward(cfg, weights, tape, g_out)

    def loss_value():
        return loss_and_grad(forward(cfg, weights, x), y, loss)[0]

    worst = {}
    for name, _, _ in layer_shapes(cfg):
        layer = weights[name]
        for arr, analytic in ((layer.w, grads[name][0]), (layer.bias, grads[name][1])):
            flat = arr.reshape(-1)
            a_flat = analytic.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                lp = loss_value()
                flat[i] = orig - h
                lm = loss_value()
                flat[i] = orig
                num = (lp - lm) / (2 * h)
                err = abs(a_flat[i] - num) / max(abs(a_flat[i]), abs(num), floor)
                worst[name] = max(worst.get(name, 0.0), err)
    return worst


def naive_matmul(a, b):
    n, k = a.shape
    _, m = b.shape
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def random_rotation(rng, d=3):
    q, r = np.linalg.qr(rng.normal(size=(d, d)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
