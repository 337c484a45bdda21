"""Dense numeric kernel: layer primitives with explicit forward/backward
passes, the Adam optimizer, and a finite-difference gradient checker.

All arrays are float64 numpy arrays. Every backward function is a pure
function of the recorded forward inputs, so there is no tape.
"""

from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are inconsistent."""


def _as_f64(x):
    return np.asarray(x, dtype=np.float64)


# ---------------------------------------------------------------------------
# temporal convolution (1-D over time, zero padding, stride 1)

def temporal_conv_forward(inp, weights, bias):
    """Convolve a (T, D_in) sequence with a (K, D_in, D_out) kernel.

    Zero padding keeps the output length equal to T. K must be odd.
    """
    inp = _as_f64(inp)
    weights = _as_f64(weights)
    bias = _as_f64(bias)
    if inp.ndim != 2 or inp.shape[0] < 1:
        raise ShapeError("input must be a (T, D_in) matrix with T >= 1")
    if weights.ndim != 3:
        raise ShapeError("weights must be (K, D_in, D_out)")
    k, d_in, d_out = weights.shape
    if k % 2 == 0 or k == 0:
        raise ShapeError("kernel size must be odd and positive")
    if inp.shape[1] != d_in or bias.shape != (d_out,):
        raise ShapeError("channel dimensions do not agree")
    t = inp.shape[0]
    half = k // 2
    padded = np.zeros((t + 2 * half, d_in))
    padded[half:half + t] = inp
    out = np.empty((t, d_out))
    out[:] = bias
    for j in range(k):
        out += padded[j:j + t] @ weights[j]
    return out


def temporal_conv_backward(inp, weights, d_out):
    """Gradients of temporal_conv_forward w.r.t. input, weights, bias."""
    inp = _as_f64(inp)
    weights = _as_f64(weights)
    d_out = _as_f64(d_out)
    t, d_in = inp.shape
    k = weights.shape[0]
    half = k // 2
    padded = np.zeros((t + 2 * half, d_in))
    padded[half:half + t] = inp
    d_weights = np.empty_like(weights)
    d_padded = np.zeros_like(padded)
    for j in range(k):
        d_weights[j] = padded[j:j + t].T @ d_out
        d_padded[j:j + t] += d_out @ weights[j].T
    d_bias = d_out.sum(axis=0)
    return d_padded[half:half + t], d_weights, d_bias


# ---------------------------------------------------------------------------
# fully connected layer

def fc_forward(inp, weights, bias):
    """Affine map inp @ weights + bias; inp may be a row or a matrix."""
    inp = _as_f64(inp)
    weights = _as_f64(weights)
    bias = _as_f64(bias)
    if weights.ndim != 2 or inp.shape[-1] != weights.shape[0]:
        raise ShapeError("fc: input width does not match weight rows")
    if bias.shape != (weights.shape[1],):
        raise ShapeError("fc: bias length does not match weight columns")
    return inp @ weights + bias


def fc_backward(inp, weights, d_out):
    """Gradients of fc_forward w.r.t. input, weights, bias."""
    inp = _as_f64(inp)
    d_out = _as_f64(d_out)
    if inp.ndim == 1:
        d_w = np.outer(inp, d_out)
        d_b = d_out.copy()
    else:
        d_w = inp.T @ d_out
        d_b = d_out.sum(axis=0)
    d_inp = d_out @ np.asarray(weights).T
    return d_inp, d_w, d_b


# ---------------------------------------------------------------------------
# elementwise nonlinearities

def sigmoid(x):
    """Numerically stable logistic function, elementwise."""
    x = _as_f64(x)
    out = np.empty_like(x, dtype=np.float64) if x.ndim else None
    if x.ndim == 0:
        return float(sigmoid(x[None])[0])
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(sig, d_out):
    """Gradient through sigmoid given its *output* value."""
    sig = _as_f64(sig)
    return _as_f64(d_out) * sig * (1.0 - sig)


def relu(x):
    return np.maximum(_as_f64(x), 0.0)


def relu_backward(pre, d_out):
    """Gradient through relu given the *pre-activation* value."""
    return _as_f64(d_out) * (_as_f64(pre) > 0)


def softmax(z):
    """Stable softmax over the last axis (max subtraction)."""
    z = _as_f64(z)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(probs, d_probs):
    """Gradient w.r.t. logits given softmax output and upstream gradient."""
    probs = _as_f64(probs)
    d_probs = _as_f64(d_probs)
    inner = (probs * d_probs).sum(axis=-1, keepdims=True)
    return probs * (d_probs - inner)


# ---------------------------------------------------------------------------
# Adam

@dataclass
class AdamState:
    """Bias-corrected Adam optimizer state over a dict of named parameters."""

    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)


def adam_init(params, learning_rate=1e-4, beta1=0.9, beta2=0.999,
              epsilon=1e-8):
    state = AdamState(learning_rate=learning_rate, beta1=beta1, beta2=beta2,
                      epsilon=epsilon)
    for name, value in params.items():
        state.first_moment[name] = np.zeros_like(value)
        state.second_moment[name] = np.zeros_like(value)
    return state


def adam_step(params, grads, state):
    """One in-place Adam update; returns (params, state) for convenience."""
    if set(params) != set(grads):
        raise ShapeError("adam_step: parameter and gradient keys differ")
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        if np.shape(g) != np.shape(p):
            raise ShapeError(f"adam_step: shape mismatch for {name!r}")
        m = state.first_moment[name]
        v = state.second_moment[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        m_hat = m / bc1
        v_hat = v / bc2
        p -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params, state


# ---------------------------------------------------------------------------
# finite-difference gradient checking

@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    worst_index: tuple
    passed: bool
    tol: float


def grad_check(fn, params, h=1e-5, tol=1e-4):
    """Compare analytic gradients against central finite differences.

    ``fn(params) -> (loss, grads)`` must be deterministic; ``grads`` is a
    dict matching ``params``. Relative error uses max(|a|, |b|, 1e-8) as
    the denominator.
    """
    _, analytic = fn(params)
    worst = 0.0
    worst_param = ""
    worst_index = ()
    for name, p in params.items():
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + h
            loss_plus, _ = fn(params)
            p[idx] = orig - h
            loss_minus, _ = fn(params)
            p[idx] = orig
            numeric = (loss_plus - loss_minus) / (2.0 * h)
            a = float(analytic[name][idx])
            denom = max(abs(a), abs(numeric), 1e-8)
            err = abs(a - numeric) / denom
            if err > worst:
                worst = err
                worst_param = name
                worst_index = idx
    return GradCheckReport(max_rel_error=worst, worst_param=worst_param,
                           worst_index=worst_index, passed=worst < tol,
                           tol=tol)
