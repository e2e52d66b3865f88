# steps/step01_numerics/ops.py
"""
Differenzierbare Operationen auf `Tensor`.

Alle Ops sind rein: sie lesen ihre Eingaben, erzeugen einen neuen Tensor und
hinterlegen bei Bedarf die Rückwärtsfunktion auf dem aktiven GradTape.
Bilder/Feature-Maps haben das Layout [C, H, W].
"""

from __future__ import annotations

from typing import Optional, Sequence, Tuple

import numpy as np

from .tensor import ShapeError, Tensor, record_op


def _expect_rank(t: Tensor, rank: int, what: str) -> None:
    if t.ndim != rank:
        raise ShapeError(f"{what}: Rang {rank} erwartet, shape={t.shape}")


def _out_size(n: int, k: int, stride: int, dilation: int, padding: int) -> int:
    return (n + 2 * padding - dilation * (k - 1) - 1) // stride + 1


# ---------------------------------------------------------------------
# Faltung / Korrelation
# ---------------------------------------------------------------------
def conv2d(
    x: Tensor,
    kernel: Tensor,
    bias: Optional[Tensor] = None,
    *,
    stride: int = 1,
    dilation: int = 1,
    padding: int = 0,
) -> Tensor:
    """x[Cin,H,W] * kernel[Cout,Cin,kh,kw] (+ bias[Cout]) -> [Cout,Ho,Wo]."""
    _expect_rank(x, 3, "conv2d(x)")
    _expect_rank(kernel, 4, "conv2d(kernel)")
    cin, h, w = x.shape
    cout, kcin, kh, kw = kernel.shape
    if kcin != cin:
        raise ShapeError(f"conv2d: Eingangskanäle {cin} != Kernel {kcin}")
    if bias is not None and bias.shape != (cout,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} != ({cout},)")
    if stride < 1 or dilation < 1 or padding < 0:
        raise ValueError("conv2d: stride/dilation >= 1, padding >= 0")
    ho = _out_size(h, kh, stride, dilation, padding)
    wo = _out_size(w, kw, stride, dilation, padding)
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d: Kernel {kh}x{kw} passt nicht in {h}x{w} (padding={padding})")

    xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding))) if padding else x.data
    k = kernel.data

    def window(a: int, b: int) -> Tuple[slice, slice, slice]:
        r0, c0 = a * dilation, b * dilation
        return (
            slice(None),
            slice(r0, r0 + stride * (ho - 1) + 1, stride),
            slice(c0, c0 + stride * (wo - 1) + 1, stride),
        )

    out = np.zeros((cout, ho, wo), dtype=x.data.dtype)
    for a in range(kh):
        for b in range(kw):
            out += np.tensordot(k[:, :, a, b], xp[window(a, b)], axes=([1], [0]))
    if bias is not None:
        out += bias.data[:, None, None]

    def backward(g: np.ndarray):
        gk = np.empty_like(k)
        gxp = np.zeros_like(xp)
        for a in range(kh):
            for b in range(kw):
                win = window(a, b)
                gk[:, :, a, b] = np.tensordot(g, xp[win], axes=([1, 2], [1, 2]))
                gxp[win] += np.tensordot(k[:, :, a, b], g, axes=([0], [0]))
        gx = gxp[:, padding : padding + h, padding : padding + w] if padding else gxp
        gb = g.sum(axis=(1, 2)) if bias is not None else None
        return (gx, gk, gb) if bias is not None else (gx, gk)

    inputs = (x, kernel, bias) if bias is not None else (x, kernel)
    return record_op("conv2d", out, inputs, backward)


def xcorr_depthwise(detection: Tensor, template: Tensor) -> Tensor:
    """Kanalweise Kreuzkorrelation (valid, ohne Normierung)."""
    _expect_rank(detection, 3, "xcorr_depthwise(detection)")
    _expect_rank(template, 3, "xcorr_depthwise(template)")
    c, hd, wd = detection.shape
    ct, ht, wt = template.shape
    if c != ct:
        raise ShapeError(f"xcorr_depthwise: Kanäle {c} != {ct}")
    if ht > hd or wt > wd:
        raise ShapeError(f"xcorr_depthwise: Template {ht}x{wt} größer als Detection {hd}x{wd}")
    ho, wo = hd - ht + 1, wd - wt + 1
    d, t = detection.data, template.data

    out = np.zeros((c, ho, wo), dtype=d.dtype)
    for a in range(ht):
        for b in range(wt):
            out += t[:, a, b][:, None, None] * d[:, a : a + ho, b : b + wo]

    def backward(g: np.ndarray):
        gd = np.zeros_like(d)
        gt = np.empty_like(t)
        for a in range(ht):
            for b in range(wt):
                gd[:, a : a + ho, b : b + wo] += t[:, a, b][:, None, None] * g
                gt[:, a, b] = np.sum(g * d[:, a : a + ho, b : b + wo], axis=(1, 2))
        return gd, gt

    return record_op("xcorr_depthwise", out, (detection, template), backward)


# ---------------------------------------------------------------------
# Normierungen / Aktivierungen
# ---------------------------------------------------------------------
def softmax(t: Tensor, axis: int) -> Tensor:
    if not -t.ndim <= axis < t.ndim:
        raise ShapeError(f"softmax: Achse {axis} ungültig für shape={t.shape}")
    x = t.data
    e = np.exp(x - np.max(x, axis=axis, keepdims=True))
    s = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g: np.ndarray):
        return (s * (g - np.sum(g * s, axis=axis, keepdims=True)),)

    return record_op("softmax", s, (t,), backward)


def relu(t: Tensor) -> Tensor:
    mask = t.data > 0
    return record_op("relu", np.where(mask, t.data, 0.0), (t,), lambda g: (g * mask,))


def sigmoid(t: Tensor) -> Tensor:
    s = 1.0 / (1.0 + np.exp(-t.data))
    return record_op("sigmoid", s, (t,), lambda g: (g * s * (1.0 - s),))


def abs_(t: Tensor) -> Tensor:
    sign = np.sign(t.data)
    return record_op("abs", np.abs(t.data), (t,), lambda g: (g * sign,))


def log_clipped(t: Tensor, eps: float = 1e-7) -> Tensor:
    """log(max(x, eps)); unterhalb eps fließt kein Gradient."""
    x = t.data
    inside = x > eps
    out = np.log(np.maximum(x, eps))
    return record_op("log_clipped", out, (t,), lambda g: (np.where(inside, g / np.maximum(x, eps), 0.0),))


def layer_norm(v: Tensor, weight: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """LayerNorm über alle Elemente eines Vektors [N]."""
    _expect_rank(v, 1, "layer_norm")
    n = v.shape[0]
    if weight.shape != (n,) or bias.shape != (n,):
        raise ShapeError(f"layer_norm: weight/bias müssen ({n},) sein")
    x = v.data
    mu = x.mean()
    inv_std = 1.0 / np.sqrt(x.var() + eps)
    xhat = (x - mu) * inv_std
    out = weight.data * xhat + bias.data

    def backward(g: np.ndarray):
        gxhat = g * weight.data
        gv = inv_std / n * (n * gxhat - gxhat.sum() - xhat * np.sum(gxhat * xhat))
        return gv, g * xhat, g

    return record_op("layer_norm", out, (v, weight, bias), backward)


# ---------------------------------------------------------------------
# Geometrie
# ---------------------------------------------------------------------
def _lerp_axis(n_in: int, n_out: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    # ecken-ausgerichtet: Ziel i -> Quelle i*(n_in-1)/(n_out-1)
    if n_out == 1 or n_in == 1:
        src = np.zeros(n_out)
    else:
        src = np.arange(n_out) * (n_in - 1) / (n_out - 1)
    i0 = np.minimum(np.floor(src).astype(np.int64), n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resize_bilinear(t: Tensor, new_h: int, new_w: int) -> Tensor:
    _expect_rank(t, 3, "resize_bilinear")
    if new_h < 1 or new_w < 1:
        raise ShapeError(f"resize_bilinear: Zielgröße {new_h}x{new_w} ungültig")
    c, h, w = t.shape
    if (h, w) == (new_h, new_w):
        return record_op("resize_bilinear", t.data.copy(), (t,), lambda g: (g,))

    r0, r1, fr = _lerp_axis(h, new_h)
    c0, c1, fc = _lerp_axis(w, new_w)
    x = t.data
    fr3 = fr[None, :, None]
    fc3 = fc[None, None, :]
    rows = x[:, r0, :] + fr3 * (x[:, r1, :] - x[:, r0, :])
    out = rows[:, :, c0] + fc3 * (rows[:, :, c1] - rows[:, :, c0])

    def backward(g: np.ndarray):
        grows = np.zeros((c, new_h, w), dtype=g.dtype)
        np.add.at(grows, (slice(None), slice(None), c0), g * (1.0 - fc3))
        np.add.at(grows, (slice(None), slice(None), c1), g * fc3)
        gx = np.zeros_like(x)
        np.add.at(gx, (slice(None), r0, slice(None)), grows * (1.0 - fr3))
        np.add.at(gx, (slice(None), r1, slice(None)), grows * fr3)
        return (gx,)

    return record_op("resize_bilinear", out, (t,), backward)


def crop(t: Tensor, index: Tuple[slice, ...]) -> Tensor:
    """Ausschnitt per Slice-Tupel (z.B. Zentrum eines Templates)."""
    x = t.data
    out = x[index].copy()
    if out.size == 0:
        raise ShapeError(f"crop: leerer Ausschnitt {index} aus shape={t.shape}")

    def backward(g: np.ndarray):
        gx = np.zeros_like(x)
        gx[index] = g
        return (gx,)

    return record_op("crop", out, (t,), backward)


def reshape(t: Tensor, shape: Tuple[int, ...]) -> Tensor:
    out = t.data.reshape(shape)
    return record_op("reshape", out, (t,), lambda g: (g.reshape(t.shape),))


def concat(ts: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not ts:
        raise ShapeError("concat: leere Liste")
    out = np.concatenate([t.data for t in ts], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def backward(g: np.ndarray):
        return tuple(np.split(g, bounds, axis=axis))

    return record_op("concat", out, tuple(ts), backward)


# ---------------------------------------------------------------------
# Reduktionen / lineare Algebra
# ---------------------------------------------------------------------
def global_avg_pool(t: Tensor) -> Tensor:
    _expect_rank(t, 3, "global_avg_pool")
    c, h, w = t.shape
    out = t.data.mean(axis=(1, 2))
    return record_op(
        "global_avg_pool",
        out,
        (t,),
        lambda g: (np.broadcast_to(g[:, None, None] / (h * w), (c, h, w)).copy(),),
    )


def linear(v: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """weight[M,N] @ v[N] (+ bias[M])."""
    _expect_rank(v, 1, "linear(v)")
    _expect_rank(weight, 2, "linear(weight)")
    m, n = weight.shape
    if v.shape[0] != n:
        raise ShapeError(f"linear: Vektor {v.shape[0]} != Gewicht-Spalten {n}")
    if bias is not None and bias.shape != (m,):
        raise ShapeError(f"linear: bias shape {bias.shape} != ({m},)")
    out = weight.data @ v.data
    if bias is not None:
        out = out + bias.data

    def backward(g: np.ndarray):
        gv = weight.data.T @ g
        gw = np.outer(g, v.data)
        return (gv, gw, g) if bias is not None else (gv, gw)

    inputs = (v, weight, bias) if bias is not None else (v, weight)
    return record_op("linear", out, inputs, backward)


def matvec(m: Tensor, v: Tensor) -> Tensor:
    """m[C,N] @ v[N] mit Gradient in beide Argumente."""
    _expect_rank(m, 2, "matvec(m)")
    _expect_rank(v, 1, "matvec(v)")
    if m.shape[1] != v.shape[0]:
        raise ShapeError(f"matvec: {m.shape} @ {v.shape}")
    return record_op(
        "matvec",
        m.data @ v.data,
        (m, v),
        lambda g: (np.outer(g, v.data), m.data.T @ g),
    )


def sum_(t: Tensor) -> Tensor:
    return record_op("sum", np.asarray(t.data.sum()), (t,), lambda g: (np.full(t.shape, g, dtype=t.data.dtype),))


def mean(t: Tensor) -> Tensor:
    n = t.size
    return record_op(
        "mean",
        np.asarray(t.data.mean()),
        (t,),
        lambda g: (np.full(t.shape, g / n, dtype=t.data.dtype),),
    )


def dot_const(t: Tensor, weights: np.ndarray) -> Tensor:
    """Skalar sum(t * weights) mit konstanten (nicht trainierbaren) Gewichten."""
    w = np.asarray(weights, dtype=t.data.dtype)
    if w.shape != t.shape:
        raise ShapeError(f"dot_const: Gewichte {w.shape} != {t.shape}")
    return record_op("dot_const", np.asarray(np.sum(t.data * w)), (t,), lambda g: (g * w,))


# ---------------------------------------------------------------------
# Elementweise Arithmetik
# ---------------------------------------------------------------------
def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: {a.shape} != {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return record_op("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return record_op("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    return record_op("mul", a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(t: Tensor, factor: float) -> Tensor:
    return record_op("scale", t.data * factor, (t,), lambda g: (g * factor,))


def mul_scalar(t: Tensor, s: Tensor) -> Tensor:
    """t * s mit s als Tensor aus genau einem Element (z.B. Gewicht gamma_m)."""
    if s.size != 1:
        raise ShapeError(f"mul_scalar: Skalar erwartet, shape={s.shape}")
    sv = s.data.reshape(-1)[0]
    return record_op(
        "mul_scalar",
        t.data * sv,
        (t, s),
        lambda g: (g * sv, np.full(s.shape, np.sum(g * t.data), dtype=s.data.dtype)),
    )


def add_channel_vector(x: Tensor, v: Tensor) -> Tensor:
    """x[C,H,W] + v[C] (über H, W gebroadcastet)."""
    _expect_rank(x, 3, "add_channel_vector(x)")
    if v.shape != (x.shape[0],):
        raise ShapeError(f"add_channel_vector: {v.shape} != ({x.shape[0]},)")
    return record_op(
        "add_channel_vector",
        x.data + v.data[:, None, None],
        (x, v),
        lambda g: (g, g.sum(axis=(1, 2))),
    )
