"""Minimal numerical core: a multi-layer LSTM stack with an embedding input,
a softmax head (optionally tied to the embedding), inverted dropout, manual
reverse-mode gradients, global-norm clipping and SGD.

Everything is float64 by default; float32 is available behind the `dtype`
argument for speed, conformance tests run in float64. Gate order in the
packed weight matrices is [input, forget, cell, output].
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit as sigmoid


class LayerParams:
    """Weights of one LSTM layer: wx (D,4H), wh (H,4H), b (4H,)."""

    __slots__ = ("wx", "wh", "b")

    def __init__(self, wx, wh, b):
        self.wx = wx
        self.wh = wh
        self.b = b


class StackParams:
    """Parameters of the full stack.

    `out_w` is None when the output projection is tied to the embedding,
    in which case logits use the transpose view of `emb` (single storage).
    """

    __slots__ = ("emb", "layers", "out_w", "out_b")

    def __init__(self, emb, layers, out_w, out_b):
        self.emb = emb
        self.layers = layers
        self.out_w = out_w
        self.out_b = out_b

    @property
    def tied(self) -> bool:
        return self.out_w is None

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        """Fixed-order (name, array) pairs; the serialization order."""
        pairs = [("emb", self.emb)]
        for i, layer in enumerate(self.layers):
            pairs += [(f"l{i}.wx", layer.wx), (f"l{i}.wh", layer.wh), (f"l{i}.b", layer.b)]
        if self.out_w is not None:
            pairs.append(("out_w", self.out_w))
        pairs.append(("out_b", self.out_b))
        return pairs

    def copy(self) -> "StackParams":
        return StackParams(
            self.emb.copy(),
            [LayerParams(l.wx.copy(), l.wh.copy(), l.b.copy()) for l in self.layers],
            None if self.out_w is None else self.out_w.copy(),
            self.out_b.copy(),
        )

    def zeros_like(self) -> "StackParams":
        return StackParams(
            np.zeros_like(self.emb),
            [LayerParams(np.zeros_like(l.wx), np.zeros_like(l.wh), np.zeros_like(l.b)) for l in self.layers],
            None if self.out_w is None else np.zeros_like(self.out_w),
            np.zeros_like(self.out_b),
        )


def init_stack(rng: np.random.Generator, vocab_in: int, emb_dim: int, hidden: int,
               layers: int, out_dim: int | None = None, tied: bool = True,
               init_scale: float = 0.1, dtype=np.float64) -> StackParams:
    """Uniform [-init_scale, init_scale] weights, zero biases.

    Tied mode requires emb_dim == hidden and projects onto the input space.
    """
    if tied and emb_dim != hidden:
        raise ValueError("tied embeddings force embedding dim == hidden size")

    def uni(*shape):
        return rng.uniform(-init_scale, init_scale, size=shape).astype(dtype)

    emb = uni(vocab_in, emb_dim)
    layer_params = []
    d_in = emb_dim
    for _ in range(layers):
        layer_params.append(LayerParams(uni(d_in, 4 * hidden), uni(hidden, 4 * hidden),
                                        np.zeros(4 * hidden, dtype=dtype)))
        d_in = hidden
    if tied:
        out_w = None
        out_b = np.zeros(vocab_in, dtype=dtype)
    else:
        if out_dim is None:
            raise ValueError("out_dim required for an untied head")
        out_w = uni(hidden, out_dim)
        out_b = np.zeros(out_dim, dtype=dtype)
    return StackParams(emb, layer_params, out_w, out_b)


def zero_state(params: StackParams, batch: int) -> list[tuple[np.ndarray, np.ndarray]]:
    hidden = params.layers[0].wh.shape[0]
    dtype = params.emb.dtype
    return [(np.zeros((batch, hidden), dtype=dtype), np.zeros((batch, hidden), dtype=dtype))
            for _ in params.layers]


def make_dropout_masks(rng: np.random.Generator, p: float, steps: int, batch: int,
                       params: StackParams) -> list[np.ndarray] | None:
    """Inverted-dropout masks for every site: embedding output, between
    layers, and before the output projection. None when p == 0."""
    if p == 0.0:
        return None
    dims = [params.emb.shape[1]] + [l.wh.shape[0] for l in params.layers]
    keep = 1.0 - p
    return [
        (rng.random((steps, batch, d)) < keep).astype(params.emb.dtype) / keep
        for d in dims
    ]


class ForwardCache:
    """Intermediates retained by the training-mode forward pass."""

    __slots__ = ("x_ids", "inputs", "gates", "cells", "tanh_c", "hiddens",
                 "h0", "c0", "masks", "top", "keep")

    def __init__(self):
        self.inputs = []   # per layer: (T,B,D) dropped input fed to the layer
        self.gates = []    # per layer: (i, f, g, o) arrays of (T,B,H)
        self.cells = []    # per layer: (T,B,H)
        self.tanh_c = []   # per layer: (T,B,H)
        self.hiddens = []  # per layer: (T,B,H)


def stack_forward(params: StackParams, x_ids: np.ndarray, state,
                  masks: list[np.ndarray] | None = None, want_cache: bool = False,
                  reset_mask: np.ndarray | None = None):
    """Run the stack over x_ids of shape (T, B).

    Returns (logits (T,B,V), final_state, cache-or-None). `masks` enables
    training-mode dropout; evaluation passes None and needs no rescaling.
    `reset_mask` (T,B) zeroes the carried state entering the marked steps,
    so a note-boundary input predicts its successor from a fresh state,
    exactly as per-note scoring and generation do.
    """
    x_ids = np.asarray(x_ids)
    if x_ids.ndim != 2:
        raise ValueError(f"expected (steps, batch) token ids, got shape {x_ids.shape}")
    steps, batch = x_ids.shape
    hidden = params.layers[0].wh.shape[0]
    dtype = params.emb.dtype
    keep = None
    if reset_mask is not None:
        keep = 1.0 - reset_mask.astype(dtype)[:, :, None]  # (T,B,1)

    cache = ForwardCache() if want_cache else None
    if want_cache:
        cache.x_ids = x_ids
        cache.masks = masks
        cache.keep = keep
        cache.h0 = [s[0] for s in state]
        cache.c0 = [s[1] for s in state]

    layer_in = params.emb[x_ids]  # (T,B,E)
    if masks is not None:
        layer_in = layer_in * masks[0]
    new_state = []
    for li, layer in enumerate(params.layers):
        h, c = state[li]
        hs = np.empty((steps, batch, hidden), dtype=dtype)
        if want_cache:
            i_g = np.empty((steps, batch, hidden), dtype=dtype)
            f_g = np.empty_like(i_g)
            g_g = np.empty_like(i_g)
            o_g = np.empty_like(i_g)
            cs = np.empty_like(i_g)
            tc = np.empty_like(i_g)
        flat_in = layer_in.reshape(steps * batch, -1)
        x_proj = (flat_in @ layer.wx).reshape(steps, batch, 4 * hidden) + layer.b
        for t in range(steps):
            if keep is not None:
                h = h * keep[t]
                c = c * keep[t]
            z = x_proj[t] + h @ layer.wh
            i = sigmoid(z[:, :hidden])
            f = sigmoid(z[:, hidden:2 * hidden])
            g = np.tanh(z[:, 2 * hidden:3 * hidden])
            o = sigmoid(z[:, 3 * hidden:])
            c = f * c + i * g
            tct = np.tanh(c)
            h = o * tct
            hs[t] = h
            if want_cache:
                i_g[t], f_g[t], g_g[t], o_g[t], cs[t], tc[t] = i, f, g, o, c, tct
        new_state.append((h, c))
        if want_cache:
            cache.inputs.append(layer_in)
            cache.gates.append((i_g, f_g, g_g, o_g))
            cache.cells.append(cs)
            cache.tanh_c.append(tc)
            cache.hiddens.append(hs)
        layer_in = hs
        if masks is not None:
            layer_in = layer_in * masks[li + 1]

    if want_cache:
        cache.top = layer_in
    out_w = params.emb.T if params.tied else params.out_w
    flat_top = layer_in.reshape(steps * batch, -1)
    logits = (flat_top @ out_w + params.out_b).reshape(steps, batch, -1)
    return logits, new_state, cache


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def xent_loss(logits: np.ndarray, targets: np.ndarray, mask: np.ndarray | None = None):
    """Mean cross-entropy over the (step, batch) positions selected by mask
    (all of them when mask is None).

    Returns (loss, dlogits) with dlogits already scaled by 1/positions.
    """
    steps, batch, n_out = logits.shape
    if steps == 0:
        return 0.0, np.zeros_like(logits)
    probs = softmax(logits)
    flat = probs.reshape(-1, n_out)
    tflat = targets.reshape(-1)
    with np.errstate(divide="ignore"):  # divergent logits surface as inf loss
        lp = np.log(flat[np.arange(flat.shape[0]), tflat])
    dflat = flat
    dflat[np.arange(flat.shape[0]), tflat] -= 1.0
    if mask is None:
        positions = flat.shape[0]
        loss = -float(lp.mean())
    else:
        mflat = mask.reshape(-1)
        positions = int(mflat.sum())
        if positions == 0:
            return 0.0, np.zeros_like(logits)
        loss = -float(lp[mflat].sum()) / positions
        dflat[~mflat] = 0.0
    dflat /= positions
    return loss, dflat.reshape(steps, batch, n_out)


def stack_backward(params: StackParams, cache: ForwardCache, dlogits: np.ndarray) -> StackParams:
    """Gradients for every parameter from a cached training forward pass.

    Truncated BPTT: the chunk's initial state is treated as constant.
    """
    steps, batch, _ = dlogits.shape
    hidden = params.layers[0].wh.shape[0]
    grads = params.zeros_like()

    out_w = params.emb.T if params.tied else params.out_w
    top_flat = cache.top.reshape(steps * batch, -1)
    dl_flat = dlogits.reshape(steps * batch, -1)
    d_out_w = top_flat.T @ dl_flat  # (H, V)
    grads.out_b += dl_flat.sum(axis=0)
    if params.tied:
        grads.emb += d_out_w.T
    else:
        grads.out_w += d_out_w
    d_top = dl_flat @ out_w.T
    d_layer_out = d_top.reshape(steps, batch, -1)
    if cache.masks is not None:
        d_layer_out = d_layer_out * cache.masks[len(params.layers)]

    for li in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[li]
        i_g, f_g, g_g, o_g = cache.gates[li]
        cells = cache.cells[li]
        tanh_c = cache.tanh_c[li]
        hiddens = cache.hiddens[li]
        x_in = cache.inputs[li]
        glayer = grads.layers[li]
        d_x_in = np.empty_like(x_in)
        dh_next = np.zeros((batch, hidden), dtype=params.emb.dtype)
        dc_next = np.zeros_like(dh_next)
        for t in range(steps - 1, -1, -1):
            dh = d_layer_out[t] + dh_next
            i, f, g, o = i_g[t], f_g[t], g_g[t], o_g[t]
            tc = tanh_c[t]
            do = dh * tc
            dc = dh * o * (1.0 - tc * tc) + dc_next
            c_prev = cells[t - 1] if t > 0 else cache.c0[li]
            h_prev = hiddens[t - 1] if t > 0 else cache.h0[li]
            if cache.keep is not None:
                c_prev = c_prev * cache.keep[t]
                h_prev = h_prev * cache.keep[t]
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            dc_next = dc * f
            dz = np.concatenate(
                [di * i * (1.0 - i), df * f * (1.0 - f), dg * (1.0 - g * g), do * o * (1.0 - o)],
                axis=1,
            )
            glayer.wx += x_in[t].T @ dz
            glayer.wh += h_prev.T @ dz
            glayer.b += dz.sum(axis=0)
            d_x_in[t] = dz @ layer.wx.T
            dh_next = dz @ layer.wh.T
            if cache.keep is not None:
                dc_next = dc_next * cache.keep[t]
                dh_next = dh_next * cache.keep[t]
        d_layer_out = d_x_in
        if cache.masks is not None:
            d_layer_out = d_layer_out * cache.masks[li]

    # embedding-lookup gradient (d_layer_out is now the grad wrt emb rows)
    emb_grad = d_layer_out.reshape(steps * batch, -1)
    np.add.at(grads.emb, cache.x_ids.reshape(-1), emb_grad)
    return grads


def global_norm(grads: StackParams) -> float:
    total = 0.0
    for _, arr in grads.named_arrays():
        total += float(np.sum(arr * arr))
    return float(np.sqrt(total))


def clip_gradients(grads: StackParams, max_norm: float) -> float:
    """Scale all gradients so the global norm is at most max_norm.
    Returns the pre-clip norm."""
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        for _, arr in grads.named_arrays():
            arr *= scale
    return norm


def sgd_step(params: StackParams, grads: StackParams, lr: float) -> None:
    for (_, p), (_, g) in zip(params.named_arrays(), grads.named_arrays()):
        p -= lr * g


def lstm_step(params: StackParams, token_id: int, state):
    """Single-token, batch-1 evaluation step; returns (probs (V,), state)."""
    x = np.array([[token_id]])
    logits, new_state, _ = stack_forward(params, x, state, masks=None)
    return softmax(logits[0, 0]), new_state
