"""Parameter containers and the recurrent building blocks shared by the
utterance encoder and the conversation model."""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from dialogact.errors import ContractError, DimensionError
from dialogact.tensor import Tensor, _result, _sigmoid, add, matmul, register_op


class ParamStore(OrderedDict):
    """Named trainable tensors in creation order."""

    def __init__(self, rng: np.random.Generator, dtype=np.float64):
        super().__init__()
        self.rng = rng
        self.dtype = dtype

    def glorot(self, name: str, shape: tuple[int, int], fan: tuple[int, int] | None = None) -> Tensor:
        fan_in, fan_out = fan or shape
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return self.put(name, self.rng.uniform(-bound, bound, size=shape))

    def zeros(self, name: str, shape) -> Tensor:
        return self.put(name, np.zeros(shape))

    def put(self, name: str, value: np.ndarray, trainable: bool = True) -> Tensor:
        if name in self:
            raise ContractError(f"duplicate parameter {name!r}")
        t = Tensor(np.asarray(value, dtype=self.dtype), requires_grad=trainable, name=name)
        self[name] = t
        return t

    def trainable(self) -> list[Tensor]:
        return [t for t in self.values() if t.requires_grad]


@register_op("gru")
def gru(x: Tensor, h0: Tensor, w_x: Tensor, w_h: Tensor, bias: Tensor,
        mask: np.ndarray | None = None, reverse: bool = False) -> Tensor:
    """Run a GRU over a padded batch ``x`` of shape (B, T, d).

    Gate columns are laid out ``[update | reset | candidate]``::

        z  = sigmoid(x W_z + h U_z + b_z)
        r  = sigmoid(x W_r + h U_r + b_r)
        h~ = tanh(x W_h + (r * h) U_h + b_h)
        h' = (1 - z) * h + z * h~

    Where ``mask[b, t]`` is False the state is carried through unchanged, so
    right-padded sequences are handled in both directions. Returns the state
    after every step, shape (B, T, u).
    """
    X = x.data
    if X.ndim != 3:
        raise DimensionError(f"gru: input must be (batch, time, dim), got {x.shape}")
    B, T, d = X.shape
    u = h0.shape[-1]
    if w_x.shape != (d, 3 * u) or w_h.shape != (u, 3 * u) or bias.shape != (3 * u,) or h0.shape != (B, u):
        raise DimensionError(
            f"gru: inconsistent shapes x{x.shape} h0{h0.shape} w_x{w_x.shape} w_h{w_h.shape} b{bias.shape}")
    Wx, Wh, b = w_x.data, w_h.data, bias.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
    Whzr, Whc = Wh[:, : 2 * u], Wh[:, 2 * u:]
    xp = X @ Wx + b
    order = range(T - 1, -1, -1) if reverse else range(T)
    out = np.empty((B, T, u), dtype=X.dtype)
    saved = {}
    h = h0.data
    for t in order:
        a = xp[:, t]
        hzr = h @ Whzr
        z = _sigmoid(a[:, :u] + hzr[:, :u])
        r = _sigmoid(a[:, u:2 * u] + hzr[:, u:])
        rh = r * h
        c = np.tanh(a[:, 2 * u:] + rh @ Whc)
        hn = (1.0 - z) * h + z * c
        m = None
        if mask is not None:
            m = mask[:, t, None]
            hn = np.where(m, hn, h)
        saved[t] = (h, z, r, rh, c, m)
        out[:, t] = hn
        h = hn

    def bw(g):
        dxp = np.zeros_like(xp)
        dWh = np.zeros_like(Wh)
        dh = np.zeros_like(h0.data)
        for t in reversed(order):
            hp, z, r, rh, c, m = saved[t]
            dtot = dh + g[:, t]
            if m is not None:
                dn = np.where(m, dtot, 0.0)
                carry = dtot - dn
            else:
                dn, carry = dtot, 0.0
            dz = dn * (c - hp)
            dac = dn * z * (1.0 - c * c)
            drh = dac @ Whc.T
            dWh[:, 2 * u:] += rh.T @ dac
            dr = drh * hp
            daz = dz * z * (1.0 - z)
            dar = dr * r * (1.0 - r)
            dzr = np.concatenate([daz, dar], axis=1)
            dWh[:, : 2 * u] += hp.T @ dzr
            dh = dn * (1.0 - z) + drh * r + dzr @ Whzr.T + carry
            dxp[:, t, : 2 * u] = dzr
            dxp[:, t, 2 * u:] = dac
        flat = dxp.reshape(-1, 3 * u)
        dx = (flat @ Wx.T).reshape(X.shape)
        dWx = X.reshape(-1, d).T @ flat
        return dx, dh, dWx, dWh, flat.sum(axis=0)

    return _result("gru", out, (x, h0, w_x, w_h, bias), bw)


class GruCell:
    """GRU parameters (input dim ``d``, hidden dim ``u``) registered in a store."""

    def __init__(self, store: ParamStore, prefix: str, input_dim: int, hidden: int):
        self.input_dim, self.hidden = input_dim, hidden
        self.w_x = store.glorot(f"{prefix}.w_x", (input_dim, 3 * hidden), fan=(input_dim, hidden))
        self.w_h = store.glorot(f"{prefix}.w_h", (hidden, 3 * hidden), fan=(hidden, hidden))
        self.b = store.zeros(f"{prefix}.b", (3 * hidden,))

    def zero_state(self, batch: int = 1, dtype=np.float64) -> Tensor:
        return Tensor(np.zeros((batch, self.hidden), dtype=dtype))

    def run(self, x: Tensor, h0: Tensor | None = None, mask=None, reverse: bool = False) -> Tensor:
        if h0 is None:
            h0 = self.zero_state(x.shape[0], x.dtype)
        return gru(x, h0, self.w_x, self.w_h, self.b, mask=mask, reverse=reverse)


class Linear:
    """Affine map ``y = x W + b`` with W of shape (in, out)."""

    def __init__(self, store: ParamStore, prefix: str, n_in: int, n_out: int, bias: bool = True):
        self.w = store.glorot(f"{prefix}.w", (n_in, n_out))
        self.b = store.zeros(f"{prefix}.b", (n_out,)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = matmul(x, self.w)
        return add(y, self.b) if self.b is not None else y
