"""Synchronous advantage actor-critic in plain numpy.

The network is conv layers -> fully connected -> (policy logits, state value),
ReLU after every hidden layer.  Forward and backward passes are written out by
hand; gradients are checked against finite differences in the test suite.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import ContractError

N_ACTIONS = 5
# parameter-name prefix of the critic trunk when it is not shared with the policy
CRITIC = "critic."
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class A2CHyper:
    learning_rate: float = 7e-4
    gamma: float = 0.99
    entropy_coef: float = 0.1
    value_loss_coef: float = 0.5
    rmsprop_eps: float = 1e-5
    rmsprop_alpha: float = 0.99
    rollout_len: int = 5
    n_envs: int = 30
    # global-norm gradient clip; None disables it
    max_grad_norm: Optional[float] = 0.5

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        for name in ("learning_rate", "entropy_coef", "value_loss_coef", "rmsprop_eps",
                     "rmsprop_alpha"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.rollout_len < 1 or self.n_envs < 1:
            raise ValueError("rollout_len and n_envs must be >= 1")


def desk_architecture(in_shape) -> dict:
    """Small net for symbolic grids: two 3x3 convs (32, 64), FC 256."""
    return {"in_shape": list(in_shape), "convs": [[32, 3, 1, 1], [64, 3, 1, 1]],
            "fc": 256, "n_actions": N_ACTIONS}


def atari_architecture(in_shape=(3, 80, 80)) -> dict:
    """8x8/4, 4x4/2, 3x3/1 convs with 32/64/64 channels, FC 512, for pixel input."""
    return {"in_shape": list(in_shape), "convs": [[32, 8, 4, 0], [64, 4, 2, 0], [64, 3, 1, 0]],
            "fc": 512, "n_actions": N_ACTIONS}


def _conv_out(size, k, stride, pad):
    return (size + 2 * pad - k) // stride + 1


def _trunk_shapes(arch: dict, prefix: str) -> Dict[str, tuple]:
    c, h, w = arch["in_shape"]
    shapes = {}
    for i, (out, k, stride, pad) in enumerate(arch["convs"]):
        shapes[f"{prefix}conv{i}.w"] = (out, c, k, k)
        shapes[f"{prefix}conv{i}.b"] = (out,)
        c, h, w = out, _conv_out(h, k, stride, pad), _conv_out(w, k, stride, pad)
        if h < 1 or w < 1:
            raise ValueError(f"input {arch['in_shape']} too small for conv stack")
    shapes[f"{prefix}fc.w"] = (c * h * w, arch["fc"])
    shapes[f"{prefix}fc.b"] = (arch["fc"],)
    return shapes


def _layer_shapes(arch: dict) -> Dict[str, tuple]:
    shapes = _trunk_shapes(arch, "")
    if arch.get("separate_critic"):
        shapes.update(_trunk_shapes(arch, CRITIC))
    shapes["pi.w"] = (arch["fc"], arch["n_actions"])
    shapes["pi.b"] = (arch["n_actions"],)
    shapes["v.w"] = (arch["fc"], 1)
    shapes["v.b"] = (1,)
    return shapes


@dataclass
class PolicyParams:
    arch: dict
    weights: Dict[str, np.ndarray]
    accumulators: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not self.accumulators:
            self.accumulators = {k: np.zeros_like(v) for k, v in self.weights.items()}

    def copy(self) -> "PolicyParams":
        return PolicyParams(json.loads(json.dumps(self.arch)),
                            {k: v.copy() for k, v in self.weights.items()},
                            {k: v.copy() for k, v in self.accumulators.items()})

    @property
    def n_params(self) -> int:
        return sum(v.size for v in self.weights.values())

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.weights.values())


def _orthogonal(rng: np.random.Generator, rows: int, cols: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def init_params(arch: dict, rng: np.random.Generator, head_gain: float = 0.01) -> PolicyParams:
    """Orthogonal weights (ReLU gain for hidden layers, ``head_gain`` for the heads)."""
    weights = {}
    relu_gain = np.sqrt(2.0)
    for name, shape in _layer_shapes(arch).items():
        if name.endswith(".b"):
            weights[name] = np.zeros(shape)
        elif ".w" in name and "conv" in name:
            fan_in = int(np.prod(shape[1:]))
            weights[name] = _orthogonal(rng, shape[0], fan_in, relu_gain).reshape(shape)
        else:
            gain = head_gain if name[:2] in ("pi", "v.") else relu_gain
            weights[name] = _orthogonal(rng, shape[0], shape[1], gain)
    return PolicyParams(arch, weights)


# --- forward / backward -----------------------------------------------------

def _conv_forward(x, w, b, stride, pad):
    n, c, h, wd = x.shape
    out_c, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    oh, ow = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * k * k)
    out = cols @ w.reshape(out_c, -1).T + b
    return out.reshape(n, oh, ow, out_c).transpose(0, 3, 1, 2), (cols, xp.shape, oh, ow)


def _conv_backward(dout, w, cache, stride, pad):
    cols, xp_shape, oh, ow = cache
    n = dout.shape[0]
    out_c, c, k, _ = w.shape
    dflat = dout.transpose(0, 2, 3, 1).reshape(-1, out_c)
    dw = (dflat.T @ cols).reshape(w.shape)
    db = dflat.sum(axis=0)
    dcols = (dflat @ w.reshape(out_c, -1)).reshape(n, oh, ow, c, k, k)
    dxp = np.zeros(xp_shape)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += \
                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    if pad:
        dxp = dxp[:, :, pad:-pad, pad:-pad]
    return dxp, dw, db


def _check_obs(params: PolicyParams, obs: np.ndarray) -> np.ndarray:
    obs = np.asarray(obs, dtype=np.float64)
    if obs.ndim == 3:
        obs = obs[None]
    if obs.ndim != 4 or list(obs.shape[1:]) != list(params.arch["in_shape"]):
        raise ContractError(f"observation shape {obs.shape} does not match "
                            f"architecture input {params.arch['in_shape']}")
    return obs


def _trunk_forward(wts, arch, x, prefix, keep):
    caches = []
    for i, (_, _, stride, pad) in enumerate(arch["convs"]):
        z, cache = _conv_forward(x, wts[f"{prefix}conv{i}.w"], wts[f"{prefix}conv{i}.b"], stride, pad)
        x = np.maximum(z, 0.0)
        if keep:
            caches.append((cache, z > 0))
    conv_shape = x.shape
    flat = x.reshape(x.shape[0], -1)
    zf = flat @ wts[f"{prefix}fc.w"] + wts[f"{prefix}fc.b"]
    hidden = np.maximum(zf, 0.0)
    return hidden, ((caches, conv_shape, flat, zf > 0, hidden) if keep else None)


def _trunk_backward(wts, arch, cache, dhidden, prefix, grads):
    caches, conv_shape, flat, fc_mask, _ = cache
    dzf = dhidden * fc_mask
    grads[f"{prefix}fc.w"] = flat.T @ dzf
    grads[f"{prefix}fc.b"] = dzf.sum(axis=0)
    dx = (dzf @ wts[f"{prefix}fc.w"].T).reshape(conv_shape)
    for i in reversed(range(len(caches))):
        conv_cache, mask = caches[i]
        _, _, stride, pad = arch["convs"][i]
        dx, grads[f"{prefix}conv{i}.w"], grads[f"{prefix}conv{i}.b"] = _conv_backward(
            dx * mask, wts[f"{prefix}conv{i}.w"], conv_cache, stride, pad)


def _forward(params: PolicyParams, x: np.ndarray, keep: bool):
    wts, arch = params.weights, params.arch
    hidden, cache = _trunk_forward(wts, arch, x, "", keep)
    critic_hidden, critic_cache = hidden, None
    if arch.get("separate_critic"):
        critic_hidden, critic_cache = _trunk_forward(wts, arch, x, CRITIC, keep)
    logits = hidden @ wts["pi.w"] + wts["pi.b"]
    value = (critic_hidden @ wts["v.w"] + wts["v.b"])[:, 0]
    return logits, value, ((cache, critic_cache) if keep else None)


def forward(params: PolicyParams, obs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Policy logits ``(N, 5)`` and values ``(N,)``; a single observation gets N=1."""
    logits, value, _ = _forward(params, _check_obs(params, obs), keep=False)
    return logits, value


def _backward(params: PolicyParams, cache, dlogits, dvalue) -> Dict[str, np.ndarray]:
    wts, arch = params.weights, params.arch
    cache, critic_cache = cache
    hidden = cache[4]
    critic_hidden = hidden if critic_cache is None else critic_cache[4]
    grads = {
        "pi.w": hidden.T @ dlogits,
        "pi.b": dlogits.sum(axis=0),
        "v.w": critic_hidden.T @ dvalue[:, None],
        "v.b": np.array([dvalue.sum()]),
    }
    dhidden = dlogits @ wts["pi.w"].T
    dcritic = dvalue[:, None] @ wts["v.w"].T
    if critic_cache is None:
        _trunk_backward(wts, arch, cache, dhidden + dcritic, "", grads)
    else:
        _trunk_backward(wts, arch, cache, dhidden, "", grads)
        _trunk_backward(wts, arch, critic_cache, dcritic, CRITIC, grads)
    return grads


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


# --- rollouts and loss ------------------------------------------------------

@dataclass
class RolloutBatch:
    """Arrays are time-major: ``(T, N, ...)`` for T steps of N environments.

    ``terminals`` marks solved transitions (no bootstrap); ``truncateds`` marks
    step-cap endings, which bootstrap from ``truncation_values`` (the value of the
    final state before reset).  ``bootstrap_values`` is the value of the state
    following the last step, used only when that step ended neither way.
    """
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    terminals: np.ndarray
    truncateds: np.ndarray
    truncation_values: np.ndarray
    bootstrap_values: np.ndarray

    def __len__(self):
        return self.actions.size


def n_step_returns(batch: RolloutBatch, gamma: float) -> np.ndarray:
    rewards = np.asarray(batch.rewards, dtype=np.float64)
    out = np.empty_like(rewards)
    nxt = np.asarray(batch.bootstrap_values, dtype=np.float64)
    for t in reversed(range(rewards.shape[0])):
        tail = np.where(batch.truncateds[t], batch.truncation_values[t], nxt)
        tail = np.where(batch.terminals[t], 0.0, tail)
        out[t] = rewards[t] + gamma * tail
        nxt = out[t]
    return out


def a2c_loss(params: PolicyParams, batch: RolloutBatch, hyper: A2CHyper,
             returns: Optional[np.ndarray] = None):
    """Loss and gradients for one update.

    Advantages use the values recorded at collection time, so they are
    constants with respect to the parameters.  Returns ``(loss, grads, info)``.
    """
    if len(batch) == 0:
        raise ContractError("empty rollout batch")
    if returns is None:
        returns = n_step_returns(batch, hyper.gamma)
    obs = batch.obs.reshape((-1,) + batch.obs.shape[2:])
    actions = batch.actions.reshape(-1)
    ret = returns.reshape(-1)
    adv = ret - batch.values.reshape(-1)
    m = actions.size

    logits, value, cache = _forward(params, _check_obs(params, obs), keep=True)
    logp = log_softmax(logits)
    probs = np.exp(logp)
    logp_a = logp[np.arange(m), actions]
    entropy_per = -(probs * logp).sum(axis=1)

    policy_loss = -np.mean(logp_a * adv)
    value_loss = np.mean((ret - value) ** 2)
    entropy = np.mean(entropy_per)
    loss = policy_loss + hyper.value_loss_coef * value_loss - hyper.entropy_coef * entropy
    if not np.isfinite(loss):
        raise FloatingPointError(
            f"non-finite loss: policy={policy_loss} value={value_loss} entropy={entropy}")

    onehot = np.zeros_like(probs)
    onehot[np.arange(m), actions] = 1.0
    dlogits = -(onehot - probs) * adv[:, None] / m
    dlogits += hyper.entropy_coef * probs * (logp + entropy_per[:, None]) / m
    dvalue = hyper.value_loss_coef * 2.0 * (value - ret) / m
    grads = _backward(params, cache, dlogits, dvalue)
    info = {"loss": float(loss), "policy_loss": float(policy_loss),
            "value_loss": float(value_loss), "entropy": float(entropy)}
    return float(loss), grads, info


def clip_grad_norm(grads: Dict[str, np.ndarray], max_norm: Optional[float]):
    """Scale gradients so their global L2 norm is at most ``max_norm``; returns (grads, norm)."""
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm is None or norm <= max_norm:
        return grads, norm
    scale = max_norm / (norm + 1e-6)
    return {k: g * scale for k, g in grads.items()}, norm


def rmsprop_step(params: PolicyParams, grads: Dict[str, np.ndarray],
                 hyper: A2CHyper) -> PolicyParams:
    """acc <- a*acc + (1-a)*g^2;  w <- w - lr*g / (sqrt(acc) + eps).  Returns new params."""
    alpha, lr, eps = hyper.rmsprop_alpha, hyper.learning_rate, hyper.rmsprop_eps
    weights, accs = {}, {}
    for name, w in params.weights.items():
        g = grads[name]
        if g.shape != w.shape:
            raise ContractError(f"gradient shape {g.shape} != parameter shape {w.shape} for {name}")
        acc = alpha * params.accumulators[name] + (1.0 - alpha) * g * g
        weights[name] = w - lr * g / (np.sqrt(acc) + eps)
        accs[name] = acc
    return PolicyParams(params.arch, weights, accs)


def greedy_actions(logits: np.ndarray) -> np.ndarray:
    """Argmax with ties broken toward the lowest action index."""
    return np.argmax(logits, axis=-1)


def sample_actions(logits: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    probs = softmax(logits)
    cdf = np.cumsum(probs, axis=1)
    u = rng.random((probs.shape[0], 1))
    return np.minimum((u > cdf).sum(axis=1), probs.shape[1] - 1)


# --- checkpoints ------------------------------------------------------------

def save_checkpoint(params: PolicyParams, path, meta: Optional[dict] = None) -> None:
    header = {"format": "sokoshape-policy", "version": CHECKPOINT_VERSION,
              "arch": params.arch, "meta": meta or {}}
    arrays = {"header": np.array(json.dumps(header, sort_keys=True))}
    for name, w in params.weights.items():
        arrays[f"w/{name}"] = w
        arrays[f"acc/{name}"] = params.accumulators[name]
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        np.savez(fh, **arrays)
    os.replace(tmp, path)


def load_checkpoint(path) -> Tuple[PolicyParams, dict]:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("format") != "sokoshape-policy" or header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint format {header.get('format')!r} "
                             f"v{header.get('version')}")
        names = list(_layer_shapes(header["arch"]))
        weights = {n: data[f"w/{n}"].copy() for n in names}
        accs = {n: data[f"acc/{n}"].copy() for n in names}
    return PolicyParams(header["arch"], weights, accs), header["meta"]
