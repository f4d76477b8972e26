"""The VTR inference graph.

Pre-LN transformer encoder over shifted-patch tokens, with locality
self-attention: per-head attention logits are divided by a learnable
per-layer temperature, the diagonal (self-token) entries are forced to
the -1e9 mask sentinel, and softmax then routes every token's attention
to other tokens only.

Also hosts the analytic parameter and multiply-accumulate counters used
for model-size accounting and the simulator cross-checks.

Trace stage names follow a fixed grammar:
  "embed",
  "layer{i}.ln1", "layer{i}.attn_scores", "layer{i}.msa_out",
  "layer{i}.res1", "layer{i}.ln2", "layer{i}.mlp_out", "layer{i}.out",
  "head_ln", "logits"
with i in 0..depth-1. "layer{i}.attn_scores" stacks the per-head softmax
score matrices along rows in head order, shape (heads*(N+1), N+1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .matrix import gelu
from .spt import ShiftSpec, TokenMatrix, spt_transform, tokenize

MASK_SENTINEL = np.float32(-1.0e9)
LN_EPS = np.float32(1.0e-6)


@dataclass(frozen=True)
class VtrConfig:
    """Model hyper-parameters; derived sizes are properties."""

    image_h: int
    image_w: int
    channels: int = 1
    patch: int = 8
    shifts: int = 4
    shift_px: int = 2
    dim: int = 44
    depth: int = 4
    heads: int = 2
    mlp_ratio: int = 4
    num_classes: int = 10

    def __post_init__(self):
        if self.image_h < 1 or self.image_w < 1 or self.channels < 1:
            raise ConfigError(f"bad image dims {self.image_h}x{self.image_w}x{self.channels}")
        if self.patch < 1 or self.image_h % self.patch or self.image_w % self.patch:
            raise ConfigError(f"patch {self.patch} does not divide {self.image_h}x{self.image_w}")
        if self.dim < 1 or self.heads < 1 or self.dim % self.heads:
            raise ConfigError(f"heads {self.heads} must divide dim {self.dim}")
        if self.depth < 0:
            raise ConfigError(f"depth must be >= 0, got {self.depth}")
        if self.shifts < 0 or self.shift_px < 0 or self.mlp_ratio < 1 or self.num_classes < 1:
            raise ConfigError("shifts/shift_px/mlp_ratio/num_classes out of range")

    @property
    def n_tokens(self) -> int:
        return (self.image_h // self.patch) * (self.image_w // self.patch)

    @property
    def seq_len(self) -> int:
        return self.n_tokens + 1

    @property
    def raw_dim(self) -> int:
        return self.patch * self.patch * self.channels * (self.shifts + 1)

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads

    @property
    def hidden_dim(self) -> int:
        return self.mlp_ratio * self.dim

    def shift_spec(self) -> ShiftSpec:
        from .spt import DIAGONALS

        if self.shifts > len(DIAGONALS):
            raise ConfigError(f"at most {len(DIAGONALS)} shift directions supported")
        return ShiftSpec(DIAGONALS[: self.shifts], self.shift_px)


@dataclass
class LayerWeights:
    ln1_gamma: np.ndarray
    ln1_beta: np.ndarray
    wq: np.ndarray
    bq: np.ndarray
    wk: np.ndarray
    bk: np.ndarray
    wv: np.ndarray
    bv: np.ndarray
    temperature: np.ndarray  # positive scalar
    proj_w: np.ndarray
    proj_b: np.ndarray
    ln2_gamma: np.ndarray
    ln2_beta: np.ndarray
    mlp_w1: np.ndarray
    mlp_b1: np.ndarray
    mlp_w2: np.ndarray
    mlp_b2: np.ndarray


@dataclass
class WeightSet:
    """All learned tensors of one model, shapes fixed by a VtrConfig."""

    embed_ln_gamma: np.ndarray
    embed_ln_beta: np.ndarray
    embed_w: np.ndarray
    embed_b: np.ndarray
    cls_token: np.ndarray
    pos_embed: np.ndarray
    layers: list[LayerWeights]
    head_ln_gamma: np.ndarray
    head_ln_beta: np.ndarray
    head_w: np.ndarray
    head_b: np.ndarray

    def named_tensors(self):
        """(name, array) pairs in the canonical order of the weight container."""
        yield "embed.ln.gamma", self.embed_ln_gamma
        yield "embed.ln.beta", self.embed_ln_beta
        yield "embed.linear.weight", self.embed_w
        yield "embed.linear.bias", self.embed_b
        yield "cls_token", self.cls_token
        yield "pos_embed", self.pos_embed
        for i, lw in enumerate(self.layers):
            p = f"layer{i}"
            yield f"{p}.ln1.gamma", lw.ln1_gamma
            yield f"{p}.ln1.beta", lw.ln1_beta
            yield f"{p}.attn.wq", lw.wq
            yield f"{p}.attn.bq", lw.bq
            yield f"{p}.attn.wk", lw.wk
            yield f"{p}.attn.bk", lw.bk
            yield f"{p}.attn.wv", lw.wv
            yield f"{p}.attn.bv", lw.bv
            yield f"{p}.attn.temperature", lw.temperature
            yield f"{p}.attn.proj.weight", lw.proj_w
            yield f"{p}.attn.proj.bias", lw.proj_b
            yield f"{p}.ln2.gamma", lw.ln2_gamma
            yield f"{p}.ln2.beta", lw.ln2_beta
            yield f"{p}.mlp.w1", lw.mlp_w1
            yield f"{p}.mlp.b1", lw.mlp_b1
            yield f"{p}.mlp.w2", lw.mlp_w2
            yield f"{p}.mlp.b2", lw.mlp_b2
        yield "head.ln.gamma", self.head_ln_gamma
        yield "head.ln.beta", self.head_ln_beta
        yield "head.weight", self.head_w
        yield "head.bias", self.head_b

    def n_elements(self) -> int:
        return sum(int(np.asarray(t).size) for _, t in self.named_tensors())


def expected_shapes(cfg: VtrConfig) -> dict[str, tuple]:
    """Canonical tensor name -> shape map for a config."""
    d, r, dr = cfg.dim, cfg.mlp_ratio, cfg.raw_dim
    shapes: dict[str, tuple] = {
        "embed.ln.gamma": (dr,),
        "embed.ln.beta": (dr,),
        "embed.linear.weight": (dr, d),
        "embed.linear.bias": (d,),
        "cls_token": (d,),
        "pos_embed": (cfg.seq_len, d),
    }
    for i in range(cfg.depth):
        p = f"layer{i}"
        shapes.update(
            {
                f"{p}.ln1.gamma": (d,),
                f"{p}.ln1.beta": (d,),
                f"{p}.attn.wq": (d, d),
                f"{p}.attn.bq": (d,),
                f"{p}.attn.wk": (d, d),
                f"{p}.attn.bk": (d,),
                f"{p}.attn.wv": (d, d),
                f"{p}.attn.bv": (d,),
                f"{p}.attn.temperature": (),
                f"{p}.attn.proj.weight": (d, d),
                f"{p}.attn.proj.bias": (d,),
                f"{p}.ln2.gamma": (d,),
                f"{p}.ln2.beta": (d,),
                f"{p}.mlp.w1": (d, r * d),
                f"{p}.mlp.b1": (r * d,),
                f"{p}.mlp.w2": (r * d, d),
                f"{p}.mlp.b2": (d,),
            }
        )
    shapes.update(
        {
            "head.ln.gamma": (d,),
            "head.ln.beta": (d,),
            "head.weight": (d, cfg.num_classes),
            "head.bias": (cfg.num_classes,),
        }
    )
    return shapes


def weightset_from_tensors(cfg: VtrConfig, tensors: dict[str, np.ndarray]) -> WeightSet:
    """Assemble a WeightSet from a name->array map, validating every shape."""
    shapes = expected_shapes(cfg)
    missing = sorted(set(shapes) - set(tensors))
    extra = sorted(set(tensors) - set(shapes))
    if missing or extra:
        raise ShapeError(f"tensor set mismatch: missing={missing[:4]} extra={extra[:4]}")
    t = {}
    for name, shape in shapes.items():
        arr = np.asarray(tensors[name], dtype=np.float32, order="C")
        if arr.shape != shape:
            raise ShapeError(f"{name}: expected shape {shape}, got {arr.shape}")
        t[name] = arr
    layers = []
    for i in range(cfg.depth):
        p = f"layer{i}"
        lam = t[f"{p}.attn.temperature"]
        if not float(lam) > 0.0:
            raise ConfigError(f"{p}.attn.temperature must be positive, got {float(lam)}")
        layers.append(
            LayerWeights(
                t[f"{p}.ln1.gamma"], t[f"{p}.ln1.beta"],
                t[f"{p}.attn.wq"], t[f"{p}.attn.bq"],
                t[f"{p}.attn.wk"], t[f"{p}.attn.bk"],
                t[f"{p}.attn.wv"], t[f"{p}.attn.bv"],
                lam,
                t[f"{p}.attn.proj.weight"], t[f"{p}.attn.proj.bias"],
                t[f"{p}.ln2.gamma"], t[f"{p}.ln2.beta"],
                t[f"{p}.mlp.w1"], t[f"{p}.mlp.b1"],
                t[f"{p}.mlp.w2"], t[f"{p}.mlp.b2"],
            )
        )
    return WeightSet(
        t["embed.ln.gamma"], t["embed.ln.beta"],
        t["embed.linear.weight"], t["embed.linear.bias"],
        t["cls_token"], t["pos_embed"],
        layers,
        t["head.ln.gamma"], t["head.ln.beta"],
        t["head.weight"], t["head.bias"],
    )


def layer_norm(x, gamma, beta, eps=LN_EPS) -> np.ndarray:
    """Row-wise layer norm (population variance) followed by the affine map."""
    x = np.asarray(x, dtype=np.float32)
    gamma = np.asarray(gamma, dtype=np.float32)
    beta = np.asarray(beta, dtype=np.float32)
    if gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ShapeError(f"gamma/beta must have length {x.shape[1]}")
    mu = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    xn = (x - mu) / np.sqrt(var + np.float32(eps))
    return xn * gamma + beta


def embed(tokens: TokenMatrix, w: WeightSet) -> np.ndarray:
    """Tokens -> (N+1, D): LN, linear projection, class token row 0, positions."""
    x = tokens.data
    if x.shape[1] != w.embed_w.shape[0]:
        raise ShapeError(f"token dim {x.shape[1]} != embedding input {w.embed_w.shape[0]}")
    z = layer_norm(x, w.embed_ln_gamma, w.embed_ln_beta) @ w.embed_w + w.embed_b
    z = np.concatenate([w.cls_token[None, :], z], axis=0)
    if w.pos_embed.shape != z.shape:
        raise ShapeError(f"pos_embed shape {w.pos_embed.shape} != {z.shape}")
    return z + w.pos_embed


def _softmax_rows(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=1, keepdims=True)
    e = np.exp(a - m)
    return e / e.sum(axis=1, keepdims=True)


def lsa_attention(z, lw: LayerWeights, cfg: VtrConfig, return_scores: bool = False):
    """Locality self-attention over a normalized (N+1, D) input.

    Per head: logits Q K^T are divided by the layer temperature, the
    diagonal is replaced by the mask sentinel, rows are softmaxed with
    max subtraction, and the scores weight V. Head outputs are
    concatenated and projected.
    """
    z = np.asarray(z, dtype=np.float32)
    if z.ndim != 2 or z.shape[1] != cfg.dim:
        raise ShapeError(f"expected (tokens, {cfg.dim}) input, got {z.shape}")
    lam = np.float32(lw.temperature)
    if not lam > 0:
        raise ConfigError(f"temperature must be positive, got {lam}")
    q = z @ lw.wq + lw.bq
    k = z @ lw.wk + lw.bk
    v = z @ lw.wv + lw.bv
    dk = cfg.head_dim
    outs = []
    scores = []
    for h in range(cfg.heads):
        sl = slice(h * dk, (h + 1) * dk)
        a = (q[:, sl] @ k[:, sl].T) / lam
        np.fill_diagonal(a, MASK_SENTINEL)
        s = _softmax_rows(a)
        scores.append(s)
        outs.append(s @ v[:, sl])
    out = np.concatenate(outs, axis=1) @ lw.proj_w + lw.proj_b
    if return_scores:
        return out, np.concatenate(scores, axis=0)
    return out


def mlp_block(x, w1, b1, w2, b2) -> np.ndarray:
    """Two-layer feed-forward with exact GELU between."""
    x = np.asarray(x, dtype=np.float32)
    if x.shape[1] != w1.shape[0] or w1.shape[1] != w2.shape[0] or w2.shape[1] != x.shape[1]:
        raise ShapeError(f"mlp shapes inconsistent: {x.shape} {w1.shape} {w2.shape}")
    return gelu(x @ w1 + b1) @ w2 + b2


def encoder_layer(z, lw: LayerWeights, cfg: VtrConfig, trace: dict | None = None, prefix: str = "layer0") -> np.ndarray:
    """Pre-LN encoder layer: z + attn(LN1(z)), then + mlp(LN2(.))."""
    ln1 = layer_norm(z, lw.ln1_gamma, lw.ln1_beta)
    attn, scores = lsa_attention(ln1, lw, cfg, return_scores=True)
    res1 = z + attn
    ln2 = layer_norm(res1, lw.ln2_gamma, lw.ln2_beta)
    mlp = mlp_block(ln2, lw.mlp_w1, lw.mlp_b1, lw.mlp_w2, lw.mlp_b2)
    out = res1 + mlp
    if trace is not None:
        trace[f"{prefix}.ln1"] = ln1
        trace[f"{prefix}.attn_scores"] = scores
        trace[f"{prefix}.msa_out"] = attn
        trace[f"{prefix}.res1"] = res1
        trace[f"{prefix}.ln2"] = ln2
        trace[f"{prefix}.mlp_out"] = mlp
        trace[f"{prefix}.out"] = out
    return out


def forward(img, w: WeightSet, cfg: VtrConfig, trace: bool = False):
    """Full inference pass for one image.

    Returns the logits vector, or (logits, trace) when trace is set; the
    trace maps every stage name of the documented grammar to its matrix.
    """
    img = np.ascontiguousarray(img, dtype=np.float32)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.shape != (cfg.image_h, cfg.image_w, cfg.channels):
        raise ShapeError(
            f"image shape {img.shape} != ({cfg.image_h}, {cfg.image_w}, {cfg.channels})"
        )
    stack = spt_transform(img, cfg.shift_spec())
    tokens = tokenize(stack, cfg.patch)
    sink: dict[str, np.ndarray] | None = {} if trace else None
    z = embed(tokens, w)
    if sink is not None:
        sink["embed"] = z
    for i, lw in enumerate(w.layers):
        z = encoder_layer(z, lw, cfg, trace=sink, prefix=f"layer{i}")
    zn = layer_norm(z, w.head_ln_gamma, w.head_ln_beta)
    logits = zn[0] @ w.head_w + w.head_b
    if sink is not None:
        sink["head_ln"] = zn
        sink["logits"] = logits[None, :]
        return logits, sink
    return logits


def count_params(cfg: VtrConfig, paper_comparable: bool = False) -> int:
    """Total learnable scalars.

    The full variant counts every tensor of the WeightSet. The
    paper-comparable variant drops positional embeddings, the class
    token, and the Q/K/V biases, which is the counting convention the
    published model-size tables follow.
    """
    return sum(param_breakdown(cfg, paper_comparable).values())


def param_breakdown(cfg: VtrConfig, paper_comparable: bool = False) -> dict[str, int]:
    d, r, dr, c = cfg.dim, cfg.mlp_ratio, cfg.raw_dim, cfg.num_classes
    per_layer = (
        2 * d  # ln1
        + 3 * d * d  # qkv weights
        + (0 if paper_comparable else 3 * d)  # qkv biases
        + 1  # temperature
        + d * d + d  # projection
        + 2 * d  # ln2
        + 2 * r * d * d + r * d + d  # mlp
    )
    out = {
        "embed_ln": 2 * dr,
        "embed_linear": dr * d + d,
        "cls_token": 0 if paper_comparable else d,
        "pos_embed": 0 if paper_comparable else cfg.seq_len * d,
        "encoder": cfg.depth * per_layer,
        "head": 2 * d + d * c + c,
    }
    return out


def count_macs(cfg: VtrConfig) -> int:
    """Analytic multiply-accumulate count of one forward pass."""
    return sum(mac_breakdown(cfg).values())


def mac_breakdown(cfg: VtrConfig) -> dict[str, int]:
    """Per-stage MAC terms.

    embedding: N * raw_dim * D
    per layer: 3(N+1)D^2 (QKV) + 2(N+1)^2 D (QK^T and SV)
               + (N+1)D^2 (projection) + 2*ratio*(N+1)D^2 (MLP)
    head:      D * classes
    """
    n, s, d, r = cfg.n_tokens, cfg.seq_len, cfg.dim, cfg.mlp_ratio
    per_layer = 3 * s * d * d + 2 * s * s * d + s * d * d + 2 * r * s * d * d
    return {
        "embedding": n * cfg.raw_dim * d,
        "encoder": cfg.depth * per_layer,
        "head": d * cfg.num_classes,
    }
