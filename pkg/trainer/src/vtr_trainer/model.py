"""PyTorch reference model with the exact semantics of the vtr engine.

Everything the engine pins down is mirrored here: zero-filled diagonal
shifts concatenated in the order left-up, right-up, left-down,
right-down; patch flattening (row, col, channel); pre-LN encoder with
eps 1e-6; per-layer scalar softmax temperature initialized to
sqrt(head_dim); -1e9 replacing the diagonal attention logits; exact
(erf) GELU; layer norm + single linear head on the class token.

`use_spt=False` drops the shifted copies and `use_lsa=False` restores
plain sqrt(d_k)-scaled attention without masking; both off is the
vanilla baseline used in the ablation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

DIAGONALS = ((-1, -1), (1, -1), (-1, 1), (1, 1))
MASK_VALUE = -1.0e9
LN_EPS = 1.0e-6


@dataclass(frozen=True)
class ModelConfig:
    image_h: int = 32
    image_w: int = 32
    channels: int = 1
    patch: int = 8
    shift_px: int = 2
    dim: int = 32
    depth: int = 2
    heads: int = 2
    mlp_ratio: int = 4
    num_classes: int = 4
    use_spt: bool = True
    use_lsa: bool = True

    @property
    def shifts(self) -> int:
        return len(DIAGONALS) if self.use_spt else 0

    @property
    def n_tokens(self) -> int:
        return (self.image_h // self.patch) * (self.image_w // self.patch)

    @property
    def raw_dim(self) -> int:
        return self.patch * self.patch * self.channels * (self.shifts + 1)

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads


def shift_concat(x: torch.Tensor, shift_px: int) -> torch.Tensor:
    """(B, H, W, C) -> (B, H, W, 5C): original plus four zero-filled shifts."""
    parts = [x]
    h, w = x.shape[1], x.shape[2]
    for ux, uy in DIAGONALS:
        dx, dy = ux * shift_px, uy * shift_px
        out = torch.zeros_like(x)
        src_r = slice(max(0, -dy), min(h, h - dy))
        src_c = slice(max(0, -dx), min(w, w - dx))
        dst_r = slice(max(0, dy), min(h, h + dy))
        dst_c = slice(max(0, dx), min(w, w + dx))
        out[:, dst_r, dst_c] = x[:, src_r, src_c]
        parts.append(out)
    return torch.cat(parts, dim=3)


def patchify(x: torch.Tensor, patch: int) -> torch.Tensor:
    """(B, H, W, C) -> (B, N, P*P*C), patches row-major, (row, col, channel) flat."""
    b, h, w, c = x.shape
    gh, gw = h // patch, w // patch
    x = x.reshape(b, gh, patch, gw, patch, c).permute(0, 1, 3, 2, 4, 5)
    return x.reshape(b, gh * gw, patch * patch * c)


class Attention(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.heads = cfg.heads
        self.head_dim = cfg.head_dim
        self.use_lsa = cfg.use_lsa
        self.wq = nn.Linear(cfg.dim, cfg.dim)
        self.wk = nn.Linear(cfg.dim, cfg.dim)
        self.wv = nn.Linear(cfg.dim, cfg.dim)
        self.proj = nn.Linear(cfg.dim, cfg.dim)
        if cfg.use_lsa:
            self.temperature = nn.Parameter(torch.tensor(math.sqrt(cfg.head_dim)))

    def forward(self, x: torch.Tensor, trace: dict | None = None, prefix: str = ""):
        b, n, d = x.shape
        q = self.wq(x).reshape(b, n, self.heads, self.head_dim).transpose(1, 2)
        k = self.wk(x).reshape(b, n, self.heads, self.head_dim).transpose(1, 2)
        v = self.wv(x).reshape(b, n, self.heads, self.head_dim).transpose(1, 2)
        logits = q @ k.transpose(-2, -1)  # (b, heads, n, n)
        if self.use_lsa:
            logits = logits / self.temperature
            eye = torch.eye(n, dtype=torch.bool, device=x.device)
            logits = logits.masked_fill(eye, MASK_VALUE)
        else:
            logits = logits / math.sqrt(self.head_dim)
        scores = torch.softmax(logits, dim=-1)
        if trace is not None:
            # heads stacked along rows, engine trace layout
            trace[f"{prefix}.attn_scores"] = scores[0].reshape(self.heads * n, n)
        out = (scores @ v).transpose(1, 2).reshape(b, n, d)
        return self.proj(out)


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.dim, eps=LN_EPS)
        self.attn = Attention(cfg)
        self.ln2 = nn.LayerNorm(cfg.dim, eps=LN_EPS)
        self.mlp = nn.Sequential(
            nn.Linear(cfg.dim, cfg.mlp_ratio * cfg.dim),
            nn.GELU(),  # erf form
            nn.Linear(cfg.mlp_ratio * cfg.dim, cfg.dim),
        )

    def forward(self, x: torch.Tensor, trace: dict | None = None, prefix: str = ""):
        ln1 = self.ln1(x)
        attn = self.attn(ln1, trace=trace, prefix=prefix)
        res1 = x + attn
        ln2 = self.ln2(res1)
        mlp = self.mlp(ln2)
        out = res1 + mlp
        if trace is not None:
            trace[f"{prefix}.ln1"] = ln1[0]
            trace[f"{prefix}.msa_out"] = attn[0]
            trace[f"{prefix}.res1"] = res1[0]
            trace[f"{prefix}.ln2"] = ln2[0]
            trace[f"{prefix}.mlp_out"] = mlp[0]
            trace[f"{prefix}.out"] = out[0]
        return out


class ReferenceModel(nn.Module):
    """The trainable twin of the engine's inference graph."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.embed_ln = nn.LayerNorm(cfg.raw_dim, eps=LN_EPS)
        self.embed = nn.Linear(cfg.raw_dim, cfg.dim)
        self.cls_token = nn.Parameter(torch.zeros(cfg.dim))
        self.pos_embed = nn.Parameter(torch.zeros(cfg.n_tokens + 1, cfg.dim))
        self.layers = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.depth))
        self.head_ln = nn.LayerNorm(cfg.dim, eps=LN_EPS)
        self.head = nn.Linear(cfg.dim, cfg.num_classes)
        self.reset_parameters()

    def reset_parameters(self):
        for mod in self.modules():
            if isinstance(mod, nn.Linear):
                nn.init.trunc_normal_(mod.weight, std=0.02, a=-0.04, b=0.04)
                nn.init.zeros_(mod.bias)
        nn.init.trunc_normal_(self.cls_token, std=0.02, a=-0.04, b=0.04)
        nn.init.zeros_(self.pos_embed)

    def forward(self, images: torch.Tensor, trace: dict | None = None) -> torch.Tensor:
        """images: (B, H, W, C) float32 -> logits (B, classes)."""
        cfg = self.cfg
        x = shift_concat(images, cfg.shift_px) if cfg.use_spt else images
        tokens = patchify(x, cfg.patch)
        z = self.embed(self.embed_ln(tokens))
        cls = self.cls_token.expand(z.shape[0], 1, -1)
        z = torch.cat([cls, z], dim=1) + self.pos_embed
        if trace is not None:
            trace["embed"] = z[0]
        for i, layer in enumerate(self.layers):
            z = layer(z, trace=trace, prefix=f"layer{i}")
        zn = self.head_ln(z)
        logits = self.head(zn[:, 0])
        if trace is not None:
            trace["head_ln"] = zn[0]
            trace["logits"] = logits[0:1]
        return logits

    def named_export_tensors(self):
        """(name, tensor) pairs in the weight-container order and layout.

        Linear weights are transposed to the container's input-major
        (in, out) convention.
        """
        if not (self.cfg.use_spt and self.cfg.use_lsa):
            raise ValueError("only the full SPT+LSA model matches the container schema")
        yield "embed.ln.gamma", self.embed_ln.weight
        yield "embed.ln.beta", self.embed_ln.bias
        yield "embed.linear.weight", self.embed.weight.T
        yield "embed.linear.bias", self.embed.bias
        yield "cls_token", self.cls_token
        yield "pos_embed", self.pos_embed
        for i, layer in enumerate(self.layers):
            p = f"layer{i}"
            yield f"{p}.ln1.gamma", layer.ln1.weight
            yield f"{p}.ln1.beta", layer.ln1.bias
            yield f"{p}.attn.wq", layer.attn.wq.weight.T
            yield f"{p}.attn.bq", layer.attn.wq.bias
            yield f"{p}.attn.wk", layer.attn.wk.weight.T
            yield f"{p}.attn.bk", layer.attn.wk.bias
            yield f"{p}.attn.wv", layer.attn.wv.weight.T
            yield f"{p}.attn.bv", layer.attn.wv.bias
            yield f"{p}.attn.temperature", layer.attn.temperature
            yield f"{p}.attn.proj.weight", layer.attn.proj.weight.T
            yield f"{p}.attn.proj.bias", layer.attn.proj.bias
            yield f"{p}.ln2.gamma", layer.ln2.weight
            yield f"{p}.ln2.beta", layer.ln2.bias
            yield f"{p}.mlp.w1", layer.mlp[0].weight.T
            yield f"{p}.mlp.b1", layer.mlp[0].bias
            yield f"{p}.mlp.w2", layer.mlp[2].weight.T
            yield f"{p}.mlp.b2", layer.mlp[2].bias
        yield "head.ln.gamma", self.head_ln.weight
        yield "head.ln.beta", self.head_ln.bias
        yield "head.weight", self.head.weight.T
        yield "head.bias", self.head.bias

    def load_export_tensors(self, tensors: dict) -> None:
        """Inverse of named_export_tensors (container layout in)."""
        with torch.no_grad():
            for name, param in self.named_export_tensors():
                src = torch.as_tensor(tensors[name], dtype=param.dtype)
                param.copy_(src.reshape(param.shape))

    def n_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())


def build_reference_model(cfg: ModelConfig, seed: int = 0) -> ReferenceModel:
    """Deterministically initialized model for a config."""
    torch.manual_seed(seed)
    return ReferenceModel(cfg)
