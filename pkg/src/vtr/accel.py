"""Functional-and-timing simulator of the block-wise accelerator.

Two units are modeled. The HPPU is a grid of p_h head-compute units
(HCUs), each a p_t x p_c mesh of processing elements; every PE is a
p_pe x p_pe systolic array that multiplies one b x b tile pair per pass.
The ECU is an identically sized element-wise unit evaluating
f(A * B + C) with f in {identity, gelu, exp}. Stages execute
sequentially; heads (natural or fictitious) are assigned to HCUs
round-robin in waves of p_h, a wave costing the maximum over its
members.

Cost model:
  tile pass          ideal: b^3 / p_pe^2 cycles; fill-drain adds 2*p_pe
  hppu group         ceil(output tiles / (p_t*p_c)) * k_blocks * tile pass
  ecu / copy / micro ceil(padded elements / (p_h*p_t*p_c*p_pe^2))

Functional results of HPPU DBMMs and ECU ops are bit-identical to the
tensor-core dbmm/ewise_ref they wrap; the end-to-end pass tracks the
reference engine to float32 reordering tolerance. Row-max, sqrt and
division have no public ECU opcode; they are ECU-class micro-ops costed
at the element-op rate and reported as their own stages (see report
notes). Buffer traffic is reported per stage but never timed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import BlockSizeError, ConfigError, ShapeError
from .matrix import BlockedMatrix, BlockOrder, dbmm, ewise_ref, from_blocked, to_blocked
from .model import LN_EPS, VtrConfig, WeightSet, count_macs
from .spt import spt_transform, tokenize

COST_MODELS = ("ideal", "fill-drain")

_SIM_NOTES = [
    "softmax lowered as ECU scale+mask, ECU-class row-max, ECU exp, "
    "HPPU multiply-by-ones row-sum, ECU-class row division",
    "layer norm lowered as HPPU multiply-by-ones sums with ECU scaling, "
    "centering, squaring, sqrt, division and affine stages",
    "host-side shift/concatenate/tokenize and tile re-packing between "
    "stages are not timed; buffer traffic is reported, not timed",
]


@dataclass(frozen=True)
class AccelConfig:
    """Accelerator geometry and clock."""

    p_h: int = 4
    p_t: int = 12
    p_c: int = 2
    p_pe: int = 8
    block: int = 16
    clock_hz: float = 300e6
    cost_model: str = "ideal"

    def __post_init__(self):
        for name in ("p_h", "p_t", "p_c", "p_pe", "block"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.block % self.p_pe:
            raise ConfigError(f"block {self.block} must be a multiple of p_pe {self.p_pe}")
        if self.clock_hz <= 0:
            raise ConfigError(f"clock_hz must be positive, got {self.clock_hz}")
        if self.cost_model not in COST_MODELS:
            raise ConfigError(f"cost_model must be one of {COST_MODELS}, got {self.cost_model!r}")

    @property
    def macs_per_cycle(self) -> int:
        return self.p_h * self.p_t * self.p_c * self.p_pe**2

    @property
    def lanes(self) -> int:
        return self.macs_per_cycle

    def tile_pass_cycles(self) -> int:
        cycles = self.block**3 // self.p_pe**2
        if self.cost_model == "fill-drain":
            cycles += 2 * self.p_pe
        return cycles


@dataclass
class StageRecord:
    stage: str
    unit: str  # HPPU | ECU
    kind: str  # dbmm | aggregate | ewise | copy | micro
    cycles: int
    macs: int = 0
    elem_ops: int = 0
    bytes_in: int = 0
    bytes_out: int = 0


@dataclass
class SimReport:
    """Per-stage cycle accounting of one simulated forward pass."""

    records: list[StageRecord]
    clock_hz: float
    peak_macs_per_cycle: int
    analytic_macs: int
    notes: list[str] = field(default_factory=list)

    @property
    def total_cycles(self) -> int:
        return sum(r.cycles for r in self.records)

    @property
    def latency_s(self) -> float:
        return self.total_cycles / self.clock_hz

    @property
    def hppu_mac_total(self) -> int:
        return sum(r.macs for r in self.records if r.kind == "dbmm")

    @property
    def utilization(self) -> float:
        return self.analytic_macs / (self.peak_macs_per_cycle * self.total_cycles)

    def to_json(self) -> str:
        cum = 0
        stages = []
        for r in self.records:
            cum += r.cycles
            stages.append(
                {
                    "stage": r.stage,
                    "unit": r.unit,
                    "kind": r.kind,
                    "cycles": r.cycles,
                    "macs": r.macs,
                    "elem_ops": r.elem_ops,
                    "bytes_in": r.bytes_in,
                    "bytes_out": r.bytes_out,
                    "cumulative_latency_s": cum / self.clock_hz,
                }
            )
        doc = {
            "clock_hz": self.clock_hz,
            "peak_macs_per_cycle": self.peak_macs_per_cycle,
            "analytic_macs": self.analytic_macs,
            "hppu_mac_total": self.hppu_mac_total,
            "total_cycles": self.total_cycles,
            "latency_s": self.latency_s,
            "utilization": self.utilization,
            "notes": self.notes,
            "stages": stages,
        }
        return json.dumps(doc, indent=2)

    def to_text(self) -> str:
        lines = [
            f"clock            {self.clock_hz / 1e6:.1f} MHz",
            f"peak             {self.peak_macs_per_cycle} MACs/cycle "
            f"({self.peak_macs_per_cycle * self.clock_hz / 1e12:.3f} TMAC/s)",
            f"analytic MACs    {self.analytic_macs}",
            f"HPPU MACs        {self.hppu_mac_total}",
            f"total cycles     {self.total_cycles}",
            f"modeled latency  {self.latency_s * 1e3:.4f} ms",
            f"utilization      {self.utilization:.4f}",
            "",
            f"{'stage':<28} {'unit':<5} {'kind':<9} {'cycles':>10} {'macs':>12} {'elem_ops':>10}",
        ]
        for r in self.records:
            lines.append(
                f"{r.stage:<28} {r.unit:<5} {r.kind:<9} {r.cycles:>10} {r.macs:>12} {r.elem_ops:>10}"
            )
        for n in self.notes:
            lines.append(f"note: {n}")
        return "\n".join(lines)


def peak_throughput(acfg: AccelConfig) -> float:
    """Peak multiply-accumulates per second."""
    return acfg.macs_per_cycle * acfg.clock_hz


def latency_lower_bound(mcfg: VtrConfig, acfg: AccelConfig) -> float:
    """Compute-roofline bound: analytic MACs over peak throughput."""
    return count_macs(mcfg) / peak_throughput(acfg)


def map_fictitious_heads(w: BlockedMatrix, p_h: int) -> list[int]:
    """Split a weight matrix's column blocks into at most p_h balanced groups."""
    if w.col_blocks < 1:
        raise ShapeError("operand has no column blocks")
    groups = min(p_h, w.col_blocks)
    base, rem = divmod(w.col_blocks, groups)
    return [base + 1] * rem + [base] * (groups - rem)


def _padded_elems(rows: int, cols: int, b: int) -> int:
    return -(-rows // b) * b * -(-cols // b) * b


def _wave_total(per_group_cycles: list[int], p_h: int) -> int:
    total = 0
    for i in range(0, len(per_group_cycles), p_h):
        total += max(per_group_cycles[i : i + p_h])
    return total


def _group_cycles(out_tiles: int, k_blocks: int, acfg: AccelConfig) -> int:
    waves_in_hcu = -(-out_tiles // (acfg.p_t * acfg.p_c))
    return waves_in_hcu * k_blocks * acfg.tile_pass_cycles()


def hppu_dbmm(
    a: BlockedMatrix, w: BlockedMatrix, head_boundaries: list[int], acfg: AccelConfig
) -> tuple[BlockedMatrix, int]:
    """Block-wise product on the HPPU with a per-head column partition.

    head_boundaries gives each head group's width in column blocks; the
    groups map round-robin onto HCUs in waves of p_h. The functional
    result is exactly tensor-core dbmm.
    """
    if a.block_size != acfg.block or w.block_size != acfg.block:
        raise BlockSizeError(
            f"operands blocked at {a.block_size}/{w.block_size}, config block {acfg.block}"
        )
    if any(g < 1 for g in head_boundaries) or sum(head_boundaries) != w.col_blocks:
        raise ShapeError(
            f"head boundaries {head_boundaries} do not partition {w.col_blocks} column blocks"
        )
    result = dbmm(a, w)
    cycles = _wave_total(
        [_group_cycles(a.row_blocks * g, a.col_blocks, acfg) for g in head_boundaries],
        acfg.p_h,
    )
    return result, cycles


def ecu_op(f: str, a, acfg: AccelConfig, mul_in=None, add_in=None) -> tuple[np.ndarray, int]:
    """Element-wise f(a * mul_in + add_in) on the ECU; result matches ewise_ref."""
    a = np.asarray(a, dtype=np.float32)
    if a.ndim != 2 or a.size == 0:
        raise ShapeError(f"ECU operand must be a non-empty matrix, got shape {a.shape}")
    out = ewise_ref(f, a, mul_in=mul_in, add_in=add_in)
    cycles = -(-_padded_elems(a.shape[0], a.shape[1], acfg.block) // acfg.lanes)
    return out, cycles


class _Scheduler:
    """Builds the stage list while computing the functional forward pass."""

    def __init__(self, acfg: AccelConfig):
        self.acfg = acfg
        self.records: list[StageRecord] = []

    def _padded(self, m: np.ndarray) -> int:
        return _padded_elems(m.shape[0], m.shape[1], self.acfg.block)

    def ecu(self, stage: str, f: str, a, mul_in=None, add_in=None) -> np.ndarray:
        out, cycles = ecu_op(f, a, self.acfg, mul_in=mul_in, add_in=add_in)
        n_ops = self._padded(out)
        n_in = n_ops * (1 + (mul_in is not None) + (add_in is not None))
        self.records.append(
            StageRecord(stage, "ECU", "ewise", cycles, elem_ops=n_ops,
                        bytes_in=4 * n_in, bytes_out=4 * n_ops)
        )
        return out

    def micro(self, stage: str, fn, a: np.ndarray) -> np.ndarray:
        """ECU-class micro-op (row-max / sqrt / division), costed per element."""
        out = np.asarray(fn(a), dtype=np.float32)
        n_ops = self._padded(a)
        cycles = -(-n_ops // self.acfg.lanes)
        self.records.append(
            StageRecord(stage, "ECU", "micro", cycles, elem_ops=n_ops,
                        bytes_in=4 * n_ops, bytes_out=4 * self._padded(np.atleast_2d(out)))
        )
        return out

    def copy(self, stage: str, elems_padded: int) -> None:
        cycles = -(-elems_padded // self.acfg.lanes)
        self.records.append(
            StageRecord(stage, "ECU", "copy", cycles, elem_ops=elems_padded,
                        bytes_in=4 * elems_padded, bytes_out=4 * elems_padded)
        )

    def dbmm_weight(self, stage: str, a: np.ndarray, w: np.ndarray, macs: int) -> np.ndarray:
        """Activation x weight DBMM, columns split into fictitious heads."""
        ab = to_blocked(a, self.acfg.block, BlockOrder.ROW_MAJOR)
        wb = to_blocked(w, self.acfg.block, BlockOrder.COL_MAJOR)
        out, cycles = hppu_dbmm(ab, wb, map_fictitious_heads(wb, self.acfg.p_h), self.acfg)
        self.records.append(
            StageRecord(stage, "HPPU", "dbmm", cycles, macs=macs,
                        bytes_in=4 * (ab.blocks.size + wb.blocks.size),
                        bytes_out=4 * out.blocks.size)
        )
        return from_blocked(out)

    def dbmm_heads(self, stage: str, products: list[tuple[np.ndarray, np.ndarray]], macs: int) -> list[np.ndarray]:
        """Per-head activation x activation DBMMs, one head per HCU per wave.

        Right operands are re-laid-out to block-column-major on the fly;
        that copy is costed at the ECU element rate.
        """
        b = self.acfg.block
        relayout = 0
        per_head_cycles = []
        outs = []
        bytes_in = bytes_out = 0
        for a, w in products:
            ab = to_blocked(a, b, BlockOrder.ROW_MAJOR)
            wb = to_blocked(w, b, BlockOrder.COL_MAJOR)
            relayout += wb.blocks.size
            out = dbmm(ab, wb)
            per_head_cycles.append(_group_cycles(out.row_blocks * out.col_blocks, ab.col_blocks, self.acfg))
            bytes_in += 4 * (ab.blocks.size + wb.blocks.size)
            bytes_out += 4 * out.blocks.size
            outs.append(from_blocked(out))
        self.copy(f"{stage}.relayout", relayout)
        cycles = _wave_total(per_head_cycles, self.acfg.p_h)
        self.records.append(
            StageRecord(stage, "HPPU", "dbmm", cycles, macs=macs,
                        bytes_in=bytes_in, bytes_out=bytes_out)
        )
        return outs

    def rowsum(self, stage: str, x: np.ndarray) -> np.ndarray:
        """HPPU multiply-by-ones aggregation; counted as element ops, not MACs."""
        b = self.acfg.block
        xb = to_blocked(x, b, BlockOrder.ROW_MAJOR)
        ones = to_blocked(np.ones((x.shape[1], 1), dtype=np.float32), b, BlockOrder.COL_MAJOR)
        out, cycles = hppu_dbmm(xb, ones, [1], self.acfg)
        self.records.append(
            StageRecord(stage, "HPPU", "aggregate", cycles, elem_ops=x.shape[0] * x.shape[1],
                        bytes_in=4 * xb.blocks.size, bytes_out=4 * out.blocks.size)
        )
        return from_blocked(out)

    def layer_norm(self, stage: str, x: np.ndarray, gamma, beta) -> np.ndarray:
        n, d = x.shape
        inv_d = np.full((n, 1), 1.0 / d, dtype=np.float32)
        mu = self.ecu(f"{stage}.mean", "identity", self.rowsum(f"{stage}.sum", x), mul_in=inv_d)
        centered = self.ecu(f"{stage}.center", "identity", x, add_in=np.broadcast_to(-mu, x.shape))
        sq = self.ecu(f"{stage}.square", "identity", centered, mul_in=centered)
        var = self.ecu(f"{stage}.var", "identity", self.rowsum(f"{stage}.sqsum", sq), mul_in=inv_d)
        std = self.micro(f"{stage}.std", lambda v: np.sqrt(v + LN_EPS), var)
        xn = self.micro(f"{stage}.norm", lambda m: m / std, centered)
        g = np.broadcast_to(np.asarray(gamma, dtype=np.float32), x.shape)
        bta = np.broadcast_to(np.asarray(beta, dtype=np.float32), x.shape)
        return self.ecu(f"{stage}.affine", "identity", xn, mul_in=g, add_in=bta)


def sim_layer_norm(x, gamma, beta, acfg: AccelConfig) -> tuple[np.ndarray, int]:
    """Layer norm decomposed onto HPPU aggregations and ECU element stages.

    Returns the normalized matrix and the summed cycle count of the
    sub-ops. The result tracks model.layer_norm to float32 summation
    reordering noise: a few ulp on the row std, i.e. max-abs error of a
    few e-6 at O(1) data scale.
    """
    sched = _Scheduler(acfg)
    out = sched.layer_norm("ln", np.asarray(x, dtype=np.float32), gamma, beta)
    return out, sum(r.cycles for r in sched.records)


def simulate_forward(
    img, w: WeightSet, mcfg: VtrConfig, acfg: AccelConfig | None = None
) -> tuple[np.ndarray, SimReport]:
    """Run one image through the accelerator model.

    Returns logits (within 1e-4 relative of the reference engine) and the
    SimReport enumerating every HPPU/ECU primitive with its cycles.
    """
    if acfg is None:
        acfg = AccelConfig()
    img = np.ascontiguousarray(img, dtype=np.float32)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.shape != (mcfg.image_h, mcfg.image_w, mcfg.channels):
        raise ShapeError(
            f"image shape {img.shape} != ({mcfg.image_h}, {mcfg.image_w}, {mcfg.channels})"
        )
    sched = _Scheduler(acfg)
    s, d, dk = mcfg.seq_len, mcfg.dim, mcfg.head_dim

    # host side: shift, concatenate, tokenize (untimed)
    tokens = tokenize(spt_transform(img, mcfg.shift_spec()), mcfg.patch).data

    x = sched.layer_norm("embed.ln", tokens, w.embed_ln_gamma, w.embed_ln_beta)
    x = sched.dbmm_weight("embed.linear", x, w.embed_w, macs=mcfg.n_tokens * mcfg.raw_dim * d)
    x = sched.ecu("embed.bias", "identity", x, add_in=np.broadcast_to(w.embed_b, x.shape))
    z = np.concatenate([w.cls_token[None, :], x], axis=0)
    z = sched.ecu("embed.pos", "identity", z, add_in=w.pos_embed)

    for i, lw in enumerate(w.layers):
        p = f"layer{i}"
        ln1 = sched.layer_norm(f"{p}.ln1", z, lw.ln1_gamma, lw.ln1_beta)
        qkv = {}
        for tag, wm, bm in (("q", lw.wq, lw.bq), ("k", lw.wk, lw.bk), ("v", lw.wv, lw.bv)):
            y = sched.dbmm_weight(f"{p}.attn.w{tag}", ln1, wm, macs=s * d * d)
            qkv[tag] = sched.ecu(f"{p}.attn.b{tag}", "identity", y, add_in=np.broadcast_to(bm, y.shape))
        heads = [slice(h * dk, (h + 1) * dk) for h in range(mcfg.heads)]
        logits_h = sched.dbmm_heads(
            f"{p}.attn.qk",
            [(qkv["q"][:, sl], np.ascontiguousarray(qkv["k"][:, sl].T)) for sl in heads],
            macs=s * s * d,
        )
        inv_lam = np.full((s, s), 1.0 / np.float32(lw.temperature), dtype=np.float32)
        sentinel = np.zeros((s, s), dtype=np.float32)
        np.fill_diagonal(sentinel, np.float32(-1e9))
        scores = []
        for h, a in enumerate(logits_h):
            masked = sched.ecu(f"{p}.attn.h{h}.mask", "identity", a, mul_in=inv_lam, add_in=sentinel)
            rowmax = sched.micro(f"{p}.attn.h{h}.rowmax", lambda m: m.max(axis=1, keepdims=True), masked)
            e = sched.ecu(f"{p}.attn.h{h}.exp", "exp", masked, add_in=np.broadcast_to(-rowmax, masked.shape))
            rsum = sched.rowsum(f"{p}.attn.h{h}.rowsum", e)
            scores.append(sched.micro(f"{p}.attn.h{h}.div", lambda m, srow=rsum: m / srow, e))
        av = sched.dbmm_heads(
            f"{p}.attn.sv",
            [(scores[h], qkv["v"][:, sl]) for h, sl in enumerate(heads)],
            macs=s * s * d,
        )
        o = np.concatenate(av, axis=1)
        o = sched.dbmm_weight(f"{p}.attn.proj", o, lw.proj_w, macs=s * d * d)
        o = sched.ecu(f"{p}.attn.proj.bias", "identity", o, add_in=np.broadcast_to(lw.proj_b, o.shape))
        z = sched.ecu(f"{p}.res1", "identity", z, add_in=o)
        ln2 = sched.layer_norm(f"{p}.ln2", z, lw.ln2_gamma, lw.ln2_beta)
        h1 = sched.dbmm_weight(f"{p}.mlp.w1", ln2, lw.mlp_w1, macs=s * d * mcfg.hidden_dim)
        h1 = sched.ecu(f"{p}.mlp.b1", "identity", h1, add_in=np.broadcast_to(lw.mlp_b1, h1.shape))
        h1 = sched.ecu(f"{p}.mlp.gelu", "gelu", h1)
        h2 = sched.dbmm_weight(f"{p}.mlp.w2", h1, lw.mlp_w2, macs=s * mcfg.hidden_dim * d)
        h2 = sched.ecu(f"{p}.mlp.b2", "identity", h2, add_in=np.broadcast_to(lw.mlp_b2, h2.shape))
        z = sched.ecu(f"{p}.res2", "identity", z, add_in=h2)

    zn = sched.layer_norm("head.ln", z, w.head_ln_gamma, w.head_ln_beta)
    cls_row = np.ascontiguousarray(zn[0:1])
    y = sched.dbmm_weight("head.linear", cls_row, w.head_w, macs=d * mcfg.num_classes)
    y = sched.ecu("head.bias", "identity", y, add_in=w.head_b[None, :])
    logits = y[0]

    report = SimReport(
        records=sched.records,
        clock_hz=acfg.clock_hz,
        peak_macs_per_cycle=acfg.macs_per_cycle,
        analytic_macs=count_macs(mcfg),
        notes=list(_SIM_NOTES),
    )
    return logits, report
