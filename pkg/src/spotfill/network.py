"""The completion network: residual MLP backbone, self-guided relation stages,
dual attention stages, and the coarse-to-fine point fusion decoder.

Resolution schedule. Levels N1 > N2 > N3 are farthest-point subsets of the
input; every level-m feature width obeys c_m = 3 * out_n / N_m, so that a
level's features can be reshaped into the coordinates it is responsible for.
Global spot bundles have shapes [N3, 1, c3] -> [N2, S2, c2] -> [N1, S1, c1]
with S2 = N2/N3 and S1 = out_n/N1.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .attention import AttentionWeights, Pdma, PdmaGroupConfig, local_augment_attention, vanilla_attention
from .geometry import NeighborIndex, ball_query, farthest_point_sample
from .tensor import (
    LinearLayer,
    ShapeError,
    Tensor,
    concat,
    gather_rows,
    max_pool,
    radial_tanh,
    relu,
    repeat,
    reshape,
)


@dataclass
class ModelConfig:
    """Resolutions, widths, head counts and ablation switches."""

    input_n: int = 512
    level_ns: tuple[int, int, int] = (512, 128, 32)
    out_n: int = 2048
    base_c: int = 16
    neighbor_s: int = 16
    radii: tuple[float, float] | None = None
    pdma_scales: tuple[int, ...] = (2, 4)
    heads: int = 2
    use_pla: bool = True
    use_pdma: bool = True
    pdma_dense: bool = True
    pdma_vanilla: bool = False
    cd_squared: bool = True

    def validate(self) -> None:
        n1, n2, n3 = self.level_ns
        if not (n1 > n2 > n3 >= 1):
            raise ValueError(f"levels must decrease: {self.level_ns}")
        for n in self.level_ns:
            if self.out_n % n != 0:
                raise ValueError(f"out_n {self.out_n} not divisible by level {n}")
        if n2 % n3 != 0:
            raise ValueError(f"N2 {n2} must be a multiple of N3 {n3}")
        s2 = n2 // n3
        if n1 % (n2 * s2) != 0:
            raise ValueError(f"N1 {n1} must be a multiple of N2*S2 {n2 * s2}")
        if self.input_n < 1 or self.base_c < 1 or self.neighbor_s < 1 or self.heads < 1:
            raise ValueError("input_n, base_c, neighbor_s and heads must be positive")
        if not self.pdma_scales or any(s <= 0 for s in self.pdma_scales):
            raise ValueError(f"bad pdma scales {self.pdma_scales}")
        if self.radii is not None and any(r <= 0 for r in self.radii):
            raise ValueError(f"radii must be positive, got {self.radii}")

    # level m in {1,2,3}
    def level_c(self, m: int) -> int:
        return 3 * self.out_n // self.level_ns[m - 1]

    def level_s(self, m: int) -> int:
        if m == 3:
            return 1
        if m == 2:
            return self.level_ns[1] // self.level_ns[2]
        return self.out_n // self.level_ns[0]

    def level_radius(self, stage: int) -> float:
        """Ball-query radius for grouping stage 1 (levels 1->2) or 2 (2->3)."""
        if self.radii is not None:
            return self.radii[stage - 1]
        coarse_n = self.level_ns[stage]
        return 2.0 * np.sqrt(1.0 / coarse_n)


def paper_scale_config() -> ModelConfig:
    """Full-size configuration; used for shape regression only, never trained here."""
    return ModelConfig(input_n=2048, level_ns=(2048, 512, 128), out_n=16384,
                       base_c=64, neighbor_s=48, heads=4)


def micro_config() -> ModelConfig:
    """Tiny configuration for finite-difference checks of the whole graph."""
    return ModelConfig(input_n=16, level_ns=(16, 8, 4), out_n=32,
                       base_c=4, neighbor_s=4, heads=2)


@dataclass
class SpotSet:
    """Per-resolution bundle: coarse points, their features, and the neighbor
    index into the next-finer level (absent at the finest level)."""

    points: Tensor
    feats: Tensor
    neighbors: NeighborIndex | None = None


@dataclass
class GeometryCache:
    """Input-only geometry, reusable across forward passes on the same cloud."""

    points: np.ndarray        # canonicalized input [N, 3]
    fps_seq: np.ndarray       # greedy order, prefixes give every level
    nbr1: NeighborIndex       # level-2 queries into level 1
    nbr2: NeighborIndex       # level-3 queries into level 2


_RESAMPLE_SEED = 0x5EED


def canonicalize_input(points: np.ndarray, n_min: int) -> np.ndarray:
    """Resample (with repetition, fixed seed) up to n_min, then sort rows
    lexicographically so downstream sampling ignores input ordering."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"input cloud must be [N,3], got {pts.shape}")
    if pts.shape[0] < n_min:
        rng = np.random.default_rng(_RESAMPLE_SEED)
        extra = rng.integers(0, pts.shape[0], size=n_min - pts.shape[0])
        pts = np.concatenate([pts, pts[extra]], axis=0)
    order = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0]))
    return np.ascontiguousarray(pts[order])


def prepare_geometry(cfg: ModelConfig, points: np.ndarray) -> GeometryCache:
    """FPS levels and both grouping neighborhoods for one input cloud."""
    n1, n2, n3 = cfg.level_ns
    pts = canonicalize_input(points, n1)
    seq = farthest_point_sample(pts, n1)
    p1 = pts[seq]
    p2 = p1[:n2]
    p3 = p1[:n3]
    nbr1 = ball_query(p2, p1, cfg.level_radius(1), cfg.neighbor_s)
    nbr2 = ball_query(p3, p2, cfg.level_radius(2), cfg.neighbor_s)
    return GeometryCache(points=pts, fps_seq=seq, nbr1=nbr1, nbr2=nbr2)


class ResMlp:
    """Per-point linear+ReLU stack whose same-width layer outputs are summed.

    With widths [w, w] this is h1 + h2 (plus the input when widths match it),
    the two-layer residual block used everywhere in this network.
    """

    def __init__(self, rng: np.random.Generator, c_in: int, widths: tuple[int, ...]):
        if not widths:
            raise ValueError("ResMlp needs at least one layer")
        self.c_in = c_in
        self.widths = tuple(widths)
        self.layers = []
        prev = c_in
        for w in widths:
            self.layers.append(LinearLayer(rng, prev, w))
            prev = w

    def __call__(self, x: Tensor) -> Tensor:
        outs = []
        h = x
        for layer in self.layers:
            h = relu(layer(h))
            outs.append(h)
        final_w = self.widths[-1]
        total = None
        if self.c_in == final_w:
            total = x
        for h, w in zip(outs, self.widths):
            if w == final_w:
                total = h if total is None else total + h
        return total

    def named_parameters(self, prefix: str):
        for i, layer in enumerate(self.layers):
            yield from layer.named_parameters(f"{prefix}.l{i}")


def res_mlp(rng_or_block, x: Tensor, widths: tuple[int, ...] | None = None) -> Tensor:
    """Functional form: res_mlp(block, x) or res_mlp(rng, x, widths)."""
    if isinstance(rng_or_block, ResMlp):
        return rng_or_block(x)
    block = ResMlp(rng_or_block, x.data.shape[-1], tuple(widths))
    return block(x)


class SgrStage:
    """Self-guided relation: aggregate fine-level features around each coarse
    point into the coarse level's spot features.

    Pipeline: lift fine feats and map coarse feats to a shared width c_mlp,
    group fine rows around coarse points, concat [grouped, rel-coords,
    coarse feats, coarse coords], run the residual MLP, max-pool over the
    neighborhood, and project to the coarse level's spot width.
    """

    def __init__(self, rng: np.random.Generator, fine_c: int, coarse_c: int,
                 c_mlp: int, out_c: int):
        self.c_mlp = c_mlp
        self.fine_lift = LinearLayer(rng, fine_c, c_mlp)
        self.coarse_map = LinearLayer(rng, coarse_c, c_mlp)
        cat_w = 2 * c_mlp + 6
        self.block = ResMlp(rng, cat_w, (cat_w, 2 * c_mlp, 2 * c_mlp, 2 * c_mlp))
        self.final = LinearLayer(rng, 2 * c_mlp, out_c)

    def __call__(self, fine_points: Tensor, fine_feats: Tensor, coarse_points: Tensor,
                 coarse_feats: Tensor, neighbors: NeighborIndex) -> SpotSet:
        s = neighbors.s
        n_coarse = coarse_points.data.shape[0]
        lifted = relu(self.fine_lift(fine_feats))
        mapped = relu(self.coarse_map(coarse_feats))
        grouped = gather_rows(lifted, neighbors.indices)              # [Nc, S, c_mlp]
        rel = gather_rows(fine_points, neighbors.indices) - repeat(
            reshape(coarse_points, (n_coarse, 1, 3)), s, axis=1)
        ctr_feats = repeat(reshape(mapped, (n_coarse, 1, self.c_mlp)), s, axis=1)
        ctr_coords = repeat(reshape(coarse_points, (n_coarse, 1, 3)), s, axis=1)
        cat = concat([grouped, rel, ctr_feats, ctr_coords], axis=2)
        pooled = max_pool(self.block(cat), axis=1)                    # [Nc, 2*c_mlp]
        feats = relu(self.final(pooled))
        return SpotSet(points=coarse_points, feats=feats, neighbors=neighbors)

    def named_parameters(self, prefix: str):
        yield from self.fine_lift.named_parameters(f"{prefix}.fine_lift")
        yield from self.coarse_map.named_parameters(f"{prefix}.coarse_map")
        yield from self.block.named_parameters(f"{prefix}.block")
        yield from self.final.named_parameters(f"{prefix}.final")


class DraStage:
    """Parallel local attention (over grouped finer spots) and global grouped
    attention (over the coarse spots), summed and fused by one MLP layer.

    Ablation switches can drop either branch or swap the grouped attention
    for a plain multi-head transformer block.
    """

    def __init__(self, rng: np.random.Generator, cfg: ModelConfig, fine_c: int, coarse_c: int):
        self.cfg = cfg
        att_c = cfg.base_c * cfg.heads
        if cfg.use_pla:
            self.grouped_mlp = LinearLayer(rng, fine_c, fine_c)
            self.pla_attn = AttentionWeights.create(rng, coarse_c, fine_c, att_c, cfg.heads)
            self.pla_back = LinearLayer(rng, att_c, coarse_c)
        if cfg.use_pdma:
            if cfg.pdma_vanilla:
                self.alt_attn = AttentionWeights.create(rng, coarse_c, coarse_c, att_c, cfg.heads)
                self.alt_back = LinearLayer(rng, att_c, coarse_c)
            else:
                self.pdma = Pdma(rng, coarse_c, coarse_c,
                                 PdmaGroupConfig(cfg.base_c, tuple(cfg.pdma_scales), cfg.heads),
                                 dense=cfg.pdma_dense)
        self.fuse = LinearLayer(rng, coarse_c, coarse_c)

    def __call__(self, spots_fine: SpotSet, spots_coarse: SpotSet) -> SpotSet:
        cfg = self.cfg
        feats = spots_coarse.feats
        branches = []
        if cfg.use_pla:
            grouped = relu(self.grouped_mlp(gather_rows(spots_fine.feats,
                                                        spots_coarse.neighbors.indices)))
            att = local_augment_attention(feats, grouped, self.pla_attn)
            branches.append(self.pla_back(att) + feats)
        if cfg.use_pdma:
            if cfg.pdma_vanilla:
                branches.append(relu(self.alt_back(vanilla_attention(feats, self.alt_attn))))
            else:
                branches.append(self.pdma(feats))
        combined = feats
        if branches:
            combined = branches[0]
            for b in branches[1:]:
                combined = combined + b
        fused = relu(self.fuse(combined))
        return SpotSet(points=spots_coarse.points, feats=fused,
                       neighbors=spots_coarse.neighbors)

    def named_parameters(self, prefix: str):
        cfg = self.cfg
        if cfg.use_pla:
            yield from self.grouped_mlp.named_parameters(f"{prefix}.grouped_mlp")
            yield from self.pla_attn.named_parameters(f"{prefix}.pla")
            yield from self.pla_back.named_parameters(f"{prefix}.pla_back")
        if cfg.use_pdma:
            if cfg.pdma_vanilla:
                yield from self.alt_attn.named_parameters(f"{prefix}.alt")
                yield from self.alt_back.named_parameters(f"{prefix}.alt_back")
            else:
                yield from self.pdma.named_parameters(f"{prefix}.pdma")
        yield from self.fuse.named_parameters(f"{prefix}.fuse")


class SpotRecovery:
    """Coarsest stage: spot features -> skeleton coordinates plus the first
    global spot bundle [N3, 1, c3]."""

    def __init__(self, rng: np.random.Generator, c3: int):
        self.c3 = c3
        self.pc_head = LinearLayer(rng, c3, 3)
        self.feat_head = LinearLayer(rng, c3, c3)

    def __call__(self, spots3: SpotSet) -> tuple[Tensor, Tensor]:
        n3 = spots3.feats.data.shape[0]
        pc = radial_tanh(self.pc_head(spots3.feats))
        g = reshape(relu(self.feat_head(spots3.feats)), (n3, 1, self.c3))
        return pc, g

    def named_parameters(self, prefix: str):
        yield from self.pc_head.named_parameters(f"{prefix}.pc")
        yield from self.feat_head.named_parameters(f"{prefix}.feat")


class PointFusion:
    """One decoder stage: a complete path that turns this level's spots into
    coordinates, and a refine path that reshapes the coarser global spots up
    to this resolution; both fuse into the new global spot bundle.

    g_m = mlp(concat[ mlp(r(mlp(r(g_{m+1})))), f, PC_m ]) reshaped to
    [N_m, S_m, c_m], with f the intermediate features of the complete path.
    """

    def __init__(self, rng: np.random.Generator, n_m: int, s_m: int, c_m: int,
                 n_coarse: int, s_coarse: int, c_coarse: int):
        self.n_m, self.s_m, self.c_m = n_m, s_m, c_m
        self.rows_in = n_coarse * s_coarse
        if n_m % self.rows_in != 0:
            raise ShapeError(
                f"fusion schedule mismatch: N_m {n_m} not a multiple of "
                f"N_coarse*S_coarse {self.rows_in}")
        self.k = n_m // self.rows_in
        self.c_coarse = c_coarse
        self.refine1 = LinearLayer(rng, c_coarse, self.k * c_m)
        self.refine2 = LinearLayer(rng, c_m, c_m)
        self.complete1 = LinearLayer(rng, c_m, c_m)
        self.complete2 = LinearLayer(rng, c_m, 3)
        self.fuse = LinearLayer(rng, 2 * c_m + 3, s_m * c_m)

    def __call__(self, g_coarse: Tensor, spots_m: SpotSet) -> tuple[Tensor, Tensor]:
        flat = reshape(g_coarse, (self.rows_in, self.c_coarse))
        refined = relu(self.refine1(flat))                       # [rows_in, k*c_m]
        refined = reshape(refined, (self.n_m, self.c_m))
        refined = relu(self.refine2(refined))
        f = relu(self.complete1(spots_m.feats))                  # intermediate features
        pc = radial_tanh(self.complete2(f))                      # [N_m, 3]
        fused = relu(self.fuse(concat([refined, f, pc], axis=1)))
        g_m = reshape(fused, (self.n_m, self.s_m, self.c_m))
        return pc, g_m

    def named_parameters(self, prefix: str):
        yield from self.refine1.named_parameters(f"{prefix}.refine1")
        yield from self.refine2.named_parameters(f"{prefix}.refine2")
        yield from self.complete1.named_parameters(f"{prefix}.complete1")
        yield from self.complete2.named_parameters(f"{prefix}.complete2")
        yield from self.fuse.named_parameters(f"{prefix}.fuse")


class AggregateFine:
    """Flatten the finest global spots to out_n rows and read coordinates off."""

    def __init__(self, rng: np.random.Generator, c1: int, out_n: int):
        self.out_n = out_n
        self.c1 = c1
        self.head = LinearLayer(rng, c1, 3)

    def __call__(self, g1: Tensor) -> Tensor:
        n, s, c = g1.data.shape
        if n * s != self.out_n:
            raise ShapeError(f"aggregate: {n}*{s} rows != out_n {self.out_n}")
        return radial_tanh(self.head(reshape(g1, (self.out_n, self.c1))))

    def named_parameters(self, prefix: str):
        yield from self.head.named_parameters(f"{prefix}.head")


class CompletionModel:
    """End-to-end network; construction order fixes the parameter ordering."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        cfg.validate()
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        c0 = cfg.base_c
        c1, c2, c3 = (cfg.level_c(m) for m in (1, 2, 3))
        n1, n2, n3 = cfg.level_ns
        s1, s2, s3 = (cfg.level_s(m) for m in (1, 2, 3))
        self.backbone = ResMlp(rng, 3, (c0, c0))
        self.spots1_lift = LinearLayer(rng, c0, c1)
        self.sgr1 = SgrStage(rng, fine_c=c0, coarse_c=c0, c_mlp=c0, out_c=c2)
        self.dra1 = DraStage(rng, cfg, fine_c=c1, coarse_c=c2)
        self.sgr2 = SgrStage(rng, fine_c=c2, coarse_c=c0, c_mlp=2 * c0, out_c=c3)
        self.dra2 = DraStage(rng, cfg, fine_c=c2, coarse_c=c3)
        self.recovery = SpotRecovery(rng, c3)
        self.fusion2 = PointFusion(rng, n_m=n2, s_m=s2, c_m=c2,
                                   n_coarse=n3, s_coarse=s3, c_coarse=c3)
        self.fusion1 = PointFusion(rng, n_m=n1, s_m=s1, c_m=c1,
                                   n_coarse=n2, s_coarse=s2, c_coarse=c2)
        self.aggregate = AggregateFine(rng, c1, cfg.out_n)

    def named_parameters(self):
        yield from self.backbone.named_parameters("backbone")
        yield from self.spots1_lift.named_parameters("spots1_lift")
        yield from self.sgr1.named_parameters("sgr1")
        yield from self.dra1.named_parameters("dra1")
        yield from self.sgr2.named_parameters("sgr2")
        yield from self.dra2.named_parameters("dra2")
        yield from self.recovery.named_parameters("recovery")
        yield from self.fusion2.named_parameters("fusion2")
        yield from self.fusion1.named_parameters("fusion1")
        yield from self.aggregate.named_parameters("aggregate")

    def parameters(self):
        return list(self.named_parameters())

    def parameter_count(self) -> int:
        return sum(p.size for _, p in self.named_parameters())

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for name, p in self.named_parameters():
            if name not in state:
                raise KeyError(f"checkpoint missing parameter {name}")
            if state[name].shape != p.data.shape:
                raise ShapeError(
                    f"checkpoint parameter {name} has shape {state[name].shape}, "
                    f"model expects {p.data.shape}")
            p.data[...] = state[name]

    def forward(self, points, geom: GeometryCache | None = None,
                return_spots: bool = False) -> dict:
        cfg = self.cfg
        n1, n2, n3 = cfg.level_ns
        if geom is None:
            geom = prepare_geometry(cfg, np.asarray(points, dtype=np.float64))
        pts = Tensor(geom.points)
        pf = self.backbone(pts)                                   # [N, c0]
        seq = geom.fps_seq
        p1 = Tensor(geom.points[seq])
        p2 = Tensor(geom.points[seq[:n2]])
        p3 = Tensor(geom.points[seq[:n3]])
        pf1 = gather_rows(pf, seq)
        pf2 = gather_rows(pf, seq[:n2])
        pf3 = gather_rows(pf, seq[:n3])
        spots1 = SpotSet(points=p1, feats=relu(self.spots1_lift(pf1)))
        spots2 = self.sgr1(p1, pf1, p2, pf2, geom.nbr1)
        spots2 = self.dra1(spots1, spots2)
        spots3 = self.sgr2(p2, spots2.feats, p3, pf3, geom.nbr2)
        spots3 = self.dra2(spots2, spots3)
        pc3, g3 = self.recovery(spots3)
        pc2, g2 = self.fusion2(g3, spots2)
        pc1, g1 = self.fusion1(g2, spots1)
        fine = self.aggregate(g1)
        out = {"p1": pc1, "p2": pc2, "p3": pc3, "fine": fine}
        if return_spots:
            out["spots"] = (spots1, spots2, spots3)
            out["globals"] = (g1, g2, g3)
        return out

    def __call__(self, points, **kw):
        return self.forward(points, **kw)


def ablation_variant(cfg: ModelConfig, variant: str) -> ModelConfig:
    """Named single-switch variants used by the ablation sweeps."""
    table = {
        "full": {},
        "pla_only": {"use_pdma": False},
        "pdma_only": {"use_pla": False},
        "no_dense": {"pdma_dense": False},
        "vanilla_attention": {"pdma_vanilla": True},
        "no_dra": {"use_pla": False, "use_pdma": False},
    }
    if variant not in table:
        raise ValueError(f"unknown ablation variant {variant!r} (pick from {sorted(table)})")
    return replace(cfg, **table[variant])
