"""Equivariant neural building blocks on multivector channels.

Tokens carry multivector channels plus plain scalar channels.  Linear
layers mix channels through the named equivariant map family, bilinear
layers interact channels through the geometric product (optionally the
join), normalization divides by invariant per-token magnitudes, the gate
nonlinearity scales each channel by a sigmoid of its own grade-0 part,
and attention logits are built from invariant pairings.  Everything here
is forward-only: parameters are plain arrays set at construction.
"""

import numpy as np

from gaeq.algebra import (
    geometric_product,
    get_algebra,
    grade_project,
    inner,
    join,
)
from gaeq.embeddings import PointAtInfinityError, pga_point_to_cga_point
from gaeq.groups import rho
from gaeq.solver import equivariant_map_family, identity_coefficients

__all__ = [
    "ATTN_VARIANTS",
    "EquiLinear",
    "GeometricBilinear",
    "MvChannels",
    "NormConfig",
    "attention",
    "attn_logits",
    "default_norm_config",
    "equi_norm",
    "gated_nonlinearity",
    "transform_channels",
]


class MvChannels:
    """A batch of tokens: (T, C, 2^d) multivector channels and (T, S) scalars."""

    def __init__(self, algebra, mv, scalars=None):
        self.algebra = algebra if hasattr(algebra, "gp_tensor") else get_algebra(algebra)
        self.mv = np.asarray(mv, dtype=float)
        if self.mv.ndim != 3 or self.mv.shape[-1] != self.algebra.size:
            raise ValueError(
                f"multivector channels must be (tokens, channels, {self.algebra.size})"
            )
        if scalars is None:
            scalars = np.zeros((self.mv.shape[0], 0))
        self.scalars = np.asarray(scalars, dtype=float)
        if self.scalars.ndim != 2 or self.scalars.shape[0] != self.mv.shape[0]:
            raise ValueError("scalar channels must be (tokens, s_channels)")
        if not (np.isfinite(self.mv).all() and np.isfinite(self.scalars).all()):
            raise ValueError("non-finite channel data")

    @property
    def tokens(self):
        return self.mv.shape[0]

    @property
    def channels(self):
        return self.mv.shape[1]

    @property
    def scalar_channels(self):
        return self.scalars.shape[1]

    def copy(self):
        return MvChannels(self.algebra, self.mv.copy(), self.scalars.copy())


def transform_channels(x, versor):
    """Apply a group element to every token; scalar channels are invariant."""
    r = rho(x.algebra, versor)
    return MvChannels(x.algebra, np.einsum("nm,tcm->tcn", r, x.mv), x.scalars)


def _kaiming(rng, shape, fan_in):
    if np.prod(shape) == 0:
        return np.zeros(shape)
    return rng.normal(0.0, 1.0 / np.sqrt(max(fan_in, 1)), shape)


class EquiLinear:
    """Channel mixing through the equivariant map family.

    y[t, co] = sum_{ci, b} w[co, ci, b] M_b(x[t, ci]), with a dense scalar
    block alongside and the grade-0 coefficient coupling the two kinds of
    channel.  Commutes with the group action tokenwise because every M_b
    does and scalars are invariant.

    init="kaiming" draws all blocks at 1/sqrt(fan_in) scale; init="identity"
    draws a plain channel-mixing matrix and places it on the identity map's
    coefficients, which keeps early forward passes close to the input
    algebra elements.
    """

    def __init__(
        self,
        algebra,
        group="e3",
        mv_in=1,
        mv_out=1,
        scalar_in=0,
        scalar_out=0,
        init="kaiming",
        rng=None,
    ):
        self.algebra = algebra if hasattr(algebra, "gp_tensor") else get_algebra(algebra)
        self.group = group
        family = equivariant_map_family(self.algebra, group)
        self.family_names = [name for name, _ in family]
        self.family = np.stack([m for _, m in family])  # (B, n, n)
        self.mv_in, self.mv_out = int(mv_in), int(mv_out)
        self.scalar_in, self.scalar_out = int(scalar_in), int(scalar_out)
        b = self.family.shape[0]
        if rng is None:
            rng = np.random.default_rng(0)
        if init == "kaiming":
            self.weight = _kaiming(rng, (mv_out, mv_in, b), mv_in * b)
        elif init == "identity":
            chan = _kaiming(rng, (mv_out, mv_in), mv_in)
            self.weight = chan[:, :, None] * identity_coefficients(
                self.algebra, group
            )
        elif init == "exact_identity":
            if mv_in != mv_out or scalar_in != scalar_out:
                raise ValueError("exact identity needs matching channel counts")
            self.weight = (
                np.eye(mv_out)[:, :, None]
                * identity_coefficients(self.algebra, group)
            )
        else:
            raise ValueError(f"unknown init {init!r}")
        fan_s = scalar_in + mv_in
        if init == "exact_identity":
            self.scalar_weight = np.eye(scalar_out)
            self.mv_to_scalar = np.zeros((scalar_out, mv_in))
            self.scalar_to_mv = np.zeros((mv_out, scalar_in))
        else:
            self.scalar_weight = _kaiming(rng, (scalar_out, scalar_in), fan_s)
            self.mv_to_scalar = _kaiming(rng, (scalar_out, mv_in), fan_s)
            self.scalar_to_mv = _kaiming(rng, (mv_out, scalar_in), scalar_in)

    def apply(self, x):
        if x.channels != self.mv_in or x.scalar_channels != self.scalar_in:
            raise ValueError(
                f"expected {self.mv_in} mv / {self.scalar_in} scalar channels, "
                f"got {x.channels} / {x.scalar_channels}"
            )
        mapped = np.einsum("bnm,tcm->tcbn", self.family, x.mv)
        mv = np.einsum("ocb,tcbn->ton", self.weight, mapped)
        mv[:, :, 0] += x.scalars @ self.scalar_to_mv.T
        scalars = x.scalars @ self.scalar_weight.T + x.mv[:, :, 0] @ self.mv_to_scalar.T
        return MvChannels(x.algebra, mv, scalars)

    def state(self):
        return {
            "weight": self.weight,
            "scalar_weight": self.scalar_weight,
            "mv_to_scalar": self.mv_to_scalar,
            "scalar_to_mv": self.scalar_to_mv,
        }

    def load_state(self, state):
        for key, value in self.state().items():
            got = np.asarray(state[key], dtype=float)
            if got.shape != value.shape:
                raise ValueError(f"{key} shape {got.shape} != {value.shape}")
        self.weight = np.asarray(state["weight"], dtype=float)
        self.scalar_weight = np.asarray(state["scalar_weight"], dtype=float)
        self.mv_to_scalar = np.asarray(state["mv_to_scalar"], dtype=float)
        self.scalar_to_mv = np.asarray(state["scalar_to_mv"], dtype=float)


class GeometricBilinear:
    """Channelwise geometric products (and joins), then a linear projection.

    The product channels (gp of x and y per channel, then join channels
    when enabled) are concatenated and projected back to the input channel
    count by an EquiLinear, whose scalar path carries x's scalar channels.
    """

    def __init__(
        self,
        algebra,
        group="e3",
        channels=1,
        scalar_channels=0,
        use_join=False,
        init="kaiming",
        rng=None,
    ):
        self.algebra = algebra if hasattr(algebra, "gp_tensor") else get_algebra(algebra)
        if use_join and self.algebra.join_tensor is None:
            raise ValueError(f"join is not defined for algebra {self.algebra.name!r}")
        self.use_join = bool(use_join)
        self.channels = int(channels)
        prod_channels = channels * (2 if use_join else 1)
        self.proj = EquiLinear(
            self.algebra,
            group,
            mv_in=prod_channels,
            mv_out=channels,
            scalar_in=scalar_channels,
            scalar_out=scalar_channels,
            init=init,
            rng=rng,
        )

    def apply(self, x, y):
        if x.channels != self.channels or y.channels != self.channels:
            raise ValueError(f"expected {self.channels} channels")
        parts = [geometric_product(self.algebra, x.mv, y.mv)]
        if self.use_join:
            parts.append(join(self.algebra, x.mv, y.mv))
        prod = MvChannels(self.algebra, np.concatenate(parts, axis=1), x.scalars)
        return self.proj.apply(prod)

    def state(self):
        return self.proj.state()

    def load_state(self, state):
        self.proj.load_state(state)


# -- normalization ---------------------------------------------------------------

NORM_VARIANTS = ("plain", "abs", "per_grade_abs")


class NormConfig:
    """Normalization variant and epsilon.

    The plain variant divides by signed channel inner products, which for
    an algebra with null directions can vanish on nonzero inputs; it is
    rejected for the conformal algebra unless allow_unstable is set.
    """

    def __init__(self, variant, epsilon, allow_unstable=False):
        if variant not in NORM_VARIANTS:
            raise ValueError(f"unknown norm variant {variant!r}")
        if not epsilon > 0:
            raise ValueError("epsilon must be positive")
        self.variant = variant
        self.epsilon = float(epsilon)
        self.allow_unstable = bool(allow_unstable)

    def check_algebra(self, alg):
        if alg.name == "cga" and self.variant == "plain" and not self.allow_unstable:
            raise ValueError(
                "plain normalization is unstable on the conformal algebra; "
                "pass allow_unstable=True to use it anyway"
            )


def default_norm_config(algebra):
    alg = algebra if hasattr(algebra, "gp_tensor") else get_algebra(algebra)
    if alg.name == "ega":
        return NormConfig("plain", 1e-6)
    if alg.name == "pga":
        return NormConfig("plain", 0.01)
    return NormConfig("per_grade_abs", 0.01)


def _norm_denominator(cfg, x):
    alg = x.algebra
    if cfg.variant == "plain":
        q = inner(alg, x.mv, x.mv)
    elif cfg.variant == "abs":
        q = np.abs(inner(alg, x.mv, x.mv))
    else:
        q = sum(
            np.abs(inner(alg, grade_project(alg, x.mv, k), grade_project(alg, x.mv, k)))
            for k in range(alg.n + 1)
        )
    return np.sqrt(q.mean(axis=1) + cfg.epsilon)


def equi_norm(cfg, x):
    """Per-token division by an invariant magnitude.

    Multivector channels share one denominator per token; scalar channels
    get their own root-mean-square denominator with the same epsilon.
    """
    cfg.check_algebra(x.algebra)
    denom = _norm_denominator(cfg, x)
    mv = x.mv / denom[:, None, None]
    scalars = x.scalars
    if scalars.shape[1]:
        s_denom = np.sqrt((scalars**2).mean(axis=1) + cfg.epsilon)
        scalars = scalars / s_denom[:, None]
    return MvChannels(x.algebra, mv, scalars)


def _sigmoid(a):
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


def gated_nonlinearity(x):
    """Each channel scaled by the sigmoid of its own grade-0 coefficient.

    Grade 0 is invariant, so the gate commutes with the group action.
    Scalar channels go through the smooth x * sigmoid(x) nonlinearity.
    """
    gate = _sigmoid(x.mv[:, :, 0])
    mv = x.mv * gate[:, :, None]
    scalars = x.scalars * _sigmoid(x.scalars)
    return MvChannels(x.algebra, mv, scalars)


# -- attention --------------------------------------------------------------------

ATTN_VARIANTS = {
    "plain_inner": ("ega", "pga", "cga"),
    "ega_distance": ("ega",),
    "cga_inner": ("cga",),
    "ip_pga_to_cga": ("pga",),
}


def _check_variant(variant, alg):
    allowed = ATTN_VARIANTS.get(variant)
    if allowed is None:
        raise ValueError(f"unknown attention variant {variant!r}")
    if alg.name not in allowed:
        raise ValueError(f"variant {variant!r} is not defined for {alg.name!r}")


def _pair_inners(alg, q, k, channel_mask=None):
    # (Tq, Tk) sum of per-channel invariant inner products
    qm, km = q.mv, k.mv
    if channel_mask is not None:
        qm = qm[:, channel_mask]
        km = km[:, channel_mask]
    wq = (qm * alg.inner_weights).reshape(qm.shape[0], -1)
    return wq @ km.reshape(km.shape[0], -1).T


def _vector_part(alg, mv):
    idx = alg.grade_indices(1)
    return mv[:, idx]


def attn_logits(variant, q, k, point_channels=()):
    """Invariant attention logits between query and key tokens.

    plain_inner and cga_inner sum channelwise inner products plus the
    scalar dot, scaled by one over the square root of the invariant
    feature count.  ega_distance reserves the designated point channels
    for an exact negative squared distance term built from the
    (norm^2, 2q, 1) / (-1, k, -norm^2) triple, unscaled so the identity
    is exact.  ip_pga_to_cga adds conformal inner products of the
    designated projective point channels after mapping them to conformal
    points.
    """
    alg = q.algebra
    _check_variant(variant, alg)
    if q.channels != k.channels or q.scalar_channels != k.scalar_channels:
        raise ValueError("query and key channel counts differ")
    point_channels = tuple(point_channels)
    if any(not 0 <= c < q.channels for c in point_channels):
        raise ValueError(f"point channel out of range for {q.channels} channels")
    scale_dim = max(q.channels + q.scalar_channels, 1)

    if variant in ("plain_inner", "cga_inner"):
        logits = _pair_inners(alg, q, k) + q.scalars @ k.scalars.T
        return logits / np.sqrt(scale_dim)

    if variant == "ega_distance":
        if not point_channels:
            raise ValueError("ega_distance needs designated point channels")
        mask = np.ones(q.channels, dtype=bool)
        mask[list(point_channels)] = False
        rest = _pair_inners(alg, q, k, mask) + q.scalars @ k.scalars.T
        rest = rest / np.sqrt(scale_dim)
        dist = np.zeros((q.tokens, k.tokens))
        for c in point_channels:
            qv = _vector_part(alg, q.mv[:, c])
            kv = _vector_part(alg, k.mv[:, c])
            qq = (qv**2).sum(axis=1)
            kk = (kv**2).sum(axis=1)
            # (|q|^2, 2q, 1) . (-1, k, -|k|^2) = -|q - k|^2
            dist += -qq[:, None] + 2.0 * qv @ kv.T - kk[None, :]
        return rest + dist

    # ip_pga_to_cga
    if not point_channels:
        raise ValueError("ip_pga_to_cga needs designated point channels")
    cga = get_algebra("cga")
    logits = _pair_inners(alg, q, k) + q.scalars @ k.scalars.T
    for c in point_channels:
        qp = np.stack([_bridge_point(m, t, c) for t, m in enumerate(q.mv[:, c])])
        kp = np.stack([_bridge_point(m, t, c) for t, m in enumerate(k.mv[:, c])])
        logits += (qp * cga.inner_weights) @ kp.T
    return logits / np.sqrt(scale_dim + len(point_channels))


def _bridge_point(m, token, channel):
    try:
        return pga_point_to_cga_point(m)
    except PointAtInfinityError as exc:
        raise PointAtInfinityError(f"token {token}, channel {channel}: {exc}") from exc


def _softmax_rows(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def attention(variant, q, k, v, point_channels=()):
    """Row-softmax over invariant logits, convex combination of values."""
    if k.tokens != v.tokens:
        raise ValueError("key and value token counts differ")
    weights = _softmax_rows(attn_logits(variant, q, k, point_channels))
    mv = np.einsum("qk,kcn->qcn", weights, v.mv)
    scalars = weights @ v.scalars
    return MvChannels(v.algebra, mv, scalars)
