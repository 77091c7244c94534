"""Synthetic few-shot tasks, a small trainable encoder and episodic training.

The data stands in for an image dataset: class means are leaves of a random
tree whose nodes carry Gaussian offsets, so sibling classes share all but
their last offset. The encoder is a two-layer tanh perceptron followed by the
output map of the chosen space.

Random streams are derived from the run seed with ``numpy.random.SeedSequence``:
``[seed, 1]`` initialises weights, ``[seed, 2]`` drives training episodes and
``[seed, 3, i]`` drives evaluation episode ``i``.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .config import RunConfig, class_split
from .errors import ConfigError, DomainError, NumericError, TrainingError
from .geometry import (
    SpaceKind,
    clipped_radius,
    effective_radius,
    poincare_exp0,
    project_to_ball,
)
from .protoloss import (
    GradientMode,
    PrototypeSet,
    clip_features,
    clip_features_vjp,
    einstein_midpoint,
    einstein_midpoint_vjp,
    euclidean_centroid,
    exp0_vjp,
    fixed_radius_rescale,
    loss_and_gradients,
    predict,
    project_vjp,
    rescale_vjp,
    sphere_centroid_vjp,
)

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
COLLISION_SHIFT = 1e-9
CI_Z = 1.96

STREAM_INIT = 1
STREAM_TRAIN = 2
STREAM_EVAL = 3


def stream(seed, *key):
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


# --------------------------------------------------------------------------
# Synthetic hierarchy and episodes
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class HierarchySpec:
    branching: int = 5
    depth: int = 2
    input_dim: int = 64
    node_scale: float = 3.0
    noise_scale: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.branching < 2 or self.depth < 1 or self.input_dim < 1:
            raise ConfigError("hierarchy needs branching >= 2, depth >= 1, input_dim >= 1")
        for name in ("node_scale", "noise_scale"):
            value = getattr(self, name)
            if not (0 < value < math.inf):
                raise ConfigError(f"{name} must be finite and positive", name)

    @property
    def n_classes(self):
        return self.branching ** self.depth

    @classmethod
    def from_config(cls, cfg):
        return cls(cfg.branching, cfg.depth, cfg.input_dim, cfg.node_scale, cfg.noise_scale, cfg.seed)


def generate_hierarchy(spec):
    """Leaf class means, shape (branching**depth, input_dim).

    The root sits at the origin; every other node draws an isotropic Gaussian
    offset and a leaf mean is the sum of offsets on its root path. Leaves are
    ordered so that consecutive blocks of ``branching`` leaves are siblings.
    """
    rng = stream(spec.seed, 0)
    means = np.zeros((1, spec.input_dim))
    for _ in range(spec.depth):
        parents = np.repeat(means, spec.branching, axis=0)
        offsets = spec.node_scale * rng.standard_normal(parents.shape)
        means = parents + offsets
    return means


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    means: np.ndarray
    noise_scale: float
    classes: np.ndarray

    def subset(self, classes):
        return SyntheticDataset(self.means, self.noise_scale, np.asarray(classes))


def make_splits(spec):
    """(train, val, test) datasets over consecutive blocks of leaf indices."""
    means = generate_hierarchy(spec)
    n_train, n_val, n_test = class_split(means.shape[0])
    idx = np.arange(means.shape[0])
    full = SyntheticDataset(means, spec.noise_scale, idx)
    return (full.subset(idx[:n_train]),
            full.subset(idx[n_train:n_train + n_val]),
            full.subset(idx[n_train + n_val:]))


@dataclass(frozen=True, eq=False)
class Episode:
    way: int
    shot: int
    queries_per_class: int
    support_x: np.ndarray
    support_y: np.ndarray
    query_x: np.ndarray
    query_y: np.ndarray
    classes: np.ndarray


def sample_episode(dataset, way, shot, queries_per_class, rng):
    """Draw ``way`` distinct classes, then ``shot`` + ``queries_per_class`` samples each."""
    if len(dataset.classes) < way:
        raise ConfigError(f"dataset has {len(dataset.classes)} classes, need {way}", "way")
    if shot < 1 or queries_per_class < 1:
        raise ConfigError("shot and queries_per_class must be >= 1")
    classes = rng.choice(dataset.classes, size=way, replace=False)
    n_per = shot + queries_per_class
    dim = dataset.means.shape[1]
    noise = dataset.noise_scale * rng.standard_normal((way, n_per, dim))
    samples = dataset.means[classes][:, None, :] + noise
    labels = np.arange(way)
    return Episode(
        way=way,
        shot=shot,
        queries_per_class=queries_per_class,
        support_x=samples[:, :shot].reshape(way * shot, dim),
        support_y=np.repeat(labels, shot),
        query_x=samples[:, shot:].reshape(way * queries_per_class, dim),
        query_y=np.repeat(labels, queries_per_class),
        classes=classes,
    )


# --------------------------------------------------------------------------
# Encoder
# --------------------------------------------------------------------------

PARAM_NAMES = ("w1", "b1", "w2", "b2")


@dataclass
class EncoderParams:
    """Weights of input -> tanh hidden -> output, plus Adam moment buffers."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0

    def arrays(self):
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self):
        return EncoderParams(
            *(getattr(self, n).copy() for n in PARAM_NAMES),
            m={k: a.copy() for k, a in self.m.items()},
            v={k: a.copy() for k, a in self.v.items()},
            step=self.step,
        )

    def equals(self, other):
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in PARAM_NAMES)


def glorot_uniform(rng, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_encoder(input_dim, hidden_dim, d, rng):
    return EncoderParams(
        w1=glorot_uniform(rng, input_dim, hidden_dim),
        b1=np.zeros(hidden_dim),
        w2=glorot_uniform(rng, hidden_dim, d),
        b2=np.zeros(d),
    )


class _Cache(NamedTuple):
    inputs: np.ndarray
    hidden: np.ndarray
    features: np.ndarray
    clipped: np.ndarray
    mapped: np.ndarray


def encode_forward(params, inputs, space, clip=None, norm_eps=1e-12):
    """Embeddings plus the intermediate values needed by :func:`encode_backward`."""
    inputs = np.asarray(inputs, dtype=np.float64)
    hidden = np.tanh(inputs @ params.w1 + params.b1)
    features = hidden @ params.w2 + params.b2
    if not np.all(np.isfinite(features)):
        raise NumericError("nonfinite encoder activations")
    clipped = features
    mapped = features
    if space.kind is SpaceKind.POINCARE_BALL:
        clipped = clip_features(features, clip)
        mapped = poincare_exp0(clipped, space.k)
        z = project_to_ball(mapped, space.k, space.epsilon)
    elif space.kind is SpaceKind.FIXED_RADIUS_SPHERE:
        z = fixed_radius_rescale(features, space.radius, norm_eps)
    else:
        z = features
    return z, _Cache(inputs, hidden, features, clipped, mapped)


def encode(params, inputs, space, clip=None, norm_eps=1e-12):
    return encode_forward(params, inputs, space, clip, norm_eps)[0]


def encode_backward(params, cache, grad_z, space, clip=None, norm_eps=1e-12):
    """Parameter gradients given dL/dz for every embedding row."""
    g = grad_z
    if space.kind is SpaceKind.POINCARE_BALL:
        g = project_vjp(cache.mapped, space.k, space.epsilon, g)
        g = exp0_vjp(cache.clipped, space.k, g)
        g = clip_features_vjp(cache.features, clip, g)
    elif space.kind is SpaceKind.FIXED_RADIUS_SPHERE:
        g = rescale_vjp(cache.features, space.radius, g, norm_eps)
    grads = {"w2": cache.hidden.T @ g, "b2": g.sum(axis=0)}
    g_pre = (g @ params.w2.T) * (1.0 - cache.hidden ** 2)
    grads["w1"] = cache.inputs.T @ g_pre
    grads["b1"] = g_pre.sum(axis=0)
    return grads


def adam_update(params, grads, lr, betas=ADAM_BETAS, eps=ADAM_EPS):
    b1, b2 = betas
    params.step += 1
    for name in PARAM_NAMES:
        g = grads[name]
        m = params.m.get(name, np.zeros_like(g))
        v = params.v.get(name, np.zeros_like(g))
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        params.m[name], params.v[name] = m, v
        m_hat = m / (1 - b1 ** params.step)
        v_hat = v / (1 - b2 ** params.step)
        setattr(params, name, getattr(params, name) - lr * m_hat / (np.sqrt(v_hat) + eps))


def step_lr(base_lr, episode, step, gamma):
    return base_lr * gamma ** (episode // step)


# --------------------------------------------------------------------------
# Prototypes
# --------------------------------------------------------------------------


def build_prototypes(space, support_z, support_y, way, renormalize=True):
    """One centroid per class: Einstein midpoint in the ball, mean elsewhere."""
    rows = []
    for c in range(way):
        pts = support_z[support_y == c]
        if space.kind is SpaceKind.POINCARE_BALL:
            rows.append(einstein_midpoint(pts, space.k))
        else:
            mean = euclidean_centroid(pts)
            if space.kind is SpaceKind.FIXED_RADIUS_SPHERE and renormalize:
                mean = fixed_radius_rescale(mean, space.radius)
            rows.append(mean)
    return PrototypeSet(np.stack(rows), space, on_sphere=renormalize)


def prototypes_backward(space, support_z, support_y, grad_w, renormalize=True):
    grad = np.zeros_like(support_z)
    for c in range(grad_w.shape[0]):
        mask = support_y == c
        pts = support_z[mask]
        if space.kind is SpaceKind.POINCARE_BALL:
            grad[mask] = einstein_midpoint_vjp(pts, space.k, grad_w[c])
        elif space.kind is SpaceKind.FIXED_RADIUS_SPHERE and renormalize:
            grad[mask] = sphere_centroid_vjp(pts, space.radius, grad_w[c])
        else:
            grad[mask] = grad_w[c] / pts.shape[0]
    return grad


def _separate_collisions(query_z, centroids, space):
    """Nudge queries that coincide exactly with a prototype."""
    if space.kind is SpaceKind.EUCLIDEAN_SQUARED:
        return query_z
    hit = np.any(np.all(query_z[:, None, :] == centroids[None, :, :], axis=-1), axis=1)
    if not np.any(hit):
        return query_z
    out = query_z.copy()
    if space.kind is SpaceKind.FIXED_RADIUS_SPHERE:
        out[hit, 0] += COLLISION_SHIFT * space.radius
        out[hit] = fixed_radius_rescale(out[hit], space.radius)
    else:
        out[hit, 0] += COLLISION_SHIFT
    return out


# --------------------------------------------------------------------------
# Training and evaluation
# --------------------------------------------------------------------------


class EpisodeResult(NamedTuple):
    loss: float
    grads: dict


def episode_step(params, cfg, episode, with_grads=True):
    """Loss of one episode and, optionally, the parameter gradients."""
    space = cfg.curvature_space
    clip = cfg.clip_config
    x = np.concatenate([episode.support_x, episode.query_x])
    z, cache = encode_forward(params, x, space, clip, cfg.rescale_eps)
    n_sup = episode.support_x.shape[0]
    support_z, query_z = z[:n_sup], z[n_sup:]
    protos = build_prototypes(space, support_z, episode.support_y, episode.way,
                              cfg.renormalize_prototypes)
    query_z = _separate_collisions(query_z, protos.centroids, space)
    lg = loss_and_gradients(space, protos, query_z, episode.query_y, cfg.mode)
    if not with_grads:
        return EpisodeResult(lg.loss, {})
    if space.kind is SpaceKind.POINCARE_BALL and not cfg.midpoint_grad:
        # prototypes are treated as constants of the episode
        grad_support = np.zeros_like(support_z)
    else:
        grad_support = prototypes_backward(space, support_z, episode.support_y, lg.prototypes,
                                           cfg.renormalize_prototypes)
    grad_z = np.concatenate([grad_support, lg.queries])
    return EpisodeResult(lg.loss, encode_backward(params, cache, grad_z, space, clip, cfg.rescale_eps))


def episode_loss(params, cfg, episode):
    return episode_step(params, cfg, episode, with_grads=False).loss


class TrainResult(NamedTuple):
    params: EncoderParams
    losses: list
    initial: EncoderParams


def initial_params(cfg):
    return init_encoder(cfg.input_dim, cfg.hidden_dim, cfg.d, stream(cfg.seed, STREAM_INIT))


def train(cfg):
    """Episodic training with Adam and a step-decay learning rate.

    Returns the trained parameters, the per-episode loss sequence and the
    initial parameters. Deterministic given ``cfg``.
    """
    train_set, _, _ = make_splits(HierarchySpec.from_config(cfg))
    params = initial_params(cfg)
    initial = params.copy()
    rng = stream(cfg.seed, STREAM_TRAIN)
    losses = []
    for ep in range(cfg.episodes):
        episode = sample_episode(train_set, cfg.train_way, cfg.train_shot, cfg.train_queries, rng)
        try:
            result = episode_step(params, cfg, episode)
        except (NumericError, DomainError, FloatingPointError) as exc:
            raise TrainingError(f"training failed at episode {ep}: {exc}", ep) from exc
        if not math.isfinite(result.loss) or not all(np.all(np.isfinite(g)) for g in result.grads.values()):
            raise TrainingError(f"loss diverged at episode {ep}", ep)
        adam_update(params, result.grads, step_lr(cfg.lr, ep, cfg.lr_step, cfg.lr_gamma))
        losses.append(result.loss)
    return TrainResult(params, losses, initial)


@dataclass
class RunReport:
    space: str
    d: int
    param: float
    test_acc: float
    ci95: float
    r_min: float
    r_avg: float
    r_max: float
    episodes: int
    seconds: float
    seed: int = 0
    saturation: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.test_acc <= 1.0:
            raise ValueError("accuracy must lie in [0, 1]")
        if self.ci95 < 0:
            raise ValueError("ci95 must be nonnegative")
        # tolerate last-ulp disagreement between the mean and extremes of equal norms
        slack = 1e-12 * max(1.0, abs(self.r_max))
        if not (self.r_min <= self.r_avg + slack and self.r_avg <= self.r_max + slack):
            raise ValueError("need r_min <= r_avg <= r_max")


def _evaluate_episode(params, cfg, space, test_set, i):
    episode = sample_episode(test_set, cfg.test_way, cfg.test_shot, cfg.test_queries,
                             stream(cfg.seed, STREAM_EVAL, i))
    sup = encode(params, episode.support_x, space, cfg.clip_config, cfg.rescale_eps)
    qry = encode(params, episode.query_x, space, cfg.clip_config, cfg.rescale_eps)
    protos = build_prototypes(space, sup, episode.support_y, episode.way,
                              cfg.renormalize_prototypes)
    pred = predict(space, protos, qry)
    return float(np.mean(pred == episode.query_y)), np.linalg.norm(qry, axis=1)


def evaluate(params, cfg, n_episodes=None, workers=1):
    """Mean accuracy, 95% CI and embedding-norm statistics on held-out classes.

    Episode ``i`` uses its own stream ``[seed, 3, i]`` and results are reduced
    in episode order, so the report does not depend on ``workers``.
    """
    n_episodes = cfg.eval_episodes if n_episodes is None else n_episodes
    if n_episodes < 1:
        raise ConfigError("n_episodes must be >= 1", "eval_episodes")
    space = cfg.curvature_space
    _, _, test_set = make_splits(HierarchySpec.from_config(cfg))
    def one(i):
        return _evaluate_episode(params, cfg, space, test_set, i)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(n_episodes)))
    else:
        results = [one(i) for i in range(n_episodes)]
    accs = np.array([r[0] for r in results])
    norms = np.concatenate([r[1] for r in results])
    std = accs.std(ddof=1) if n_episodes > 1 else 0.0
    return RunReport(
        space=space.describe(),
        d=cfg.d,
        param=cfg.param,
        test_acc=float(accs.mean()),
        ci95=float(CI_Z * std / math.sqrt(n_episodes)),
        r_min=float(norms.min()),
        r_avg=float(norms.mean()),
        r_max=float(norms.max()),
        episodes=cfg.episodes,
        seconds=0.0,
        seed=cfg.seed,
    )


def saturation_metric(report, space, clip=None):
    """r_avg over the largest norm the encoder can produce (1 = saturated)."""
    if space.kind is not SpaceKind.POINCARE_BALL:
        raise DomainError("saturation is only defined for the Poincaré ball")
    cap = effective_radius(space.epsilon, space.k)
    c = getattr(clip, "c", clip)
    if c is not None:
        cap = min(cap, float(clipped_radius(c, space.k)))
    return float(min(report.r_avg / cap, 1.0))


def run(cfg):
    """Train then evaluate; fills in wall-clock seconds and, for the ball, saturation."""
    start = time.perf_counter()
    result = train(cfg)
    report = evaluate(result.params, cfg)
    report.seconds = time.perf_counter() - start
    if cfg.space == "poincare":
        report.saturation = saturation_metric(report, cfg.curvature_space, cfg.clip)
    return report, result
