"""Thompson sampling with particle reward models: wheel and mushroom bandits."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import nn
from .data import DataFormatError, Dataset, KdeSampler
from .function_space import Adam, ParticleEnsemble, TrainSettings, train_step
from .priors import GaussianWeightPrior, InferredGaussian, NoiseModel


@dataclass(frozen=True)
class WheelConfig:
    delta: float = 0.95
    mu1: float = 1.2
    mu2: float = 1.0
    mu3: float = 50.0
    sigma_r: float = 0.01
    horizon: int = 5000

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if not self.mu3 > self.mu1 > self.mu2:
            raise ValueError("wheel means must satisfy mu3 > mu1 > mu2")
        if self.sigma_r < 0:
            raise ValueError("reward std must be non-negative")

    @property
    def n_actions(self) -> int:
        return 5


@dataclass
class BanditRound:
    """One context with the expected reward of every action."""

    context: np.ndarray
    means: np.ndarray
    noise_std: float = 0.0

    @property
    def optimal(self) -> int:
        return int(np.argmax(self.means))

    def sample(self, action: int, rng) -> float:
        return float(self.means[action] + self.noise_std * rng.standard_normal())


def sample_disk(rng) -> np.ndarray:
    """Uniform point in the unit disk by rejection from the square."""
    while True:
        p = rng.uniform(-1.0, 1.0, size=2)
        if p @ p <= 1.0:
            return p


def wheel_means(cfg: WheelConfig, context) -> np.ndarray:
    """Expected rewards; action 0 is the constant arm, 1-4 the quadrant arms.

    Quadrant arms in order: (+,+), (+,-), (-,+), (-,-).
    """
    means = np.full(5, cfg.mu2)
    means[0] = cfg.mu1
    x, y = context
    if np.hypot(x, y) > cfg.delta:
        means[wheel_quadrant(context)] = cfg.mu3
    return means


def wheel_quadrant(context) -> int:
    x, y = context
    if x >= 0:
        return 1 if y >= 0 else 2
    return 3 if y >= 0 else 4


def wheel_step(cfg: WheelConfig, rng) -> BanditRound:
    ctx = sample_disk(rng)
    return BanditRound(ctx, wheel_means(cfg, ctx), cfg.sigma_r)


def wheel_random_regret(cfg: WheelConfig) -> float:
    """Expected per-round regret of the uniform-random policy."""
    inside = cfg.delta ** 2
    gap_in = (cfg.mu1 - cfg.mu2) * 4 / 5
    gap_out = (cfg.mu3 - cfg.mu1 + 3 * (cfg.mu3 - cfg.mu2)) / 5
    return inside * gap_in + (1 - inside) * gap_out


class WheelEnv:
    def __init__(self, cfg: WheelConfig):
        self.cfg = cfg
        self.n_actions = cfg.n_actions
        self.context_dim = 2

    def draw(self, rng) -> BanditRound:
        return wheel_step(self.cfg, rng)


# --- mushroom ---------------------------------------------------------------------

NO_EAT, EAT = 0, 1
POISON_WIN, POISON_LOSS = 5.0, -35.0


def mushroom_step(row: dict, action: int, rng) -> float:
    """Reward for one mushroom; ``row`` must carry a boolean ``poisonous`` flag."""
    if "poisonous" not in row:
        raise DataFormatError("mushroom row has no poisonous flag")
    if action == NO_EAT:
        return 0.0
    if not row["poisonous"]:
        return 5.0
    return POISON_WIN if rng.random() < 0.5 else POISON_LOSS


def mushroom_means(poisonous: bool) -> np.ndarray:
    eat = 0.5 * (POISON_WIN + POISON_LOSS) if poisonous else 5.0
    return np.array([0.0, eat])


@dataclass
class MushroomData:
    features: np.ndarray
    poisonous: np.ndarray
    columns: list = field(default_factory=list)


def load_mushroom_csv(path, label_column: str | int = 0) -> MushroomData:
    """Read the mushroom table and one-hot encode its categorical attributes.

    The label column holds ``p``/``e`` (or ``1``/``0``, ``poisonous``/``edible``);
    every other column is treated as categorical.  A header row is required.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2:
        raise DataFormatError(f"{path}: need a header and at least one row")
    header, body = [c.strip() for c in rows[0]], rows[1:]
    li = header.index(label_column) if isinstance(label_column, str) else label_column % len(header)
    flags = []
    for i, r in enumerate(body):
        if len(r) != len(header):
            raise DataFormatError(f"row {i + 2} has {len(r)} cells, expected {len(header)}")
        v = r[li].strip().lower()
        if v in ("p", "1", "poisonous", "true"):
            flags.append(True)
        elif v in ("e", "0", "edible", "false"):
            flags.append(False)
        else:
            raise DataFormatError(f"row {i + 2}: unknown poisonous flag {r[li]!r}")
    blocks, names = [], []
    for j, name in enumerate(header):
        if j == li:
            continue
        vals = [r[j].strip() for r in body]
        cats = sorted(set(vals))
        idx = np.array([cats.index(v) for v in vals])
        blocks.append(np.eye(len(cats))[idx])
        names += [f"{name}={c}" for c in cats]
    feats = np.hstack(blocks) if blocks else np.zeros((len(body), 0))
    return MushroomData(feats, np.array(flags), names)


class MushroomEnv:
    def __init__(self, data: MushroomData):
        self.data = data
        self.n_actions = 2
        self.context_dim = data.features.shape[1]

    def draw(self, rng) -> BanditRound:
        i = int(rng.integers(len(self.data.poisonous)))
        return MushroomRound(self.data.features[i], mushroom_means(bool(self.data.poisonous[i])),
                             poisonous=bool(self.data.poisonous[i]))


@dataclass
class MushroomRound(BanditRound):
    poisonous: bool = False

    def sample(self, action: int, rng) -> float:
        return mushroom_step({"poisonous": self.poisonous}, action, rng)


# --- agents --------------------------------------------------------------------------

class UniformAgent:
    def __init__(self, n_actions: int):
        self.n_actions = n_actions

    def sample_rewards(self, context, rng) -> np.ndarray:
        return rng.random(self.n_actions)

    def update(self, context, action, reward):
        pass


class OracleAgent:
    """Acts on the true expected rewards (zero regret)."""

    def __init__(self):
        self._round = None

    def observe(self, rnd: BanditRound):
        self._round = rnd

    def sample_rewards(self, context, rng) -> np.ndarray:
        return self._round.means

    def update(self, context, action, reward):
        pass


class ParticleAgent:
    """Thompson agent whose posterior is a particle ensemble of reward networks.

    Each round one particle is picked uniformly and its predicted rewards are
    the posterior sample.  Observed rewards go to a replay buffer; ``retrain``
    runs ``steps`` updates on it with the other actions masked out.
    """

    def __init__(self, spec: nn.NetworkSpec, n_particles: int, settings: TrainSettings,
                 rng, weight_prior: GaussianWeightPrior | None = None,
                 noise: NoiseModel | None = None, lr: float = 1e-3):
        self.spec = spec
        self.settings = settings
        self.weight_prior = weight_prior or GaussianWeightPrior()
        self.noise = noise or InferredGaussian()
        self.ens = ParticleEnsemble.from_prior(spec, n_particles, self.weight_prior, rng, self.noise)
        self.opt = Adam(lr)
        self.n_actions = spec.output_dim
        self.contexts, self.actions, self.rewards = [], [], []

    def sample_rewards(self, context, rng) -> np.ndarray:
        i = int(rng.integers(self.ens.n))
        return nn.forward(self.ens.params[i], self.spec, np.asarray(context)[None, :])[0]

    def update(self, context, action, reward):
        self.contexts.append(np.asarray(context, dtype=np.float64))
        self.actions.append(int(action))
        self.rewards.append(float(reward))

    def buffer(self):
        X = np.array(self.contexts)
        a = np.array(self.actions)
        Y = np.zeros((len(a), self.n_actions))
        Y[np.arange(len(a)), a] = self.rewards
        mask = np.zeros_like(Y)
        mask[np.arange(len(a)), a] = 1.0
        return Dataset(X, Y), mask

    def retrain(self, steps: int, rng):
        if not self.contexts:
            return
        ds, mask = self.buffer()
        nu = KdeSampler.silverman(ds.X)
        for _ in range(steps):
            self.ens = train_step(self.ens, ds, nu, self.settings, self.weight_prior,
                                  self.noise, self.opt, rng, mask=mask)


@dataclass
class BanditTrace:
    contexts: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    optimal_means: list = field(default_factory=list)
    chosen_means: list = field(default_factory=list)

    def __len__(self):
        return len(self.actions)

    def regrets(self) -> np.ndarray:
        return np.asarray(self.optimal_means, dtype=np.float64) - np.asarray(self.chosen_means, dtype=np.float64)

    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.regrets())


def cumulative_regret(trace: BanditTrace) -> float:
    return float(np.sum(trace.regrets()))


def thompson_loop(agent, env, horizon: int, rng, retrain_every: int = 50,
                  steps_per_retrain: int = 100, callback=None) -> BanditTrace:
    """Run ``horizon`` rounds; ties in the sampled rewards go to the lowest action."""
    trace = BanditTrace()
    for t in range(horizon):
        rnd = env.draw(rng)
        if isinstance(agent, OracleAgent):
            agent.observe(rnd)
        sampled = agent.sample_rewards(rnd.context, rng)
        a = int(np.argmax(sampled))
        r = rnd.sample(a, rng)
        agent.update(rnd.context, a, r)
        trace.contexts.append(rnd.context)
        trace.actions.append(a)
        trace.rewards.append(r)
        trace.optimal_means.append(float(rnd.means.max()))
        trace.chosen_means.append(float(rnd.means[a]))
        if hasattr(agent, "retrain") and (t + 1) % retrain_every == 0:
            agent.retrain(steps_per_retrain, rng)
        if callback is not None:
            callback(t, trace)
    return trace
