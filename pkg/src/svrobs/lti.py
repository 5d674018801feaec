"""Ground-truth LTI systems, seeded noise, and multi-rollout data collection.

Randomness is stateless: an :class:`RngStream` is a ``(master_seed,
stream_id)`` pair keying a Philox counter-based generator, so a stream
always yields the same samples no matter when or on which thread it is
consumed. Independent sub-streams are derived with :meth:`RngStream.child`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionMismatch
from .numerics import as_matrix

__all__ = [
    "SystemMatrices",
    "NoiseSpec",
    "RngStream",
    "Rollout",
    "RolloutSet",
    "stable_system",
    "unstable_system",
    "gaussian_vector",
    "gaussian",
    "step",
    "observe",
    "collect_rollouts",
]

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class SystemMatrices:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        a = as_matrix(self.a, "a")
        if a.shape[0] != a.shape[1]:
            raise DimensionMismatch(f"a must be square, got {a.shape}")
        n = a.shape[0]
        b = as_matrix(self.b, "b", rows=n)
        c = as_matrix(self.c, "c", cols=n)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def m(self) -> int:
        return self.b.shape[1]

    @property
    def p(self) -> int:
        return self.c.shape[0]

    def check_bound(self, big_m: float) -> bool:
        """True if ``||a|| <= M`` and ``||b|| <= M`` (spectral norms)."""
        return (np.linalg.norm(self.a, 2) <= big_m) and (np.linalg.norm(self.b, 2) <= big_m)

    def to_dict(self):
        return {"a": self.a.tolist(), "b": self.b.tolist(), "c": self.c.tolist()}

    @classmethod
    def from_dict(cls, d):
        a = np.asarray(d["a"], dtype=float)
        c = d.get("c")
        return cls(a, d["b"], np.eye(a.shape[0]) if c is None else c)


def stable_system() -> SystemMatrices:
    """Open-loop stable benchmark: tridiagonal A (0.9, 0.01), B = (1, 1.5, 2)."""
    a = np.array([[0.9, 0.01, 0.0], [0.01, 0.9, 0.01], [0.0, 0.01, 0.9]])
    return SystemMatrices(a, [[1.0], [1.5], [2.0]], np.eye(3))


def unstable_system() -> SystemMatrices:
    """Open-loop unstable benchmark: tridiagonal A (1.01, 0.01), same B."""
    a = np.array([[1.01, 0.01, 0.0], [0.01, 1.01, 0.01], [0.0, 0.01, 1.01]])
    return SystemMatrices(a, [[1.0], [1.5], [2.0]], np.eye(3))


@dataclass(frozen=True)
class NoiseSpec:
    sigma_w: float = 1.0
    sigma_v: float = 0.0
    sigma_u: float = 1.0

    def __post_init__(self):
        for name in ("sigma_w", "sigma_v", "sigma_u"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        if self.sigma_u <= 0:
            raise ValueError("sigma_u must be > 0 for persistent excitation")

    def to_dict(self):
        return {"sigma_w": self.sigma_w, "sigma_v": self.sigma_v, "sigma_u": self.sigma_u}


@dataclass(frozen=True)
class RngStream:
    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "master_seed", int(self.master_seed) & _MASK64)
        object.__setattr__(self, "stream_id", int(self.stream_id) & _MASK64)

    def child(self, *labels: int) -> "RngStream":
        sid = self.stream_id
        for lab in labels:
            sid = _splitmix64(sid ^ _splitmix64(int(lab) & _MASK64))
        return RngStream(self.master_seed, sid)

    def uniforms(self, count: int) -> np.ndarray:
        """``count`` doubles in (0, 1] from the stream's counter block."""
        gen = np.random.Philox(key=np.array([self.master_seed, self.stream_id], dtype=np.uint64))
        raw = gen.random_raw(count)
        return ((raw >> np.uint64(11)).astype(np.float64) + 1.0) * (1.0 / 9007199254740992.0)


def gaussian(stream: RngStream, shape, sigma: float = 1.0) -> np.ndarray:
    """Independent ``N(0, sigma^2)`` samples of the given shape (Box-Muller)."""
    shape = (shape,) if isinstance(shape, int) else tuple(shape)
    count = int(np.prod(shape))
    if sigma == 0 or count == 0:
        return np.zeros(shape)
    half = (count + 1) // 2
    u = stream.uniforms(2 * half)
    radius = np.sqrt(-2.0 * np.log(u[:half]))
    angle = 2.0 * np.pi * u[half:]
    z = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])[:count]
    return sigma * z.reshape(shape)


def gaussian_vector(stream: RngStream, dim: int, sigma: float) -> np.ndarray:
    if dim < 1:
        raise ValueError("dim must be >= 1")
    return gaussian(stream, dim, sigma)


def step(sys: SystemMatrices, x, u, w) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    w = np.asarray(w, dtype=float).reshape(-1)
    if x.size != sys.n or w.size != sys.n or u.size != sys.m:
        raise DimensionMismatch("state, input or noise dimension does not match system")
    return sys.a @ x + sys.b @ u + w


def observe(sys: SystemMatrices, x, v) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    if x.size != sys.n or v.size != sys.p:
        raise DimensionMismatch("state or measurement-noise dimension does not match system")
    return sys.c @ x + v


@dataclass(frozen=True)
class Rollout:
    states: np.ndarray   # (t0 + 1, n)
    inputs: np.ndarray   # (t0, m)
    outputs: np.ndarray  # (t0 + 1, p)

    def __post_init__(self):
        t0 = self.inputs.shape[0]
        if self.states.shape[0] != t0 + 1 or self.outputs.shape[0] != t0 + 1:
            raise DimensionMismatch("rollout lengths must be t0+1 states/outputs and t0 inputs")


@dataclass(frozen=True)
class RolloutSet:
    rollouts: tuple
    t0: int
    noise: NoiseSpec
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "rollouts", tuple(self.rollouts))
        if not self.rollouts:
            raise ValueError("RolloutSet needs at least one rollout")
        ref = self.rollouts[0]
        for r in self.rollouts:
            if r.inputs.shape[0] != self.t0 or r.states.shape[1:] != ref.states.shape[1:] \
                    or r.inputs.shape[1:] != ref.inputs.shape[1:] \
                    or r.outputs.shape[1:] != ref.outputs.shape[1:]:
                raise DimensionMismatch("all rollouts must share t0 and dimensions")

    @property
    def n_rollouts(self) -> int:
        return len(self.rollouts)

    def states_array(self) -> np.ndarray:
        """States stacked as ``(N, t0 + 1, n)``."""
        return np.stack([r.states for r in self.rollouts])

    def inputs_array(self) -> np.ndarray:
        return np.stack([r.inputs for r in self.rollouts])

    def head(self, count: int) -> "RolloutSet":
        """The first ``count`` rollouts (nested data for sample-size sweeps)."""
        return RolloutSet(self.rollouts[:count], self.t0, self.noise, self.seed)

    def to_dict(self):
        # repr(float) is shortest round-trip exact in Python
        return {
            "seed": self.seed,
            "t0": self.t0,
            "noise": self.noise.to_dict(),
            "rollouts": [
                {"states": r.states.tolist(), "inputs": r.inputs.tolist(), "outputs": r.outputs.tolist()}
                for r in self.rollouts
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        rollouts = [
            Rollout(np.asarray(r["states"], dtype=float), np.asarray(r["inputs"], dtype=float),
                    np.asarray(r["outputs"], dtype=float))
            for r in d["rollouts"]
        ]
        return cls(tuple(rollouts), int(d["t0"]), NoiseSpec(**d["noise"]), int(d["seed"]))

    @classmethod
    def from_json(cls, text: str) -> "RolloutSet":
        return cls.from_dict(json.loads(text))


# sub-stream labels
_U, _W, _V = 1, 2, 3


def collect_rollouts(sys: SystemMatrices, noise: NoiseSpec, n_rollouts: int, t0: int,
                     seed: int) -> RolloutSet:
    """Run ``n_rollouts`` independent trajectories of length ``t0`` from ``x0 = 0``.

    Rollout ``i`` draws its input, process noise and measurement noise from
    streams derived from ``(seed, i)``, so the first ``k`` rollouts of a
    larger set equal a set collected with ``n_rollouts = k``.
    """
    if n_rollouts < 1:
        raise ValueError("n_rollouts must be >= 1")
    if t0 < 2:
        raise ValueError("t0 must be >= 2")
    root = RngStream(seed)
    n, m, p = sys.n, sys.m, sys.p
    rollouts = []
    for i in range(n_rollouts):
        s = root.child(i)
        u = gaussian(s.child(_U), (t0, m), noise.sigma_u)
        w = gaussian(s.child(_W), (t0, n), noise.sigma_w)
        v = gaussian(s.child(_V), (t0 + 1, p), noise.sigma_v)
        x = np.zeros((t0 + 1, n))
        for k in range(t0):
            x[k + 1] = sys.a @ x[k] + sys.b @ u[k] + w[k]
        y = x @ sys.c.T + v
        rollouts.append(Rollout(x, u, y))
    return RolloutSet(tuple(rollouts), t0, noise, int(seed))
