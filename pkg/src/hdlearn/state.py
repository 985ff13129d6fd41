"""Shared value types: phase-space states, system descriptions, trajectories.

All types are immutable after construction (arrays are marked read-only) and
safe to share between threads.
"""

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ShapeMismatchError


class SystemKind(str, Enum):
    PENDULUM = "pendulum"
    SPRING = "spring"
    GRAVITATIONAL = "gravitational"
    BINARY_LJ = "binary_lj"
    HYBRID = "hybrid"


def _freeze(a, dtype=float):
    a = np.asarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SystemSpec:
    """Static description of a particle system.

    constants carries named scalars (g, k, r0, G, box, and per-species-pair
    eps/sigma/cutoff for the binary mixture). For hybrid systems `subsystems`
    lists (kind, particle indices, local edges, kinetic ownership).
    """

    kind: SystemKind
    n: int
    dim: int
    masses: np.ndarray
    types: np.ndarray
    edges: tuple
    constants: dict = field(default_factory=dict)
    pbc: bool = False
    constraint_count: int = 0
    subsystems: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", SystemKind(self.kind))
        object.__setattr__(self, "masses", _freeze(self.masses))
        object.__setattr__(self, "types", _freeze(self.types, dtype=np.int64))
        object.__setattr__(self, "edges",
                           tuple((int(i), int(j)) for i, j in self.edges))
        if self.masses.shape != (self.n,):
            raise ShapeMismatchError(f"masses must have shape ({self.n},)")
        if self.types.shape != (self.n,):
            raise ShapeMismatchError(f"types must have shape ({self.n},)")
        if np.any(self.masses <= 0):
            raise ValueError("masses must be positive")
        for i, j in self.edges:
            if i == j:
                raise ValueError(f"self-edge ({i},{j}) not allowed")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i},{j}) references invalid particle")
        if self.pbc and self.constants.get("box", 0.0) <= 0.0:
            raise ValueError("periodic systems need a positive box length")
        if self.kind is SystemKind.PENDULUM and self.constraint_count != self.n:
            raise ValueError("pendulum chains carry one rod constraint per bob")

    def to_json(self):
        doc = {
            "kind": self.kind.value,
            "n": self.n,
            "dim": self.dim,
            "masses": list(self.masses),
            "types": [int(t) for t in self.types],
            "edges": [list(e) for e in self.edges],
            "constants": self.constants,
            "pbc": self.pbc,
            "constraint_count": self.constraint_count,
        }
        if self.subsystems:
            doc["subsystems"] = [s.to_json() for s in self.subsystems]
        return doc

    @classmethod
    def from_json(cls, doc):
        subs = tuple(SubSystem.from_json(s) for s in doc.get("subsystems", ()))
        return cls(kind=doc["kind"], n=doc["n"], dim=doc["dim"],
                   masses=doc["masses"], types=doc["types"],
                   edges=[tuple(e) for e in doc["edges"]],
                   constants=dict(doc.get("constants", {})),
                   pbc=doc.get("pbc", False),
                   constraint_count=doc.get("constraint_count", 0),
                   subsystems=subs)

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_json(), f, indent=1, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_json(json.load(f))


@dataclass(frozen=True)
class SubSystem:
    """One component of a hybrid system, in global particle indices."""

    kind: SystemKind
    particles: tuple        # global indices of this component's nodes
    edges: tuple            # edges in global indices
    kinetic_owned: tuple    # global indices whose kinetic energy this component owns

    def __post_init__(self):
        object.__setattr__(self, "kind", SystemKind(self.kind))
        object.__setattr__(self, "particles", tuple(int(i) for i in self.particles))
        object.__setattr__(self, "edges",
                           tuple((int(i), int(j)) for i, j in self.edges))
        object.__setattr__(self, "kinetic_owned",
                           tuple(int(i) for i in self.kinetic_owned))

    def to_json(self):
        return {"kind": self.kind.value, "particles": list(self.particles),
                "edges": [list(e) for e in self.edges],
                "kinetic_owned": list(self.kinetic_owned)}

    @classmethod
    def from_json(cls, doc):
        return cls(kind=doc["kind"], particles=doc["particles"],
                   edges=[tuple(e) for e in doc["edges"]],
                   kinetic_owned=doc["kinetic_owned"])


@dataclass(frozen=True)
class PhaseState:
    """Positions, velocities, and momenta of all particles at one instant.

    p is authoritative for energy evaluation, v for integrator kinematics;
    p = M v holds exactly for the owning spec's diagonal mass matrix.
    """

    x: np.ndarray
    v: np.ndarray
    p: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", _freeze(self.x))
        object.__setattr__(self, "v", _freeze(self.v))
        object.__setattr__(self, "p", _freeze(self.p))
        if not (self.x.shape == self.v.shape == self.p.shape):
            raise ShapeMismatchError("x, v, p must have identical shapes")

    @classmethod
    def from_xv(cls, spec, x, v, time=0.0):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        if x.shape != (spec.n, spec.dim):
            raise ShapeMismatchError(
                f"expected positions of shape ({spec.n}, {spec.dim}), got {x.shape}")
        return cls(x=x, v=v, p=momentum_of(spec, v), time=time)

    @classmethod
    def from_xp(cls, spec, x, p, time=0.0):
        p = np.asarray(p, dtype=float)
        return cls(x=np.asarray(x, dtype=float), p=p,
                   v=p / np.asarray(spec.masses)[:, None], time=time)

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def dim(self):
        return self.x.shape[1]

    def flat_z(self):
        """Concatenated [x; p] as one vector (the dynamics-module layout)."""
        return np.concatenate([self.x.ravel(), self.p.ravel()])

    @classmethod
    def from_flat_z(cls, spec, z, time=0.0):
        nd = spec.n * spec.dim
        x = z[:nd].reshape(spec.n, spec.dim)
        p = z[nd:].reshape(spec.n, spec.dim)
        return cls.from_xp(spec, x, p, time=time)


def momentum_of(spec, v):
    """Per-particle momentum m_i v_i for a diagonal mass matrix."""
    v = np.asarray(v, dtype=float)
    if v.shape != (spec.n, spec.dim):
        raise ShapeMismatchError(
            f"expected velocities of shape ({spec.n}, {spec.dim}), got {v.shape}")
    return v * np.asarray(spec.masses)[:, None]


def total_momentum(state):
    """Sum of particle momenta, one component per axis."""
    return np.asarray(state.p).sum(axis=0)


def minimum_image(dx, box):
    """Wrap displacement components into [-box/2, box/2)."""
    if box <= 0:
        raise ValueError("box length must be positive")
    dx = np.asarray(dx, dtype=float)
    return dx - box * np.floor(dx / box + 0.5)


@dataclass
class Trajectory:
    """Time-ordered phase states recorded every `stride` integrator steps.

    When produced by a generator, `successors` holds, per recorded frame, the
    state one fine step (dt) later; training pairs are built from these.
    """

    spec: SystemSpec
    frames: list
    dt: float
    stride: int
    successors: list = None

    def __len__(self):
        return len(self.frames)

    def times(self):
        return np.array([f.time for f in self.frames])

    def check_spacing(self, tol=1e-9):
        t = self.times()
        expected = self.dt * self.stride
        gaps = np.diff(t)
        if len(gaps) and np.max(np.abs(gaps - expected)) > tol * max(1.0, expected):
            raise ValueError("frames are not uniformly spaced by dt * stride")

    def write_csv(self, path):
        spec = self.spec
        cols = [f"x{k}" for k in range(spec.dim)] + [f"v{k}" for k in range(spec.dim)]
        with open(path, "w") as f:
            f.write("frame,time,particle,type," + ",".join(cols) + "\n")
            for idx, fr in enumerate(self.frames):
                for i in range(spec.n):
                    vals = [f"{c:.17g}" for c in fr.x[i]] + [f"{c:.17g}" for c in fr.v[i]]
                    f.write(f"{idx},{fr.time:.17g},{i},{int(spec.types[i])},"
                            + ",".join(vals) + "\n")

    @classmethod
    def read_csv(cls, path, spec, dt, stride):
        data = np.genfromtxt(path, delimiter=",", names=True)
        data = np.atleast_1d(data)
        frames = []
        n = spec.n
        order = np.lexsort((data["particle"], data["frame"]))
        data = data[order]
        for lo in range(0, len(data), n):
            block = data[lo: lo + n]
            x = np.column_stack([block[f"x{k}"] for k in range(spec.dim)])
            v = np.column_stack([block[f"v{k}"] for k in range(spec.dim)])
            frames.append(PhaseState.from_xv(spec, x, v, time=float(block["time"][0])))
        return cls(spec=spec, frames=frames, dt=dt, stride=stride)
