"""
Geração dos ambientes de avaliação: mapas de pista para o carro e labirintos de
segmentos para o pogobot. Ambos são determinísticos para uma semente e são
gravados em YAML.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from ..dynamics.pogo import PogoParams
from ..exceptions import ConfigError
from ..io import read_yaml, write_yaml

FRICTIONS = (0.1, 1.0)
SEGMENT_LENGTH = (7.5, 37.5)
MAX_TURN = np.pi / 4
CAR_SPEED = (4.0, 8.0)

POGO_LENGTH = (3.0, 6.0)
POGO_FLOOR = (-0.5, 2.0)
POGO_CEILING = (1.5, 3.5)
POGO_SPEED = (0.5, 1.5)
POGO_SEGMENTS = (3, 5)
MIN_CLEARANCE = 1.0


@dataclass
class CarSegment:
    length: float
    heading: float
    mu: float
    v_ref: float


@dataclass
class CarMap:
    name: str
    seed: int
    segments: list = field(default_factory=list)

    @property
    def waypoints(self):
        points = [np.zeros(2)]
        for seg in self.segments:
            points.append(points[-1] + seg.length * np.array([np.cos(seg.heading), np.sin(seg.heading)]))
        return np.array(points)

    @property
    def total_length(self):
        return float(sum(seg.length for seg in self.segments))

    def cumulative(self):
        return np.concatenate([[0.0], np.cumsum([seg.length for seg in self.segments])])

    def turns(self):
        """Ângulo entre segmentos consecutivos (π = reta)"""
        headings = np.array([seg.heading for seg in self.segments])
        diff = np.abs(np.arctan2(np.sin(np.diff(headings)), np.cos(np.diff(headings))))
        return np.pi - diff

    def config(self, k):
        """Configuração nominal do segmento k: (s, w, v_ref, μ)"""
        w = self.waypoints
        seg = self.segments[k]
        return np.array([w[k, 0], w[k, 1], w[k + 1, 0], w[k + 1, 1], seg.v_ref, seg.mu])

    def locate(self, X, Y, segment):
        """
        Distância à linha central e progresso ao longo do mapa, usando o segmento
        atual e o anterior (o que estiver mais perto).
        """
        w, cum = self.waypoints, self.cumulative()
        point = np.array([X, Y])
        best = None
        for k in {max(segment - 1, 0), min(segment, len(self.segments) - 1)}:
            d = w[k + 1] - w[k]
            length = np.linalg.norm(d)
            d = d / length
            rel = point - w[k]
            along = float(rel @ d)
            lateral = float(d[0] * rel[1] - d[1] * rel[0])
            clipped = min(max(along, 0.0), length)
            gap = float(np.linalg.norm(rel - clipped * d))
            if best is None or gap < best[0]:
                best = (gap, lateral, cum[k] + clipped)
        return best[1], float(best[2])

    def to_dict(self):
        return {"name": self.name, "seed": self.seed, "segments": [asdict(s) for s in self.segments]}

    @classmethod
    def from_dict(cls, data):
        return cls(data["name"], int(data["seed"]), [CarSegment(**s) for s in data["segments"]])


def gen_car_map(seed, n_segments=10, name=None):
    rng = np.random.default_rng(seed)
    segments, heading = [], 0.0
    for k in range(n_segments):
        if k:
            heading += rng.choice([-1.0, 1.0]) * rng.uniform(0.0, MAX_TURN)
        segments.append(CarSegment(
            length=float(rng.uniform(*SEGMENT_LENGTH)),
            heading=float(heading),
            mu=float(rng.choice(FRICTIONS)),
            v_ref=float(rng.uniform(*CAR_SPEED)),
        ))
    return CarMap(name or f"car-{seed}", int(seed), segments)


def _child_seeds(seed, n):
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def gen_car_maps(seed, n=25, n_segments=10):
    return [gen_car_map(s, n_segments, f"car-{seed}-{i:02d}") for i, s in enumerate(_child_seeds(seed, n))]


def adversarial_car_map():
    """Reta seca em alta velocidade seguida de curva fechada no gelo"""
    return CarMap("adversarial-ice", 0, [
        CarSegment(30.0, 0.0, 1.0, 8.0),
        CarSegment(20.0, MAX_TURN, 0.1, 8.0),
        CarSegment(30.0, 0.0, 0.1, 6.0),
    ])


@dataclass
class PogoSegment:
    length: float
    floor: float
    ceiling: float
    v_ref: float

    @property
    def clearance(self):
        return self.ceiling - self.floor


@dataclass
class PogoMaze:
    name: str
    seed: int
    segments: list = field(default_factory=list)

    @property
    def starts(self):
        return np.concatenate([[0.0], np.cumsum([s.length for s in self.segments])[:-1]])

    @property
    def total_length(self):
        return float(sum(s.length for s in self.segments))

    def segment_index(self, x):
        idx = int(np.searchsorted(self.starts, x, side="right")) - 1
        return min(max(idx, 0), len(self.segments) - 1)

    def floor_at(self, x):
        return self.segments[self.segment_index(x)].floor

    def ceiling_at(self, x):
        return self.segments[self.segment_index(x)].ceiling

    def h_ref(self, k, params=None):
        """Altura de ápice de referência acima do chão local"""
        params = params or PogoParams()
        return params.l0 + 0.4 * (self.segments[k].clearance - params.l0)

    def config(self, k, params=None):
        return np.array([self.h_ref(k, params), self.segments[k].v_ref])

    def to_dict(self):
        return {"name": self.name, "seed": self.seed, "segments": [asdict(s) for s in self.segments]}

    @classmethod
    def from_dict(cls, data):
        return cls(data["name"], int(data["seed"]), [PogoSegment(**s) for s in data["segments"]])


def gen_pogo_maze(seed, name=None):
    rng = np.random.default_rng(seed)
    segments = []
    for _ in range(int(rng.integers(POGO_SEGMENTS[0], POGO_SEGMENTS[1] + 1))):
        while True:
            floor = float(rng.uniform(*POGO_FLOOR))
            ceiling = float(rng.uniform(*POGO_CEILING))
            if ceiling > floor + MIN_CLEARANCE:
                break
        segments.append(PogoSegment(float(rng.uniform(*POGO_LENGTH)), floor, ceiling, float(rng.uniform(*POGO_SPEED))))
    return PogoMaze(name or f"pogo-{seed}", int(seed), segments)


def gen_pogo_mazes(seed, n=25):
    return [gen_pogo_maze(s, f"pogo-{seed}-{i:02d}") for i, s in enumerate(_child_seeds(seed, n))]


@dataclass
class GaitSchedule:
    """Sequência de marchas (q1_ref) que o walker deve alcançar, a primeira é a inicial"""

    name: str
    seed: int
    targets: list = field(default_factory=list)

    def to_dict(self):
        return {"name": self.name, "seed": self.seed, "targets": [float(q) for q in self.targets]}

    @classmethod
    def from_dict(cls, data):
        return cls(data["name"], int(data["seed"]), [float(q) for q in data["targets"]])


def gen_gait_schedules(seed, n=25, n_targets=3, q_range=(0.04, 0.18)):
    schedules = []
    for i, s in enumerate(_child_seeds(seed, n)):
        rng = np.random.default_rng(s)
        targets = np.round(rng.uniform(*q_range, size=n_targets), 3)
        schedules.append(GaitSchedule(f"walker-{seed}-{i:02d}", int(s), targets.tolist()))
    return schedules


ENVIRONMENTS = {"car": CarMap, "pogo": PogoMaze, "walker": GaitSchedule}


def write_maps(path, maps, kind, seed):
    return write_yaml(path, {"kind": kind, "seed": int(seed), "maps": [m.to_dict() for m in maps]})


def read_maps(path):
    data = read_yaml(path, "map file")
    kind = data.get("kind")
    if kind not in ENVIRONMENTS:
        raise ConfigError("maps.kind", f"unknown environment kind {kind!r}")
    return kind, [ENVIRONMENTS[kind].from_dict(m) for m in data.get("maps", [])]
