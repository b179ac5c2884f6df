"""Piecewise-stationary count series and the simulation scenario catalog."""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .models import MeanFamily, make_family

DEFAULT_BURN_IN = 500


@dataclass(frozen=True)
class Emission:
    """Conditional law of Y_t given its mean: ``poisson``, ``negbin`` (size r) or ``bernoulli``."""

    variant: str = "poisson"
    r: float | None = None

    def __post_init__(self):
        if self.variant not in ("poisson", "negbin", "bernoulli"):
            raise ConfigError(f"unknown emission {self.variant!r}")
        if self.variant == "negbin" and not (self.r is not None and self.r > 0):
            raise ConfigError("negative binomial emission needs r > 0")

    @property
    def name(self) -> str:
        return f"negbin(r={self.r:g})" if self.variant == "negbin" else self.variant


@dataclass(frozen=True)
class ScenarioConfig:
    family: MeanFamily
    emission: Emission
    n: int
    tau_star: tuple[float, ...]
    theta_star: tuple[tuple[float, ...], ...]
    burn_in: int = DEFAULT_BURN_IN
    seed: int = 0
    name: str = "custom"

    def __post_init__(self):
        if len(self.theta_star) != len(self.tau_star) + 1:
            raise ConfigError("need exactly one more regime than break fractions")
        if any(not 0 < t < 1 for t in self.tau_star) or any(
            b <= a for a, b in zip(self.tau_star, self.tau_star[1:])
        ):
            raise ConfigError("break fractions must be strictly increasing inside (0, 1)")
        for a, b in zip(self.theta_star, self.theta_star[1:]):
            if tuple(a) == tuple(b):
                raise ConfigError("consecutive regimes must have different parameters")
        for th in self.theta_star:
            self.family.check_theta(th)
        if self.burn_in < 0:
            raise ConfigError("burn_in must be non-negative")
        bounds = [0, *self.t_star, self.n]
        if any(b - a < 2 for a, b in zip(bounds[:-1], bounds[1:])):
            raise ConfigError("every regime must span at least two observations")
        if self.emission.variant == "bernoulli" and self.family.variant != "bininarch1":
            raise ConfigError("bernoulli emission requires the bininarch1 family")

    @property
    def k_star(self) -> int:
        return len(self.theta_star)

    @property
    def t_star(self) -> tuple[int, ...]:
        """Last index of each regime but the final one (1-based)."""
        return tuple(int(math.floor(self.n * t + 1e-9)) for t in self.tau_star)

    def with_n(self, n: int) -> "ScenarioConfig":
        return dataclasses.replace(self, n=n)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return dataclasses.replace(self, seed=seed)


def stream(seed: int, replication: int = 0) -> np.random.Generator:
    """Independent generator for replication ``replication`` of master ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed) & (2**64 - 1), int(replication)])))


def _draw(emission: Emission, lam: float, rng: np.random.Generator) -> int:
    if emission.variant == "poisson":
        return int(rng.poisson(lam))
    if emission.variant == "negbin":
        p = emission.r / (emission.r + lam)
        return int(rng.negative_binomial(emission.r, p))
    if not 0.0 < lam < 1.0:
        raise ConfigError(f"bernoulli mean {lam:.4g} outside (0, 1)")
    return int(rng.random() < lam)


def simulate_piecewise(cfg: ScenarioConfig, replication: int = 0,
                       return_means: bool = False):
    """Draw ``cfg.n`` counts; the recursion runs on the realized past and
    switches parameters after each ``t_star``. The first ``burn_in`` draws
    use regime 1 and are discarded."""
    rng = stream(cfg.seed, replication)
    fam = cfg.family
    total = cfg.burn_in + cfg.n
    regime = np.zeros(total, dtype=np.int64)
    for t_break in cfg.t_star:
        regime[cfg.burn_in + t_break:] += 1
    thetas = [np.asarray(th, dtype=float) for th in cfg.theta_star]
    y = np.zeros(total, dtype=np.int64)
    lam_out = np.zeros(total)
    if fam.variant == "inarchinf":
        gamma = fam.decay(total)
    lam_prev = None
    for t in range(total):
        th = thetas[regime[t]]
        y_prev = y[t - 1] if t > 0 else 0
        if fam.variant in ("inarch1", "bininarch1"):
            lam = th[0] + th[1] * y_prev
        elif fam.variant == "ingarch11":
            lam = th[0] / (1.0 - th[2]) if lam_prev is None else th[0] + th[1] * y_prev + th[2] * lam_prev
        else:
            lam = th[0] + float(np.dot(gamma[:t], y[t - 1::-1])) if t > 0 else th[0]
        y[t] = _draw(cfg.emission, lam, rng)
        lam_out[t] = lam
        lam_prev = lam
    if return_means:
        return y[cfg.burn_in:], lam_out[cfg.burn_in:]
    return y[cfg.burn_in:]


def _sc(name, family, emission, taus, thetas, n=1000):
    return ScenarioConfig(make_family(family), emission, n, tuple(taus),
                          tuple(tuple(t) for t in thetas), name=name)


def scenario_library() -> dict[str, ScenarioConfig]:
    """The simulation scenarios, at n = 1000 (use ``with_n`` for other sizes)."""
    P = Emission("poisson")
    NB = Emission("negbin", 14.0)
    B = Emission("bernoulli")
    ia = [(0.5, 0.6), (1.0, 0.6), (1.0, 0.25)]
    ig_a = [(1.0, 0.2, 0.15), (1.0, 0.45, 0.15)]
    ig_b = [(0.1, 0.3, 0.6), (0.5, 0.3, 0.6), (0.5, 0.3, 0.2)]
    bin_ = [(0.15, 0.75), (0.04, 0.60), (0.25, 0.35)]
    lib = [
        _sc("IA0", "inarch1", P, [], ia[:1]),
        _sc("IA1", "inarch1", P, [0.5], ia[:2]),
        _sc("IA2", "inarch1", P, [0.3, 0.7], ia),
        _sc("IG0", "ingarch11", P, [], ig_a[:1]),
        _sc("IG1", "ingarch11", P, [0.5], ig_a),
        _sc("IG2", "ingarch11", P, [0.3, 0.7], ig_b),
        _sc("NB-IG0", "ingarch11", NB, [], ig_a[:1]),
        _sc("NB-IG1", "ingarch11", NB, [0.5], ig_a),
        _sc("NB-IG2", "ingarch11", NB, [0.3, 0.7], ig_b),
        _sc("BIN-IA0", "bininarch1", B, [], bin_[:1]),
        _sc("BIN-IA1", "bininarch1", B, [0.5], bin_[:2]),
        _sc("BIN-IA2", "bininarch1", B, [0.3, 0.7], bin_),
        _sc("IA-INF0", "inarchinf", P, [], [(0.5,)]),
        _sc("IA-INF1", "inarchinf", P, [0.5], [(0.5,), (0.1,)]),
    ]
    return {s.name: s for s in lib}


def get_scenario(name: str) -> ScenarioConfig:
    lib = scenario_library()
    key = name.upper()
    if key not in lib:
        raise ConfigError(f"unknown scenario {name!r}; available: {', '.join(lib)}")
    return lib[key]


def dump_scenario(cfg: ScenarioConfig) -> str:
    """Key-value text form of a scenario (INI section ``[scenario]``)."""
    lines = [
        "[scenario]",
        f"name = {cfg.name}",
        f"family = {cfg.family.variant}",
        f"emission = {cfg.emission.variant}",
    ]
    if cfg.emission.r is not None:
        lines.append(f"r = {cfg.emission.r!r}")
    lines += [
        f"n = {cfg.n}",
        f"tau_star = {', '.join(repr(t) for t in cfg.tau_star)}",
        f"theta_star = {'; '.join(', '.join(repr(float(v)) for v in th) for th in cfg.theta_star)}",
        f"burn_in = {cfg.burn_in}",
        f"seed = {cfg.seed}",
    ]
    return "\n".join(lines) + "\n"


def parse_scenario(text: str) -> ScenarioConfig:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
        sec = cp["scenario"]
        taus = [float(v) for v in sec.get("tau_star", "").split(",") if v.strip()]
        thetas = [tuple(float(v) for v in part.split(",")) for part in sec["theta_star"].split(";")]
        r = sec.get("r")
        emission = Emission(sec.get("emission", "poisson"), float(r) if r else None)
        return ScenarioConfig(
            make_family(sec["family"]), emission, int(sec["n"]), tuple(taus), tuple(thetas),
            burn_in=int(sec.get("burn_in", DEFAULT_BURN_IN)), seed=int(sec.get("seed", 0)),
            name=sec.get("name", "custom"),
        )
    except (KeyError, ValueError, configparser.Error) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed scenario file: {exc}") from exc


def load_scenario(path) -> ScenarioConfig:
    with open(path) as fh:
        return parse_scenario(fh.read())
