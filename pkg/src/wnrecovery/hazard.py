"""Ground motion, fragility and initial-damage sampling.

Intensities come from a simplified log-linear attenuation model

    ln IM = a0 + a1*Mw - a2*ln(R + c) + sigma_ln*z,   z ~ N(0, 1)

with independent residuals per site.  Facilities (wells, pumps, tanks) are
damaged through lognormal fragility curves on PGA; pipes fail with the
upper-bound Poisson probability 1 - exp(-C*L), C = K * 0.00187 * PGV.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np
from scipy.stats import norm

from .network import ComponentKind, DamageState, WaterNetwork

# ALA repair-rate constant (repairs per km per cm/s of PGV, before the K factor)
ALA_RATE = 0.00187

FACILITY_KINDS = (ComponentKind.WELL, ComponentKind.BOOSTER_PUMP, ComponentKind.TANK)
DAMAGED_STATES = (DamageState.MINOR, DamageState.MODERATE, DamageState.EXTENSIVE,
                  DamageState.COMPLETE)


class HazardConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SeismicEvent:
    magnitude: float = 6.9
    epicenter: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if not 4.0 < self.magnitude < 9.0:
            raise HazardConfigError(f"magnitude {self.magnitude} outside (4, 9)")

    def distance_to(self, site: tuple[float, float]) -> float:
        return math.hypot(site[0] - self.epicenter[0], site[1] - self.epicenter[1])


@dataclass(frozen=True)
class GmpeParams:
    a0: float
    a1: float
    a2: float
    c: float
    sigma_ln: float
    im_kind: str = "PGA"

    def __post_init__(self) -> None:
        if self.sigma_ln < 0:
            raise HazardConfigError("sigma_ln must be >= 0")
        if self.a2 <= 0:
            raise HazardConfigError("a2 must be > 0 (intensity decays with distance)")
        if self.im_kind not in ("PGA", "PGV"):
            raise HazardConfigError(f"im_kind must be PGA or PGV, got {self.im_kind!r}")

    def log_median(self, magnitude: float, distance: float) -> float:
        return self.a0 + self.a1 * magnitude - self.a2 * math.log(distance + self.c)


@dataclass(frozen=True)
class FragilityCurve:
    median: float
    beta: float


@dataclass(frozen=True)
class FragilityRow:
    """Fragility curves of one facility kind, ordered Minor..Complete."""

    curves: tuple[FragilityCurve, ...]

    def validate(self) -> None:
        if len(self.curves) != 4:
            raise HazardConfigError("fragility row needs exactly four damage-state curves")
        medians = [c.median for c in self.curves]
        if any(m <= 0 for m in medians) or any(b >= a for a, b in zip(medians[1:], medians)):
            raise HazardConfigError(f"fragility medians must be positive and strictly increasing: {medians}")
        if any(c.beta <= 0 for c in self.curves):
            raise HazardConfigError("fragility betas must be > 0")

    def exceedance(self, im: float) -> np.ndarray:
        """P(state >= ds) for ds = Minor..Complete.

        Curves with different betas can cross in the far tails; the running
        minimum keeps the result non-increasing across states.
        """
        med = np.array([c.median for c in self.curves])
        beta = np.array([c.beta for c in self.curves])
        with np.errstate(divide="ignore"):
            return np.minimum.accumulate(norm.cdf(np.log(im / med) / beta))

    def state_probabilities(self, im: float) -> np.ndarray:
        """Categorical distribution over None..Complete implied by the exceedance curves."""
        self.validate()
        exc = np.concatenate(([1.0], self.exceedance(im), [0.0]))
        return exc[:-1] - exc[1:]


@dataclass(frozen=True)
class HazardConfig:
    event: SeismicEvent
    gmpe_pga: GmpeParams
    gmpe_pgv: GmpeParams
    fragility: Mapping[ComponentKind, FragilityRow]
    pipe_K: float = 1.0
    extras: Mapping[str, Any] = field(default_factory=dict)

    @classmethod
    def from_document(cls, doc: Mapping[str, Any]) -> "HazardConfig":
        try:
            ev = doc["event"]
            event = SeismicEvent(float(ev["magnitude"]), tuple(float(x) for x in ev["epicenter"]))
            pga = GmpeParams(**{**doc["gmpe_pga"], "im_kind": doc["gmpe_pga"].get("im_kind", "PGA")})
            pgv = GmpeParams(**{**doc["gmpe_pgv"], "im_kind": doc["gmpe_pgv"].get("im_kind", "PGV")})
            frag: dict[ComponentKind, FragilityRow] = {}
            for kind_name, states in doc["fragility"].items():
                kind = ComponentKind(kind_name)
                row = FragilityRow(tuple(
                    FragilityCurve(float(states[s.label]["median"]), float(states[s.label]["beta"]))
                    for s in DAMAGED_STATES))
                row.validate()
                frag[kind] = row
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, HazardConfigError):
                raise
            raise HazardConfigError(f"bad hazard config: {exc!r}") from exc
        missing = [k.value for k in FACILITY_KINDS if k not in frag]
        if missing:
            raise HazardConfigError(f"fragility missing for: {', '.join(missing)}")
        return cls(event, pga, pgv, frag, float(doc.get("pipe", {}).get("K", 1.0)))


def load_hazard_config(path: str | Path | None = None) -> HazardConfig:
    if path is None:
        text = resources.files("wnrecovery.data").joinpath("hazard_default.json").read_text()
    else:
        text = Path(path).read_text()
    return HazardConfig.from_document(json.loads(text))


def compute_intensity(event: SeismicEvent, site: tuple[float, float], params: GmpeParams,
                      rng: np.random.Generator) -> float:
    """One intensity sample at ``site`` (g for PGA, cm/s for PGV)."""
    distance = event.distance_to(site)
    z = rng.standard_normal() if params.sigma_ln > 0 else 0.0
    return math.exp(params.log_median(event.magnitude, distance) + params.sigma_ln * z)


def sample_facility_damage(fragility: FragilityRow, pga: float, rng: np.random.Generator) -> DamageState:
    if pga <= 0:
        raise ValueError("pga must be > 0")
    probs = fragility.state_probabilities(pga)
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    return DamageState(min(idx, 4))


def pipe_failure_prob_ub(K: float, length_km: float, pgv: float) -> float:
    """Upper-bound failure probability 1 - exp(-C*L) of a pipe, C = K * 0.00187 * pgv."""
    if K < 0 or length_km < 0 or pgv < 0:
        raise ValueError(f"negative input: K={K}, length_km={length_km}, pgv={pgv}")
    return -math.expm1(-repair_rate(K, pgv) * length_km)


def repair_rate(K: float, pgv: float) -> float:
    """Expected breaks per km."""
    return K * ALA_RATE * pgv


@dataclass(frozen=True)
class Scenario:
    """Initial damage: a state per component, plus the realized break rate C of every pipe."""

    damage: dict[str, DamageState]
    pipe_rate: dict[str, float]
    intensity: dict[str, float] = field(default_factory=dict)

    @property
    def damaged_ids(self) -> list[str]:
        return [cid for cid, ds in self.damage.items() if ds != DamageState.NONE]

    def to_document(self) -> dict[str, Any]:
        return {
            "damage": {cid: ds.label for cid, ds in self.damage.items()},
            "pipe_rate": dict(self.pipe_rate),
            "intensity": dict(self.intensity),
        }

    @classmethod
    def from_document(cls, doc: Mapping[str, Any]) -> "Scenario":
        return cls({k: DamageState.parse(v) for k, v in doc["damage"].items()},
                   {k: float(v) for k, v in doc.get("pipe_rate", {}).items()},
                   {k: float(v) for k, v in doc.get("intensity", {}).items()})


def sample_scenario(network: WaterNetwork, config: HazardConfig, rng: np.random.Generator,
                    event: SeismicEvent | None = None) -> Scenario:
    """Draw one initial damage configuration for every component of ``network``."""
    event = event or config.event
    damage: dict[str, DamageState] = {}
    pipe_rate: dict[str, float] = {}
    intensity: dict[str, float] = {}
    for comp in network.components:
        if comp.is_pipe:
            pgv = compute_intensity(event, comp.site, config.gmpe_pgv, rng)
            K = comp.pipe_K if comp.pipe_K > 0 else config.pipe_K
            p_fail = pipe_failure_prob_ub(K, comp.pipe_length_km, pgv)
            damage[comp.id] = DamageState.COMPLETE if rng.random() < p_fail else DamageState.NONE
            pipe_rate[comp.id] = repair_rate(K, pgv)
            intensity[comp.id] = pgv
        else:
            pga = compute_intensity(event, comp.site, config.gmpe_pga, rng)
            damage[comp.id] = sample_facility_damage(config.fragility[comp.kind], pga, rng)
            intensity[comp.id] = pga
    return Scenario(damage, pipe_rate, intensity)
