"""Scenario configuration: one dataclass describing a full simulation scene."""

from dataclasses import dataclass, replace
import numpy as np
import yaml

SCHEMES = ("ieg", "aeg", "uirs_q", "random_rcv", "no_irs")
SCENARIOS = ("obscured", "unobscured")


@dataclass
class ScenarioConfig:
    """Geometry, array sizes, fading statistics, and run controls for a scene.

    Distances are metres, powers dBm, Rician factors linear. The direct
    BS-user link uses the NLoS path-loss model when scenario == "obscured"
    and the LoS model otherwise; BS-IRS and IRS-user links are always LoS.
    """

    M: int = 4                      # BS antennas
    K: int = 4                      # single-antenna users
    N: int = 1024                   # IRS elements
    Q: int = 4                      # reflection groups
    Q0: int | None = None           # pilot budget; defaults to Q
    bs_pos: tuple = (0.0, 6.0, 16.0)
    irs_pos: tuple = (300.0, 0.0, 8.0)
    user_center: tuple = (300.0, 6.0, 0.0)
    user_radius: float = 2.0
    kappa_bi: float = 1.0
    kappa_iu: float = 1.0
    kappa_bu: float = 1.0
    power_dbm: float = 10.0
    noise_dbm: float = -100.0
    scenario: str = "obscured"
    weights: tuple | None = None    # per-user rate weights, default all-ones
    trials: int = 20
    seed: int = 1
    schemes: tuple = SCHEMES

    def __post_init__(self):
        if self.Q0 is None:
            self.Q0 = self.Q
        if not (1 <= self.Q <= self.Q0 <= self.N):
            raise ValueError(f"need 1 <= Q <= Q0 <= N, got Q={self.Q}, Q0={self.Q0}, N={self.N}")
        if self.M < 1 or self.K < 1:
            raise ValueError("M and K must be >= 1")
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.weights is None:
            self.weights = tuple(1.0 for _ in range(self.K))
        if len(self.weights) != self.K:
            raise ValueError("weights length must equal K")

    @property
    def power_watts(self):
        return 10.0 ** ((self.power_dbm - 30.0) / 10.0)

    @property
    def noise_watts(self):
        return 10.0 ** ((self.noise_dbm - 30.0) / 10.0)

    def replace(self, **kw):
        return replace(self, **kw)

    @classmethod
    def from_dict(cls, raw):
        """Build from a nested mapping (the YAML layout below)."""
        kw = {}
        sys_ = raw.get("system", {})
        for key in ("M", "K", "N", "Q", "Q0"):
            if key in sys_:
                kw[key] = sys_[key]
        geo = raw.get("geometry", {})
        for src, dst in (("bs", "bs_pos"), ("irs", "irs_pos"), ("user_center", "user_center")):
            if src in geo:
                kw[dst] = tuple(float(v) for v in geo[src])
        if "user_radius" in geo:
            kw["user_radius"] = float(geo["user_radius"])
        kap = raw.get("kappas", {})
        for src, dst in (("bi", "kappa_bi"), ("iu", "kappa_iu"), ("bu", "kappa_bu")):
            if src in kap:
                kw[dst] = float(kap[src])
        for key in ("power_dbm", "noise_dbm", "scenario", "trials", "seed"):
            if key in raw:
                kw[key] = raw[key]
        if "weights" in raw:
            kw["weights"] = tuple(float(v) for v in raw["weights"])
        if "schemes" in raw:
            kw["schemes"] = tuple(raw["schemes"])
        return cls(**kw)

    @classmethod
    def from_yaml(cls, path):
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
        return cls.from_dict(raw)

    def to_dict(self):
        return {
            "system": {"M": self.M, "K": self.K, "N": self.N, "Q": self.Q, "Q0": self.Q0},
            "geometry": {
                "bs": list(self.bs_pos),
                "irs": list(self.irs_pos),
                "user_center": list(self.user_center),
                "user_radius": self.user_radius,
            },
            "kappas": {"bi": self.kappa_bi, "iu": self.kappa_iu, "bu": self.kappa_bu},
            "power_dbm": self.power_dbm,
            "noise_dbm": self.noise_dbm,
            "scenario": self.scenario,
            "weights": list(self.weights),
            "trials": self.trials,
            "seed": self.seed,
            "schemes": list(self.schemes),
        }


def trial_seed_sequence(master_seed, trial):
    """Root seed sequence for one trial; stable under changes of trial count."""
    return np.random.SeedSequence([int(master_seed), int(trial)])
