"""Channel synthesis: path loss, Rician links, cascades, and scene construction.

Conventions. The BS ULA lies along the y axis; the IRS is a UPA spanning the
x and z axes (facing +y), factored as a Kronecker product of two ULA
responses with a near-square factorisation of N. Steering angles come from
the direction cosine of the 3-D unit link vector onto each array axis
(broadside convention), and path-loss distances are full 3-D lengths.
"""

from dataclasses import dataclass

import numpy as np

from .mathkit import array_response

_PL_COEF = {"los": (42.0, 22.0), "nlos": (40.9, 36.7)}


def path_loss_db(model, d):
    """3GPP-style large-scale path loss in dB at distance d metres."""
    if d <= 0:
        raise ValueError("distance must be positive")
    if model not in _PL_COEF:
        raise ValueError(f"unknown path loss model {model!r}")
    a, b = _PL_COEF[model]
    return a + b * np.log10(d)


def path_loss_amplitude(model, d):
    """Linear amplitude factor delta = 10^(-PL/20)."""
    return 10.0 ** (-path_loss_db(model, d) / 20.0)


@dataclass
class RicianLink:
    """One Rician-faded link: amplitude factor, Rician factor, LoS component."""

    delta: float
    kappa: float
    los: np.ndarray          # unit-modulus entries, shape = link dims

    def __post_init__(self):
        if self.delta < 0 or self.kappa < 0:
            raise ValueError("delta and kappa must be nonnegative")

    @property
    def stat_component(self):
        """Deterministic part delta*sqrt(kappa/(1+kappa))*los (the S-CSI channel)."""
        return self.delta * np.sqrt(self.kappa / (1.0 + self.kappa)) * self.los

    @property
    def nlos_scale(self):
        return self.delta * np.sqrt(1.0 / (1.0 + self.kappa))


def complex_normal(shape, rng):
    """i.i.d. CN(0,1) samples (unit variance per complex entry)."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def sample_rician(link, rng):
    """One realization delta*(sqrt(k/(1+k))*los + sqrt(1/(1+k))*nlos)."""
    return link.stat_component + link.nlos_scale * complex_normal(link.los.shape, rng)


@dataclass
class CascadePair:
    """Deterministic cascade component and the mixing coefficients of the rest.

    coeffs = (a_bar, a_tilde, b_bar, b_tilde); their squares sum to 1 exactly.
    a_bar weighs the LoS(x)LoS product, a_tilde the NLoS(x)NLoS product, and
    b_bar/b_tilde the two mixed products. scale = delta_bi*delta_iu.
    """

    c1: np.ndarray
    coeffs: tuple
    scale: float


def cascade_coefficients(kappa_bi, kappa_iu):
    d = (1.0 + kappa_bi) * (1.0 + kappa_iu)
    a_bar = np.sqrt(kappa_bi * kappa_iu / d)
    a_tilde = np.sqrt(1.0 / d)
    b_bar = np.sqrt(kappa_iu / d)
    b_tilde = np.sqrt(kappa_bi / d)
    return a_bar, a_tilde, b_bar, b_tilde


def cascade_decompose(kappa_bi, kappa_iu, delta_bi, delta_iu, theta_bi, theta_iu, n):
    """Split a single-antenna cascade into deterministic + stochastic parts."""
    if min(kappa_bi, kappa_iu, delta_bi, delta_iu) < 0:
        raise ValueError("factors must be nonnegative")
    coeffs = cascade_coefficients(kappa_bi, kappa_iu)
    h_bi = array_response(n, theta_bi)
    h_iu = array_response(n, theta_iu)
    c1 = coeffs[0] * delta_bi * delta_iu * np.conj(h_iu) * np.conj(h_bi)
    return CascadePair(c1=c1, coeffs=coeffs, scale=delta_bi * delta_iu)


def cascaded_channel(h_iu_k, h_bi):
    """Per-element cascade matrix, rows indexed by IRS element.

    Row n is conj(h_iu_k[n]) * conj(h_bi[:, n])^T, shape (N, M). For M = 1
    this is the entrywise product conj(h_iu) * conj(h_bi).
    """
    h_iu_k = np.atleast_1d(np.asarray(h_iu_k))
    h_bi = np.asarray(h_bi)
    if h_bi.ndim == 1:
        h_bi = h_bi[None, :]
    if h_bi.shape[1] != h_iu_k.shape[0]:
        raise ValueError(f"element count mismatch: {h_bi.shape[1]} vs {h_iu_k.shape[0]}")
    return np.conj(h_iu_k)[:, None] * np.conj(h_bi).T


def near_square_factors(n):
    """(n1, n2) with n1*n2 = n and n1 the largest divisor <= sqrt(n)."""
    n1 = int(np.floor(np.sqrt(n)))
    while n % n1:
        n1 -= 1
    return n1, n // n1


def upa_response(n1, n2, u1, u2):
    """Kronecker UPA steering vector from two axis direction cosines."""
    return np.kron(array_response(n1, np.arcsin(u1)), array_response(n2, np.arcsin(u2)))


@dataclass
class ChannelSet:
    """One realization of every link plus its deterministic (S-CSI) twin.

    Shapes: h_bi (M, N); h_iu (K, N); h_bu (K, M). The *_stat arrays hold the
    scaled LoS components delta*sqrt(kappa/(1+kappa))*response, i.e. the
    statistical channels used for grouping. noise_power is linear watts.
    """

    h_bi: np.ndarray
    h_iu: np.ndarray
    h_bu: np.ndarray
    h_bi_stat: np.ndarray
    h_iu_stat: np.ndarray
    h_bu_stat: np.ndarray
    noise_power: float
    meta: dict

    def __post_init__(self):
        if self.noise_power <= 0:
            raise ValueError("noise power must be positive")

    @property
    def num_users(self):
        return self.h_iu.shape[0]

    @property
    def num_elements(self):
        return self.h_bi.shape[1]

    def cascade(self, k):
        """Instantaneous per-element cascade for user k, shape (N, M)."""
        return cascaded_channel(self.h_iu[k], self.h_bi)

    def cascade_stat(self, k):
        """Statistical per-element cascade for user k, shape (N, M)."""
        return cascaded_channel(self.h_iu_stat[k], self.h_bi_stat)

    def statistical_twin(self):
        """A ChannelSet whose realizations equal the deterministic components."""
        return ChannelSet(
            h_bi=self.h_bi_stat.copy(), h_iu=self.h_iu_stat.copy(), h_bu=self.h_bu_stat.copy(),
            h_bi_stat=self.h_bi_stat.copy(), h_iu_stat=self.h_iu_stat.copy(),
            h_bu_stat=self.h_bu_stat.copy(), noise_power=self.noise_power, meta=dict(self.meta),
        )


def _unit(v):
    d = np.linalg.norm(v)
    if d <= 0:
        raise ValueError("coincident endpoints in scene geometry")
    return v / d, d


def build_scenario(config, rng):
    """Place the scene, derive angles and path losses, and draw one realization.

    User positions are drawn uniformly in a ball of config.user_radius around
    config.user_center; all randomness comes from rng, so equal (config, seed)
    pairs give bitwise-equal ChannelSets.
    """
    bs = np.asarray(config.bs_pos, dtype=float)
    irs = np.asarray(config.irs_pos, dtype=float)
    center = np.asarray(config.user_center, dtype=float)

    # users uniform in a ball: random direction, radius ~ U^(1/3)
    directions = rng.standard_normal((config.K, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = config.user_radius * rng.uniform(size=config.K) ** (1.0 / 3.0)
    users = center[None, :] + radii[:, None] * directions

    n1, n2 = near_square_factors(config.N)
    y_axis = np.array([0.0, 1.0, 0.0])
    x_axis = np.array([1.0, 0.0, 0.0])
    z_axis = np.array([0.0, 0.0, 1.0])

    # BS -> IRS
    e_bi, d_bi = _unit(irs - bs)
    delta_bi = path_loss_amplitude("los", d_bi)
    bs_resp = array_response(config.M, np.arcsin(np.clip(e_bi @ y_axis, -1, 1)))
    irs_resp_bi = upa_response(n1, n2, np.clip(-e_bi @ x_axis, -1, 1), np.clip(-e_bi @ z_axis, -1, 1))
    link_bi = RicianLink(delta=delta_bi, kappa=config.kappa_bi,
                         los=np.outer(bs_resp, np.conj(irs_resp_bi)))

    direct_model = "nlos" if config.scenario == "obscured" else "los"
    links_iu, links_bu = [], []
    for k in range(config.K):
        e_iu, d_iu = _unit(users[k] - irs)
        links_iu.append(RicianLink(
            delta=path_loss_amplitude("los", d_iu), kappa=config.kappa_iu,
            los=upa_response(n1, n2, np.clip(e_iu @ x_axis, -1, 1), np.clip(e_iu @ z_axis, -1, 1)),
        ))
        e_bu, d_bu = _unit(users[k] - bs)
        links_bu.append(RicianLink(
            delta=path_loss_amplitude(direct_model, d_bu), kappa=config.kappa_bu,
            los=array_response(config.M, np.arcsin(np.clip(e_bu @ y_axis, -1, 1))),
        ))

    h_bi = sample_rician(link_bi, rng)
    h_iu = np.stack([sample_rician(lk, rng) for lk in links_iu])
    h_bu = np.stack([sample_rician(lk, rng) for lk in links_bu])

    meta = {
        "users": users,
        "delta_bi": link_bi.delta,
        "delta_iu": np.array([lk.delta for lk in links_iu]),
        "delta_bu": np.array([lk.delta for lk in links_bu]),
        "kappas": (config.kappa_bi, config.kappa_iu, config.kappa_bu),
        "upa_factors": (n1, n2),
        "scenario": config.scenario,
        "p_max": config.power_watts,
        "weights": tuple(config.weights),
    }
    return ChannelSet(
        h_bi=h_bi, h_iu=h_iu, h_bu=h_bu,
        h_bi_stat=link_bi.stat_component,
        h_iu_stat=np.stack([lk.stat_component for lk in links_iu]),
        h_bu_stat=np.stack([lk.stat_component for lk in links_bu]),
        noise_power=config.noise_watts,
        meta=meta,
    )
