"""Seeded random instances of the benchmark family.

Draws (all uniform): ``a, c, beta_bar`` on [0, 1], ``h_bar`` on [2, 3],
``gamma_bar`` on (0, 0.5] and ``alpha_bar`` on [5, 10]; ``r = 0.5 e``; and
scenario multipliers ``xi_l`` on [1, 2] that scale ``beta_bar, h_bar,
gamma_bar, alpha_bar``. The first-stage matrix has diagonal
``C_ii = 10 + c_i + r'e + (J - 2) r_i``.

Each quantity comes from its own child stream of ``SeedSequence(seed)``,
spawned in the order a, c, beta_bar, h_bar, gamma_bar, alpha_bar, xi. A
given seed therefore yields the same first-stage data for every ``nu``.
Streams use numpy's PCG64.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import check_positive_int
from .game import FirstStageParams, ScenarioData, TwoStageGame

__all__ = ["GeneratorSpec", "generate_instance", "GAMMA_BAR_MIN"]

# gamma must stay positive; the nominal lower end 0 is replaced by this
GAMMA_BAR_MIN = 1e-6
_STREAMS = ("a", "c", "beta_bar", "h_bar", "gamma_bar", "alpha_bar", "xi")


@dataclass(frozen=True)
class GeneratorSpec:
    J: int
    nu: int
    seed: int = 0

    def __post_init__(self):
        check_positive_int(self.J, "J")
        check_positive_int(self.nu, "nu")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


def generate_instance(spec: GeneratorSpec) -> TwoStageGame:
    J, nu = spec.J, spec.nu
    children = np.random.SeedSequence(int(spec.seed)).spawn(len(_STREAMS))
    rngs = {name: np.random.Generator(np.random.PCG64(s)) for name, s in zip(_STREAMS, children)}
    a = rngs["a"].uniform(0.0, 1.0, J)
    c = rngs["c"].uniform(0.0, 1.0, J)
    beta_bar = rngs["beta_bar"].uniform(0.0, 1.0, J)
    h_bar = rngs["h_bar"].uniform(2.0, 3.0, J)
    gamma_bar = rngs["gamma_bar"].uniform(GAMMA_BAR_MIN, 0.5)
    alpha_bar = rngs["alpha_bar"].uniform(5.0, 10.0)
    xi = rngs["xi"].uniform(1.0, 2.0, nu)

    r = np.full(J, 0.5)
    C_diag = 10.0 + c + (r.sum() + (J - 2) * r)
    # C = diag(c' + r) in the game's parameterization
    first = FirstStageParams(c=C_diag - r, a=a, r=r)
    scenarios = tuple(
        ScenarioData(h=z * h_bar, gamma=z * gamma_bar, rho=-z * alpha_bar + z * beta_bar) for z in xi
    )
    return TwoStageGame(first, scenarios)
