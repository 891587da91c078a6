from abc import ABC

import numpy as np

from src.solvers.BsSolver import BsAllocation, BsProblem
from src.solvers.RsSolver import RelayProblem, RsAllocation

TOL = 1e-9


class BaseSolverTest(ABC):

    # --- Generic Checks ---
    def assert_one_receiver_per_subchannel(self, alpha: np.ndarray) -> None:
        assert np.all(alpha.sum(axis=1) <= 1)
        assert set(np.unique(alpha)).issubset({0, 1})

    def assert_rates_match_powers(
        self, rate: np.ndarray, power: np.ndarray, phi: np.ndarray, g: float
    ) -> None:
        expected = g * np.log2(1.0 + power * phi)
        assert np.allclose(rate, expected, rtol=1e-9, atol=1e-12)

    def assert_relay_feasible(
        self, problem: RelayProblem, allocation: RsAllocation
    ) -> None:
        self.assert_one_receiver_per_subchannel(allocation.alpha)
        self.assert_rates_match_powers(
            allocation.rate, allocation.power, problem.phi, problem.g
        )
        assert allocation.total_power <= problem.power_budget * (1 + TOL)
        interference = allocation.power.sum(axis=1) * problem.interference_coeff
        assert np.all(interference <= problem.I_bar * (1 + TOL) + TOL)
        assert np.all(allocation.user_rates <= problem.budgets * (1 + 1e-6) + TOL)

    def assert_bs_feasible(self, problem: BsProblem, allocation: BsAllocation) -> None:
        self.assert_one_receiver_per_subchannel(allocation.alpha)
        self.assert_rates_match_powers(
            allocation.rate, allocation.power, problem.phi, problem.g
        )
        assert allocation.total_power <= problem.power_budget * (1 + TOL)
        interference = allocation.power.sum(axis=1) * problem.interference_coeff
        assert np.all(interference <= problem.I_bar * (1 + TOL) + TOL)
        assert np.all(allocation.partitions.sum(axis=2) <= 1.0 + TOL)

    def assert_near_oracle(self, objective: float, oracle: float, rel: float) -> None:
        assert objective >= (1.0 - rel) * oracle - TOL
