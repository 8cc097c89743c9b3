"""Adjoint versus central-difference gradients on the CO-oxidation problem.

Evaluated at the uniform 1e-10 initial guess and at the reported converged
constants, for relative steps 1/50, 1/500 and 1/5000.
"""

import numpy as np

from tapwb.problems import CO_OXIDATION_REPORTED, co_oxidation_problem
from tapwb.sensitivity import REL_STEPS, adjoint_gradient, fd_gradient


def table(problem, k, title):
    adj = adjoint_gradient(problem, k)
    cols = {name: fd_gradient(problem, k, step).gradient for name, step in REL_STEPS.items()}
    print(f"\n{title} (J = {adj.objective:.4e}, adjoint {adj.wall_time:.2f} s)")
    print(f"{'param':>5} " + " ".join(f"{'fd ' + n:>12}" for n in cols) + f" {'adjoint':>12}")
    for i, n in enumerate(problem.free):
        print(f"{n:>5} " + " ".join(f"{c[i]:12.4e}" for c in cols.values()) + f" {adj.gradient[i]:12.4e}")


def main():
    problem, _, _ = co_oxidation_problem()
    table(problem, problem.initial(), "initial guess, all k = 1e-10")
    table(problem, np.array([CO_OXIDATION_REPORTED[n] for n in problem.free]), "reported converged constants")


if __name__ == "__main__":
    main()
