"""Energy- and QoS-aware load-balancing optimizer."""
from .brute import solve_bruteforce
from .exact import solve_exact
from .greedy import solve_greedy
from .instance import instance_from_scenario
from .model import (Allocation, ConstraintId, Infeasible, InfeasibleLinkError, Optimality,
                    OptimizerError, OracleTooLarge, ProblemInstance, SolveReport, StructuralError,
                    Violation, all_on_objective, assoc_distance, build_allocation, check_feasible,
                    min_bandwidth, objective)

SOLVERS = {"exact": solve_exact, "greedy": solve_greedy, "brute": solve_bruteforce}


def solve(inst, solver="exact", prev=None, threads=1):
    if solver == "exact":
        return solve_exact(inst, prev=prev, threads=threads)
    try:
        fn = SOLVERS[solver]
    except KeyError:
        raise ValueError(f"unknown solver {solver!r}") from None
    return fn(inst, prev=prev)
