import logging
import time
from typing import List, Optional, Tuple

from poissonbalance.api.schemas import AssignmentDocument, CompareRow
from poissonbalance.config.settings import settings
from poissonbalance.models.instance_model import Assignment, JobInstance, exact_expected_max_of
from poissonbalance.models.models import Algorithm, VerifySuite
from poissonbalance.solvers.det_sched import graham_greedy, mean_substitution_solve
from poissonbalance.solvers.dp_solver import solve_dp
from poissonbalance.solvers.ptas_driver import describe_run
from poissonbalance.utils.file_utils import (
    assignment_document,
    read_instance,
    rows_to_csv,
    write_assignment,
    write_csv,
)
from poissonbalance.verification.oracle_harness import REPORT_COLUMNS, brute_force_opt, monte_carlo_emax
from poissonbalance.verification.suites import SuiteResult, run_suite

logger = logging.getLogger(__name__)

COMPARE_COLUMNS = ("algorithm", "expected_max", "mc_estimate", "mc_stderr", "wall_time", "branch")

COMPARE_ALGORITHMS = (Algorithm.PTAS, Algorithm.GREEDY, Algorithm.DET_MEAN)


def solve_instance(instance: JobInstance, epsilon: float, algorithm: Algorithm) -> Tuple[Assignment, Optional[str]]:
    """
    Run one algorithm on an instance

    Returns:
        (assignment, branch taken when the algorithm is the approximation scheme)
    """
    if algorithm == Algorithm.PTAS:
        report = describe_run(instance, epsilon)
        return report.assignment, report.branch.value
    if algorithm == Algorithm.GREEDY:
        return graham_greedy(instance.sizes, instance.machines), None
    if algorithm == Algorithm.DET_MEAN:
        return mean_substitution_solve(instance, epsilon), None
    if algorithm == Algorithm.DP:
        return solve_dp(instance, epsilon), None
    if algorithm == Algorithm.BRUTE:
        assignment, _ = brute_force_opt(instance, settings.tail_tol)
        return assignment, None
    raise ValueError(f"unknown algorithm {algorithm!r}")


def solve_command(input_path: str, epsilon: float, algorithm: Algorithm,
                  output: Optional[str] = None) -> str:
    """Solve the instance in `input_path` and return the assignment document as text."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon!r}")
    instance = read_instance(input_path)
    started = time.perf_counter()
    assignment, branch = solve_instance(instance, epsilon, algorithm)
    value = exact_expected_max_of(assignment, settings.tail_tol)
    logger.info(
        f"{algorithm.value}: expected max {value:.9g} in {time.perf_counter() - started:.3f}s"
        + (f" (branch {branch})" if branch else "")
    )
    doc: AssignmentDocument = assignment_document(assignment, value, algorithm.value, epsilon)
    return write_assignment(doc, output)


def compare_rows(instance: JobInstance, epsilon: float, seed: int) -> List[CompareRow]:
    """One row per algorithm; the brute-force row only when the instance is within its size guard."""
    algorithms = list(COMPARE_ALGORITHMS)
    if instance.n <= settings.brute_force_max_jobs and instance.machines <= settings.brute_force_max_machines:
        algorithms.append(Algorithm.BRUTE)
    else:
        logger.info("Instance exceeds the brute-force guard; skipping the exact optimum")

    rows = []
    for algorithm in algorithms:
        started = time.perf_counter()
        assignment, branch = solve_instance(instance, epsilon, algorithm)
        wall = time.perf_counter() - started
        estimate, stderr = monte_carlo_emax(assignment.loads, settings.compare_trials, seed)
        rows.append(CompareRow(
            algorithm=algorithm.value,
            expected_max=exact_expected_max_of(assignment, settings.tail_tol),
            mc_estimate=estimate,
            mc_stderr=stderr,
            wall_time=wall,
            branch=branch,
        ))
    return rows


def format_compare_table(rows: List[CompareRow]) -> str:
    header = f"{'algorithm':<10} {'expected_max':>14} {'mc_estimate':>14} {'mc_stderr':>10} {'wall_time':>10}  branch"
    lines = [header, "-" * len(header)]
    for row in rows:
        exact = f"{row.expected_max:.9g}" if row.expected_max is not None else "-"
        lines.append(
            f"{row.algorithm:<10} {exact:>14} {row.mc_estimate:>14.6f} {row.mc_stderr:>10.2e} "
            f"{row.wall_time:>10.4f}  {row.branch or '-'}"
        )
    return "\n".join(lines) + "\n"


def compare_command(input_path: str, epsilon: float, seed: int, csv_path: Optional[str] = None) -> str:
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon!r}")
    instance = read_instance(input_path)
    rows = compare_rows(instance, epsilon, seed)
    if csv_path:
        write_csv(csv_path, COMPARE_COLUMNS, (row.model_dump() for row in rows))
    return format_compare_table(rows)


def verify_command(suite: VerifySuite, out: Optional[str] = None) -> Tuple[SuiteResult, str]:
    """Run a battery; returns the result and its CSV text (also written to `out` when given)."""
    result = run_suite(suite)
    csv_rows = [row.as_csv_row() for row in result.rows]
    if out:
        write_csv(out, REPORT_COLUMNS, csv_rows)
    for row in result.failures:
        logger.error(f"Asserted check failed: {row.lemma} [{row.params}]")
    return result, rows_to_csv(REPORT_COLUMNS, csv_rows)
