"""Cross-validated Morse index: the conjugate-point count, the direct
eigenvalue count and the Evans zero count must agree on every run."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Optional

from .evans import count_negative_evans_zeros
from .maslov import morse_index_via_maslov
from .oracle import morse_whole_line
from .problem import Problem, choose_lambda_inf
from .propagation import OdeControls


def morse_consistency(p: Problem, lambda_inf: Optional[float] = None,
                      controls: Optional[OdeControls] = None,
                      jobs: int = 1) -> dict:
    """Compute the Morse index three independent ways and compare.

    Returns a dict with the three counts, their agreement flag and the
    supporting detail (conjugate points, eigenvalues, Evans zeros).  The
    three computations are independent tasks and run concurrently when
    jobs > 1."""
    if lambda_inf is None:
        lambda_inf = choose_lambda_inf(p)

    def run_maslov():
        return morse_index_via_maslov(p, controls=controls)

    def run_oracle():
        return morse_whole_line(p)

    def run_evans():
        return count_negative_evans_zeros(p, lambda_inf, controls=controls)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=min(jobs, 3)) as pool:
            f1 = pool.submit(run_maslov)
            f2 = pool.submit(run_oracle)
            f3 = pool.submit(run_evans)
            m_maslov, diag = f1.result()
            m_oracle, rep, orc_diag = f2.result()
            m_evans, trace = f3.result()
    else:
        m_maslov, diag = run_maslov()
        m_oracle, rep, orc_diag = run_oracle()
        m_evans, trace = run_evans()

    scan = diag["final_scan"]
    return {
        "morse_maslov": m_maslov,
        "morse_oracle": m_oracle,
        "morse_evans": m_evans,
        "agree": m_maslov == m_oracle == m_evans,
        "lambda_inf": float(lambda_inf),
        "conjugate_points": [c.to_dict() for c in scan.crossings],
        "stabilized_at_L": diag["stabilized_at"],
        "oracle": rep.to_dict(),
        "oracle_stabilization": orc_diag,
        "evans_zeros": [z.to_dict() for z in trace.zeros],
        "evans_boundary": trace.boundary_flag,
    }
