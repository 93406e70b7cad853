"""Trace and certificate serialization (CSV schema arqpc-trace-v1, JSON)."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .optimality import Certificate
from .solver import IterationRecord, RunResult

TRACE_SCHEMA = "arqpc-trace-v1"


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_trace_csv(path, trace: list, stride: int = 1) -> None:
    """One row per iteration: k, w, sigma, ||s||, rho, success, delta components.

    Floats carry 17 significant digits so parsing reproduces them exactly.
    """
    path = Path(path)
    qlen = len(trace[0].delta) if trace else 0
    with path.open("w", newline="") as fh:
        fh.write(f"# {TRACE_SCHEMA}\n")
        if stride != 1:
            fh.write(f"# decimated, stride={stride}\n")
        writer = csv.writer(fh)
        writer.writerow(
            ["k", "w", "sigma", "step_norm", "rho", "success"]
            + [f"delta_{j}" for j in range(1, qlen + 1)]
        )
        for rec in trace:
            writer.writerow(
                [rec.k, _fmt(rec.w), _fmt(rec.sigma), _fmt(rec.step_norm),
                 _fmt(rec.rho), int(rec.success)]
                + [_fmt(d) for d in rec.delta]
            )


def read_trace_csv(path) -> list[IterationRecord]:
    """Parse a trace written by `write_trace_csv` back into records.

    Only the serialized columns are reconstructed; point and step vectors,
    counters and certificates are not part of the CSV schema.
    """
    path = Path(path)
    rows: list[IterationRecord] = []
    with path.open() as fh:
        header = fh.readline().strip()
        if not header.startswith(f"# {TRACE_SCHEMA}"):
            raise ValueError(f"not an {TRACE_SCHEMA} file: {header!r}")
        pos = fh.tell()
        line = fh.readline()
        if not line.startswith("#"):
            fh.seek(pos)
        reader = csv.reader(fh)
        names = next(reader)
        qlen = sum(1 for c in names if c.startswith("delta_"))
        for row in reader:
            k = int(row[0])
            w, sigma, step_norm, rho = (float(v) for v in row[1:5])
            success = bool(int(row[5]))
            delta = tuple(float(v) for v in row[6 : 6 + qlen])
            rows.append(
                IterationRecord(k, np.empty(0), w, sigma, delta, None, step_norm,
                                rho, success, (0, 0))
            )
    return rows


def certificate_dict(cert: Certificate) -> dict:
    return {
        "x": [float(v) for v in np.asarray(cert.x).reshape(-1)],
        "source": cert.source,
        "passed": cert.passed,
        "orders": [
            {
                "j": r.order,
                "delta": r.radius,
                "phi": r.phi,
                "threshold": r.threshold,
                "gap": r.gap,
                "passed": r.passed,
            }
            for r in cert.records
        ],
    }


def write_certificate_json(path, result: RunResult) -> None:
    payload = {
        "termination": result.termination,
        "iterations": result.iterations,
        "successful_iterations": result.n_success,
        "w_evals": result.w_evals,
        "deriv_evals": result.deriv_evals,
        "final_x": [float(v) for v in np.asarray(result.final_x).reshape(-1)],
        "final_w": result.final_w,
        "certificate": certificate_dict(result.certificate) if result.certificate else None,
    }
    if result.replay_info:
        payload["replay"] = {
            k: v for k, v in result.replay_info.items() if not isinstance(v, np.ndarray)
        }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_certificate(path) -> dict:
    return json.loads(Path(path).read_text())
