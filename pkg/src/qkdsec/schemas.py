"""Pydantic models shared by the HTTP service and the CLI.

Machine-facing floats are rounded to 15 significant digits before they
leave the process, which keeps serialized output stable under a
write/read/write round trip.
"""

from typing import Optional

from pydantic import BaseModel, Field

CSV_HEADER = "protocol,bound,epsilon_star,p_star,fidelity_star"


def round15(x):
    """Round to 15 significant digits (idempotent under re-serialization)."""
    return float(f"{float(x):.15g}")


class ThresholdRequest(BaseModel):
    protocol: str
    bound: Optional[str] = Field(default=None, description="hashing or css")


class ThresholdRecord(BaseModel):
    protocol: str
    bound: str
    epsilon_star: float
    p_star: float
    fidelity_star: float
    group_order: int
    aut_t_order: int
    t_count: int
    orbit_count: int
    phases: dict
    details: dict = {}
    version: str
    timestamp: Optional[str] = None

    def csv_row(self):
        vals = [self.epsilon_star, self.p_star, self.fidelity_star]
        return ",".join([self.protocol, self.bound] + [f"{round15(v):.15g}" for v in vals])


class TableResponse(BaseModel):
    rows: list[ThresholdRecord]
    failures: dict[str, str] = {}


class SimulateRequest(BaseModel):
    protocol: str
    p: float
    rounds: int
    seed: int
    shuffle: bool = False


class SimulateRecord(BaseModel):
    protocol: str
    p: float
    rounds: int
    seed: int
    shuffle: bool
    sift_successes: int
    key_length: int
    mismatches: int
    empirical_error: float
    error_se: float
    empirical_success: float
    analytic_error: float
    z: float
    rng_algorithm: str
    version: str
    timestamp: Optional[str] = None


class InspectRecord(BaseModel):
    protocol: str
    n: int
    d: int
    group_order: int
    aut_t_order: int
    t_count: int
    orbit_count: int
    orbit_sizes: list[int]
    filtered_orbits: list[int]
    fixed_space_dim: int
    default_bound: str
    version: str
