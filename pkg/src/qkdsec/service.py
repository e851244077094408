"""HTTP service exposing thresholds, the summary table, simulation, and
protocol inspection.

The CLI talks to this app in-process by default, so the service is the
single implementation of the response shapes; running it standalone
(``qkdsec serve``) changes the transport, not the behavior.
"""

from datetime import datetime, timezone

import numpy as np
from fastapi import FastAPI, HTTPException

from . import __version__
from . import keyrate as kr
from .ensembles import list_protocols
from .mcsim import SimConfig, run_simulation
from .schemas import (
    InspectRecord,
    SimulateRecord,
    SimulateRequest,
    TableResponse,
    ThresholdRecord,
    ThresholdRequest,
    round15,
)

# the five spherical-code rows of the summary table, in report order
TABLE_PROTOCOLS = ["4-2-2-1", "4-3-2-2", "6-3-2-2", "7-3-2-2", "9-3-2-2"]


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _context_or_404(name):
    try:
        return kr.build_context(name)
    except KeyError as exc:
        raise HTTPException(status_code=404, detail=str(exc.args[0]))


def _threshold_record(name, bound):
    ctx = _context_or_404(name)
    try:
        res = kr.threshold_search(ctx, bound=bound)
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc))
    except ArithmeticError as exc:
        raise HTTPException(status_code=500, detail=str(exc))
    details = {
        k: round15(v) if isinstance(v, float) else v
        for k, v in res.details.items()
        if k != "fidelity_candidates"
    }
    details["fidelity_candidates"] = {
        k: round15(v) for k, v in res.details["fidelity_candidates"].items()
    }
    return ThresholdRecord(
        protocol=res.protocol,
        bound=res.bound_used,
        epsilon_star=round15(res.epsilon_star),
        p_star=round15(res.p_star),
        fidelity_star=round15(res.fidelity_star),
        group_order=len(ctx.group.elements),
        aut_t_order=len(ctx.aut.pairs),
        t_count=len(ctx.scheme.t_pairs),
        orbit_count=ctx.n_orbits,
        phases=res.phases,
        details=details,
        version=__version__,
        timestamp=_now(),
    )


def create_app():
    app = FastAPI(title="qkdsec", version=__version__)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "version": __version__}

    @app.get("/protocols")
    def protocols():
        return {"protocols": list_protocols()}

    @app.post("/threshold", response_model=ThresholdRecord)
    def threshold(req: ThresholdRequest):
        if req.bound not in (None, "hashing", "css"):
            raise HTTPException(status_code=400, detail=f"unknown bound {req.bound!r}")
        return _threshold_record(req.protocol, req.bound)

    @app.get("/table", response_model=TableResponse)
    def table():
        rows, failures = [], {}
        for name in TABLE_PROTOCOLS:
            try:
                rows.append(_threshold_record(name, None))
            except HTTPException as exc:
                failures[name] = str(exc.detail)
        return TableResponse(rows=rows, failures=failures)

    @app.post("/simulate", response_model=SimulateRecord)
    def simulate(req: SimulateRequest):
        ctx = _context_or_404(req.protocol)
        cfg = SimConfig(req.protocol, req.p, req.rounds, req.seed, req.shuffle)
        try:
            cfg.validate(ctx.dim)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        stats = run_simulation(cfg)
        analytic = float(kr.depol_error_rate(ctx, req.p))
        var = analytic * (1.0 - analytic)
        if stats.key_length and var > 0:
            z = (stats.empirical_error - analytic) / float(
                np.sqrt(var / stats.key_length)
            )
        else:
            z = 0.0 if stats.empirical_error == analytic else float("inf")
        return SimulateRecord(
            protocol=req.protocol,
            p=round15(req.p),
            rounds=req.rounds,
            seed=req.seed,
            shuffle=req.shuffle,
            sift_successes=stats.sift_successes,
            key_length=stats.key_length,
            mismatches=stats.mismatches,
            empirical_error=round15(stats.empirical_error),
            error_se=round15(stats.error_se),
            empirical_success=round15(stats.empirical_success),
            analytic_error=round15(analytic),
            z=round15(z),
            rng_algorithm=stats.rng_algorithm,
            version=__version__,
            timestamp=_now(),
        )

    @app.get("/inspect/{protocol}", response_model=InspectRecord)
    def inspect(protocol: str):
        ctx = _context_or_404(protocol)
        return InspectRecord(
            protocol=ctx.name,
            n=ctx.protocol.n,
            d=ctx.dim,
            group_order=len(ctx.group.elements),
            aut_t_order=len(ctx.aut.pairs),
            t_count=len(ctx.scheme.t_pairs),
            orbit_count=ctx.n_orbits,
            orbit_sizes=[of.size for of in ctx.orbits],
            filtered_orbits=[of.orbit for of in ctx.orbits if of.filtered],
            fixed_space_dim=ctx.family.n_free + 1,
            default_bound=ctx.protocol.default_bound,
            version=__version__,
        )

    return app
