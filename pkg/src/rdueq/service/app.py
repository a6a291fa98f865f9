"""FastAPI application: one POST route per command.

Input problems (bad config, violated preconditions) map to 400; numerical
failures map to 422. Request-body schema violations get FastAPI's usual 422
validation response.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from ..errors import ConfigError, NumericsError
from . import handlers
from .schemas import (
    ClassifyRequest,
    ClassifyResponse,
    EtaStarRequest,
    EtaStarResponse,
    OptimizeRequest,
    OptimizeResponse,
    SolveRequest,
    SolveResponse,
    VerifyRequest,
    VerifyResponse,
)


def create_app() -> FastAPI:
    app = FastAPI(title="rdueq", description="Deterministic strict equilibrium "
                  "strategies for rank-dependent utility portfolio selection")

    @app.exception_handler(ConfigError)
    async def config_error(request: Request, exc: ConfigError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(NumericsError)
    async def numerics_error(request: Request, exc: NumericsError) -> JSONResponse:
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.post("/classify", response_model=ClassifyResponse)
    def classify(req: ClassifyRequest) -> ClassifyResponse:
        return handlers.handle_classify(req.config)

    @app.post("/solve", response_model=SolveResponse)
    def solve(req: SolveRequest) -> SolveResponse:
        return handlers.handle_solve(req.config, eta=req.eta, maximal=req.maximal)

    @app.post("/eta-star", response_model=EtaStarResponse)
    def eta_star(req: EtaStarRequest) -> EtaStarResponse:
        return handlers.handle_eta_star(req.config)

    @app.post("/optimize", response_model=OptimizeResponse)
    def optimize(req: OptimizeRequest) -> OptimizeResponse:
        return handlers.handle_optimize(req.config)

    @app.post("/verify", response_model=VerifyResponse)
    def verify(req: VerifyRequest) -> VerifyResponse:
        return handlers.handle_verify(req.config, req.strategy)

    return app


if __name__ == "__main__":
    import uvicorn

    uvicorn.run(create_app(), host="127.0.0.1", port=8000)
