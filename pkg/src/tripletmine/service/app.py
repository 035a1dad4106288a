"""FastAPI application wrapping the core package.

Endpoints run synchronously: desk-scale runs finish in seconds to minutes,
and callers (including the CLI) block on the response. Configuration
problems map to HTTP 400/422; anything else is a 500.
"""
from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import ConfigError
from ..runs import execute_bench, execute_eval, execute_finetune, execute_mine, execute_pretrain
from .schemas import (
    BenchRequest,
    BenchResponse,
    EvalRequest,
    EvalResponse,
    HealthResponse,
    MineRequest,
    MineResponse,
    RunRequest,
    RunSummaryResponse,
)


def create_app() -> FastAPI:
    app = FastAPI(title="tripletmine", version=__version__)

    @app.exception_handler(ConfigError)
    def _config_error(_: Request, exc: ConfigError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(version=__version__)

    @app.post("/mine", response_model=MineResponse)
    def mine_endpoint(request: MineRequest) -> MineResponse:
        triplets = execute_mine(
            request.features,
            request.labels,
            request.strategy.value,
            request.margin,
            request.seed,
            normalize=request.normalize,
        )
        return MineResponse(triplets=triplets.tolist(), count=int(triplets.shape[0]))

    @app.post("/runs/pretrain", response_model=RunSummaryResponse)
    def pretrain_endpoint(request: RunRequest) -> RunSummaryResponse:
        return RunSummaryResponse(**execute_pretrain(request.config))

    @app.post("/runs/finetune", response_model=RunSummaryResponse)
    def finetune_endpoint(request: RunRequest) -> RunSummaryResponse:
        return RunSummaryResponse(**execute_finetune(request.config))

    @app.post("/runs/bench", response_model=BenchResponse)
    def bench_endpoint(request: BenchRequest) -> BenchResponse:
        return BenchResponse(**execute_bench(request.config, request.sweep))

    @app.post("/eval", response_model=EvalResponse)
    def eval_endpoint(request: EvalRequest) -> EvalResponse:
        return EvalResponse(**execute_eval(request.checkpoint, request.dataset, request.eval, request.seed))

    return app


app = create_app()
