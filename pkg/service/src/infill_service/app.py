"""FastAPI application and command line entry point."""

from __future__ import annotations

import argparse
import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from infill_service.config import ServiceConfig
from infill_service.model import InfillModel
from infill_service.wire import InvalidRequest, ProposeRequest

log = logging.getLogger(__name__)


def create_app(config: ServiceConfig) -> FastAPI:
    """Build the application; the model loads when the server starts up."""

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        if app.state.model is None:
            app.state.model = InfillModel(config)
        yield

    app = FastAPI(title="lm-infill-service", lifespan=lifespan)
    app.state.config = config
    app.state.model = None

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"error": str(exc.errors())})

    @app.get("/healthz")
    async def healthz(request: Request) -> JSONResponse:
        if request.app.state.model is None:
            return JSONResponse(status_code=503, content={"status": "loading"})
        return JSONResponse(
            status_code=200, content={"status": "ok", "model": config.model}
        )

    @app.post("/v1/propose")
    async def propose(request: Request, body: ProposeRequest) -> JSONResponse:
        model: InfillModel | None = request.app.state.model
        if model is None:
            return JSONResponse(status_code=503, content={"error": "model is loading"})
        try:
            return JSONResponse(status_code=200, content=model.propose(body))
        except InvalidRequest as exc:
            return JSONResponse(status_code=400, content={"error": str(exc)})

    return app


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(
        prog="lm-infill-service",
        description="Serve masked-span in-fill proposals over HTTP.",
    )
    parser.add_argument("--model", required=True, help="model directory or hub identifier")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8008)
    parser.add_argument("--max-batch-size", type=int, default=8)
    parser.add_argument("--temperature", type=float, default=1.0)
    parser.add_argument("--top-p", type=float, default=0.95)
    parser.add_argument("--max-new-tokens", type=int, default=24)
    args = parser.parse_args(argv)
    config = ServiceConfig(
        model=args.model,
        host=args.host,
        port=args.port,
        max_batch_size=args.max_batch_size,
        temperature=args.temperature,
        top_p=args.top_p,
        max_new_tokens=args.max_new_tokens,
    )
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(message)s")

    import uvicorn

    uvicorn.run(create_app(config), host=config.host, port=config.port)


if __name__ == "__main__":
    main()
