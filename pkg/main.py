# clingress/main.py
from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
import logging
import os

# Configure logging
logging.basicConfig(level=logging.INFO)

# Import routers from local package
from routers import models

VERSION = "1.0.0"


def create_app() -> FastAPI:
    app = FastAPI(
        title="Chloride Ingress Toolkit",
        version=VERSION,
        description="Serves fitted chloride-ingress regressors: point predictions and chloride-vs-time curves.",
    )

    app.add_middleware(
        CORSMiddleware,
        allow_origins=["http://localhost:3000", "http://localhost:8000"],
        allow_methods=["GET", "POST", "OPTIONS"],
        allow_headers=["*"],
    )

    # Include routers
    app.include_router(models.router)

    @app.get("/", tags=["meta"])
    def root():
        return {
            "name": "Chloride Ingress Toolkit",
            "version": VERSION,
            "docs": "/docs",
            "health": "/healthz",
            "api_endpoints": {
                "list_models": "/models",
                "predict": "/models/{name}/predict",
                "curve": "/models/{name}/curve",
            },
        }

    @app.get("/healthz", tags=["meta"])
    def healthz():
        return {"status": "healthy", "version": VERSION, "models": len(models.get_model_store().names())}

    return app


app = create_app()

if __name__ == "__main__":
    import uvicorn

    port = int(os.environ.get("PORT", 8000))
    logging.info(f"Starting Chloride Ingress Toolkit on port {port}")
    logging.info(f"Serving models from {os.environ.get(models.MODEL_DIR_ENV, 'models')}")

    uvicorn.run(app, host="0.0.0.0", port=port)
