"""Shared fixtures: a tiny saved in-filling model and clients for it."""

from __future__ import annotations

import sys
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

# Make the sibling helper module (tinymodel) importable from tests.
sys.path.insert(0, str(Path(__file__).parent))

from tinymodel import build_tiny_model  # noqa: E402

from infill_service.app import create_app
from infill_service.config import ServiceConfig
from infill_service.model import InfillModel


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory) -> str:
    target = tmp_path_factory.mktemp("tiny-infill-model")
    build_tiny_model(str(target))
    return str(target)


@pytest.fixture(scope="session")
def service_config(model_dir) -> ServiceConfig:
    return ServiceConfig(
        model=model_dir,
        max_batch_size=4,
        temperature=1.0,
        top_p=1.0,
        max_new_tokens=16,
    )


@pytest.fixture(scope="session")
def infill_model(service_config) -> InfillModel:
    return InfillModel(service_config)


@pytest.fixture(scope="session")
def client(service_config):
    with TestClient(create_app(service_config)) as test_client:
        yield test_client
