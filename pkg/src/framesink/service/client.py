"""HTTP client for the rollout service.

With no base URL the client drives the app in-process, so the CLI works
without a running server.
"""
from __future__ import annotations

import warnings

import httpx


class ServiceError(RuntimeError):
    pass


class ServiceClient:
    def __init__(self, base_url: str | None = None, timeout: float = 600.0):
        if base_url is None:
            with warnings.catch_warnings():
                warnings.filterwarnings("ignore", message=".*httpx.*")
                from fastapi.testclient import TestClient

            from framesink.service.app import app
            self._http = TestClient(app)
        else:
            self._http = httpx.Client(base_url=base_url, timeout=timeout)

    def _call(self, method: str, path: str, **kwargs) -> dict:
        resp = self._http.request(method, path, **kwargs)
        if resp.status_code >= 400:
            try:
                detail = resp.json().get("detail", resp.text)
            except ValueError:
                detail = resp.text
            raise ServiceError(f"{method} {path} failed ({resp.status_code}): {detail}")
        return resp.json()

    def defaults(self) -> dict:
        return self._call("GET", "/config/defaults")

    def parse_config(self, text: str) -> dict:
        return self._call("POST", "/config/parse", json={"text": text})

    def run(self, config: dict, include_bank: bool = False) -> dict:
        return self._call("POST", "/rollouts", json={"config": config, "include_bank": include_bank})

    def compare(self, config: dict) -> dict:
        return self._call("POST", "/compare", json={"config": config})
