"""HTTP client for the engine service.

By default the client talks to the service in-process (no sockets, no
separate process); pass ``url`` to target a running server instead. Both
paths exercise the same request/response schemas.
"""

from __future__ import annotations

import httpx

from .errors import EngineError


class ServiceError(EngineError):
    """Non-2xx response from the service."""

    def __init__(self, status: int, payload: dict):
        self.status = status
        self.payload = payload
        detail = payload.get("detail") or payload.get("error") or str(payload)
        super().__init__(f"service returned {status}: {detail}")


def _payload(response: httpx.Response) -> dict:
    try:
        return response.json()
    except ValueError:
        return {"detail": response.text}


class EngineClient:
    def __init__(self, url: str | None = None):
        if url:
            self._client: httpx.Client = httpx.Client(base_url=url, timeout=None)
        else:
            from fastapi.testclient import TestClient

            from .service.app import create_app

            self._client = TestClient(
                create_app(), raise_server_exceptions=False
            )

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> "EngineClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _request(self, method: str, path: str, body: dict | None = None) -> dict:
        response = self._client.request(method, path, json=body)
        if response.status_code >= 300:
            raise ServiceError(response.status_code, _payload(response))
        return response.json()

    # -- endpoints --------------------------------------------------------

    def health(self) -> dict:
        return self._request("GET", "/health")

    def load_bundle(self, path: str) -> dict:
        return self._request("POST", "/bundles/load", {"path": path})

    def list_bundles(self) -> dict:
        return self._request("GET", "/bundles")

    def validate_bundle(self, path: str) -> dict:
        return self._request("POST", "/bundles/validate", {"path": path})

    def classify(
        self,
        bundle: str,
        records: list[dict],
        verbalizer: dict,
        task: str = "doc",
        template: str | None = None,
        calibration: dict | None = None,
    ) -> dict:
        return self._request(
            "POST",
            "/classify",
            {
                "bundle": bundle,
                "records": records,
                "task": task,
                "template": template,
                "verbalizer": verbalizer,
                "calibration": calibration,
            },
        )

    def calibrate(
        self,
        bundle: str,
        mode: str,
        verbalizer: dict,
        task: str = "doc",
        template: str | None = None,
        content_free: str = "",
        records: list[dict] | None = None,
    ) -> dict:
        return self._request(
            "POST",
            "/calibrate",
            {
                "bundle": bundle,
                "mode": mode,
                "verbalizer": verbalizer,
                "task": task,
                "template": template,
                "content_free": content_free,
                "records": records or [],
            },
        )

    def build_kv(
        self,
        bundle: str,
        records: list[dict],
        seeds: dict[str, list[str]],
        stopwords: list[str] | None = None,
        task: str = "doc",
        template: str | None = None,
        candidates_per_occurrence: int = 50,
        cv_size: int = 100,
        info_threshold: int = 20,
        freq_threshold: float | None = None,
    ) -> dict:
        return self._request(
            "POST",
            "/build_kv",
            {
                "bundle": bundle,
                "records": records,
                "seeds": seeds,
                "stopwords": stopwords or [],
                "task": task,
                "template": template,
                "candidates_per_occurrence": candidates_per_occurrence,
                "cv_size": cv_size,
                "info_threshold": info_threshold,
                "freq_threshold": freq_threshold,
            },
        )

    def pll(self, bundle: str, sentences: list[dict]) -> dict:
        return self._request(
            "POST", "/pll", {"bundle": bundle, "sentences": sentences}
        )

    def fillmask(self, bundle: str, records: list[dict], k: list[int]) -> dict:
        return self._request(
            "POST", "/fillmask", {"bundle": bundle, "records": records, "k": k}
        )

    def eval(
        self,
        pairs: list[tuple[str, str]],
        gold: dict[str, str],
        classes: list[str] | None = None,
        name: str = "run",
    ) -> dict:
        return self._request(
            "POST",
            "/eval",
            {
                "pairs": [list(p) for p in pairs],
                "gold": gold,
                "classes": classes,
                "name": name,
            },
        )
