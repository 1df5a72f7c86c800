"""Resolve STITCH stereo ids to SMILES through the PubChem REST service, with a disk cache."""

from __future__ import annotations

import json
import logging
import os
import re
import tempfile
import time
import urllib.error
import urllib.request
from pathlib import Path

log = logging.getLogger(__name__)

DEFAULT_BASE_URL = "https://pubchem.ncbi.nlm.nih.gov/rest/pug"
BASE_URL_ENV = "SIDEFX_PUBCHEM_URL"
CACHE_DIR_ENV = "SIDEFX_CACHE_DIR"

# PubChem has renamed this property over time; accept any of them.
_SMILES_KEYS = ("CanonicalSMILES", "ConnectivitySMILES", "SMILES", "IsomericSMILES")

_STITCH_RE = re.compile(r"^CID[0-9]+$")


class FetchError(RuntimeError):
    """The SMILES for a compound could not be obtained."""


class CompoundNotFound(FetchError):
    pass


def stitch_to_cid(stereo_id: str) -> int:
    """``"CID000010917"`` -> ``10917``."""
    if not _STITCH_RE.match(stereo_id):
        raise ValueError(f"malformed STITCH id {stereo_id!r}")
    cid = int(stereo_id[3:])
    if cid <= 0:
        raise ValueError(f"malformed STITCH id {stereo_id!r}")
    return cid


class PubChemClient:
    """Minimal HTTPS client for the PUG REST property endpoint."""

    def __init__(self, base_url: str | None = None, timeout: float = 30.0):
        self.base_url = (base_url or os.environ.get(BASE_URL_ENV) or DEFAULT_BASE_URL).rstrip("/")
        self.timeout = timeout

    def smiles_url(self, cid: int) -> str:
        return f"{self.base_url}/compound/cid/{cid}/property/CanonicalSMILES/JSON"

    def get_json(self, url: str) -> dict:
        req = urllib.request.Request(url, headers={"Accept": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return json.load(resp)
        except urllib.error.HTTPError as exc:
            if exc.code == 404:
                raise CompoundNotFound(url) from exc
            raise

    def fetch_smiles(self, cid: int) -> str:
        body = self.get_json(self.smiles_url(cid))
        try:
            props = body["PropertyTable"]["Properties"][0]
        except (KeyError, IndexError, TypeError):
            raise CompoundNotFound(f"no property record for CID {cid}") from None
        for key in _SMILES_KEYS:
            if props.get(key):
                return props[key]
        raise CompoundNotFound(f"no SMILES property for CID {cid}")


class SmilesCache:
    """One ``<cid>.smi`` file per compound; writes are atomic."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)

    def path(self, cid: int) -> Path:
        return self.directory / f"{cid}.smi"

    def get(self, cid: int) -> str | None:
        try:
            return self.path(cid).read_text().strip() or None
        except FileNotFoundError:
            return None

    def put(self, cid: int, smiles: str) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=f".{cid}.", suffix=".tmp")
        with os.fdopen(fd, "w") as fh:
            fh.write(smiles + "\n")
        os.replace(tmp, self.path(cid))


def default_cache() -> SmilesCache:
    root = os.environ.get(CACHE_DIR_ENV) or Path.home() / ".cache" / "sidefx" / "smiles"
    return SmilesCache(root)


def fetch_smiles(
    stereo_id: str,
    client: PubChemClient | None = None,
    cache: SmilesCache | None = None,
    retries: int = 3,
    backoff: float = 1.0,
    sleep=time.sleep,
) -> str:
    """SMILES for a STITCH stereo id, served from ``cache`` when possible.

    Transient failures are retried with exponential backoff; after the last
    attempt a :class:`FetchError` is raised. A missing compound raises
    :class:`CompoundNotFound` immediately.
    """
    cid = stitch_to_cid(stereo_id)
    if cache is not None:
        hit = cache.get(cid)
        if hit is not None:
            return hit
    client = client or PubChemClient()
    last: Exception | None = None
    for attempt in range(retries):
        try:
            smiles = client.fetch_smiles(cid)
            break
        except CompoundNotFound:
            raise
        except (OSError, ValueError) as exc:
            last = exc
            log.warning("fetch of CID %d failed (attempt %d/%d): %s", cid, attempt + 1, retries, exc)
            if attempt + 1 < retries:
                sleep(backoff * 2**attempt)
    else:
        raise FetchError(f"could not fetch CID {cid}: {last}") from last
    if cache is not None:
        cache.put(cid, smiles)
    return smiles
