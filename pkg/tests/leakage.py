"""Scan captured protocol frames for traces of private party data."""
import struct

import numpy as np

from datacollab.protocol import decode


def split_frames(blob):
    out, pos = [], 0
    while pos < len(blob):
        (n,) = struct.unpack_from("<I", blob, pos)
        out.append(decode(blob[pos:pos + 4 + n]))
        pos += 4 + n
    return out


def byte_windows(secret):
    """16-byte windows: every pair of neighbouring entries along each row."""
    for row in np.atleast_2d(np.asarray(secret, dtype="<f8")):
        for k in range(len(row) - 1):
            yield row[k:k + 2].tobytes()


def block_hits(payload, secret, atol=1e-12):
    """Positions where a 2x2 block of ``secret`` reappears inside ``payload``."""
    hits = []
    if min(payload.shape) < 2 or min(secret.shape) < 2:
        return hits
    for a in range(secret.shape[0] - 1):
        for b in range(secret.shape[1] - 1):
            block = secret[a:a + 2, b:b + 2]
            cand = np.abs(payload[:-1, :-1] - block[0, 0]) <= atol
            for r, c in zip(*np.nonzero(cand)):
                if np.allclose(payload[r:r + 2, c:c + 2], block, rtol=0, atol=atol):
                    hits.append((a, b, r, c))
    return hits


def scan(blob, secrets):
    """Return a list of findings; empty means nothing private was seen."""
    findings = []
    frames = split_frames(blob)
    for name, secret in secrets.items():
        secret = np.atleast_2d(np.asarray(secret, dtype=np.float64))
        for w in byte_windows(secret):
            if w in blob:
                findings.append(f"{name}: raw bytes found")
                break
        for msg in frames:
            if isinstance(msg.payload, np.ndarray) and block_hits(msg.payload, secret):
                findings.append(f"{name}: 2x2 block inside {msg.kind.name}")
    return findings


def party_secrets(data, mapper):
    out = {"x_train": data.x_train, "x_test": data.x_test, "projection": mapper.projection}
    if np.any(mapper.mean):
        out["mean"] = mapper.mean[None, :]
    return out
