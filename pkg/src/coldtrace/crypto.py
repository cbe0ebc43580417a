"""Key handling, signatures, and authenticated sealing for device uploads.

Primitives come from the ``cryptography`` package (Ed25519, AES-256-GCM,
HMAC-SHA256, X25519); this module pins the contracts the rest of the system
relies on:

* key generation is deterministic from a 32-byte seed,
* ``verify`` returns False on any bad/malformed signature and never raises,
* ``open_sealed`` raises :class:`OpenError` on any authentication failure,
* the session key is derived with a keyed PRF over (recipient key, nonce)
  and distributed under the recipient's asymmetric key, signed by the device.

Secret material never appears in ``repr`` output or serialized artifacts.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF


class OpenError(Exception):
    """Sealed payload failed authentication (tampered, wrong key, wrong AAD)."""


NONCE_LEN = 12
KEY_LEN = 32
SIG_LEN = 64


def _derive(seed: bytes, label: bytes) -> bytes:
    return hashlib.sha256(seed + b"/" + label).digest()


# --- identities ----------------------------------------------------------------

@dataclass(frozen=True)
class DeviceKeys:
    """Device-held secrets: master PRF key and the attestation signing key."""

    mas_sk: bytes = field(repr=False)
    _sign_sk: Ed25519PrivateKey = field(repr=False)
    public_key: bytes = b""

    @property
    def sign_sk(self) -> Ed25519PrivateKey:
        return self._sign_sk


@dataclass(frozen=True)
class AgentIdentity:
    """Public half of the receiving agent: its key-agreement key and address."""

    public_key: bytes
    address: str = "agent"


@dataclass(frozen=True)
class AgentKeys:
    """Agent-held secret key-agreement key plus its public identity."""

    _exchange_sk: X25519PrivateKey = field(repr=False)
    identity: AgentIdentity = None  # type: ignore[assignment]

    @property
    def exchange_sk(self) -> X25519PrivateKey:
        return self._exchange_sk


@dataclass(frozen=True)
class SessionKey:
    """Symmetric upload key shared by one device and one agent."""

    key: bytes = field(repr=False)

    def __post_init__(self) -> None:
        if len(self.key) != KEY_LEN:
            raise ValueError(f"session key must be {KEY_LEN} bytes")


def keygen(seed: bytes) -> DeviceKeys:
    """Deterministically derive a device's key set from a 32-byte seed."""
    if len(seed) != 32:
        raise ValueError("device key seed must be exactly 32 bytes")
    mas_sk = _derive(seed, b"master")
    sign_sk = Ed25519PrivateKey.from_private_bytes(_derive(seed, b"sign"))
    public_key = sign_sk.public_key().public_bytes_raw()
    return DeviceKeys(mas_sk=mas_sk, _sign_sk=sign_sk, public_key=public_key)


def agent_keygen(seed: bytes, address: str = "agent") -> AgentKeys:
    """Deterministically derive the agent's key-agreement pair from a seed."""
    if len(seed) != 32:
        raise ValueError("agent key seed must be exactly 32 bytes")
    exchange_sk = X25519PrivateKey.from_private_bytes(_derive(seed, b"exchange"))
    identity = AgentIdentity(
        public_key=exchange_sk.public_key().public_bytes_raw(), address=address
    )
    return AgentKeys(_exchange_sk=exchange_sk, identity=identity)


# --- signatures ----------------------------------------------------------------

def sign(data: bytes, sk: Ed25519PrivateKey) -> bytes:
    """Sign bytes; Ed25519 is deterministic, same input -> same signature."""
    return sk.sign(bytes(data))


def verify(data: bytes, sig: bytes, public_key: bytes) -> bool:
    """True iff ``sig`` is a valid signature over ``data``; never raises."""
    try:
        Ed25519PublicKey.from_public_bytes(bytes(public_key)).verify(
            bytes(sig), bytes(data)
        )
        return True
    except (InvalidSignature, ValueError, TypeError):
        return False


# --- authenticated sealing -------------------------------------------------------

def counter_nonce(counter: int) -> bytes:
    """Map a monotonic message counter to a unique 12-byte seal nonce."""
    if not 0 <= counter < 2 ** (8 * NONCE_LEN):
        raise ValueError("counter out of nonce range")
    return counter.to_bytes(NONCE_LEN, "big")


def seal(plaintext: bytes, key: SessionKey, nonce: bytes, aad: bytes = b"") -> bytes:
    """AEAD-seal ``plaintext``; returns nonce || ciphertext+tag."""
    if len(nonce) != NONCE_LEN:
        raise ValueError(f"nonce must be {NONCE_LEN} bytes")
    ct = AESGCM(key.key).encrypt(nonce, bytes(plaintext), bytes(aad))
    return bytes(nonce) + ct

def open_sealed(blob: bytes, key: SessionKey, aad: bytes = b"") -> bytes:
    """Open a sealed blob or raise :class:`OpenError` on any failure."""
    blob = bytes(blob)
    if len(blob) < NONCE_LEN + 16:
        raise OpenError("sealed blob shorter than nonce + tag")
    nonce, ct = blob[:NONCE_LEN], blob[NONCE_LEN:]
    try:
        return AESGCM(key.key).decrypt(nonce, ct, bytes(aad))
    except InvalidTag as exc:
        raise OpenError("authentication failed") from exc


def upload_aad(device_id: str, nonce: bytes) -> bytes:
    """Associated data binding an upload to its device and message counter."""
    return device_id.encode("utf-8") + b"|" + bytes(nonce)


# --- session-key establishment ----------------------------------------------------

def _ecies_seal(recipient_pk: bytes, plaintext: bytes, rng) -> bytes:
    """One-shot asymmetric encryption: ephemeral X25519 + HKDF + AES-GCM.

    The ephemeral key is drawn from ``rng`` so runs stay reproducible; the
    AEAD nonce can be constant because each blob uses a fresh derived key.
    """
    eph_sk = X25519PrivateKey.from_private_bytes(rng.randbytes(32))
    eph_pk = eph_sk.public_key().public_bytes_raw()
    shared = eph_sk.exchange(X25519PublicKey.from_public_bytes(recipient_pk))
    key = HKDF(
        algorithm=hashes.SHA256(), length=KEY_LEN, salt=None,
        info=b"coldtrace-ecies" + eph_pk + recipient_pk,
    ).derive(shared)
    ct = AESGCM(key).encrypt(b"\x00" * NONCE_LEN, plaintext, b"")
    return eph_pk + ct


def _ecies_open(agent: AgentKeys, blob: bytes) -> bytes:
    if len(blob) < 32 + 16:
        raise OpenError("distribution blob too short")
    eph_pk, ct = blob[:32], blob[32:]
    shared = agent.exchange_sk.exchange(X25519PublicKey.from_public_bytes(eph_pk))
    key = HKDF(
        algorithm=hashes.SHA256(), length=KEY_LEN, salt=None,
        info=b"coldtrace-ecies" + eph_pk + agent.identity.public_key,
    ).derive(shared)
    try:
        return AESGCM(key).decrypt(b"\x00" * NONCE_LEN, ct, b"")
    except InvalidTag as exc:
        raise OpenError("distribution authentication failed") from exc


def session_key(keys: DeviceKeys, recipient: AgentIdentity, rng) -> tuple[SessionKey, bytes, bytes]:
    """Derive and package the upload key for one recipient.

    The key is a PRF of the device master secret over (recipient key, fresh
    nonce), so distinct recipients and nonces yield independent keys.  Returns
    ``(session, distribution, signature)`` where ``distribution`` is the key
    encrypted to the recipient and ``signature`` authenticates it.
    """
    nonce = rng.randbytes(16)
    sym = hmac.new(keys.mas_sk, recipient.public_key + nonce, hashlib.sha256).digest()
    session = SessionKey(key=sym)
    distribution = _ecies_seal(recipient.public_key, sym, rng)
    signature = sign(distribution, keys.sign_sk)
    return session, distribution, signature


def open_session(agent: AgentKeys, distribution: bytes, signature: bytes,
                 device_public_key: bytes) -> SessionKey:
    """Agent side of key establishment: check the signature, unwrap the key."""
    if not verify(distribution, signature, device_public_key):
        raise OpenError("distribution signature invalid")
    return SessionKey(key=_ecies_open(agent, distribution))
