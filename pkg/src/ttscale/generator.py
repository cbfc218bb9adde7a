"""Autoregressive generator contract, a deterministic toy model for
desk-scale testing, and a line-delimited JSON client for remote models.

The toy model is a table-driven stand-in for a real vision-language
generator: every (prompt, image, prefix) context maps to a logit vector,
unseen contexts fall back to uniform, and the whole pipeline is a pure
function so tests can enumerate its behavior exhaustively.
"""

from __future__ import annotations

import abc
import base64
import hashlib
import json
import socket
import struct
import threading
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import cv2
import numpy as np

from .core import AugmentedInput, TTScaleError, validate_distribution

# Logit floor used in place of -inf: exp(-800) underflows to exactly 0.0
# in float64, so zero-probability tokens stay exactly zero through softmax
# while remaining finite for gradient updates.
LOGIT_FLOOR = -800.0


class ContextOverflowError(TTScaleError):
    """Prefix length reached the model's context limit."""


class UnsupportedCapabilityError(TTScaleError):
    """The generator does not implement the requested capability."""


class LayerOutOfRangeError(TTScaleError, ValueError):
    """Requested layer is outside [1, num_layers]."""


class DimensionMismatchError(TTScaleError, ValueError):
    """A hidden vector has the wrong length."""


class RemoteUnavailableError(TTScaleError, ConnectionError):
    """The remote generator endpoint cannot be reached or fails mid-call."""


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    e = np.exp(z - z.max())
    return e / e.sum()


def image_fingerprint(image: Optional[np.ndarray]) -> str:
    """Stable hex fingerprint of an image's shape and raw bytes."""
    if image is None:
        return ""
    h = hashlib.blake2b(digest_size=8)
    h.update(struct.pack("<3q", *image.shape))
    h.update(np.ascontiguousarray(image).tobytes())
    return h.hexdigest()


def context_key(prompt: str, image_fp: str, prefix: Sequence[int]) -> int:
    """Stable 64-bit hash over (prompt bytes, image fingerprint, prefix ids).

    Distinct augmented variants hash to distinct keys, which is what lets
    tests install disagreeing table rows per variant.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(prompt.encode("utf-8"))
    h.update(b"\x00")
    h.update(image_fp.encode("ascii"))
    h.update(b"\x00")
    for t in prefix:
        h.update(struct.pack("<q", int(t)))
    return int.from_bytes(h.digest(), "big")


class GeneratorHandle(abc.ABC):
    """Contract every generator backend fulfils.

    A handle is confined to one worker at a time unless its ``step`` is a
    pure function (the toy model's is); multiple handles may always run
    concurrently.
    """

    vocab_size: int
    num_layers: int
    capabilities: frozenset

    #: Token id -> string mapping when the backend exposes one (needed for
    #: text decoding and constrained decoding); None otherwise.
    token_strings: Optional[tuple[str, ...]] = None

    @abc.abstractmethod
    def step(self, inp: AugmentedInput, prefix: Sequence[int]) -> np.ndarray:
        """Next-token distribution for one input conditioned on a shared prefix."""

    def step_batch(self, inputs: Sequence[AugmentedInput], prefix: Sequence[int]) -> np.ndarray:
        """N x |V| matrix of next-token distributions, one row per input."""
        return np.stack([self.step(inp, prefix) for inp in inputs])

    def step_hidden(self, inp: AugmentedInput, prefix: Sequence[int], layer: int) -> np.ndarray:
        raise UnsupportedCapabilityError("hidden_states not supported by this generator")

    def resume_from_hidden(self, hidden: np.ndarray, layer: int) -> np.ndarray:
        raise UnsupportedCapabilityError("hidden_states not supported by this generator")

    def clone_weights(self):
        raise UnsupportedCapabilityError("trainable not supported by this generator")

    def restore_weights(self, snapshot) -> None:
        raise UnsupportedCapabilityError("trainable not supported by this generator")

    def decode(self, tokens: Sequence[int], eos_token: Optional[int] = None) -> str:
        """Render token ids as text, dropping the trailing EOS if present."""
        if self.token_strings is None:
            raise UnsupportedCapabilityError("generator does not expose token strings")
        toks = list(tokens)
        if eos_token is not None and toks and toks[-1] == eos_token:
            toks = toks[:-1]
        return "".join(self.token_strings[t] for t in toks)


@dataclass(frozen=True)
class TableEntry:
    """One transition-table row: context -> probability vector."""

    prompt: str
    prefix: tuple[int, ...]
    probs: tuple[float, ...]
    image_fp: str = ""


@dataclass(frozen=True)
class ToyModelSpec:
    """Declarative description of a toy model.

    ``vocab`` must include the EOS string. ``hidden_dim`` must be at least
    vocab_size: hidden vectors carry the context's logits in their leading
    entries and per-layer context features in the remainder, so resuming
    from any layer reproduces the final distribution exactly.
    ``work_per_step`` adds that many extra hash rounds to each forward
    pass, emulating model compute for overhead benchmarks.
    """

    vocab: tuple[str, ...]
    eos: str = "</s>"
    num_layers: int = 4
    hidden_dim: int = 0  # 0 means vocab_size + 4
    context_limit: int = 64
    work_per_step: int = 0
    entries: tuple[TableEntry, ...] = ()

    def __post_init__(self) -> None:
        if len(self.vocab) < 2:
            raise ValueError("vocab must contain at least 2 tokens")
        if self.eos not in self.vocab:
            raise ValueError("vocab must include the EOS token")
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        dim = self.hidden_dim or len(self.vocab) + 4
        if dim < len(self.vocab):
            raise ValueError("hidden_dim must be >= vocab size")
        for entry in self.entries:
            if len(entry.probs) != len(self.vocab):
                raise ValueError(f"table row for {entry.prompt!r} has wrong width")
            validate_distribution(np.asarray(entry.probs))

    @property
    def eos_id(self) -> int:
        return self.vocab.index(self.eos)

    def to_dict(self) -> dict:
        return {
            "vocab": list(self.vocab),
            "eos": self.eos,
            "num_layers": self.num_layers,
            "hidden_dim": self.hidden_dim,
            "context_limit": self.context_limit,
            "work_per_step": self.work_per_step,
            "entries": [
                {
                    "prompt": e.prompt,
                    "prefix": list(e.prefix),
                    "probs": list(e.probs),
                    "image_fp": e.image_fp,
                }
                for e in self.entries
            ],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ToyModelSpec":
        known = {"vocab", "eos", "num_layers", "hidden_dim", "context_limit", "work_per_step", "entries"}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown ToyModelSpec keys: {sorted(unknown)}")
        entries = tuple(
            TableEntry(
                prompt=e["prompt"],
                prefix=tuple(e["prefix"]),
                probs=tuple(e["probs"]),
                image_fp=e.get("image_fp", ""),
            )
            for e in raw.get("entries", ())
        )
        return cls(
            vocab=tuple(raw["vocab"]),
            eos=raw.get("eos", "</s>"),
            num_layers=raw.get("num_layers", 4),
            hidden_dim=raw.get("hidden_dim", 0),
            context_limit=raw.get("context_limit", 64),
            work_per_step=raw.get("work_per_step", 0),
            entries=entries,
        )

    @classmethod
    def from_file(cls, path: str) -> "ToyModelSpec":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


class ToyModel(GeneratorHandle):
    """Deterministic table-driven generator.

    Contexts are addressed by a 64-bit hash of (prompt, image fingerprint,
    prefix). Seen contexts carry a trainable logit vector initialized to
    the log of the declared probabilities; unseen contexts fall back to a
    uniform distribution (zero logits). ``step`` is a pure function of its
    arguments and the current table, so repeated calls are bitwise equal.
    """

    def __init__(self, spec: ToyModelSpec):
        self.spec = spec
        self.vocab_size = len(spec.vocab)
        self.num_layers = spec.num_layers
        self.hidden_dim = spec.hidden_dim or self.vocab_size + 4
        self.capabilities = frozenset({"hidden_states", "trainable"})
        self.token_strings = spec.vocab
        self.eos_id = spec.eos_id
        self._logits: dict[int, np.ndarray] = {}
        for entry in spec.entries:
            key = context_key(entry.prompt, entry.image_fp, entry.prefix)
            self._logits[key] = self._probs_to_logits(np.asarray(entry.probs, dtype=np.float64))

    @staticmethod
    def _probs_to_logits(probs: np.ndarray) -> np.ndarray:
        probs = validate_distribution(probs)
        with np.errstate(divide="ignore"):
            logits = np.log(probs)
        return np.maximum(logits, LOGIT_FLOOR)

    def _key_for(self, inp: AugmentedInput, prefix: Sequence[int]) -> int:
        if len(prefix) >= self.spec.context_limit:
            raise ContextOverflowError(
                f"prefix length {len(prefix)} reached context limit {self.spec.context_limit}"
            )
        key = context_key(inp.prompt, image_fingerprint(inp.image), prefix)
        if self.spec.work_per_step:
            # Burn deterministic compute to emulate forward-pass cost.
            payload = key.to_bytes(8, "big") * 64
            for round_no in range(self.spec.work_per_step):
                hashlib.blake2b(payload + round_no.to_bytes(4, "big")).digest()
        return key

    def context_logits(self, inp: AugmentedInput, prefix: Sequence[int]) -> np.ndarray:
        key = self._key_for(inp, prefix)
        logits = self._logits.get(key)
        if logits is None:
            return np.zeros(self.vocab_size)
        return logits

    def step(self, inp: AugmentedInput, prefix: Sequence[int]) -> np.ndarray:
        return softmax(self.context_logits(inp, prefix))

    def _layer_features(self, key_material: bytes, layer: int, count: int) -> np.ndarray:
        """Deterministic per-(context, layer) filler features in [-1, 1]."""
        if count == 0:
            return np.zeros(0)
        digest = hashlib.blake2b(key_material + struct.pack("<i", layer), digest_size=16).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "big"))
        return rng.uniform(-1.0, 1.0, size=count)

    def step_hidden(self, inp: AugmentedInput, prefix: Sequence[int], layer: int) -> np.ndarray:
        if not 1 <= layer <= self.num_layers:
            raise LayerOutOfRangeError(f"layer {layer} outside [1, {self.num_layers}]")
        logits = self.context_logits(inp, prefix)
        material = context_key(inp.prompt, image_fingerprint(inp.image), prefix).to_bytes(8, "big")
        filler = self._layer_features(material, layer, self.hidden_dim - self.vocab_size)
        return np.concatenate([logits, filler])

    def resume_from_hidden(self, hidden: np.ndarray, layer: int) -> np.ndarray:
        if not 1 <= layer <= self.num_layers:
            raise LayerOutOfRangeError(f"layer {layer} outside [1, {self.num_layers}]")
        hidden = np.asarray(hidden, dtype=np.float64)
        if hidden.shape != (self.hidden_dim,):
            raise DimensionMismatchError(f"expected hidden of shape ({self.hidden_dim},), got {hidden.shape}")
        return softmax(hidden[: self.vocab_size])

    # -- trainable capability ------------------------------------------------

    def clone_weights(self) -> dict[int, np.ndarray]:
        return {key: arr.copy() for key, arr in self._logits.items()}

    def restore_weights(self, snapshot) -> None:
        if not isinstance(snapshot, dict):
            raise UnsupportedCapabilityError("restore_weights requires a snapshot from clone_weights")
        self._logits = {key: arr.copy() for key, arr in snapshot.items()}

    def param_value(self, key: int) -> np.ndarray:
        """Current logit vector for a context key (uniform if unseen)."""
        logits = self._logits.get(key)
        return logits.copy() if logits is not None else np.zeros(self.vocab_size)

    def set_param_value(self, key: int, logits: np.ndarray) -> None:
        logits = np.asarray(logits, dtype=np.float64)
        if logits.shape != (self.vocab_size,):
            raise DimensionMismatchError(f"logits must have shape ({self.vocab_size},)")
        self._logits[key] = logits.copy()

    def sequence_log_prob(self, inp: AugmentedInput, tokens: Sequence[int]) -> float:
        """log p(tokens | inp) under teacher forcing."""
        total = 0.0
        prefix: list[int] = []
        for tok in tokens:
            probs = self.step(inp, tuple(prefix))
            with np.errstate(divide="ignore"):
                total += float(np.log(probs[tok]))
            prefix.append(int(tok))
        return total

    def cross_entropy_grads(
        self, inp: AugmentedInput, target_tokens: Sequence[int]
    ) -> tuple[float, dict[int, np.ndarray]]:
        """Summed NLL of a target sequence and its exact logit gradients.

        The gradient of -log softmax(z)[y] w.r.t. z is softmax(z) - onehot(y),
        accumulated per context key across the sequence.
        """
        nll = 0.0
        grads: dict[int, np.ndarray] = {}
        prefix: list[int] = []
        fp = image_fingerprint(inp.image)
        for tok in target_tokens:
            key = context_key(inp.prompt, fp, prefix)
            logits = self._logits.get(key)
            probs = softmax(logits if logits is not None else np.zeros(self.vocab_size))
            with np.errstate(divide="ignore"):
                nll -= float(np.log(probs[tok]))
            g = probs.copy()
            g[tok] -= 1.0
            if key in grads:
                grads[key] += g
            else:
                grads[key] = g
            prefix.append(int(tok))
        return nll, grads


# -- remote generator ---------------------------------------------------------


def _encode_image(image: Optional[np.ndarray]) -> Optional[str]:
    if image is None:
        return None
    ok, buf = cv2.imencode(".png", cv2.cvtColor(image, cv2.COLOR_RGB2BGR))
    if not ok:
        raise ValueError("failed to encode image as PNG")
    return base64.b64encode(buf.tobytes()).decode("ascii")


def _decode_image(image_b64: Optional[str]) -> Optional[np.ndarray]:
    if image_b64 is None:
        return None
    raw = np.frombuffer(base64.b64decode(image_b64), dtype=np.uint8)
    bgr = cv2.imdecode(raw, cv2.IMREAD_COLOR)
    if bgr is None:
        raise ValueError("failed to decode PNG payload")
    return cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)


class RemoteGenerator(GeneratorHandle):
    """Client for a generator served over newline-delimited JSON.

    ``endpoint`` is either ``host:port`` (TCP) or a filesystem path (Unix
    domain socket). One JSON object per line in each direction; requests
    are serialized per connection. Any external model process that speaks
    the protocol can act as a backend without linking.
    """

    def __init__(
        self,
        endpoint: str,
        vocab_size: int,
        num_layers: int = 1,
        hidden_dim: Optional[int] = None,
        capabilities: Iterable[str] = (),
        timeout_s: float = 30.0,
    ):
        self.endpoint = endpoint
        self.vocab_size = vocab_size
        self.num_layers = num_layers
        self.hidden_dim = hidden_dim
        self.capabilities = frozenset(capabilities)
        self._timeout = timeout_s
        self._lock = threading.Lock()
        self._sock: Optional[socket.socket] = None
        self._reader = None

    def _connect(self) -> None:
        try:
            if "/" in self.endpoint:
                sock = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
                sock.settimeout(self._timeout)
                sock.connect(self.endpoint)
            else:
                host, _, port = self.endpoint.rpartition(":")
                sock = socket.create_connection((host, int(port)), timeout=self._timeout)
        except OSError as exc:
            raise RemoteUnavailableError(f"cannot reach {self.endpoint}: {exc}") from exc
        self._sock = sock
        self._reader = sock.makefile("r", encoding="utf-8")

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            finally:
                self._sock = None
                self._reader = None

    def _roundtrip(self, request: dict) -> dict:
        with self._lock:
            if self._sock is None:
                self._connect()
            try:
                self._sock.sendall((json.dumps(request) + "\n").encode("utf-8"))
                line = self._reader.readline()
            except OSError as exc:
                self.close()
                raise RemoteUnavailableError(f"remote call failed: {exc}") from exc
        if not line:
            self.close()
            raise RemoteUnavailableError("remote closed the connection")
        response = json.loads(line)
        if "error" in response:
            raise RemoteUnavailableError(f"remote error: {response['error']}")
        return response

    def step(self, inp: AugmentedInput, prefix: Sequence[int]) -> np.ndarray:
        response = self._roundtrip(
            {
                "op": "step",
                "prompt": inp.prompt,
                "image_b64": _encode_image(inp.image),
                "prefix": [int(t) for t in prefix],
            }
        )
        return validate_distribution(np.asarray(response["probs"], dtype=np.float64))

    def step_hidden(self, inp: AugmentedInput, prefix: Sequence[int], layer: int) -> np.ndarray:
        if "hidden_states" not in self.capabilities:
            raise UnsupportedCapabilityError("remote generator lacks hidden_states capability")
        response = self._roundtrip(
            {
                "op": "step_hidden",
                "prompt": inp.prompt,
                "image_b64": _encode_image(inp.image),
                "prefix": [int(t) for t in prefix],
                "layer": layer,
            }
        )
        return np.asarray(response["hidden"], dtype=np.float64)

    def resume_from_hidden(self, hidden: np.ndarray, layer: int) -> np.ndarray:
        if "hidden_states" not in self.capabilities:
            raise UnsupportedCapabilityError("remote generator lacks hidden_states capability")
        response = self._roundtrip(
            {
                "op": "resume",
                "prompt": "",
                "prefix": [],
                "layer": layer,
                "hidden": np.asarray(hidden, dtype=np.float64).tolist(),
            }
        )
        return validate_distribution(np.asarray(response["probs"], dtype=np.float64))


class GeneratorServer:
    """Serve any GeneratorHandle over the line-delimited JSON protocol.

    Intended for wiring real model processes to the toolkit and for
    exercising RemoteGenerator in tests. ``serve_forever`` blocks; use
    ``start_background`` to run in a daemon thread.
    """

    def __init__(self, generator: GeneratorHandle, host: str = "127.0.0.1", port: int = 0):
        self.generator = generator
        self._server = socket.create_server((host, port))
        self.host, self.port = self._server.getsockname()[:2]
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    @property
    def endpoint(self) -> str:
        return f"{self.host}:{self.port}"

    def _handle_request(self, request: dict) -> dict:
        op = request.get("op")
        if op == "resume":
            probs = self.generator.resume_from_hidden(
                np.asarray(request["hidden"], dtype=np.float64), int(request["layer"])
            )
            return {"probs": probs.tolist()}
        inp = AugmentedInput(
            prompt=request["prompt"],
            image=_decode_image(request.get("image_b64")),
        )
        prefix = [int(t) for t in request.get("prefix", [])]
        if op == "step":
            return {"probs": self.generator.step(inp, prefix).tolist()}
        if op == "step_hidden":
            hidden = self.generator.step_hidden(inp, prefix, int(request["layer"]))
            return {"hidden": hidden.tolist()}
        raise ValueError(f"unknown op {op!r}")

    def _serve_connection(self, conn: socket.socket) -> None:
        with conn, conn.makefile("r", encoding="utf-8") as reader:
            for line in reader:
                line = line.strip()
                if not line:
                    continue
                try:
                    response = self._handle_request(json.loads(line))
                except Exception as exc:  # protocol: errors travel in-band
                    response = {"error": f"{type(exc).__name__}: {exc}"}
                try:
                    conn.sendall((json.dumps(response) + "\n").encode("utf-8"))
                except OSError:
                    return

    def serve_forever(self) -> None:
        self._server.settimeout(0.2)
        while not self._stop.is_set():
            try:
                conn, _ = self._server.accept()
            except socket.timeout:
                continue
            threading.Thread(target=self._serve_connection, args=(conn,), daemon=True).start()

    def start_background(self) -> "GeneratorServer":
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
        self._server.close()
