"""Versioned JSON file formats for models, keys and inputs.

Model weights are stored as decimal strings so arbitrarily large fixed-point
integers survive the JSON round trip exactly. The declared inner-product
bound length is recomputed from the weights at load time and rejected when it
understates what the weights can produce.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import ParameterError
from .linear import DEFAULT_KAPPA, FeatureVector, LinearModel
from .network import NetworkSpec
from .paillier import PublicKey, SecretKey

FORMAT_VERSION = 1
MODEL_TYPES = ("linear", "logistic", "svm", "ffnn")

#: Link function applied client-side per model type.
MODEL_ACTIVATIONS = {"linear": "identity", "logistic": "sigmoid", "svm": "sign"}


@dataclass(frozen=True)
class LoadedModel:
    model_type: str
    model: LinearModel | NetworkSpec
    kappa: int

    @property
    def precision(self) -> int:
        return self.model.precision

    @property
    def activation(self) -> str:
        return MODEL_ACTIVATIONS.get(self.model_type, "identity")


def save_model(path: str, model: LinearModel | NetworkSpec, model_type: str,
               kappa: int = DEFAULT_KAPPA) -> None:
    if model_type not in MODEL_TYPES:
        raise ParameterError(f"unknown model type {model_type!r}")
    doc: dict = {"format_version": FORMAT_VERSION, "model_type": model_type,
                 "kappa": kappa, "precision": model.precision}
    if model_type == "ffnn":
        if not isinstance(model, NetworkSpec):
            raise ParameterError("ffnn model file needs a NetworkSpec")
        doc["output_mode"] = model.output_mode
        doc["ell"] = [layer.ell for layer in model.layers]
        doc["layers"] = [
            {"activation": layer.activation,
             "weights": [[str(w) for w in row] for row in layer.weights]}
            for layer in model.layers]
    else:
        if not isinstance(model, LinearModel):
            raise ParameterError(f"{model_type} model file needs a LinearModel")
        doc["ell"] = model.ell
        doc["weights"] = [str(w) for w in model.theta]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path: str) -> LoadedModel:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParameterError(f"{path}: not valid JSON ({exc})") from None
    if doc.get("format_version") != FORMAT_VERSION:
        raise ParameterError(f"{path}: unsupported format version")
    model_type = doc.get("model_type")
    if model_type not in MODEL_TYPES:
        raise ParameterError(f"{path}: unknown model type {model_type!r}")
    precision = int(doc["precision"])
    kappa = int(doc.get("kappa", DEFAULT_KAPPA))
    try:
        if model_type == "ffnn":
            layer_defs = [([tuple(int(w) for w in row) for row in layer["weights"]],
                           layer["activation"])
                          for layer in doc["layers"]]
            ells = [int(e) for e in doc["ell"]]
            model = NetworkSpec.from_integer(layer_defs, precision,
                                             output_mode=doc.get("output_mode", "raw"),
                                             ells=ells)
        else:
            theta = tuple(int(w) for w in doc["weights"])
            model = LinearModel(theta, int(doc["ell"]), precision)
    except (KeyError, ValueError, TypeError) as exc:
        raise ParameterError(f"{path}: malformed model ({exc})") from None
    return LoadedModel(model_type, model, kappa)


# ---------------------------------------------------------------------------
# key files

_KEY_KINDS = {"paillier-public": PublicKey, "paillier-secret": SecretKey}


def _save_key(path: str, kind: str, data: bytes) -> None:
    doc = {"format_version": FORMAT_VERSION, "kind": kind, "data": data.hex()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def save_public_key(path: str, pk: PublicKey) -> None:
    _save_key(path, "paillier-public", pk.to_bytes())


def save_secret_key(path: str, sk: SecretKey) -> None:
    _save_key(path, "paillier-secret", sk.to_bytes())


def load_key(path: str) -> PublicKey | SecretKey:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParameterError(f"{path}: not valid JSON ({exc})") from None
    if doc.get("format_version") != FORMAT_VERSION:
        raise ParameterError(f"{path}: unsupported format version")
    cls = _KEY_KINDS.get(doc.get("kind"))
    if cls is None:
        raise ParameterError(f"{path}: unknown key kind {doc.get('kind')!r}")
    try:
        return cls.from_bytes(bytes.fromhex(doc["data"]))
    except (KeyError, ValueError) as exc:
        raise ParameterError(f"{path}: malformed key ({exc})") from None


# ---------------------------------------------------------------------------
# input files

def load_input_vector(path: str, precision: int,
                      allow_unscaled: bool = False) -> FeatureVector:
    """One decimal real per line; values must lie in [-1, 1] unless allowed."""
    features = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            try:
                value = float(text)
            except ValueError:
                raise ParameterError(f"{path}:{lineno}: not a decimal number: {text!r}") from None
            if not allow_unscaled and not -1.0 <= value <= 1.0:
                raise ParameterError(
                    f"{path}:{lineno}: value {value} outside [-1, 1]; "
                    "rescale the input or pass --allow-unscaled")
            features.append(value)
    if not features:
        raise ParameterError(f"{path}: no feature values found")
    return FeatureVector.from_real(features, precision, allow_unscaled=allow_unscaled)
