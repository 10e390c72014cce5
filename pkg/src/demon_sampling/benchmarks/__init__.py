"""Fixed mixture models shipped with the package for benchmarks and tests."""

from importlib import resources

from ..core import MixtureModel

__all__ = ["BUILTIN_MODELS", "load_benchmark", "resolve_model"]

BUILTIN_MODELS = ("gmm2d", "gmm8d")


def load_benchmark(name: str) -> MixtureModel:
    """Load one of the bundled mixtures by name ('gmm2d' or 'gmm8d')."""
    if name not in BUILTIN_MODELS:
        raise KeyError(f"unknown benchmark model {name!r}; choose from {BUILTIN_MODELS}")
    doc = resources.files(__package__).joinpath(f"{name}.json").read_text("utf-8")
    import json

    return MixtureModel.from_dict(json.loads(doc))


def resolve_model(spec: str) -> MixtureModel:
    """Resolve a CLI model argument: a bundled name or a JSON file path."""
    if spec in BUILTIN_MODELS:
        return load_benchmark(spec)
    return MixtureModel.from_json(spec)
