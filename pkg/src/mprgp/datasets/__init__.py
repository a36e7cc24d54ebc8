"""Bundled benchmark datasets (LIBSVM format, features scaled to [-1, 1]).

``australian``, ``diabetes`` and ``ionosphere``; see ``scripts/make_datasets.py``
for provenance.
"""

from importlib import resources
from pathlib import Path

NAMES = ("australian", "diabetes", "ionosphere")


def path(name: str) -> Path:
    if name not in NAMES:
        raise KeyError(f"no bundled dataset {name!r}; choose from {', '.join(NAMES)}")
    return Path(str(resources.files(__name__).joinpath(f"{name}_scale.libsvm")))


def load(name: str):
    from ..svm import load_dataset

    return load_dataset(path(name))
