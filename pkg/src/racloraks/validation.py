"""Input checks shared by the estimators and the command line."""

from __future__ import annotations

from pathlib import Path

from .kspace import Dataset


def check_dataset(X, require_gold=False, require_complete_acs=False) -> Dataset:
    """Return ``X`` as a :class:`Dataset`, loading it when given a directory path.

    Raises
    ------
    TypeError
        If ``X`` is neither a Dataset nor a path.
    ValueError
        If a required part is missing.
    """
    if isinstance(X, (str, Path)):
        from .container import load_container

        X = load_container(X)
    if not isinstance(X, Dataset):
        raise TypeError(f"expected a Dataset or a container directory, got {type(X).__name__}")
    if require_gold and X.gold is None:
        raise ValueError("dataset has no gold standard")
    if require_complete_acs and not X.acs_complete:
        raise ValueError("dataset ACS is incomplete")
    return X


def check_consistent(dataset: Dataset, n_channels: int, name: str):
    # fitted subspaces only make sense for the channel count they were fitted on
    if dataset.epi[0].n_ch != n_channels:
        raise ValueError(
            f"{name} was fitted on {n_channels} channels but the dataset has {dataset.epi[0].n_ch}"
        )
