"""The tabular container passed between generation, training and auditing."""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ContractError


@dataclass
class Dataset:
    """Features, labels and protected attributes for ``n`` rows.

    ``protected`` is ``(n, k)`` with 0/1 columns. ``one_hot_groups`` lists
    column-index groups that encode one categorical feature; singleton
    groups are implied for every other column. ``provenance`` is only set
    for synthetic data and carries the latent draws of each row.
    """

    features: np.ndarray
    labels: np.ndarray
    protected: np.ndarray
    ifs: np.ndarray = None
    fairness_label: np.ndarray = None
    column_names: list = None
    protected_names: list = None
    label_name: str = "y"
    one_hot_groups: list = field(default_factory=list)
    provenance: object = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ContractError("features must be a 2-D array")
        n, d = self.features.shape
        self.labels = np.asarray(self.labels, dtype=np.float64).reshape(-1)
        p = np.asarray(self.protected, dtype=np.float64)
        if p.ndim == 2:
            self.protected = p
        elif p.ndim == 1:
            self.protected = p.reshape(-1, 1) if p.size or n == 0 else p.reshape(0, 0)
        else:
            raise ContractError("protected must be a 1-D or 2-D array")
        if self.labels.shape[0] != n or self.protected.shape[0] != n:
            raise ContractError("features, labels and protected must share a row count")
        if self.ifs is not None:
            self.ifs = np.asarray(self.ifs, dtype=np.float64).reshape(-1)
            if self.ifs.shape[0] != n:
                raise ContractError("ifs length does not match the row count")
        if self.fairness_label is not None:
            if self.ifs is None:
                raise ContractError("fairness_label requires ifs")
            self.fairness_label = np.asarray(self.fairness_label, dtype=np.int64).reshape(-1)
        if self.column_names is None:
            self.column_names = [f"x{i}" for i in range(d)]
        if len(self.column_names) != d:
            raise ContractError("column_names length does not match the feature count")
        if self.protected_names is None:
            k = self.protected.shape[1]
            self.protected_names = ["c"] if k == 1 else [f"c{j}" for j in range(k)]
        self.one_hot_groups = [list(map(int, g)) for g in self.one_hot_groups]

    @property
    def n_rows(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    def __len__(self):
        return self.n_rows

    def subset(self, idx):
        idx = np.asarray(idx)
        prov = self.provenance.subset(idx) if self.provenance is not None else None
        return replace(
            self,
            features=self.features[idx],
            labels=self.labels[idx],
            protected=self.protected[idx],
            ifs=None if self.ifs is None else self.ifs[idx],
            fairness_label=None if self.fairness_label is None else self.fairness_label[idx],
            column_names=list(self.column_names),
            protected_names=list(self.protected_names),
            one_hot_groups=[list(g) for g in self.one_hot_groups],
            provenance=prov,
        )

    def feature_groups(self):
        """All feature groups in first-column order, singletons included."""
        grouped = {}
        for g in self.one_hot_groups:
            for i in g:
                grouped[i] = tuple(g)
        seen, groups = set(), []
        for i in range(self.n_features):
            g = grouped.get(i, (i,))
            if g not in seen:
                seen.add(g)
                groups.append(list(g))
        return groups

    def group_names(self):
        names = []
        for g in self.feature_groups():
            if len(g) == 1:
                names.append(self.column_names[g[0]])
            else:
                prefix = self.column_names[g[0]].split("=", 1)[0]
                names.append(prefix)
        return names


def split_indices(n, fractions, rng):
    """Seeded shuffled partition of ``range(n)`` by the given fractions."""
    perm = rng.permutation(n)
    bounds = np.floor(np.cumsum(fractions)[:-1] * n + 0.5).astype(int)
    return np.split(perm, bounds)
