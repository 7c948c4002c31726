"""Training/evaluation samples.

A dataset stores per-sensor phases rather than evolved states: states are
rebuilt on demand from the uniform superposition, which keeps memory linear
in the sensor count.  Datasets built from explicit states are also allowed.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .sensing import evolved_uniform


@dataclass(frozen=True)
class Sample:
    state: np.ndarray
    label: int
    coords: np.ndarray


@dataclass(frozen=True)
class Dataset:
    labels: np.ndarray  # (N,) int: cell, block or block-local cell index
    coords: np.ndarray  # (N, 2) meters
    n_classes: int
    domain: tuple[float, float, float, float]  # (x0, y0, x1, y1) the samples live in
    phases: np.ndarray | None = None  # (N, m)
    explicit_states: np.ndarray | None = None  # (N, 2**m)

    def __post_init__(self):
        if (self.phases is None) == (self.explicit_states is None):
            raise ValueError("a dataset needs exactly one of phases or explicit_states")
        n = len(self.labels)
        src = self.phases if self.phases is not None else self.explicit_states
        if len(src) != n or len(self.coords) != n:
            raise ValueError("labels, coords and states must have equal length")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def qubits(self) -> int:
        if self.phases is not None:
            return self.phases.shape[1]
        return self.explicit_states.shape[1].bit_length() - 1

    def states(self, idx=None) -> np.ndarray:
        sel = slice(None) if idx is None else idx
        if self.phases is not None:
            return evolved_uniform(self.phases[sel])
        return np.asarray(self.explicit_states[sel], dtype=complex)

    def subset(self, idx) -> "Dataset":
        return Dataset(
            labels=self.labels[idx],
            coords=self.coords[idx],
            n_classes=self.n_classes,
            domain=self.domain,
            phases=None if self.phases is None else self.phases[idx],
            explicit_states=None if self.explicit_states is None else self.explicit_states[idx],
        )

    def __iter__(self) -> Iterator[Sample]:
        for i in range(len(self)):
            yield Sample(self.states(i), int(self.labels[i]), self.coords[i])

    def save(self, path) -> None:
        np.savez_compressed(
            path,
            labels=self.labels,
            coords=self.coords,
            n_classes=self.n_classes,
            domain=np.asarray(self.domain),
            **({"phases": self.phases} if self.phases is not None else {"states": self.explicit_states}),
        )

    @classmethod
    def load(cls, path) -> "Dataset":
        with np.load(path) as z:
            return cls(
                labels=z["labels"],
                coords=z["coords"],
                n_classes=int(z["n_classes"]),
                domain=tuple(float(v) for v in z["domain"]),
                phases=z["phases"] if "phases" in z else None,
                explicit_states=z["states"] if "states" in z else None,
            )


def from_states(states, labels, coords=None, n_classes=None, domain=(0.0, 0.0, 1.0, 1.0)) -> Dataset:
    states = np.atleast_2d(np.asarray(states, dtype=complex))
    labels = np.asarray(labels, dtype=int).reshape(-1)
    coords = np.zeros((len(labels), 2)) if coords is None else np.asarray(coords, dtype=float).reshape(-1, 2)
    n_classes = int(labels.max()) + 1 if n_classes is None else n_classes
    return Dataset(labels=labels, coords=coords, n_classes=n_classes, domain=tuple(domain), explicit_states=states)
