"""Seeded generators for Adult-like and Avazu-like tabular data.

Labels come from a random logistic rule with a linear part and a set of
pairwise interactions between attributes owned by *different* guests, so a
model can only reach the best AUC if the host mixes guest features.
"""

from __future__ import annotations

import numpy as np

from .data import BUILTIN_SCHEMAS, UNKNOWN, DatasetSchema, Kind, RawTable, split_attributes

_POSITIVE_BIAS = {"adult": -0.9, "avazu": -0.6}


def generate(kind: str, n_rows: int, seed: int = 0, guests: int = 3,
             missing_rate: float = 0.0) -> tuple[RawTable, DatasetSchema]:
    if kind not in BUILTIN_SCHEMAS:
        raise ValueError(f"unknown synthetic dataset {kind!r}; choose from {sorted(BUILTIN_SCHEMAS)}")
    schema = BUILTIN_SCHEMAS[kind]
    rule = np.random.default_rng([seed, 1])
    draw = np.random.default_rng([seed, 2])

    columns: dict[str, list] = {}
    signal: dict[str, np.ndarray] = {}
    for name, akind in schema.attributes:
        if akind is Kind.CONTINUOUS:
            z = draw.standard_normal(n_rows)
            if rule.random() < 0.5:
                loc, scale = rule.uniform(-50, 50), rule.uniform(0.5, 20)
                values = loc + scale * z
            else:
                values = np.exp(0.6 * z) * rule.uniform(1, 100)
            columns[name] = [float(v) for v in np.round(values, 6)]
            signal[name] = z
        else:
            k = int(rule.integers(3, 9))
            probs = rule.dirichlet(np.full(k, 2.0))
            effects = rule.standard_normal(k)
            effects = (effects - effects @ probs) / max(np.sqrt(probs @ (effects - effects @ probs) ** 2), 1e-9)
            cats = draw.choice(k, size=n_rows, p=probs)
            labels = [f"{name}_v{c}" for c in range(k)]
            columns[name] = [labels[c] for c in cats]
            signal[name] = effects[cats]
            if missing_rate > 0:
                holes = draw.random(n_rows) < missing_rate
                for i in np.flatnonzero(holes):
                    columns[name][i] = UNKNOWN

    groups = split_attributes(schema.names, guests)
    linear = sum(rule.normal(0.0, 0.6) * signal[n] for n in schema.names)
    interaction = np.zeros(n_rows)
    for g in range(len(groups)):
        for h in range(g + 1, len(groups)):
            for _ in range(2):
                a = groups[g][int(rule.integers(len(groups[g])))]
                b = groups[h][int(rule.integers(len(groups[h])))]
                interaction += rule.choice([-1.0, 1.0]) * 1.2 * signal[a] * signal[b]
    score = linear + interaction
    score = (score - score.mean()) / score.std()
    p = 1.0 / (1.0 + np.exp(-(3.0 * score + _POSITIVE_BIAS[kind])))
    y = (draw.random(n_rows) < p).astype(np.int64)

    prefix = kind[0]
    ids = [f"{prefix}{i:07d}" for i in range(n_rows)]
    return RawTable(ids, y, columns), schema
