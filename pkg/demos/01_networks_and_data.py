"""
Networks, sampling and missing data
===================================

Build a small discrete network, save it as JSON, draw records from it and
knock out cells completely at random.
"""
import tempfile
from pathlib import Path

import numpy as np

from structem import Parameters, Structure, Variable, ancestral_sample, inject_missing_mcar, read_dataset, read_network, validate, write_dataset, write_network

# Rain and a sprinkler both wet the grass.  A three-state variable shows that
# arities can differ.
variables = [
    Variable("Rain", ("none", "light", "heavy")),
    Variable.binary("Sprinkler"),
    Variable.binary("Wet"),
]
structure = Structure.from_edges(variables, [("Rain", "Wet"), ("Sprinkler", "Wet")])

# CPT rows are parent configurations in mixed-radix order: the lowest-index
# parent (Rain) varies slowest.
params = Parameters((
    np.array([[0.6, 0.3, 0.1]]),
    np.array([[0.7, 0.3]]),
    np.array([
        [0.95, 0.05], [0.10, 0.90],   # Rain=none
        [0.40, 0.60], [0.05, 0.95],   # Rain=light
        [0.02, 0.98], [0.01, 0.99],   # Rain=heavy
    ]),
))
print("problems:", validate(structure, params))

out = Path(tempfile.mkdtemp())
write_network(out / "sprinkler.json", structure, params)
print((out / "sprinkler.json").read_text()[:200], "...")
structure, params = read_network(out / "sprinkler.json")

# Sampling is seeded, so the same call always yields the same records.
data = ancestral_sample(structure, params, 1000, seed=0)
holed = inject_missing_mcar(data, 0.2, seed=1)
print("missing cells:", holed.n_missing, "of", holed.values.size)

# '?' marks a missing cell in CSV files.
write_dataset(out / "sprinkler.csv", holed)
print((out / "sprinkler.csv").read_text().splitlines()[:5])
back = read_dataset(out / "sprinkler.csv", structure.variables)
assert np.array_equal(back.values, holed.values)
