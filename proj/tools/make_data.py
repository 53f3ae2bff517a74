"""Writes the bundled real datasets (from scikit-learn's local copies) as CSV + schema."""
import json
import pathlib
import sys

from sklearn import datasets

out = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "data")
out.mkdir(parents=True, exist_ok=True)

for name, loader in [("iris", datasets.load_iris), ("wine", datasets.load_wine),
                     ("breast_cancer", datasets.load_breast_cancer)]:
    d = loader()
    cols = [f.replace(" ", "_").replace("(", "").replace(")", "").replace("/", "_") for f in d.feature_names]
    with open(out / f"{name}.csv", "w") as f:
        f.write(",".join(cols + ["target"]) + "\n")
        for row, y in zip(d.data, d.target):
            f.write(",".join(f"{v:.6g}" for v in row) + "," + str(d.target_names[y]) + "\n")
    schema = {"target": "target",
              "columns": [{"name": c, "type": "numeric"} for c in cols] + [{"name": "target", "type": "categorical"}]}
    (out / f"{name}.schema.json").write_text(json.dumps(schema, indent=1) + "\n")
    print(name, d.data.shape)
