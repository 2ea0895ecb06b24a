"""
Full mock pipeline on a synthetic corpus
========================================

Generates a small two-unit corpus, writes a config, and drives every
stage with the deterministic mock backend. Run it twice with the same
seed and diff the output trees: they are byte-identical.
"""
import json
import tempfile
from pathlib import Path

from refscore.harness import STAGES, load_config, run_stages
from refscore.synth import make_synthetic_corpus

root = Path(tempfile.mkdtemp(prefix="refscore-demo-"))

# a corpus with known latent quality per article, plus integer and
# noisy non-integer gold files derived from it
corpus = make_synthetic_corpus(root, uoas=(1, 2), per_uoa=18, seed=4)

config = {
    "schema_version": 1,
    "articles": corpus["articles"].name,
    "golds": [
        {"kind": "departmental_proxy", "path": corpus["gold_proxy"].name},
        {"kind": "individual", "path": corpus["gold_individual"].name},
    ],
    "fewshot_pool": corpus["fewshot_pool"].name,
    "system_prompt": corpus["system_prompt"].name,
    "models": [{"name": "mock-a"}, {"name": "mock-b"}],
    "strategies": ["zero", "few"],
    "iterations": 2,
    "concurrency": 2,
    "seed": 11,
    "bootstrap_reps": 200,
    "cv_folds": 2,
    "de": {"population": 12, "generations": 25},
    "mock": {
        "enabled": True,
        "noise_sd": 0.3,
        "styles": {"mock-a": "plain", "mock-b": "reasoning"},
    },
    "out_dir": "out",
}
cfg_path = root / "config.json"
cfg_path.write_text(json.dumps(config, indent=1))

cfg = load_config(cfg_path)
manifest = run_stages(cfg, STAGES)

print("stages run:")
for entry in manifest["stages"]:
    print(f"  {entry['name']:8s} {entry['counts']}")

print("\nartifacts under", cfg.out_dir)
for path in sorted(cfg.out_dir.rglob("*")):
    if path.is_file() and "cache" not in path.parts and "prompts" not in path.parts:
        print(" ", path.relative_to(cfg.out_dir).as_posix())

# the correlation table is the headline output: one row per
# (gold kind, model, strategy, unit) with a bootstrap interval
print("\nfirst correlation rows:")
lines = (cfg.out_dir / "correlations.csv").read_text().splitlines()
for line in lines[:6]:
    print(" ", line)
