"""Shared plumbing for the end-to-end fixtures: seed a completion cache with
the frozen teacher outputs so evaluation runs entirely offline.

Bundles are built through the same formatting and prompt code the runner
uses, so a seeded completion is found at exactly the prompt the pipeline
issues."""

import json
from pathlib import Path

from tabrex.formatting import format_table
from tabrex.gateway import (
    GatewayConfig,
    build_cot_prompt,
    build_toolmaker_prompt,
    store_completion,
)
from tabrex.harness import load_records

E2E = Path(__file__).parent / "fixtures" / "e2e"
RECORDS_PATH = E2E / "records_toy.jsonl"
METRICS_GOLDEN = E2E / "metrics_tart.json"

# the six records whose plans never execute; run_tart must flag exactly these
FALLBACK_IDS = {
    "tabmwp-03",       # loop-bearing program
    "finqa-03",        # division by zero at run time
    "finqa-04",        # prose reply, no program
    "tabfact-04",      # helper that maps to no builtin
    "pubhealthtab-03", # conditional in the program body
    "scitab-03",       # no cached completion at all
}


def seed_cache(cache_dir) -> GatewayConfig:
    config = GatewayConfig(cache_dir=str(cache_dir))
    records = {r.id: r for r in load_records(RECORDS_PATH)}
    outputs = json.loads(
        (E2E / "teacher_outputs.json").read_text(encoding="utf-8"))
    for record_id, entry in outputs.items():
        record = records[record_id]
        formatted, _ = format_table(record.table, record.query)
        if "toolmaker" in entry:
            store_completion(config,
                             build_toolmaker_prompt(formatted, record.query),
                             entry["toolmaker"])
        if "cot" in entry:
            store_completion(config,
                             build_cot_prompt(formatted, record.query),
                             entry["cot"])
    return config
