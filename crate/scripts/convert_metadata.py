#!/usr/bin/env python3
"""One-time conversion of raw Mocheg / Factify2 CSV releases into the
normalized metadata format read by `factprobe`.

Output: UTF-8, one JSON object per line:
    {id, claim, evidence, claim_image, evidence_images, raw_label, dataset, split}

Column names differ between releases, so every column is a flag. The defaults
match the public CSV layouts:

  mocheg    Corpus2.csv: claim_id, Claim, Evidence, cleaned_truthfulness.
            Rows sharing a claim_id are merged; their evidence texts are joined
            with newlines in file order. Evidence images are discovered in
            --image-dir as files named "<claim_id>-*", sorted by name.
  factify2  train.csv / val.csv: <index>, claim, document, claim_image,
            document_image, Category.

Image columns may hold URLs or paths; they are passed through unchanged.
Rows with an empty id or label are skipped and counted on stderr.

Example:
  python3 scripts/convert_metadata.py --dataset factify2 --split train \
      --csv factify2/train.csv --out meta/factify2_train.jsonl
"""

import argparse
import csv
import json
import os
import sys
from collections import OrderedDict

DEFAULTS = {
    "mocheg": {
        "id": "claim_id",
        "claim": "Claim",
        "evidence": "Evidence",
        "label": "cleaned_truthfulness",
        "claim_image": None,
        "evidence_image": None,
    },
    "factify2": {
        "id": "",
        "claim": "claim",
        "evidence": "document",
        "label": "Category",
        "claim_image": "claim_image",
        "evidence_image": "document_image",
    },
}


def parse_args(argv):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--dataset", choices=sorted(DEFAULTS), required=True)
    p.add_argument("--split", choices=["train", "val", "test"], required=True)
    p.add_argument("--csv", required=True, help="raw CSV file")
    p.add_argument("--out", required=True, help="JSON-lines file to write")
    p.add_argument("--image-dir", help="directory searched for <id>-* evidence images")
    for field in ("id", "claim", "evidence", "label", "claim_image", "evidence_image"):
        p.add_argument(f"--{field.replace('_', '-')}-column", dest=f"{field}_column")
    return p.parse_args(argv)


def column(args, field):
    given = getattr(args, f"{field}_column")
    return given if given is not None else DEFAULTS[args.dataset][field]


def images_by_prefix(image_dir):
    found = {}
    if not image_dir:
        return found
    for name in sorted(os.listdir(image_dir)):
        key = name.split("-", 1)[0]
        found.setdefault(key, []).append(os.path.join(image_dir, name))
    return found


def convert(args):
    csv.field_size_limit(sys.maxsize)
    cols = {f: column(args, f) for f in DEFAULTS[args.dataset]}
    disk_images = images_by_prefix(args.image_dir)
    merged = OrderedDict()
    skipped = 0
    with open(args.csv, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            ident = (row.get(cols["id"]) or "").strip()
            label = (row.get(cols["label"]) or "").strip()
            if not ident or not label:
                skipped += 1
                continue
            evidence = (row.get(cols["evidence"]) or "").strip()
            rec = merged.get(ident)
            if rec is None:
                claim_image = row.get(cols["claim_image"]) if cols["claim_image"] else None
                rec = {
                    "id": ident,
                    "claim": (row.get(cols["claim"]) or "").strip(),
                    "evidence": evidence,
                    "claim_image": claim_image or None,
                    "evidence_images": [],
                    "raw_label": label,
                    "dataset": args.dataset,
                    "split": args.split,
                }
                merged[ident] = rec
            elif evidence:
                rec["evidence"] = f"{rec['evidence']}\n{evidence}" if rec["evidence"] else evidence
            if cols["evidence_image"]:
                img = (row.get(cols["evidence_image"]) or "").strip()
                if img and img not in rec["evidence_images"]:
                    rec["evidence_images"].append(img)
    for ident, rec in merged.items():
        for img in disk_images.get(ident, []):
            if img not in rec["evidence_images"]:
                rec["evidence_images"].append(img)
    with open(args.out, "w", encoding="utf-8") as out:
        for rec in merged.values():
            out.write(json.dumps(rec, ensure_ascii=False) + "\n")
    print(f"{len(merged)} instances written to {args.out}; {skipped} rows skipped", file=sys.stderr)


if __name__ == "__main__":
    convert(parse_args(sys.argv[1:]))
