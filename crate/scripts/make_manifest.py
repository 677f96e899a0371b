#!/usr/bin/env python3
"""Build a paraling manifest from a corpus directory using its file naming.

    make_manifest.py emodb   /data/emodb/wav   > emodb.csv
    make_manifest.py ravdess /data/ravdess     > ravdess.csv

Paths are written relative to the output file when --out is given, else
absolute.
"""

import argparse
import csv
import os
import sys

EMODB_EMOTIONS = {
    "W": "anger",
    "L": "boredom",
    "E": "disgust",
    "A": "fear",
    "F": "happiness",
    "T": "sadness",
    "N": "neutral",
}
EMODB_MALE = {"03", "10", "11", "12", "15"}

RAVDESS_EMOTIONS = {
    "01": "neutral",
    "02": "calm",
    "03": "happy",
    "04": "sad",
    "05": "angry",
    "06": "fearful",
    "07": "disgust",
    "08": "surprised",
}


def emodb(name):
    # 03a01Fa.wav: speaker, text id, emotion letter, version
    stem = os.path.splitext(name)[0]
    if len(stem) < 6 or stem[5] not in EMODB_EMOTIONS:
        return None
    speaker = stem[:2]
    return EMODB_EMOTIONS[stem[5]], f"emodb{speaker}", "m" if speaker in EMODB_MALE else "f"


def ravdess(name):
    # 03-01-05-01-02-01-12.wav: modality, channel, emotion, intensity,
    # statement, repetition, actor (odd actors are male)
    parts = os.path.splitext(name)[0].split("-")
    if len(parts) != 7 or parts[2] not in RAVDESS_EMOTIONS or parts[0] not in ("01", "03"):
        return None
    actor = int(parts[6])
    return RAVDESS_EMOTIONS[parts[2]], f"ravdess{actor:02d}", "m" if actor % 2 else "f"


PARSERS = {"emodb": emodb, "ravdess": ravdess}


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("corpus", choices=sorted(PARSERS))
    ap.add_argument("root", help="directory searched recursively for .wav files")
    ap.add_argument("--out", help="output CSV (default: stdout)")
    args = ap.parse_args()

    parse = PARSERS[args.corpus]
    base = os.path.dirname(os.path.abspath(args.out)) if args.out else None
    rows, skipped = [], 0
    for dirpath, _, files in os.walk(args.root):
        for name in sorted(files):
            if not name.lower().endswith(".wav"):
                continue
            meta = parse(name)
            if meta is None:
                skipped += 1
                continue
            path = os.path.abspath(os.path.join(dirpath, name))
            rows.append((os.path.relpath(path, base) if base else path, *meta))
    rows.sort()
    if not rows:
        sys.exit(f"no {args.corpus} recordings found under {args.root}")

    out = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["path", "label", "speaker", "gender"])
    w.writerows(rows)
    if args.out:
        out.close()
    print(f"{len(rows)} recordings, {skipped} skipped", file=sys.stderr)


if __name__ == "__main__":
    main()
