"""Print the constructive verdict matrix and optionally dump it as JSON.

    python scripts/lemma_matrix.py [--json out.json]
"""
import argparse
import json

from transbound.lemmas import LEMMAS, CLAIMED_ENCODABLE, format_matrix, verdict_matrix


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--json")
    args = ap.parse_args()
    verdicts = verdict_matrix(LEMMAS, ("TransE", "TransComplEx"), "abcd")
    print(format_matrix(verdicts))
    disagree = [v for v in verdicts if CLAIMED_ENCODABLE[(v.lemma, v.model, v.condition)] is not None
                and not v.agrees_with_claim]
    print(f"\n{len(verdicts)} cells, {len(disagree)} disagree with the reference table")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump([v.to_dict() for v in verdicts], fh, indent=1)


if __name__ == "__main__":
    main()
