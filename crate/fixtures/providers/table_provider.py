#!/usr/bin/env python3
"""Example candidate provider speaking the line-delimited JSON protocol.

Reads `surface<TAB>score` pairs from a table and answers each request line:

  {"sentence": ..., "slot": [start, end], "k": K}
      -> {"candidates": [{"surface": ..., "score": ...}, ...]}
  {"sentence": ..., "slot": null, "k": 0}
      -> {"candidates": [], "sentence_score": S}

Candidates for a slot are the table entries whose determiner has the same
number as the phrase in the slot, best score first.
"""
import json
import sys


def load(path):
    table = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            surface, score = line.split("\t")
            table[surface.lower()] = float(score)
    return table


def tokens(sentence):
    return [t.strip(".,;:!?").lower() for t in sentence.split() if t.strip(".,;:!?")]


def sentence_score(table, sentence):
    toks = tokens(sentence)
    longest = max((len(k.split()) for k in table), default=1)
    total, i = 0.0, 0
    while i < len(toks):
        for n in range(min(longest, len(toks) - i), 0, -1):
            key = " ".join(toks[i : i + n])
            if key in table:
                total += table[key]
                i += n
                break
        else:
            i += 1
    return total


def plural(phrase):
    # The slot span may start with a preposition ("sur les tables").
    return any(t.lower() in ("les", "des", "aux") for t in phrase.split()[:2])


def main():
    table = load(sys.argv[1])
    for line in sys.stdin:
        req = json.loads(line)
        if req["slot"] is None:
            resp = {"candidates": [], "sentence_score": sentence_score(table, req["sentence"])}
        else:
            start, end = req["slot"]
            current = req["sentence"].encode("utf-8")[start:end].decode("utf-8")
            pool = [(s, v) for s, v in table.items() if " " in s and plural(s) == plural(current)]
            pool.sort(key=lambda sv: (-sv[1], sv[0]))
            resp = {"candidates": [{"surface": s, "score": v} for s, v in pool[: req["k"]]]}
        sys.stdout.write(json.dumps(resp, ensure_ascii=False) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
