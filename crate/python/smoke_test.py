"""Smoke test for the `blm` extension module.

Build and install first:  pip install --no-build-isolation ./crates/python
Then run:                 python python/smoke_test.py
"""
import json
import pathlib

import blm

ROOT = pathlib.Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"

OPERATORS = [
    "alternation NP1.number cycle=s,p period=1 phase=0",
    "alternation NP2.number cycle=s,p period=2 phase=0",
    "progression count(NP3) start=1 step=1 block=4",
]


def main():
    g = blm.Phenomenon.load(str(FIXTURES / "agreement_fr.blm"))
    assert g.id == "agreement_fr"
    assert blm.Phenomenon.parse(g.serialize()).serialize() == g.serialize()

    t = g.template(8, 24, OPERATORS)
    assert len(t) == 8
    assert t.rows()[7] == "NP1:p NP2:p NP3:s V:p", t.rows()

    inst = json.loads(g.instance(t, 7))
    assert len(inst["context"]["items"]) == 7
    assert len(inst["answers"]["options"]) == 6

    data = blm.generate(str(FIXTURES / "agreement_fr.toml"), count=3, seed=11)
    assert json.loads(blm.validate(data))["failures"] == []
    report = json.loads(blm.solve(data))
    assert report["accuracy"] == 1.0

    augmented = blm.augment(data, str(FIXTURES / "stub_scores_fr.tsv"), epsilon=1.0, budget=1)
    assert json.loads(blm.validate(augmented))["failures"] == []

    stripped = json.loads(blm.strip_answers(data))
    assert "answers" not in stripped

    try:
        blm.Phenomenon.parse("phenomenon: x\nobjects:\n  broken")
    except blm.BlmError:
        pass
    else:
        raise AssertionError("malformed phenomenon accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
