"""Writes fixtures/suzuki/transcript.json, the scripted replies for a full
ten-round Suzuki campaign (3 candidates per round)."""
import json
import pathlib

ROUNDS = 10
seq = []

seq.append(json.dumps({
    "overview": "Four categorical choices set the yield of this coupling. The base and solvent "
                "govern transmetallation, the electrophile sets the oxidative addition rate and "
                "the ligand tunes both. CsF in DMF is the reported starting point.",
    "entities": ["electrophile", "ligand", "base", "solvent", "CsF", "DMF", "Palladium"],
}))

seq.append("""Key findings: Fluoride bases and polar aprotic solvents are reported to help transmetallation.
Parameter relationships: base and solvent act together on the boronate.
Optimization principles: start from CsF in DMF and vary the electrophile first.
General notes: all reagents come from the listed choices.
Knowledge triples:
(CsF Base, Promotes, Transmetallation)
(DMF Solvent, Supports, Transmetallation)
(Palladium, Catalyzes, Coupling)""")

seq.append(json.dumps({
    "comments": "Fluoride base in DMF should give the best start; test three electrophiles with a bulky ligand.",
    "keywords": ["CsF", "DMF", "Sulfone"],
    "hypotheses": [
        {"id": "h1", "statement": "CsF outperforms hydroxide bases", "confidence": 0.6, "status": "proposed"},
        {"id": "h2", "statement": "DMF beats acetone", "confidence": 0.55, "status": "proposed"},
    ],
    "candidates": [
        {"electrophile": "Sulfone", "ligand": "Biaryl", "base": "CsF", "solvent": "DMF"},
        {"electrophile": "Iodine", "ligand": "Cyclohexyl", "base": "CsF", "solvent": "DMF"},
        {"electrophile": "Bromine", "ligand": "Biaryl", "base": "KOH", "solvent": "Acetone"},
    ],
}))

selections = [[0, 1, 2], [0, 2, 4], [1, 0, 3], [0, 1, 2], [2, 0, 1], [0, 3, 1], [0, 1, 4], [1, 2, 0], [0, 1, 2]]
for r in range(1, ROUNDS):
    c1 = min(0.95, 0.6 + 0.04 * r)
    c2 = max(0.05, 0.55 - 0.05 * r)
    status2 = "refuted" if c2 < 0.25 else "proposed"
    seq.append(f"""Key findings: round {r - 1} results favour the fluoride base.
Parameter relationships: the electrophile effect is larger than the solvent effect.
Optimization principles: keep CsF and explore ligands around the best electrophile.
General notes: round {r - 1} reviewed.
Knowledge triples:
(Sulfone Electrophile, PerformsBestWith, CsF Base)
(Biaryl Ligand, Tolerates, Acetone Solvent)
(KOH Base, Lowers, Yield Round{r})""")
    hyps = [
        {"id": "h1", "statement": "CsF outperforms hydroxide bases", "confidence": round(c1, 2),
         "status": "supported" if c1 >= 0.75 else "proposed"},
        {"id": "h2", "statement": "DMF beats acetone", "confidence": round(c2, 2), "status": status2},
    ]
    if r >= 3:
        hyps.append({"id": "h3", "statement": "Sulfone is the strongest electrophile",
                     "confidence": round(min(0.9, 0.4 + 0.06 * r), 2), "status": "proposed"})
    seq.append(json.dumps({
        "comments": f"After round {r - 1} the fluoride base leads; solvent matters less than expected.",
        "keywords": ["CsF", "Sulfone"] if r % 2 else ["Biaryl", "Acetone"],
        "hypotheses": hyps,
        "candidates": [],
    }))
    seq.append(json.dumps({"selected": selections[r - 1],
                           "rationale": "Balance the surrogate ranking against the fluoride hypothesis."}))

seq.append("CsF outperformed the hydroxide bases in every matched pair, so h1 held. The DMF "
           "advantage did not survive the data and h2 was refuted. The sulfone hypothesis gained "
           "support steadily.")
seq.append("1. Key outcomes\nThe best yield came from a fluoride base.\n\n2. Retrospective\n"
           "Early rounds spent budget on the solvent.\n\n3. Milestones\nThe best value appeared "
           "mid-campaign.\n\n4. Findings\nBase choice dominates.\n\n5. Forward guidance\nScreen "
           "further fluoride sources.\n\n6. Impact\nFewer runs for the next coupling.")

out = pathlib.Path(__file__).resolve().parent.parent / "suzuki" / "transcript.json"
out.write_text(json.dumps({"sequence": seq}, indent=2) + "\n")
print(len(seq), "replies")
