"""Writes the distractor fixture: five queries whose most query-like context
is not the relevant one, while the relevant context's generated questions
match the query closely.

Vectors are built so cosines are exact by construction: every query embeds to
e1, a context with query similarity a embeds to [a, sqrt(1-a^2), 0] and a
hypothetical query with similarity b to [b, 0, sqrt(1-b^2)].
"""
import json
import math
import os

# query id -> (query text, [(doc id, text, cos(q, c), [(hypothetical query, cos(q, h))], grade)])
LAYOUT = {
    "q1": ("Which fruit keeps doctors away?", [
        ("q1-d", "Pears and apples are both sold by weight at the market.", 0.9,
         [("How are pears sold?", 0.1), ("Where is the market?", 0.05)], 0),
        ("q1-r", "Eating an apple each day is linked to fewer doctor visits.", 0.7,
         [("What fruit keeps the doctor away?", 0.95), ("Is fruit healthy?", 0.3)], 1),
        ("q1-n", "Orchards need pruning in late winter.", 0.5, [("When are orchards pruned?", 0.2)], 0)]),
    "q2": ("What erupted in 79 AD?", [
        ("q2-d", "Mountains near Naples attract many hikers every year.", 0.9,
         [("Where do hikers go near Naples?", 0.1)], 0),
        ("q2-r", "Mount Vesuvius buried Pompeii in ash in the year 79.", 0.7,
         [("What buried Pompeii?", 0.95), ("When did Vesuvius erupt?", 0.4)], 2),
        ("q2-n", "Volcanic soil is rich in minerals.", 0.5, [("Why is volcanic soil fertile?", 0.2)], 0)]),
    "q3": ("Who invented the telephone?", [
        ("q3-d", "Telephones changed how offices were arranged.", 0.85, [("How did offices change?", 0.2)], 0),
        ("q3-r", "Alexander Graham Bell patented the telephone in 1876.", 0.8,
         [("Who patented the telephone?", 0.9)], 1),
        ("q3-n", "Bell's assistant was Thomas Watson, who heard the first call.", 0.6,
         [("Who heard the first phone call?", 0.7)], 1)]),
    "q4": ("How do bees make honey?", [
        ("q4-d", "Honey jars come in many sizes.", 0.9, [("What sizes do honey jars come in?", 0.1)], 1),
        ("q4-r", "Bees turn nectar into honey by evaporation inside the hive.", 0.7,
         [("How is honey made by bees?", 0.95)], 2),
        ("q4-n", "Beekeepers wear protective suits.", 0.5, [("What do beekeepers wear?", 0.2)], 0)]),
    "q5": ("What is the boiling point of water?", [
        ("q5-r", "At sea level water boils at 100 degrees Celsius.", 0.9,
         [("At what temperature does water boil?", 0.8)], 1),
        ("q5-d", "Kettles come with automatic shutoff switches.", 0.8, [("How do kettles switch off?", 0.6)], 0),
        ("q5-n", "Steam engines powered early trains.", 0.3, [("What powered early trains?", 0.1)], 0)]),
}


def main():
    out = os.path.dirname(os.path.abspath(__file__))
    corpus, queries, run, qrels, responses, vectors = [], [], [], [], {}, {}
    for qid, (qtext, cands) in LAYOUT.items():
        queries.append({"_id": qid, "text": qtext})
        assert qtext not in vectors
        vectors[qtext] = [1.0, 0.0, 0.0]
        for rank, (did, text, a, hyps, grade) in enumerate(cands, start=1):
            corpus.append({"_id": did, "text": text})
            vectors[text] = [a, math.sqrt(1 - a * a), 0.0]
            run.append(f"{qid} Q0 {did} {rank} {a} cosine")
            if grade > 0:
                qrels.append(f"{qid} 0 {did} {grade}")
            responses[text] = "\n".join(f"{i}. {h}" for i, (h, _) in enumerate(hyps, start=1))
            for h, b in hyps:
                assert h not in vectors, h
                vectors[h] = [b, 0.0, math.sqrt(1 - b * b)]

    def write(name, text):
        with open(os.path.join(out, name), "w") as f:
            f.write(text)

    write("corpus.jsonl", "".join(json.dumps(c) + "\n" for c in corpus))
    write("queries.jsonl", "".join(json.dumps(q) + "\n" for q in queries))
    write("baseline.run", "\n".join(run) + "\n")
    write("qrels.txt", "\n".join(qrels) + "\n")
    write("generator.json", json.dumps({"model": "fixture-generator", "context_window": 3900,
                                        "responses": responses}, indent=1) + "\n")
    write("embeddings.json", json.dumps({"name": "distractor-fixture", "dim": 3, "strict": True,
                                         "vectors": vectors}, indent=1) + "\n")


if __name__ == "__main__":
    main()
