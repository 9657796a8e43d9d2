#!/usr/bin/env python3
"""Writes the bundled mini-corpus under crates/cli/data/mini.

Everything is deterministic: rerunning reproduces the committed files.
"""

import json
import os
import random

OUT = os.path.join(os.path.dirname(__file__), "..", "crates", "cli", "data", "mini")

# (form, lemma, upos, feats, head, deprel)
SENTENCES = [
    [("Bishops", "bishop", "NOUN", "Number=Plur", 2, "nsubj"),
     ("move", "move", "VERB", "Mood=Ind|Tense=Pres|VerbForm=Fin", 0, "root"),
     ("diagonally", "diagonally", "ADV", "_", 2, "advmod"),
     (".", ".", "PUNCT", "_", 2, "punct")],
    [("The", "the", "DET", "Definite=Def|PronType=Art", 2, "det"),
     ("dog", "dog", "NOUN", "Number=Sing", 3, "nsubj"),
     ("barked", "bark", "VERB", "Mood=Ind|Tense=Past|VerbForm=Fin", 0, "root"),
     ("at", "at", "ADP", "_", 6, "case"),
     ("the", "the", "DET", "Definite=Def|PronType=Art", 6, "det"),
     ("mailman", "mailman", "NOUN", "Number=Sing", 3, "obl"),
     (".", ".", "PUNCT", "_", 3, "punct")],
    [("Mary", "Mary", "PROPN", "Number=Sing", 2, "nsubj"),
     ("drinks", "drink", "VERB", "Mood=Ind|Number=Sing|Person=3|Tense=Pres|VerbForm=Fin", 0, "root"),
     ("coffee", "coffee", "NOUN", "Number=Sing", 2, "obj"),
     ("every", "every", "DET", "_", 5, "det"),
     ("morning", "morning", "NOUN", "Number=Sing", 2, "obl:tmod"),
     (".", ".", "PUNCT", "_", 2, "punct")],
    [("Whales", "whale", "NOUN", "Number=Plur", 3, "nsubj"),
     ("are", "be", "AUX", "Mood=Ind|Tense=Pres|VerbForm=Fin", 3, "cop"),
     ("mammals", "mammal", "NOUN", "Number=Plur", 0, "root"),
     (".", ".", "PUNCT", "_", 3, "punct")],
    [("I", "I", "PRON", "Case=Nom|Number=Sing|Person=1|PronType=Prs", 2, "nsubj"),
     ("think", "think", "VERB", "Mood=Ind|Tense=Pres|VerbForm=Fin", 0, "root"),
     ("the", "the", "DET", "Definite=Def|PronType=Art", 4, "det"),
     ("plan", "plan", "NOUN", "Number=Sing", 6, "nsubj"),
     ("will", "will", "AUX", "VerbForm=Fin", 6, "aux"),
     ("fail", "fail", "VERB", "VerbForm=Inf", 2, "ccomp"),
     (".", ".", "PUNCT", "_", 2, "punct")],
    [("Students", "student", "NOUN", "Number=Plur", 3, "nsubj"),
     ("should", "should", "AUX", "VerbForm=Fin", 3, "aux"),
     ("read", "read", "VERB", "VerbForm=Inf", 0, "root"),
     ("the", "the", "DET", "Definite=Def|PronType=Art", 5, "det"),
     ("instructions", "instruction", "NOUN", "Number=Plur", 3, "obj"),
     ("carefully", "carefully", "ADV", "_", 3, "advmod"),
     (".", ".", "PUNCT", "_", 3, "punct")],
    [("The", "the", "DET", "Definite=Def|PronType=Art", 2, "det"),
     ("committee", "committee", "NOUN", "Number=Sing", 3, "nsubj"),
     ("approved", "approve", "VERB", "Mood=Ind|Tense=Past|VerbForm=Fin", 0, "root"),
     ("the", "the", "DET", "Definite=Def|PronType=Art", 5, "det"),
     ("budget", "budget", "NOUN", "Number=Sing", 3, "obj"),
     ("yesterday", "yesterday", "NOUN", "Number=Sing", 3, "obl:tmod"),
     (".", ".", "PUNCT", "_", 3, "punct")],
    [("Freedom", "freedom", "NOUN", "Number=Sing", 2, "nsubj"),
     ("matters", "matter", "VERB", "Mood=Ind|Number=Sing|Person=3|Tense=Pres|VerbForm=Fin", 0, "root"),
     ("to", "to", "ADP", "_", 4, "case"),
     ("everyone", "everyone", "PRON", "Number=Sing|PronType=Tot", 2, "obl"),
     (".", ".", "PUNCT", "_", 2, "punct")],
    [("She", "she", "PRON", "Case=Nom|Number=Sing|Person=3|PronType=Prs", 3, "nsubj"),
     ("often", "often", "ADV", "_", 3, "advmod"),
     ("walks", "walk", "VERB", "Mood=Ind|Number=Sing|Person=3|Tense=Pres|VerbForm=Fin", 0, "root"),
     ("to", "to", "ADP", "_", 5, "case"),
     ("work", "work", "NOUN", "Number=Sing", 3, "obl"),
     ("when", "when", "SCONJ", "_", 8, "mark"),
     ("it", "it", "PRON", "Case=Nom|Number=Sing|Person=3|PronType=Prs", 8, "expl"),
     ("rains", "rain", "VERB", "Mood=Ind|Number=Sing|Person=3|Tense=Pres|VerbForm=Fin", 3, "advcl"),
     (".", ".", "PUNCT", "_", 3, "punct")],
    [("Lions", "lion", "NOUN", "Number=Plur", 2, "nsubj"),
     ("hunt", "hunt", "VERB", "Mood=Ind|Tense=Pres|VerbForm=Fin", 0, "root"),
     ("in", "in", "ADP", "_", 4, "case"),
     ("groups", "group", "NOUN", "Number=Plur", 2, "obl"),
     (".", ".", "PUNCT", "_", 2, "punct")],
    [("The", "the", "DET", "Definite=Def|PronType=Art", 2, "det"),
     ("company", "company", "NOUN", "Number=Sing", 4, "nsubj"),
     ("might", "might", "AUX", "VerbForm=Fin", 4, "aux"),
     ("hire", "hire", "VERB", "VerbForm=Inf", 0, "root"),
     ("new", "new", "ADJ", "Degree=Pos", 6, "amod"),
     ("engineers", "engineer", "NOUN", "Number=Plur", 4, "obj"),
     ("next", "next", "ADJ", "Degree=Pos", 8, "amod"),
     ("year", "year", "NOUN", "Number=Sing", 4, "obl:tmod"),
     (".", ".", "PUNCT", "_", 4, "punct")],
    [("Water", "water", "NOUN", "Number=Sing", 2, "nsubj"),
     ("boils", "boil", "VERB", "Mood=Ind|Number=Sing|Person=3|Tense=Pres|VerbForm=Fin", 0, "root"),
     ("at", "at", "ADP", "_", 5, "case"),
     ("100", "100", "NUM", "NumType=Card", 5, "nummod"),
     ("degrees", "degree", "NOUN", "Number=Plur", 2, "obl"),
     (".", ".", "PUNCT", "_", 2, "punct")],
    [("The", "the", "DET", "Definite=Def|PronType=Art", 2, "det"),
     ("children", "child", "NOUN", "Number=Plur", 3, "nsubj"),
     ("built", "build", "VERB", "Mood=Ind|Tense=Past|VerbForm=Fin", 0, "root"),
     ("a", "a", "DET", "Definite=Ind|PronType=Art", 5, "det"),
     ("sandcastle", "sandcastle", "NOUN", "Number=Sing", 3, "obj"),
     ("on", "on", "ADP", "_", 8, "case"),
     ("the", "the", "DET", "Definite=Def|PronType=Art", 8, "det"),
     ("beach", "beach", "NOUN", "Number=Sing", 3, "obl"),
     (".", ".", "PUNCT", "_", 3, "punct")],
    [("Democracy", "democracy", "NOUN", "Number=Sing", 2, "nsubj"),
     ("requires", "require", "VERB", "Mood=Ind|Number=Sing|Person=3|Tense=Pres|VerbForm=Fin", 0, "root"),
     ("participation", "participation", "NOUN", "Number=Sing", 2, "obj"),
     (".", ".", "PUNCT", "_", 2, "punct")],
    [("John", "John", "PROPN", "Number=Sing", 3, "nsubj"),
     ("was", "be", "AUX", "Mood=Ind|Tense=Past|VerbForm=Fin", 3, "cop"),
     ("happy", "happy", "ADJ", "Degree=Pos", 0, "root"),
     ("about", "about", "ADP", "_", 6, "case"),
     ("the", "the", "DET", "Definite=Def|PronType=Art", 6, "det"),
     ("news", "news", "NOUN", "Number=Sing", 3, "obl"),
     (".", ".", "PUNCT", "_", 3, "punct")],
    [("Cats", "cat", "NOUN", "Number=Plur", 2, "nsubj"),
     ("chase", "chase", "VERB", "Mood=Ind|Tense=Pres|VerbForm=Fin", 0, "root"),
     ("mice", "mouse", "NOUN", "Number=Plur", 2, "obj"),
     (".", ".", "PUNCT", "_", 2, "punct")],
    [("The", "the", "DET", "Definite=Def|PronType=Art", 2, "det"),
     ("storm", "storm", "NOUN", "Number=Sing", 3, "nsubj"),
     ("destroyed", "destroy", "VERB", "Mood=Ind|Tense=Past|VerbForm=Fin", 0, "root"),
     ("several", "several", "ADJ", "Degree=Pos", 5, "amod"),
     ("houses", "house", "NOUN", "Number=Plur", 3, "obj"),
     ("last", "last", "ADJ", "Degree=Pos", 7, "amod"),
     ("night", "night", "NOUN", "Number=Sing", 3, "obl:tmod"),
     (".", ".", "PUNCT", "_", 3, "punct")],
    [("Teachers", "teacher", "NOUN", "Number=Plur", 3, "nsubj"),
     ("usually", "usually", "ADV", "_", 3, "advmod"),
     ("grade", "grade", "VERB", "Mood=Ind|Tense=Pres|VerbForm=Fin", 0, "root"),
     ("exams", "exam", "NOUN", "Number=Plur", 3, "obj"),
     ("on", "on", "ADP", "_", 6, "case"),
     ("weekends", "weekend", "NOUN", "Number=Plur", 3, "obl"),
     (".", ".", "PUNCT", "_", 3, "punct")],
    [("If", "if", "SCONJ", "_", 3, "mark"),
     ("you", "you", "PRON", "Case=Nom|Person=2|PronType=Prs", 3, "nsubj"),
     ("leave", "leave", "VERB", "Mood=Ind|Tense=Pres|VerbForm=Fin", 8, "advcl"),
     ("now", "now", "ADV", "_", 3, "advmod"),
     (",", ",", "PUNCT", "_", 3, "punct"),
     ("you", "you", "PRON", "Case=Nom|Person=2|PronType=Prs", 8, "nsubj"),
     ("would", "would", "AUX", "VerbForm=Fin", 8, "aux"),
     ("catch", "catch", "VERB", "VerbForm=Inf", 0, "root"),
     ("the", "the", "DET", "Definite=Def|PronType=Art", 10, "det"),
     ("train", "train", "NOUN", "Number=Sing", 8, "obj"),
     (".", ".", "PUNCT", "_", 8, "punct")],
    [("Gold", "gold", "NOUN", "Number=Sing", 5, "nsubj"),
     ("is", "be", "AUX", "Mood=Ind|Tense=Pres|VerbForm=Fin", 5, "cop"),
     ("a", "a", "DET", "Definite=Ind|PronType=Art", 5, "det"),
     ("valuable", "valuable", "ADJ", "Degree=Pos", 5, "amod"),
     ("metal", "metal", "NOUN", "Number=Sing", 0, "root"),
     (".", ".", "PUNCT", "_", 5, "punct")],
]

SPLITS = {"train": range(0, 12), "dev": range(12, 16), "test": range(16, 20)}
ARG_RELS = {"nsubj", "obj", "obl", "obl:tmod", "advmod"}
PRED_RELS = {"root", "ccomp", "advcl"}
PRED_MARKERS = {"aux", "cop"}
ARG_POS = {"DET", "NUM", "NOUN", "PROPN", "PRON"}
PRED_POS = {"ADJ", "NOUN", "NUM", "DET", "PROPN", "PRON", "VERB", "AUX"}
STOPLIST = {"i", "we", "he", "she", "it", "me", "us", "him", "her"}

ABSTRACT = {"freedom", "democracy", "participation", "plan", "news", "budget", "instruction", "work"}
MODALS = {"should", "might", "will", "would"}
STATIVE = {"matter", "require", "think", "mammal", "happy", "metal"}
ANNOTATORS = [f"A{i:02d}" for i in range(1, 7)]


def sid(i):
    return f"mini-{i + 1:02d}"


def subtree(sent, root):
    out = {root}
    changed = True
    while changed:
        changed = False
        for j, tok in enumerate(sent, start=1):
            if tok[4] in out and j not in out and tok[2] != "PUNCT":
                out.add(j)
                changed = True
    return sorted(out)


def candidates():
    items = []
    for i, sent in enumerate(SENTENCES):
        for j, tok in enumerate(sent, start=1):
            if tok[5] in ARG_RELS:
                items.append({"item_id": f"{sid(i)}-arg-{j}", "sentence_id": sid(i), "root_index": j,
                              "span_indices": subtree(sent, j), "kind": "argument"})
            if tok[5] in PRED_RELS:
                span = sorted([j] + [k for k, t in enumerate(sent, start=1) if t[4] == j and t[5] in PRED_MARKERS])
                items.append({"item_id": f"{sid(i)}-pred-{j}", "sentence_id": sid(i), "root_index": j,
                              "span_indices": span, "kind": "predicate"})
    return items


def kept(item):
    sent = SENTENCES[int(item["sentence_id"].split("-")[1]) - 1]
    form, lemma, upos, _, _, rel = sent[item["root_index"] - 1]
    if item["kind"] == "argument":
        if upos not in ARG_POS:
            return False
        return not (upos == "PRON" and (lemma.lower() in STOPLIST or form.lower() in STOPLIST))
    return upos in PRED_POS and rel.split(":")[0] not in {"advmod", "advcl"}


def truth(item):
    """Latent (property, polarity) pairs for an item."""
    sent = SENTENCES[int(item["sentence_id"].split("-")[1]) - 1]
    form, lemma, upos, feats, _, _ = sent[item["root_index"] - 1]
    deps = [t for t in sent if t[4] == item["root_index"]]
    if item["kind"] == "argument":
        definite = any(t[1] in {"the", "a"} for t in deps) or upos in {"PROPN", "PRON"}
        bare_plural = "Number=Plur" in feats and not definite
        abstract = lemma.lower() in ABSTRACT
        mass_generic = upos == "NOUN" and not definite and not abstract and lemma in {"water", "gold", "coffee"}
        return {"Is.Particular": definite, "Is.Kind": bare_plural or mass_generic, "Is.Abstract": abstract}
    modal = any(t[1] in MODALS for t in deps) or sent[item["root_index"] - 1][5] == "advcl"
    past = "Tense=Past" in feats or any("Tense=Past" in t[3] and t[5] == "cop" for t in deps)
    stative = lemma in STATIVE or any(t[5] == "cop" for t in deps)
    return {"Is.Particular": past, "Is.Hypothetical": modal, "Is.Dynamic": not stative}


def write_conllu(path):
    with open(path, "w") as f:
        for i, sent in enumerate(SENTENCES):
            f.write(f"# sent_id = {sid(i)}\n")
            f.write("# text = " + " ".join(t[0] for t in sent) + "\n")
            for j, (form, lemma, upos, feats, head, rel) in enumerate(sent, start=1):
                f.write(f"{j}\t{form}\t{lemma}\t{upos}\t_\t{feats}\t{head}\t{rel}\t_\t_\n")
            f.write("\n")


def write_jsonl(path, rows):
    with open(path, "w") as f:
        for r in rows:
            f.write(json.dumps(r, separators=(",", ":")) + "\n")


def responses(items, rng):
    by_split = {s: [] for s in SPLITS}
    # Per-annotator response style: flip rate and confidence skew.
    style = {a: (rng.uniform(0.05, 0.25), rng.uniform(-0.6, 0.6)) for a in ANNOTATORS}
    for item in items:
        idx = int(item["sentence_id"].split("-")[1]) - 1
        split = next(s for s, r in SPLITS.items() if idx in r)
        for ann in sorted(rng.sample(ANNOTATORS, 3)):
            flip_rate, skew = style[ann]
            for prop, value in truth(item).items():
                flipped = rng.random() < flip_rate
                base = 2.9 if flipped else 3.7
                conf = int(min(5, max(1, round(rng.gauss(base + skew, 1.1)))))
                by_split[split].append({"annotator_id": ann, "item_id": item["item_id"], "property": prop,
                                        "polarity": value != flipped, "confidence": conf})
    return by_split


def vocabulary():
    words = set()
    for sent in SENTENCES:
        for form, lemma, upos, *_ in sent:
            if upos != "PUNCT":
                words.add(form.lower())
                words.add(lemma.lower())
    return sorted(words)


def vec(rng, dim):
    return " ".join(f"{rng.gauss(0, 0.5):.4f}" for _ in range(dim))


def resources(rng, out):
    lemmas = sorted({t[1].lower() for s in SENTENCES for t in s if t[2] in {"NOUN", "PROPN", "PRON", "VERB", "ADJ", "NUM"}})
    missing = {"mailman", "sandcastle", "everyone"}
    verbs = sorted({t[1] for s in SENTENCES for t in s if t[2] == "VERB"})
    classes = ["motion", "consumption", "creation", "cognition", "perception", "change", "social"]
    frames = ["Motion", "Ingestion", "Creating", "Awareness", "Destroying", "Employing", "Temporal", "People", "Animals", "Substance"]
    supersenses = ["noun.animal", "noun.person", "noun.artifact", "noun.cognition", "noun.substance",
                   "noun.time", "noun.group", "verb.motion", "verb.consumption", "verb.creation", "verb.cognition"]
    os.makedirs(os.path.join(out, "resources"), exist_ok=True)
    with open(os.path.join(out, "resources", "concreteness.tsv"), "w") as f:
        f.write("# lemma\tconcreteness rating 1-5\n")
        for l in lemmas:
            if l not in missing:
                rating = 1.5 if l in ABSTRACT else rng.uniform(3.0, 5.0)
                f.write(f"{l}\t{rating:.2f}\n")
    with open(os.path.join(out, "resources", "eventivity.tsv"), "w") as f:
        for l in lemmas:
            if l not in missing:
                f.write(f"{l}\t{rng.uniform(0, 1):.3f}\n")
    with open(os.path.join(out, "resources", "verbnet.tsv"), "w") as f:
        for l in verbs:
            f.write(f"{l}\t" + ",".join(sorted(rng.sample(classes, rng.randint(1, 2)))) + "\n")
    with open(os.path.join(out, "resources", "framenet.tsv"), "w") as f:
        for l in lemmas:
            if l not in missing:
                f.write(f"{l}\t" + ",".join(sorted(rng.sample(frames, rng.randint(1, 2)))) + "\n")
    with open(os.path.join(out, "resources", "wordnet.tsv"), "w") as f:
        for l in lemmas:
            if l not in missing:
                f.write(f"{l}\t" + ",".join(sorted(rng.sample(supersenses, rng.randint(1, 3)))) + "\n")


def main():
    rng = random.Random(20170915)
    os.makedirs(OUT, exist_ok=True)
    write_conllu(os.path.join(OUT, "corpus.conllu"))
    items = candidates()
    write_jsonl(os.path.join(OUT, "spans.jsonl"), items)
    by_split = responses([it for it in items if kept(it)], rng)
    os.makedirs(os.path.join(OUT, "responses"), exist_ok=True)
    for split, rows in by_split.items():
        write_jsonl(os.path.join(OUT, "responses", f"{split}.jsonl"), rows)
    resources(rng, OUT)
    dim = 8
    with open(os.path.join(OUT, "glove.txt"), "w") as f:
        for w in vocabulary():
            if w not in {"sandcastle", "mailman"}:
                f.write(f"{w} {vec(rng, dim)}\n")
    with open(os.path.join(OUT, "context.tsv"), "w") as f:
        f.write(f"{dim}\n")
        for i, sent in enumerate(SENTENCES):
            for j in range(1, len(sent) + 1):
                f.write(f"{sid(i)}:{j}\t{vec(rng, dim)}\n")
    with open(os.path.join(OUT, "ontology.tsv"), "w") as f:
        f.write("arg_particular\targ_kind\targ_abstract\tpred_particular\tpred_hypothetical\tpred_dynamic\tlabel\n")
        centers = {"eventive": [1, -1, -1, 1, -1, 1], "stative": [1, -1, 0, 0, -1, -1],
                   "habitual": [1, -1, -1, -1, -1, 1], "generic": [-1, 1, 0, -1, -1, 0]}
        for label, center in centers.items():
            for _ in range(20):
                f.write("\t".join(f"{c + rng.gauss(0, 0.6):.3f}" for c in center) + f"\t{label}\n")


if __name__ == "__main__":
    main()
