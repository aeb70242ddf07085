"""Regenerate the bundled sentiment smoke-test fixture (deterministic)."""

import numpy as np

POSITIVE = ["wonderful", "brilliant", "delightful", "superb", "moving", "charming",
            "gripping", "hilarious", "heartfelt", "masterful", "dazzling", "fresh"]
NEGATIVE = ["dreadful", "tedious", "clumsy", "hollow", "grating", "lifeless",
            "bland", "incoherent", "shallow", "painful", "forgettable", "stale"]
SUBJECTS = ["the film", "this movie", "the documentary", "that sequel", "the screenplay",
            "the soundtrack", "her performance", "his direction", "the ensemble cast",
            "the final act", "the cinematography", "the dialogue"]
TEMPLATES = [
    "{subj} was absolutely {adj}.",
    "{subj} felt {adj} from start to finish.",
    "critics agree that {subj} is {adj}.",
    "i found {subj} quite {adj}, honestly.",
    "{subj} turned out {adj} despite the hype.",
    "overall, {subj} remains {adj} on every level.",
    "a {adj} effort; {subj} will be remembered.",
    "{subj} is {adj}, and the pacing matches it.",
]
FILLERS = ["frankly", "in the end", "without a doubt", "to my surprise", "all things considered"]


def main(path, count=2000, seed=20240315):
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(count):
        label = i % 2
        adj = rng.choice(POSITIVE if label == 1 else NEGATIVE)
        subj = rng.choice(SUBJECTS)
        sentence = rng.choice(TEMPLATES).format(subj=subj, adj=adj)
        if rng.random() < 0.4:
            sentence = rng.choice(FILLERS) + ", " + sentence
        rows.append((sentence, label))
    rng.shuffle(rows)
    with open(path, "w", encoding="utf-8") as f:
        f.write("sentence\tlabel\n")
        for sentence, label in rows:
            f.write(f"{sentence}\t{label}\n")
    print(f"wrote {len(rows)} rows to {path}")


if __name__ == "__main__":
    import sys

    main(sys.argv[1] if len(sys.argv) > 1 else "src/mixkit/data/sentiment_2k.tsv")
