"""
Term keyness between two report corpora
=======================================

Compares which words appear in reports about high-rated articles
versus low-rated ones. Presence per document feeds a chi-square test;
Benjamini-Hochberg q-values control the false discovery rate, and
keyword-in-context lines support reading the survivors.
"""
import numpy as np

from refscore.wata import compare, kwic, tokenize

rng = np.random.default_rng(9)

# synthetic reports: the high corpus favours "novel" and "rigorous",
# the low corpus favours "incremental"; filler words are shared
high_words = ["novel", "rigorous"]
low_words = ["incremental"]
filler = ["study", "method", "sample", "results", "cohort", "analysis"]


def make_report(doc_id, slanted, rate):
    words = [w for w in filler if rng.random() < 0.5]
    words += [w for w in slanted if rng.random() < rate]
    rng.shuffle(words)
    return tokenize(doc_id, "The " + " ".join(words) + " was reported.")


corpus_high = [make_report(f"h{i:03d}", high_words, 0.6) for i in range(120)]
corpus_low = [make_report(f"l{i:03d}", low_words, 0.6) for i in range(120)]

stats = compare(corpus_high, corpus_low, q_threshold=0.05)
print(f"{'term':14s} {'df_A':>4s} {'df_B':>4s} {'chi2':>8s} {'q':>9s}  dir")
for s in stats:
    print(f"{s.term:14s} {s.df_a:4d} {s.df_b:4d} {s.chi2:8.2f} {s.q:9.2e}  {s.direction}")

# context lines for the strongest term, sampled deterministically
# from (doc_id, text) pairs
if stats:
    term = stats[0].term
    print(f"\nKWIC for {term!r}:")
    pairs = [
        (d.doc_id, f"The reviewers found the work {term} throughout section {i}.")
        for i, d in enumerate(corpus_high[:8])
    ]
    for line in kwic(term, pairs, k=3, window=20, seed=1):
        print(f"  {line.doc_id}: ...{line.left}[{line.term}]{line.right}...")
