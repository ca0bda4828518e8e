"""
Scoring segmentations and answers
=================================
"""

import random

from hichunk.metrics import bleu_n, pk_score, rouge_l, token_f1

# Pk slides a window of 5 over 20 sentences; the missed boundary after
# sentence 9 is straddled by 4 of the 16 windows
print("Pk, one boundary missed:", pk_score([9, 19], [19], 20, window=5))

rng = random.Random(0)
ref = [19, 39, 59, 79, 99]
scores = [pk_score(ref, sorted(rng.sample(range(99), 4)) + [99], 100) for _ in range(500)]
print(f"Pk, random guesses: {sum(scores) / len(scores):.3f}")

#############################################################################
# Answer overlap

print("ROUGE-L:", rouge_l("the cat", "the cat sat"))
print("BLEU-1 :", round(bleu_n("a b c", ["a b c d"], 1), 4))
print("BLEU-4 :", round(bleu_n("x y", ["a b"], 4), 4), "(smoothed floor)")
print("F1     :", token_f1("blue deep sea", ["deep sea"]))
