"""
Merging segments through maximal cliques
========================================

Seven segments, four cliques. Neighbours that share a clique join first,
then one left-to-right pass glues clusters that a clique bridges.
"""

from hichunk import ClusterRange, initial_clusters, merge_adjacent_clusters

# cliques over segments 1..7, shifted to 0-based
cliques = [(0, 1, 5), (1, 3, 6), (2, 3, 4), (0, 5, 6)]


def show(label, clusters):
    print(f"{label:>8}:", [list(range(c.first + 1, c.last + 2)) for c in clusters])


init = initial_clusters(cliques, 7)
show("initial", init)

# {2,4,7} touches all three clusters, but after gluing the first pair the
# pass moves on, so {6,7} stays on its own
merged = merge_adjacent_clusters(init, cliques)
show("merged", merged)
assert merged == [ClusterRange(0, 4), ClusterRange(5, 6)]

#############################################################################
# The same structure from text
# ----------------------------
# Give every edge a private token; hashed bag-of-words vectors then have
# cosine 1/sqrt(deg_i deg_j) on edges and 0 elsewhere.

from hichunk import build_graph, deterministic_embed, enumerate_maximal_cliques
from hichunk.synthetic import clique_texts

texts = clique_texts(cliques, 7)
vecs = [deterministic_embed(t, 4096) for t in texts]
g = build_graph(vecs, k=0.0)
print(f"mu={g.mu:.3f} sigma={g.sigma:.3f} tau={g.tau:.3f}, {len(g.edges)} edges")

# the stated cliques are not maximal in their own graph; {1,2,6,7} closes up
print("maximal cliques:", [[i + 1 for i in q] for q in enumerate_maximal_cliques(g)])
