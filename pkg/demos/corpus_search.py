"""Filter a small corpus by keyword similarity, index what is kept, and search it."""
from __future__ import annotations

from anchorwork.retrieval import Document, KeywordFilter, KeywordProfile, LexicalIndex

DOCS = [
    Document("d1", "Coalescent", "coalescent genealogy mutation rate watterson theta"),
    Document("d2", "Recipes", "bake the bread at high heat"),
    Document("d3", "Drift", "genetic drift in small populations and mutation rate"),
]


def main() -> None:
    profile = KeywordProfile(["coalescent", "mutation", "theta"], ["bread", "recipe"])
    filt = KeywordFilter(profile)
    for doc in DOCS:
        pos, neg = filt.cosines(doc)
        print(f"{doc.id}: cos_pos={pos:.3f} cos_neg={neg:.3f} keep={filt.keep(doc)}")

    index = LexicalIndex.build([d for d in DOCS if filt.keep(d)])
    for snippet in index.search_top_k("mutation rate theta", 3).snippets:
        print(f"  {snippet.score:.3f} {snippet.doc_id}@{snippet.offset}: {snippet.text}")


if __name__ == "__main__":
    main()
