"""How two reference strings, names and author lists are compared.

Every comparison in the harness reduces to one normalized Levenshtein
similarity: casefold, turn punctuation into spaces, collapse whitespace, then
1 - distance / longer length.
"""

from refbench.textnorm import (
    author_list_similarity,
    canonicalize_name,
    name_similarity,
    normalize_text,
    string_similarity,
)

print("normalization")
for raw in ["  Foo\tBar ", "Müller, K.-H.", "«Studi veneziani»"]:
    print(f"  {raw!r:24} -> {normalize_text(raw)!r}")

print("\nstring similarity")
for a, b in [("kitten", "sitting"), ("Data Ethics", "data  ethics"), ("1998", "1999"), ("", "x")]:
    print(f"  {a!r:14} vs {b!r:16} {string_similarity(a, b):.4f}")

# Names are compared order-insensitively: "Surname, Forename" may be written
# "Forename Surname" in the prediction.
print("\nnames")
for g, p in [("Weber, Max", "Max Weber"), ("Doe, John", "Roe, John"), ("Cozzi, G.", "G. Cozzi")]:
    print(f"  {g!r:14} vs {p!r:14} {name_similarity(canonicalize_name(g), canonicalize_name(p)):.4f}")

# Author lists use a one-to-one assignment, normalized by the longer list.
gold = ["Floridi, L.", "Taddeo, M."]
for pred in (["M. Taddeo", "L. Floridi"], ["L. Floridi"], ["Floridi, L.", "Taddeo, M.", "Extra, E."]):
    print(f"  authors {pred} -> {author_list_similarity(gold, pred):.4f}")
