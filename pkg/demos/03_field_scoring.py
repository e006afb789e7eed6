"""Field-level scoring of parsed records, micro and macro F1, and error categories."""

from refbench.fieldscore import aggregate_micro, classify_error, score_record_pair
from refbench.schema import ReferenceRecord

gold = ReferenceRecord(
    authors=["Weber, Max"],
    full_title="Wirtschaft und Gesellschaft",
    place="Tübingen",
    publisher="Mohr",
    year="1922",
)
predictions = {
    "exact": gold,
    "name order and typo": ReferenceRecord(authors=["Max Weber"], full_title="Wirtschaft und Gesellschaf",
                                           place="Tübingen", publisher="Mohr", year="1922"),
    "wrong year": ReferenceRecord(authors=["Weber, Max"], full_title="Wirtschaft und Gesellschaft",
                                  place="Tübingen", publisher="Mohr", year="1925"),
    "missing publisher": ReferenceRecord(authors=["Weber, Max"], full_title="Wirtschaft und Gesellschaft",
                                         place="Tübingen", year="1922"),
}

scores = []
for label, pred in predictions.items():
    s = score_record_pair(gold, pred)
    scores.append(s)
    sims = ", ".join(f"{k}={v:.3f}" for k, v in s.per_field.items())
    print(f"{label:20} {classify_error(s):8} F1={s.f1():.4f}  {sims}  missing={s.fn_fields}")

m = aggregate_micro(scores)
print(f"\npooled: P={m.precision:.4f} R={m.recall:.4f} microF1={m.micro_f1:.4f} macroF1={m.macro_f1:.4f}")
