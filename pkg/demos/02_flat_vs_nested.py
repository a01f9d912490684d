"""Why the biaffine tagger exists: nested mentions.

Both taggers are trained on the bundled synthetic corpus (a few sentences
contain a tumor mention inside a longer metastasis mention). A BIO tagger can
only return non-overlapping spans; the span classifier can return both.
Training takes roughly 20 s per model.
"""

from onconer import biaffine, crf
from onconer.evaluation import ner_prf
from onconer.model import preset
from onconer.synthetic import load_bundled, nested_fixture

train = load_bundled("train")
fixture = nested_fixture()
print("fixture:", fixture.text.strip())
print("gold   :", [(m.surface, m.span) for m in fixture.mentions])

for name, module in (("BiLSTM-CRF", crf), ("BiLSTM-biaffine", biaffine)):
    model, result = module.train(train, preset("test-small", name.split("-")[1].lower()))
    f1 = ner_prf([d.mentions for d in train], [module.predict(model, d) for d in train]).f1
    found = module.predict(model, fixture)
    print(f"\n{name}: final loss {result.final_loss:.4f}, train F1 {f1:.3f}")
    print("  predicted:", [(m.surface, m.span) for m in found])
