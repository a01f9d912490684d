"""Deterministic synthetic Spanish clinical corpus with coded tumor mentions.

The bundled fixture under ``onconer/data/synthetic`` is produced by
:func:`write_bundled_corpus`; regenerate it with
``python -m onconer.synthetic <out_dir>``.
"""

from __future__ import annotations

import random
import sys
from importlib import resources
from pathlib import Path

from .corpus import Document, Mention, load_corpus, write_document

# surface form -> ICD-O-3 morphology code
LEXICON: dict[str, str] = {
    "carcinoma": "8010/3",
    "adenocarcinoma": "8140/3",
    "carcinoma ductal infiltrante": "8500/3",
    "carcinoma epidermoide": "8070/3",
    "carcinoma microcítico": "8041/3",
    "carcinoma in situ": "8010/2",
    "adenocarcinoma mucinoso": "8480/3",
    "melanoma": "8720/3",
    "linfoma": "9590/3",
    "linfoma B difuso de células grandes": "9680/3",
    "sarcoma": "8800/3",
    "glioblastoma": "9440/3",
    "adenoma": "8140/0",
    "neoplasia maligna": "8000/3",
    "tumor": "8000/1",
    "metástasis": "8000/6",
    "metástasis hepáticas": "8000/6",
    "metástasis óseas": "8000/6",
    "lesiones metastásicas": "8000/6",
}

# outer mentions that contain a coded inner mention
NESTED: dict[str, tuple[str, str]] = {
    "metástasis de adenocarcinoma": ("adenocarcinoma", "8140/6"),
    "metástasis de melanoma": ("melanoma", "8720/6"),
    "metástasis de carcinoma": ("carcinoma", "8010/6"),
}

# surface variants seen only in held-out data: case, plural and typo forms
VARIANTS: dict[str, list[str]] = {
    "carcinoma": ["Carcinoma", "CARCINOMA", "carcinomas", "carcinona"],
    "adenocarcinoma": ["Adenocarcinoma", "adenocarcinomas", "adenocarcinma"],
    "metástasis": ["Metástasis", "metastasis", "metástasís"],
    "melanoma": ["Melanoma", "melanomas", "melamona"],
    "linfoma": ["Linfoma", "linfomas", "linfona"],
    "sarcoma": ["Sarcoma", "sarcomas"],
    "tumor": ["Tumor", "tumores", "tumoración"],
    "carcinoma epidermoide": ["Carcinoma epidermoide", "carcinoma epidermoides"],
    "metástasis hepáticas": ["Metástasis hepáticas", "metastasis hepaticas"],
}

ORGANS = ["mama izquierda", "mama derecha", "pulmón derecho", "pulmón izquierdo", "colon",
          "recto", "hígado", "próstata", "estómago", "páncreas", "piel", "cerebro", "ganglio axilar"]
FINDINGS = ["adenopatías", "derrame pleural", "dolor abdominal", "pérdida de peso", "anemia",
            "fiebre", "disnea", "astenia"]

# "{M}" marks a mention slot; the rest is context
TEMPLATES = [
    "Paciente de {age} años diagnosticado de {M} en {organ}.",
    "La biopsia de {organ} confirma {M}.",
    "Se observa {M} con {M} asociadas.",
    "En el TAC se identifican {M} sin {finding}.",
    "Antecedentes de {M} tratado con cirugía en {year}.",
    "El estudio histológico muestra {M} de {size} cm.",
    "No se evidencian signos de {M} en {organ}.",
    "Presenta {finding} y {M} en seguimiento.",
    "Diagnóstico: {M}, grado {grade}.",
    "Se descarta {M} tras la resección de {organ}.",
]
NESTED_TEMPLATES = [
    "Se confirman {N} en {organ}.",
    "La punción demuestra {N} con {finding}.",
]


class _Builder:
    def __init__(self):
        self.parts: list[str] = []
        self.mentions: list[Mention] = []
        self.pos = 0

    def text(self, s: str) -> None:
        self.parts.append(s)
        self.pos += len(s)

    def mention(self, surface: str, code: str | None) -> int:
        start = self.pos
        self.text(surface)
        self.mentions.append(Mention(start, self.pos, surface, code=code))
        return start


def _fill(tpl: str, rnd: random.Random, b: _Builder, surfaces: list[tuple[str, str]]) -> None:
    values = {
        "age": str(rnd.randint(25, 88)),
        "organ": rnd.choice(ORGANS),
        "finding": rnd.choice(FINDINGS),
        "year": str(rnd.randint(1995, 2019)),
        "size": f"{rnd.randint(1, 9)},{rnd.randint(0, 9)}",
        "grade": rnd.choice(["I", "II", "III"]),
    }
    pieces = tpl.replace("{M}", "\0M\0").replace("{N}", "\0N\0").split("\0")
    slot = iter(surfaces)
    for piece in pieces:
        if piece == "M":
            surface, code = next(slot)
            b.mention(surface, code)
        elif piece == "N":
            outer, _ = next(slot)
            inner, outer_code = NESTED[outer]
            start = b.mention(outer, outer_code)
            off = outer.index(inner)
            b.mentions.append(Mention(start + off, start + off + len(inner), inner, code=LEXICON[inner]))
        else:
            b.text(piece.format(**values))


def make_sentence(rnd: random.Random, variants: bool = False, nested: bool = False) -> Document:
    b = _Builder()
    if nested:
        tpl = rnd.choice(NESTED_TEMPLATES)
        _fill(tpl, rnd, b, [(rnd.choice(sorted(NESTED)), "")])
    else:
        tpl = rnd.choice(TEMPLATES)
        surfaces = []
        for _ in range(tpl.count("{M}")):
            canon = rnd.choice(sorted(LEXICON))
            surface = canon
            if variants and canon in VARIANTS and rnd.random() < 0.5:
                surface = rnd.choice(VARIANTS[canon])
            surfaces.append((surface, LEXICON[canon]))
        _fill(tpl, rnd, b, surfaces)
    return Document("", "".join(b.parts), b.mentions)


def generate_documents(n_docs: int, sentences_per_doc: int, seed: int, prefix: str,
                       variants: bool = False, nested_every: int = 0) -> list[Document]:
    """Documents of ``sentences_per_doc`` sentences, one sentence per line.

    Every ``nested_every``-th sentence (counting from 1) uses a nested template.
    """
    rnd = random.Random(seed)
    docs = []
    k = 0
    for d in range(n_docs):
        text, mentions = "", []
        for _ in range(sentences_per_doc):
            k += 1
            nested = nested_every > 0 and k % nested_every == 0
            sent = make_sentence(rnd, variants=variants, nested=nested)
            off = len(text)
            mentions.extend(Mention(m.start + off, m.end + off, m.surface, m.label, m.code)
                            for m in sent.mentions)
            text += sent.text + "\n"
        mentions.sort(key=lambda m: (m.start, -m.end))
        doc = Document(f"{prefix}{d:03d}", text, mentions)
        doc.validate()
        docs.append(doc)
    return docs


def synthetic_splits() -> dict[str, list[Document]]:
    """train: 50 sentences (10 docs x 5), 3 of them nested; dev and test are
    held out and include unseen case, plural and misspelled surface forms."""
    return {
        "train": generate_documents(10, 5, seed=2020, prefix="cc_train_", nested_every=16),
        "dev": generate_documents(6, 5, seed=2021, prefix="cc_dev_", variants=True, nested_every=10),
        "test": generate_documents(6, 5, seed=2022, prefix="cc_test_", variants=True, nested_every=10),
    }


def nested_fixture() -> Document:
    """One sentence holding a nested pair: the outer span and its inner tumor."""
    text = "Se confirman metástasis de melanoma en hígado.\n"
    outer = "metástasis de melanoma"
    s = text.index(outer)
    inner_s = text.index("melanoma")
    return Document("nested_fixture", text, [
        Mention(s, s + len(outer), outer, code="8720/6"),
        Mention(inner_s, inner_s + len("melanoma"), "melanoma", code="8720/3"),
    ])


def write_bundled_corpus(out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    for split, docs in synthetic_splits().items():
        for doc in docs:
            write_document(out_dir / split, doc)


def bundled_corpus_dir() -> Path:
    return Path(str(resources.files("onconer") / "data" / "synthetic"))


def load_bundled(split: str) -> list[Document]:
    return load_corpus(bundled_corpus_dir() / split)


if __name__ == "__main__":
    write_bundled_corpus(sys.argv[1] if len(sys.argv) > 1 else bundled_corpus_dir())
