"""Synthetic desk-scale corpora shaped like the four supplement-extraction datasets.

Every task gets 60 records split 48/6/6. A few hand-written sentences come from
typical clinical-note phrasing; the rest are generated from templates with a seeded
RNG, so ``write_fixtures`` output is byte-stable for a given seed.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

from .dataset import save_corpus
from .model import TASKS, EntityMention, GoldOutput, Record, TaskKind, Triple, normalize_text

SPLIT_SIZES = {"train": 48, "dev": 6, "test": 6}

# (surface, entity type)
SUPPLEMENTS = [
    ("ginger", "ginger"),
    ("ginger root", "ginger"),
    ("ginkgo biloba", "ginkgo"),
    ("ginkgo", "ginkgo"),
    ("green tea", "green tea"),
    ("green tea extract", "green tea"),
    ("folic acid", "folic acid"),
    ("melatonin", "melatonin"),
    ("lavender", "lavender"),
    ("lavender oil", "lavender"),
    ("garlic", "garlic"),
    ("garlic pills", "garlic"),
    ("black cohosh", "black cohosh"),
    ("chamomile tea", "chamomile"),
    ("chamomile", "chamomile"),
    ("milk thistle", "milk thistle"),
    ("cranberry juice", "cranberry"),
    ("cranberry", "cranberry"),
    ("ginseng", "ginseng"),
    ("ginseng tea", "ginseng"),
    ("glucosamine", "glucosamine"),
    ("dandelion", "dandelion"),
    ("saw palmetto", "saw palmetto"),
]
OTHER_SUPPLEMENTS = ["fish oil", "vitamin d3", "vitamin e", "b12", "st. john's wort", "turmeric", "coq10", "magnesium"]
EVENTS = [
    "nausea",
    "dizziness",
    "bleeding",
    "rash",
    "insomnia",
    "constipation",
    "headache",
    "anxiety",
    "hot flashes",
    "night sweats",
    "heartburn",
    "fatigue",
    "palpitations",
    "joint pain",
    "tinnitus",
    "motion sickness",
    "urinary tract infection",
    "diarrhea",
]
DOSES = ["", " 400mg", " 500 mg", " 1000 mg", " 3 mg", " twice daily", " at bedtime", " daily", " prn"]
OPENERS = ["", "pt ", "patient ", "she ", "he ", "today ", "per daughter, ", "on exam, "]


def _ner_record(rng: random.Random, rid: str) -> Record:
    ds, dtype = rng.choice(SUPPLEMENTS)
    ev = rng.choice(EVENTS)
    ds2, dtype2 = rng.choice(SUPPLEMENTS)
    opener = rng.choice(OPENERS)
    dose = rng.choice(DOSES)
    form = rng.randrange(7)
    if form == 0:
        text = f"{opener}reports {ev} since starting {ds}{dose}"
        ents = [(ev, "event"), (ds, dtype)]
    elif form == 1:
        text = f"{ds} and {ds2} are mild anticoagulants so there is an increased risk of {ev}"
        ents = [(ds, dtype), (ds2, dtype2), (ev, "event")]
    elif form == 2:
        text = f"{opener}expressed {ev} but comforted with support breathing and {ds}"
        ents = [(ev, "event"), (ds, dtype)]
    elif form == 3:
        text = f"{opener}takes {ds}{dose} for mild {ev}"
        ents = [(ds, dtype), (ev, "event")]
    elif form == 4:
        other = rng.choice(OTHER_SUPPLEMENTS)
        text = f"{opener}denies {ev}, continues {other}{dose}"
        ents = [(ev, "event")]
    elif form == 5:
        other = rng.choice(OTHER_SUPPLEMENTS)
        text = f"{opener}uses {other}{dose}, no complaints"
        ents = []
    else:
        ev2 = rng.choice([e for e in EVENTS if e != ev])
        text = f"{opener}{ev} and {ev2} improved after stopping {ds}"
        ents = [(ev, "event"), (ev2, "event"), (ds, dtype)]
    return Record(rid, TaskKind.NER, text, GoldOutput.ner(EntityMention(s, t) for s, t in ents))


RE_FORMS = {
    "positive": [
        "{ds} has been studied for use in treating {ev} .",
        "{ev} seems to be better with {ds}",
        "{opener}uses {ds}{dose} which helps her {ev}",
    ],
    "negative": [
        "{opener}has tried {ds} but it increased the {ev} .",
        "{opener}reports {ev} after starting {ds}{dose}",
        "{opener}asks if her {ev} could be due to {ds}",
    ],
    "not_related": [
        "will add {ds}{dose} for sleep, and {other} for {ev} relief .",
        "{opener}takes {ds}{dose}; separately complains of {ev}",
        "{ds} listed on med rec, {ev} attributed to new statin",
    ],
}


def _re_record(rng: random.Random, rid: str) -> Record:
    relation = rng.choice(sorted(RE_FORMS))
    ds, _ = rng.choice(SUPPLEMENTS)
    ev = rng.choice(EVENTS)
    text = rng.choice(RE_FORMS[relation]).format(
        ds=ds, ev=ev, opener=rng.choice(OPENERS), dose=rng.choice(DOSES), other=rng.choice(OTHER_SUPPLEMENTS)
    )
    return Record(rid, TaskKind.RE, text, GoldOutput.re(relation), re_head=ds, re_tail=ev)


def _te_record(rng: random.Random, rid: str) -> Record:
    pool = [s for s, _ in SUPPLEMENTS] + OTHER_SUPPLEMENTS
    ds = rng.choice(pool)
    ev = rng.choice(EVENTS)
    opener = rng.choice(OPENERS)
    dose = rng.choice(DOSES)
    form = rng.randrange(6)
    if form == 0:
        text = f"{ev}-use of {ds}-seems to be better with this"
        triples = [(ds, "positive", ev)]
    elif form == 1:
        text = f"{opener}started {ds}{dose} and now has {ev}"
        triples = [(ds, "negative", ev)]
    elif form == 2:
        ds2 = rng.choice([p for p in pool if p != ds])
        ev2 = rng.choice([e for e in EVENTS if e != ev])
        text = f"{opener}{ds} helps the {ev}, but {ds2} caused {ev2}"
        triples = [(ds, "positive", ev), (ds2, "negative", ev2)]
    elif form == 3:
        text = f"{opener}on {ds}{dose}, {ev} unrelated per cardiology"
        triples = [(ds, "not_related", ev)]
    elif form == 4:
        text = f"{opener}taking {ds}{dose}, tolerating well"
        triples = []
    else:
        text = f"{opener}feels {ds}{dose} reduced her mild {ev}"
        triples = [(ds, "positive", ev)]
    return Record(rid, TaskKind.TE, text, GoldOutput.te(Triple(*t) for t in triples))


UC_FORMS = {
    "continue": ["continue {sup}{dose}", "{opener}will keep taking {sup}{dose}", "continue {sup} and {sup2} discharge"],
    "discontinue": ["note stop {sup} {sup2} today", "{opener}discontinued {sup} due to {ev}", "hold {sup}{dose} before surgery"],
    "uncertain": ["suggest take {sup}{dose}", "{opener}may consider {sup} for {ev}", "unclear if still using {sup}"],
    "start": ["currently prescribe {sup}{dose}", "{opener}start {sup}{dose} tonight", "begin {sup} for {ev}"],
}


def _uc_record(rng: random.Random, rid: str) -> Record:
    status = rng.choice(sorted(UC_FORMS))
    pool = [s for s, _ in SUPPLEMENTS] + OTHER_SUPPLEMENTS
    sup = rng.choice(pool)
    text = rng.choice(UC_FORMS[status]).format(
        sup=sup,
        sup2=rng.choice([p for p in pool if p != sup]),
        dose=rng.choice(DOSES),
        opener=rng.choice(OPENERS),
        ev=rng.choice(EVENTS),
    )
    return Record(rid, TaskKind.UC, text, GoldOutput.uc(status))


def _seed_records() -> dict[TaskKind, list[Record]]:
    """Hand-written records placed in the train split."""
    ner = [
        Record(
            "ner-s1",
            TaskKind.NER,
            "ginger and ginkgo biloba are mild anticoagulants so there is an increased risk of bleeding, "
            "especially with full-dose aspirin",
            GoldOutput.ner(
                [EntityMention("ginger", "ginger"), EntityMention("ginkgo biloba", "ginkgo"), EntityMention("bleeding", "event")]
            ),
        ),
        Record(
            "ner-s2",
            TaskKind.NER,
            "pt expressed anxiety but comforted with support breathing and lavender",
            GoldOutput.ner([EntityMention("anxiety", "event"), EntityMention("lavender", "lavender")]),
        ),
        Record(
            "ner-s3",
            TaskKind.NER,
            "constipation-use of ginseng tea-seems to be better with this",
            GoldOutput.ner([EntityMention("constipation", "event"), EntityMention("ginseng tea", "ginseng")]),
        ),
    ]
    re_ = [
        Record(
            "re-s1",
            TaskKind.RE,
            "she has tried melatonin but it is increased the morning dizziness .",
            GoldOutput.re("negative"),
            re_head="melatonin",
            re_tail="dizziness",
        ),
        Record(
            "re-s2",
            TaskKind.RE,
            "ginkgo biloba and melatonin have both been studied for use in treating tinnitus .",
            GoldOutput.re("positive"),
            re_head="melatonin",
            re_tail="tinnitus",
        ),
    ]
    te = [
        Record(
            "te-s1",
            TaskKind.TE,
            "She's taking estrogen for night sweats' it helps a little.",
            GoldOutput.te([Triple("estroven", "positive", "night sweat")]),
        ),
        Record(
            "te-s2",
            TaskKind.TE,
            "pt says st. john's wort made the insomnia worse",
            GoldOutput.te([Triple("st. john's wort", "negative", "insomnia")]),
        ),
    ]
    uc = [
        Record("uc-s1", TaskKind.UC, "continue Vitamin E selenium discharge", GoldOutput.uc("continue")),
        Record("uc-s2", TaskKind.UC, "note stop b6 b12 folic acid today", GoldOutput.uc("discontinue")),
        Record("uc-s3", TaskKind.UC, "suggest take co mg daily vitamin d3 unit daily", GoldOutput.uc("uncertain")),
        Record("uc-s4", TaskKind.UC, "currently prescribe levo thyroxine mcg daily melatonin", GoldOutput.uc("start")),
    ]
    return {TaskKind.NER: ner, TaskKind.RE: re_, TaskKind.TE: te, TaskKind.UC: uc}


_MAKERS = {TaskKind.NER: _ner_record, TaskKind.RE: _re_record, TaskKind.TE: _te_record, TaskKind.UC: _uc_record}
_PREFIX = {TaskKind.NER: "ner", TaskKind.RE: "re", TaskKind.TE: "te", TaskKind.UC: "uc"}


def generate_task(task: TaskKind, seed: int, sizes: dict[str, int] | None = None) -> dict[str, list[Record]]:
    """Unique-sentence records for one task, split by *sizes*."""
    sizes = sizes or SPLIT_SIZES
    rng = random.Random(f"{seed}:{task.value}")
    seeds = _seed_records()[task]
    total = sum(sizes.values())
    seen = {normalize_text(r.text) for r in seeds}
    generated: list[Record] = []
    attempts = 0
    while len(seeds) + len(generated) < total:
        attempts += 1
        if attempts > 100 * total:
            raise RuntimeError(f"could not draw {total} unique {task} sentences")
        rec = _MAKERS[task](rng, f"{_PREFIX[task]}-{len(generated) + 1:03d}")
        key = normalize_text(rec.text)
        if key in seen:
            continue
        seen.add(key)
        generated.append(rec)
    rng.shuffle(generated)
    n_train = sizes["train"] - len(seeds)
    out = {"train": seeds + generated[:n_train]}
    rest = generated[n_train:]
    out["dev"] = rest[: sizes["dev"]]
    out["test"] = rest[sizes["dev"] : sizes["dev"] + sizes["test"]]
    return out


def default_config(corpora: dict[str, dict[str, str]], seed: int) -> dict:
    return {
        "seed": seed,
        "label": "fixtures",
        "output_dir": "out",
        "corpora": corpora,
        "eval_split": "test",
        "embedder": {"kind": "hashed-lexical", "dim": 2048},
        "retrieval": {"phase": "test", "k": 1, "baseline": "similarity", "with_question": True, "rag": True},
        "endpoint": {"kind": "mock-oracle"},
        "parse": {"leniency": "prose", "pick": "last"},
    }


def write_fixtures(out_dir: str | Path, seed: int = 7) -> Path:
    """Write corpora under ``out_dir/corpora`` plus ``out_dir/config.json``; returns the config path."""
    out_dir = Path(out_dir)
    corpora: dict[str, dict[str, str]] = {}
    for task in TASKS:
        splits = generate_task(task, seed)
        corpora[task.value] = {}
        for split, records in splits.items():
            rel = f"corpora/{task.value.lower()}_{split}.jsonl"
            save_corpus(records, out_dir / rel)
            corpora[task.value][split] = rel
    config_path = out_dir / "config.json"
    config_path.write_text(json.dumps(default_config(corpora, seed), indent=2) + "\n", encoding="utf-8")
    return config_path
