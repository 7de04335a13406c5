"""End-to-end smoke test of the dare_re extension module.

Build the module first, e.g. `maturin develop -m crates/py/Cargo.toml`, or
copy target/release/libdare_re.so to python/dare_re.so.
"""
import json
import tempfile
from pathlib import Path

import dare_re


def main():
    assert dare_re.PROTOCOL == "dare-gen/1"
    dataset, in_domain = dare_re.imbalance_task(train_positives=20, train_negatives=300, in_domain=300, seed=0)
    assert dataset.relation_types == ["induce"]
    assert dataset.counts("train") == {"total": 320, "positive": 20}

    config = dare_re.default_config()
    config.update(seeds=[0], dare_members=3, baseline_members=2)

    pool = dare_re.make_pool(dataset, config=config, base_corpus=in_domain, seed=0)
    assert pool.sizes == {"induce": 100} and len(pool) == 100
    assert all(i["tokens"].count("ENTITY_A") == 1 for i in pool.instances())
    again = dare_re.make_pool(dataset, config=config, base_corpus=in_domain, seed=0)
    assert again.digest == pool.digest

    dare = dare_re.train(dataset, "dare", pool=pool, config=config, seed=0)
    bb = dare_re.train(dataset, "balanced_bagging", config=config, seed=0)
    assert len(dare) == 3 and len(bb) == 2
    scores = dare.evaluate(dataset)
    print("dare micro F1 %.4f, balanced bagging %.4f" % (scores["micro_f1"], bb.evaluate(dataset)["micro_f1"]))

    test = dataset.split("test")
    gold = [i["label"] for i in test]
    pa = dare.predict_split(dataset, "test")
    assert pa == dare.predict([i["tokens"] for i in test])
    pb = bb.predict_split(dataset, "test")
    assert dare_re.evaluate(pa, gold, ["induce"])["micro_f1"] == scores["micro_f1"]
    print("mcnemar", dare_re.mcnemar(pa, pb, gold))

    with tempfile.TemporaryDirectory() as tmp:
        dare.save(str(Path(tmp) / "ens"), pool.digest)
        assert dare_re.Ensemble.load(str(Path(tmp) / "ens")).predict_split(dataset, "test") == pa
        dataset.save(str(Path(tmp) / "data"))
        assert dare_re.Dataset.load(str(Path(tmp) / "data")).counts("test") == dataset.counts("test")

    report = dare_re.run(config=config, dataset=dataset, base_corpus=in_domain)
    assert report["pipelines"][0]["runs"][0]["predictions"] == pa
    json.dumps(report)

    try:
        dare_re.train(dataset, "nope")
    except dare_re.DareError as e:
        assert "unknown pipeline" in str(e)
    else:
        raise AssertionError("expected DareError")
    print("smoke test ok")


if __name__ == "__main__":
    main()
