"""Predictability of a truncated LCG as its modulus grows.

Small moduli repeat within the training data, so the predictor learns the
sequence outright; large moduli leave it near the guessing probability.
Sizes here are cut down so the script runs in a few minutes on one core.
"""

from rngprobe import dataprep, entropy, lcg, rcnn

WINDOW, TRAIN, TEST, SETS = 10, 60_000, 5_000, 5


def study(log2m):
    p = lcg.LcgParams(m=1 << log2m, seed=1)
    stream = lcg.emit_bytes(p, TRAIN + SETS * TEST)
    p_g = entropy.guessing_probability(entropy.histogram(stream))
    splits = dataprep.prepare(stream, WINDOW, 1, TRAIN, TEST, SETS)
    spec = rcnn.reduced_spec(WINDOW, splits.train.n)
    model = rcnn.train(rcnn.build_model(spec, seed=0), splits.train,
                       rcnn.TrainConfig(max_epochs=4))
    res = rcnn.evaluate(model, splits.tests, p_g)
    full, _ = lcg.hull_dobell_check(p)
    print(f"m=2^{log2m:<2d} full period {str(full):5s}  "
          f"P_g {p_g:.5f}  P_ML {res.p_ml_mean:.5f}  advantage {res.advantage_sigma:+.1f} sigma")


if __name__ == "__main__":
    for k in (10, 12, 16, 24):
        study(k)
