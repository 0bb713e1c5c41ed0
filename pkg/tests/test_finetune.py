import pytest
from hypothesis import given, strategies as st

from litpipe.errors import ManifestError, TrainerLogError
from litpipe.finetune import (
    LossCurve,
    LossRecord,
    RECIPES,
    detect_overfit,
    format_manifest,
    make_training_manifest,
    parse_manifest,
    parse_trainer_log,
    write_manifest,
    write_trainer_log,
)


def test_recipe_values():
    r1 = RECIPES["alpaca_plus_syncovid"]
    assert (r1.total_instructions, r1.epochs, r1.learning_rate, r1.batch_size, r1.eval_size) == (
        53097, 3, 3e-4, 128, 2000,
    )
    r2 = RECIPES["syncovid_only"]
    assert (r2.total_instructions, r2.epochs, r2.learning_rate, r2.batch_size, r2.eval_size) == (
        1097, 30, 1e-5, 16, 100,
    )
    r3 = RECIPES["syncovid_plus_abstracts"]
    assert (r3.total_instructions, r3.epochs, r3.learning_rate, r3.batch_size, r3.eval_size) == (
        2194, 30, 1e-5, 16, 100,
    )


def test_manifest_recipe2():
    m = make_training_manifest("syncovid_only", [("synCovid", 1097)])
    assert (m.total_instructions, m.epochs, m.learning_rate, m.batch_size, m.eval_size) == (
        1097, 30, 1e-5, 16, 100,
    )
    assert m.base_model == "llama-7b"


def test_manifest_recipe1():
    m = make_training_manifest("alpaca_plus_syncovid", [("alpaca", 52000), ("synCovid", 1097)])
    assert (m.total_instructions, m.epochs, m.learning_rate, m.batch_size, m.eval_size) == (
        53097, 3, 3e-4, 128, 2000,
    )


def test_manifest_count_mismatch_names_both():
    with pytest.raises(ManifestError, match="2194.*1097"):
        make_training_manifest("syncovid_plus_abstracts", [("synCovid", 1097)])


def test_manifest_unknown_recipe():
    with pytest.raises(ManifestError, match="unknown recipe"):
        make_training_manifest("nope", [("x", 1)])


def test_manifest_serialization_round_trip():
    m = make_training_manifest("syncovid_plus_abstracts", [("synCovid", 1097), ("mined", 1097)])
    text = format_manifest(m)
    assert parse_manifest(text) == m
    assert format_manifest(parse_manifest(text)) == text


def test_manifest_file_bytes(tmp_path):
    m = make_training_manifest("syncovid_only", [("synCovid", 1097)])
    path = write_manifest(m, tmp_path / "m.txt")
    expected = (
        "recipe=syncovid_only\n"
        "base_model=llama-7b\n"
        "total_instructions=1097\n"
        "epochs=30\n"
        "learning_rate=1e-05\n"
        "batch_size=16\n"
        "eval_size=100\n"
        "dataset_refs=synCovid:1097\n"
    )
    assert path.read_text(encoding="utf-8") == expected


# --- trainer log ---------------------------------------------------------------


def test_parse_trainer_log_three_lines(tmp_path):
    path = tmp_path / "log.csv"
    path.write_text("10,0.5,2.0,2.1\n20,1.0,1.5,1.6\n30,1.5,1.2,\n", encoding="utf-8")
    curve = parse_trainer_log(path)
    assert len(curve.records) == 3
    assert curve.records[0] == LossRecord(10, 0.5, 2.0, 2.1)
    assert curve.records[2].eval_loss is None
    assert len(curve.eval_points()) == 2


def test_parse_trainer_log_header_tolerated(tmp_path):
    path = tmp_path / "log.csv"
    path.write_text("step,epoch,train_loss,eval_loss\n5,0.1,3.0,3.2\n", encoding="utf-8")
    assert len(parse_trainer_log(path).records) == 1


def test_parse_trainer_log_non_increasing_step(tmp_path):
    path = tmp_path / "log.csv"
    path.write_text("10,0.5,2.0,2.1\n10,1.0,1.5,1.6\n", encoding="utf-8")
    with pytest.raises(TrainerLogError, match="line 2"):
        parse_trainer_log(path)


def test_parse_trainer_log_empty(tmp_path):
    path = tmp_path / "log.csv"
    path.write_text("", encoding="utf-8")
    with pytest.raises(TrainerLogError):
        parse_trainer_log(path)


def test_parse_trainer_log_bad_number(tmp_path):
    path = tmp_path / "log.csv"
    path.write_text("10,0.5,2.0,2.1\n20,1.0,oops,1.6\n", encoding="utf-8")
    with pytest.raises(TrainerLogError, match="line 2"):
        parse_trainer_log(path)


def test_parse_trainer_log_negative_loss(tmp_path):
    path = tmp_path / "log.csv"
    path.write_text("10,0.5,-2.0,\n", encoding="utf-8")
    with pytest.raises(TrainerLogError, match="line 1"):
        parse_trainer_log(path)


@given(
    st.lists(
        st.tuples(
            st.floats(min_value=0.0, max_value=100.0, allow_nan=False),
            st.one_of(st.none(), st.floats(min_value=0.0, max_value=100.0, allow_nan=False)),
        ),
        min_size=1,
        max_size=40,
    )
)
def test_trainer_log_round_trip(tmp_path_factory, losses):
    records = tuple(
        LossRecord(step=(i + 1) * 10, epoch=(i + 1) * 0.5, train_loss=tr, eval_loss=ev)
        for i, (tr, ev) in enumerate(losses)
    )
    curve = LossCurve(records)
    path = tmp_path_factory.mktemp("logs") / "curve.csv"
    write_trainer_log(curve, path)
    assert parse_trainer_log(path) == curve


# --- overfit detection ----------------------------------------------------------


def curve_from(evals, trains=None):
    trains = trains or [10.0 - 0.1 * i for i in range(len(evals))]
    records = tuple(
        LossRecord(step=(i + 1) * 10, epoch=float(i + 1), train_loss=t, eval_loss=e)
        for i, (t, e) in enumerate(zip(trains, evals))
    )
    return LossCurve(records)


def test_overfit_monotone_decreasing_ok():
    evals = [3.0 - 0.05 * i for i in range(30)]
    verdict = detect_overfit(curve_from(evals), patience=3)
    assert verdict.status == "ok"
    assert verdict.first_step is None


def test_overfit_three_rises_flagged_at_first_rising_step():
    # eval: down, down, then rises at steps 40, 50, 60 while train falls
    evals = [3.0, 2.8, 2.6, 2.7, 2.8, 2.9]
    verdict = detect_overfit(curve_from(evals), patience=3)
    assert verdict.is_overfit
    assert verdict.first_step == 40


def test_overfit_two_rises_not_enough_for_patience_3():
    evals = [3.0, 2.8, 2.9, 3.0, 2.7, 2.6]
    assert detect_overfit(curve_from(evals), patience=3).status == "ok"
    assert detect_overfit(curve_from(evals), patience=2).is_overfit


def test_overfit_rise_with_rising_train_not_counted():
    evals = [3.0, 3.1, 3.2, 3.3]
    trains = [5.0, 5.1, 5.2, 5.3]  # train rising too: not overfit by the rule
    assert detect_overfit(curve_from(evals, trains), patience=3).status == "ok"


def test_overfit_single_eval_point_ok():
    assert detect_overfit(curve_from([2.0]), patience=3).status == "ok"


def test_overfit_requires_eval_points():
    curve = LossCurve((LossRecord(10, 1.0, 2.0, None),))
    with pytest.raises(TrainerLogError):
        detect_overfit(curve, patience=3)


def test_overfit_patience_validation():
    with pytest.raises(TrainerLogError):
        detect_overfit(curve_from([1.0, 2.0]), patience=0)


@given(st.floats(min_value=0.01, max_value=1000.0, allow_nan=False, allow_infinity=False))
def test_overfit_scale_invariant(scale):
    evals = [3.0, 2.8, 2.9, 3.0, 3.1, 2.5]
    trains = [9.0, 8.0, 7.0, 6.0, 5.0, 4.0]
    base = detect_overfit(curve_from(evals, trains), patience=3)
    scaled = detect_overfit(
        curve_from([e * scale for e in evals], [t * scale for t in trains]), patience=3
    )
    assert base == scaled
