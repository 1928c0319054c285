import json
import random
from pathlib import Path

import pytest

from radgame.report import (
    CrimsonAssessment,
    JudgeResponseError,
    Override,
    StyleAssessment,
    apply_overrides,
    build_crimson_prompt,
    build_style_prompt,
    crimson_score,
    crimson_template,
    parse_crimson_response,
    parse_style_response,
    style_score,
    style_template,
)

GOLDEN = Path(__file__).parent / "golden"


def test_crimson_template_matches_golden_bytes():
    assert crimson_template() == (GOLDEN / "crimson_prompt.txt").read_text()


def test_style_template_matches_golden_bytes():
    assert style_template() == (GOLDEN / "style_prompt.txt").read_text()


def test_crimson_prompt_substitutes_header_values():
    prompt = build_crimson_prompt(
        90, "Wrist fracture, shortness of breath",
        "There is cardiomegaly.", "The heart is enlarged.",
    )
    assert "Age: 90" in prompt
    assert "Indication: Wrist fracture, shortness of breath" in prompt
    assert "{age}" not in prompt and "{indication}" not in prompt
    assert "{reference}" not in prompt and "{candidate}" not in prompt


def test_crimson_prompt_only_touches_placeholder_slots():
    template = crimson_template()
    prompt = build_crimson_prompt(55, "IND", "REF", "CAND")
    # Reversing the four substitutions restores the template byte-for-byte.
    restored = (
        prompt.replace("Age: 55", "Age: {age}", 1)
        .replace("Indication: IND", "Indication: {indication}", 1)
        .replace("Reference Report: REF", "Reference Report: {reference}", 1)
        .replace("Candidate Report: CAND", "Candidate Report: {candidate}", 1)
    )
    assert restored == template
    # The literal JSON braces of the output schema survive substitution.
    assert '"ClinicallySignificantErrors"' in prompt


def test_crimson_prompt_deterministic():
    args = (42, "Cough", "Ref findings.", "Candidate findings.")
    assert build_crimson_prompt(*args) == build_crimson_prompt(*args)


def test_crimson_prompt_rejects_empty():
    with pytest.raises(ValueError):
        build_crimson_prompt(42, "Cough", "", "cand")
    with pytest.raises(ValueError):
        build_crimson_prompt(42, "Cough", "ref", "  ")


def test_style_prompt_sections_and_determinism():
    prompt = build_style_prompt("The lungs are clear.")
    assert "SYSTEMATIC EVALUATION" in prompt
    assert "ORGANIZATION AND LANGUAGE" in prompt
    assert prompt == build_style_prompt("The lungs are clear.")
    assert "{candidate}" not in prompt
    with pytest.raises(ValueError):
        build_style_prompt("")


def _response(a=(), b=(), c=(), d=(), matched=(), explanation="ok"):
    return json.dumps({
        "Explanation": explanation,
        "ClinicallySignificantErrors": {
            "a": list(a), "b": list(b), "c": list(c), "d": list(d),
        },
        "MatchedFindings": list(matched),
    })


def test_parse_crimson_well_formed():
    assessment = parse_crimson_response(_response(a=["x"], matched=["m1", "m2"]))
    assert assessment.error_count == 1
    assert len(assessment.matched_findings) == 2


def test_parse_crimson_code_fence():
    text = "Here is my assessment:\n```json\n" + _response(matched=["m"]) + "\n```\nDone."
    assessment = parse_crimson_response(text)
    assert assessment.matched_findings == ("m",)


def test_parse_crimson_missing_matched_findings():
    bad = json.dumps({
        "Explanation": "e",
        "ClinicallySignificantErrors": {"a": [], "b": [], "c": [], "d": []},
    })
    with pytest.raises(JudgeResponseError):
        parse_crimson_response(bad)


def test_parse_crimson_missing_error_category():
    bad = json.dumps({
        "Explanation": "e",
        "ClinicallySignificantErrors": {"a": [], "b": [], "c": []},
        "MatchedFindings": [],
    })
    with pytest.raises(JudgeResponseError):
        parse_crimson_response(bad)


def test_parse_crimson_non_list_errors():
    bad = json.dumps({
        "Explanation": "e",
        "ClinicallySignificantErrors": {"a": "oops", "b": [], "c": [], "d": []},
        "MatchedFindings": [],
    })
    with pytest.raises(JudgeResponseError):
        parse_crimson_response(bad)


def test_parse_crimson_no_json():
    with pytest.raises(JudgeResponseError):
        parse_crimson_response("I could not assess this report.")


def test_parse_serialize_round_trip():
    assessment = parse_crimson_response(_response(a=["e1"], b=["e2"], matched=["m"]))
    again = parse_crimson_response(json.dumps(assessment.to_dict()))
    assert again == assessment


def test_crimson_score_zero_when_only_errors():
    # one missing-finding error, nothing matched
    assessment = parse_crimson_response(_response(b=["missed calcified nodule"]))
    assert crimson_score(assessment) == 0.0


def test_crimson_score_full_credit():
    assessment = parse_crimson_response(
        _response(matched=["bibasilar atelectasis", "mild cardiomegaly"])
    )
    assert crimson_score(assessment) == 100.0


def test_crimson_score_three_of_five():
    assessment = parse_crimson_response(
        _response(a=["fp"], b=["miss"], matched=["m1", "m2", "m3"])
    )
    assert crimson_score(assessment) == pytest.approx(60.0)


def test_crimson_score_degenerate_is_100():
    assert crimson_score(parse_crimson_response(_response())) == 100.0


def test_crimson_score_monotone():
    rng = random.Random(0)
    for _ in range(300):
        m = rng.randint(0, 5)
        errs = [rng.randint(0, 3) for _ in range(4)]
        base = CrimsonAssessment(
            "", tuple("e" * i for i in range(errs[0])), tuple("e" for _ in range(errs[1])),
            tuple("e" for _ in range(errs[2])), tuple("e" for _ in range(errs[3])),
            tuple(f"m{i}" for i in range(m)),
        )
        more_errors = CrimsonAssessment(
            "", base.errors_a + ("extra",), base.errors_b, base.errors_c,
            base.errors_d, base.matched_findings,
        )
        more_matched = CrimsonAssessment(
            "", base.errors_a, base.errors_b, base.errors_c, base.errors_d,
            base.matched_findings + ("extra",),
        )
        s = crimson_score(base)
        assert 0.0 <= s <= 100.0
        assert crimson_score(more_errors) <= s
        assert crimson_score(more_matched) >= s


@pytest.mark.parametrize("sys_s,org_s,expected", [(1, 1, 100.0), (0, 0, 0.0), (1, 0.5, 75.0)])
def test_style_score_scale(sys_s, org_s, expected):
    assert style_score(StyleAssessment(sys_s, org_s)) == expected


def test_parse_style_rejects_out_of_scale():
    bad = json.dumps({
        "systematic_evaluation_score": 0.7,
        "organization_language_score": 1,
    })
    with pytest.raises(JudgeResponseError):
        parse_style_response(bad)


def test_parse_style_missing_key():
    with pytest.raises(JudgeResponseError):
        parse_style_response(json.dumps({"systematic_evaluation_score": 1}))


def test_parse_style_well_formed():
    sa = parse_style_response(json.dumps({
        "systematic_evaluation_score": 1,
        "organization_language_score": 0.5,
        "systematic_evaluation_recommendation": "",
        "organization_language_recommendation": "Write in full sentences.",
    }))
    assert style_score(sa) == 75.0
    assert sa.organization_language_recommendation


def test_apply_overrides_remove_error():
    assessment = parse_crimson_response(_response(b=["bad error"], matched=["m"]))
    grade = apply_overrides(assessment, [Override("b", 0, "remove", "rad1", "not significant")])
    assert grade.crimson_percent == 100.0
    assert grade.original_assessment == assessment
    assert grade.override_log[0]["error_text"] == "bad error"


def test_apply_overrides_empty_is_identity():
    assessment = parse_crimson_response(_response(a=["e"], matched=["m"]))
    grade = apply_overrides(assessment, [])
    assert grade.crimson_percent == crimson_score(assessment)
    assert grade.override_log == ()


def test_apply_overrides_reclassify_keeps_score():
    assessment = parse_crimson_response(_response(b=["e"], matched=["m"]))
    grade = apply_overrides(assessment, [Override("b", 0, "reclassify-to:d", "rad2")])
    assert grade.crimson_percent == crimson_score(assessment)
    assert grade.assessment.errors_d == ("e",)
    assert grade.assessment.errors_b == ()


def test_apply_overrides_dangling_ref():
    assessment = parse_crimson_response(_response(matched=["m"]))
    with pytest.raises(ValueError):
        apply_overrides(assessment, [Override("a", 0, "remove", "rad1")])
