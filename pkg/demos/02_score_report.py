"""Score a candidate report with the LLM judge pipeline, fully offline.

Builds the content prompt from a case header, runs it through a stubbed
judge endpoint (a canned JSON response keyed by case id), parses the
structured assessment, and computes the content and style percentages.
"""

import json

from radgame import (
    build_crimson_prompt,
    build_style_prompt,
    crimson_score,
    parse_crimson_response,
    parse_style_response,
    style_score,
)
from radgame.core import ReportCase
from radgame.gateway import GatewayRequest, JUDGE, LlmGateway


def main():
    case = ReportCase(
        case_id="demo-report",
        image_refs=("demo.png",),
        age_years=90,
        indication="Wrist fracture, shortness of breath",
        reference_findings=(
            "There is cardiomegaly. Bibasilar opacities present, likely atelectasis."
        ),
    )
    candidate = "The heart is enlarged. The lungs appear clear."

    # Canned judge verdicts: the candidate matched cardiomegaly but missed
    # the bibasilar opacities, and its style is partially systematic.
    fixtures = {
        case.case_id: json.dumps({
            "Explanation": "Cardiomegaly matched; opacities not reported.",
            "ClinicallySignificantErrors": {
                "a": [], "b": ["bibasilar opacities / atelectasis"], "c": [], "d": [],
            },
            "MatchedFindings": ["cardiomegaly"],
        }),
        f"{case.case_id}#style": json.dumps({
            "systematic_evaluation_score": 1,
            "organization_language_score": 0.5,
            "organization_language_recommendation": "Use complete sentences.",
        }),
    }
    gateway = LlmGateway.stubbed(fixtures)

    prompt = build_crimson_prompt(
        case.age_years, case.indication, case.reference_findings, candidate
    )
    print("--- prompt header ---")
    print("\n".join(prompt.splitlines()[:6]))
    print("...\n")

    resp = gateway.complete(GatewayRequest(role=JUDGE, prompt=prompt, case_id=case.case_id))
    assessment = parse_crimson_response(resp.text)
    print(f"matched findings: {list(assessment.matched_findings)}")
    print(f"errors (b = missing finding): {list(assessment.errors_b)}")
    print(f"content score: {crimson_score(assessment):.1f}%  "
          f"(100 * matched / (matched + errors))")

    style_resp = gateway.complete(GatewayRequest(
        role=JUDGE, prompt=build_style_prompt(candidate), case_id=f"{case.case_id}#style"
    ))
    style = parse_style_response(style_resp.text)
    print(f"style score:   {style_score(style):.1f}%  "
          f"(pillars: systematic={style.systematic_evaluation_score}, "
          f"organization={style.organization_language_score})")


if __name__ == "__main__":
    main()
