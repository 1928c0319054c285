"""Grade a localization submission against ground truth.

Walks through the core grading path: IoU between user and reference boxes,
the strict >0.25 credit threshold, and the per-case accuracy that combines
Draw and Select findings with false-positive penalties.
"""

from radgame import (
    BoundingBox,
    FindingAnnotation,
    LocalizeCase,
    LocalizeSubmission,
    SubmissionEntry,
    grade_case,
    iou,
)
from radgame.ingest import default_taxonomy


def main():
    taxonomy = default_taxonomy()

    # A case with one Select finding (cardiomegaly: present/absent only)
    # and one Draw finding (a nodule the trainee must localize).
    case = LocalizeCase(
        case_id="demo-1",
        image_ref="demo.png",
        image_width_px=1024,
        image_height_px=1024,
        annotations=(
            FindingAnnotation("cardiomegaly", ()),
            FindingAnnotation("nodule_mass", (BoundingBox(0.40, 0.40, 0.60, 0.60),)),
        ),
    )

    # The trainee marks cardiomegaly, draws a slightly offset nodule box,
    # and wrongly asserts a pneumothorax.
    user_box = BoundingBox(0.42, 0.42, 0.62, 0.62)
    submission = LocalizeSubmission(
        case_id="demo-1",
        entries=(
            SubmissionEntry("cardiomegaly", True),
            SubmissionEntry("nodule_mass", True, (user_box,)),
            SubmissionEntry("pneumothorax", True),
        ),
    )

    gt_box = case.annotations[1].boxes[0]
    print(f"nodule IoU: {iou(user_box, gt_box):.4f} (credit requires > 0.25)")

    result = grade_case(submission, case, taxonomy)
    for class_id, outcome in sorted(result.outcomes.items()):
        print(f"  {class_id:20s} -> {outcome.value}")
    print(f"case accuracy: {result.case_accuracy:.4f}  (TP / (TP + FN + FP))")
    print(f"recall:        {result.recall:.4f}")


if __name__ == "__main__":
    main()
