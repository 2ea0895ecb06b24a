"""
Extracting star scores from free-text reports
=============================================

Feeds the parser the report shapes that show up in practice: a bare
final score, a decorated one, think-tag reasoning with decoy scores,
sub-scores without an overall line, and a multi-article confusion that
must be flagged instead of scored.
"""
from refscore.extract import analyze_report

reports = {
    "bare": "The contribution is solid and clearly argued.\nScore: 3*",
    "decorated": "A careful replication study.\n**Score: 2* (Nationally Recognised)**",
    "reasoning": (
        "<think>Could be 4*? No, the evaluation is thin, lean to 3*.</think>\n"
        "The methods are sound but the sample is small.\nScore: 3*"
    ),
    "subscores": (
        "Originality: 3/4\nSignificance: 2/4\nRigour: 3/4\n"
        "No overall verdict is stated."
    ),
    "multi": (
        "Final Scores\nArticle 1: 3*\nArticle 2: 2*\nArticle 3: 4*"
    ),
}

for name, text in reports.items():
    result = analyze_report(text)
    print(f"--- {name} ---")
    print("  thinking stripped:", bool(result.sections.thinking))
    print("  overall:", result.parsed.overall)
    print("  subscores:", result.parsed.originality,
          result.parsed.significance, result.parsed.rigour)
    print("  flags:", sorted(result.parsed.flags))
    print("  effective score:", result.effective)

# the effective score is what enters the matrix: the overall when
# present, otherwise the mean of the sub-scores, never for multi
