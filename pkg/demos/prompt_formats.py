"""
Zero-shot and few-shot prompt layout
====================================

Shows the exact bytes sent for one article under both strategies.
The few-shot prompt embeds one worked exemplar per star level, in
ascending order, then ends with the zero-shot block for the target.
"""
from refscore.corpus import Article, ExemplarArticle, FewShotPool
from refscore.prompts import (
    SystemPromptTemplate,
    build_few_shot_user,
    build_zero_shot_user,
    compose_messages,
    select_fewshot,
)

target = Article(
    id="d1-a001",
    uoa=1,
    title="Cohort outcomes after early immune intervention",
    abstract="We follow 4,100 patients over six years and report risk ratios.",
    doi="10.1/demo",
)

print("=== zero-shot user message ===")
print(build_zero_shot_user(target))

# two exemplars per (uoa, star) cell; selection picks one per level
exemplars = []
for star in (1, 2, 3, 4):
    for copy in (0, 1):
        exemplars.append(
            ExemplarArticle(
                article=Article(
                    id=f"pool-s{star}-{copy}",
                    uoa=1,
                    title=f"Worked example at {star} star ({copy})",
                    abstract=f"Short abstract used as the level {star} exemplar.",
                    doi="10.1/pool",
                ),
                star=star,
            )
        )
pool = FewShotPool(exemplars)

selection = select_fewshot(target, pool, seed=7, call_index=0)
print("=== few-shot user message ===")
print(build_few_shot_user(target, selection))

# the chat payload carries the system prompt as its own message, or
# folded into the user text for models without a system role
system = SystemPromptTemplate("You are an academic expert asked to grade articles.")
for supported in (True, False):
    messages = compose_messages(system, build_zero_shot_user(target), supported)
    roles = [m.role for m in messages.messages]
    print("system role supported" if supported else "folded into user", "->", roles)

# regenerating with a different call index re-samples within each level
other = select_fewshot(target, pool, seed=7, call_index=1)
same = [a.article.id == b.article.id for a, b in zip(selection.exemplars, other.exemplars)]
print("exemplar reuse across call indices:", same)
