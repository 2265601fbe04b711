"""Prompt templates for entity verification/correction and QA generation.

These strings are part of the method's contract and are covered by golden
tests; do not reflow or "fix" them. The optional visual-attributes line
supports text-only models that receive a generated caption instead of the
image itself.
"""
from __future__ import annotations

CAPTION_PROXY_PREFIX = "Here are the visual attributes of the image:"

VERIFICATION_TEMPLATE = """\
You are working on an entity recognition task.
Is this an image of {candidate_entity}?
Your answer must be either 'YES' or 'NO'.
Here is the definition of {candidate_entity}: {wikipedia_summary}.
If your answer is 'YES', you must use the definition of {candidate_entity} to answer whether this is an image of a {candidate_entity}.
If your answer is 'NO', you must use the caption of the image {original_caption} to describe the main object in the image with the most specific English Wikipedia article title, where the response follows the format '@response@'.
You must then explain your answer by describing the visual attributes of the image.
If you answer is 'YES', your explanation MUST be based on the definition of {candidate_entity}. If you answer is 'NO', your explanation MUST ONLY be based on the visual cues of the image, and it should NOT contain {candidate_entity}.
Your explanation must be concise.
Your explanation MUST NOT exceed two sentences."""

QA_TEMPLATE = """\
You are working on a visual question answering task.
This is an image of {entity}.
Your rationale is the following: {rationale}.
Your task is to generate 3 question/answer pairs describing the visual attributes of this image.
The questions MUST be diverse and cover several entities of the image, including the main object in the image or image itself. The answers MUST be specific English Wikipedia article titles. The answers MUST be based on the visual content of the image and the provided rationale.
The format for the question/answer pairs is Q:<question> A:<answer>. The questions MUST NOT contain What is the main object in the image?."""

FORBIDDEN_QUESTION = "What is the main object in the image?"


def render_verification_prompt(
    candidate_name: str,
    summary: str,
    caption: str,
    caption_proxy: str | None = None,
) -> str:
    """Instantiate the verification/correction template.

    When ``caption_proxy`` is given (text-only model mode), the visual
    attributes line is prepended as the first line.
    """
    if not candidate_name:
        raise ValueError("candidate_name must be non-empty")
    body = VERIFICATION_TEMPLATE.format(
        candidate_entity=candidate_name,
        wikipedia_summary=summary,
        original_caption=caption,
    )
    if caption_proxy is not None:
        return f"{CAPTION_PROXY_PREFIX} {caption_proxy}\n{body}"
    return body


def render_qa_prompt(entity_name: str, rationale: str) -> str:
    """Instantiate the question/answer generation template."""
    if not entity_name or not rationale:
        raise ValueError("entity_name and rationale must be non-empty")
    return QA_TEMPLATE.format(entity=entity_name, rationale=rationale)
