"""Verification/correction of candidate entities and QA generation via an LLM.

The model either validates the candidate (response starts with YES) or
replaces it with a name quoted between '@' markers (response starts with
NO). Corrected names are kept even when they are not in the vocabulary;
decoding is constrained to the vocabulary only at inference time. Responses
that stay malformed through the retry budget reject the record rather than
being repaired, since repairs would inject invented supervision.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Literal, Optional

from entikit.kb import EntityVocabulary, normalize_name
from entikit.matching import CandidateAssignment
from entikit.prompts import FORBIDDEN_QUESTION, render_qa_prompt, render_verification_prompt
from entikit.providers import LlmProvider, ProviderCallError, ProviderRequest

logger = logging.getLogger(__name__)

REQUIRED_QA_PAIRS = 3


class ParseError(ValueError):
    """Base class for malformed provider responses."""


class MissingVerdictError(ParseError):
    def __init__(self) -> None:
        super().__init__("response does not start with YES or NO")


class MissingCorrectionError(ParseError):
    def __init__(self) -> None:
        super().__init__("NO verdict without an @...@ correction span")


class EmptyRationaleError(ParseError):
    def __init__(self) -> None:
        super().__init__("rationale is empty")


class TooFewPairsError(ParseError):
    def __init__(self, found: int):
        super().__init__(f"expected {REQUIRED_QA_PAIRS} QA pairs, found {found}")
        self.found = found


class ForbiddenQuestionError(ParseError):
    def __init__(self, index: int):
        super().__init__(f"QA pair {index} uses the forbidden generic question")
        self.index = index


class EmptyFieldError(ParseError):
    def __init__(self, index: int):
        super().__init__(f"QA pair {index} has an empty question or answer")
        self.index = index


class RecordRejectedError(RuntimeError):
    """A record failed parsing after all retries and is dropped."""

    def __init__(self, image_id: str, stage: str, reason: str, raw_response: str):
        super().__init__(f"record {image_id} rejected at {stage}: {reason}")
        self.image_id = image_id
        self.stage = stage
        self.reason = reason
        self.raw_response = raw_response


@dataclass(frozen=True)
class VerificationOutcome:
    verdict: Literal["validated", "corrected"]
    entity_name: str
    rationale: str


@dataclass(frozen=True)
class QAPair:
    question: str
    answer: str


@dataclass(frozen=True)
class RefinedRecord:
    image_id: str
    original_caption: str
    candidate_entity_id: int
    outcome: VerificationOutcome
    qa_pairs: tuple[QAPair, ...]


@dataclass
class RefineConfig:
    retries: int = 2  # extra attempts after the first call
    caption_proxies: dict[str, str] = field(default_factory=dict)  # image_id -> proxy


_LEADING_SEPARATORS = " \t\r\n,.;:-"


def parse_verification_response(raw: str, candidate_name: str) -> VerificationOutcome:
    """Parse a verification response into a validated or corrected outcome.

    YES keeps the candidate name; NO extracts the corrected name from the
    first '@...@' span (normalized) and takes the rest as the rationale.
    """
    text = raw.strip()
    upper = text.upper()
    if upper.startswith("YES"):
        rationale = text[3:].lstrip(_LEADING_SEPARATORS).strip()
        if not rationale:
            raise EmptyRationaleError()
        _warn_if_overlong(rationale)
        return VerificationOutcome("validated", candidate_name, rationale)
    if upper.startswith("NO"):
        match = re.search(r"@([^@]*)@", text)
        if match is None:
            raise MissingCorrectionError()
        entity = normalize_name(match.group(1))
        if not entity:
            raise MissingCorrectionError()
        rationale = text[match.end() :].lstrip(_LEADING_SEPARATORS).strip()
        if not rationale:
            raise EmptyRationaleError()
        _warn_if_overlong(rationale)
        return VerificationOutcome("corrected", entity, rationale)
    raise MissingVerdictError()


def _warn_if_overlong(rationale: str) -> None:
    # the prompt caps explanations at two sentences; longer ones are kept as-is
    sentences = [s for s in re.split(r"[.!?]+", rationale) if s.strip()]
    if len(sentences) > 2:
        logger.warning("rationale exceeds two sentences (%d found); keeping as-is", len(sentences))


_QA_SEGMENT = re.compile(r"Q:(.*?)A:(.*?)(?=Q:|$)", re.DOTALL)


def parse_qa_response(raw: str) -> list[QAPair]:
    """Extract the first three Q:/A: pairs from a QA response.

    Pairs beyond the third are ignored. Raises TooFewPairsError,
    ForbiddenQuestionError, or EmptyFieldError on malformed content.
    """
    pairs = _QA_SEGMENT.findall(raw)
    if len(pairs) < REQUIRED_QA_PAIRS:
        raise TooFewPairsError(len(pairs))
    out: list[QAPair] = []
    for i, (question, answer) in enumerate(pairs[:REQUIRED_QA_PAIRS]):
        question = question.strip()
        answer = answer.strip()
        if not question or not answer:
            raise EmptyFieldError(i)
        if question == FORBIDDEN_QUESTION:
            raise ForbiddenQuestionError(i)
        out.append(QAPair(question=question, answer=answer))
    return out


def _call_with_retries(
    provider: LlmProvider,
    request: ProviderRequest,
    parse,
    retries: int,
    image_id: str,
    stage: str,
):
    """Call provider and parse, retrying on either failure kind.

    Parse errors exhausted -> RecordRejectedError (record is dropped).
    Transport errors exhausted -> ProviderCallError (run aborts).
    """
    last_raw = ""
    last_error: Exception | None = None
    for _ in range(retries + 1):
        try:
            response = provider.complete(request)
        except ProviderCallError as exc:
            last_error = exc
            continue
        last_raw = response.text
        try:
            return parse(response.text), response.text
        except ParseError as exc:
            last_error = exc
    if isinstance(last_error, ProviderCallError):
        raise last_error
    raise RecordRejectedError(image_id, stage, str(last_error), last_raw)


def refine_record(
    provider: LlmProvider,
    assignment: CandidateAssignment,
    kb: EntityVocabulary,
    config: Optional[RefineConfig] = None,
) -> RefinedRecord:
    """Run verification then QA generation for one candidate assignment."""
    config = config or RefineConfig()
    record = kb[assignment.candidate_entity_id]
    proxy = config.caption_proxies.get(assignment.image_id)
    verification_prompt = render_verification_prompt(
        record.canonical_name, record.summary, assignment.caption, caption_proxy=proxy
    )
    outcome, _ = _call_with_retries(
        provider,
        ProviderRequest(prompt=verification_prompt, image_ref=assignment.image_id),
        lambda raw: parse_verification_response(raw, record.canonical_name),
        config.retries,
        assignment.image_id,
        "verification",
    )
    qa_prompt = render_qa_prompt(outcome.entity_name, outcome.rationale)
    qa_pairs, _ = _call_with_retries(
        provider,
        ProviderRequest(prompt=qa_prompt, image_ref=assignment.image_id),
        parse_qa_response,
        config.retries,
        assignment.image_id,
        "qa",
    )
    return RefinedRecord(
        image_id=assignment.image_id,
        original_caption=assignment.caption,
        candidate_entity_id=assignment.candidate_entity_id,
        outcome=outcome,
        qa_pairs=tuple(qa_pairs),
    )


def correction_rate(records: list[RefinedRecord]) -> float:
    """Fraction of records whose candidate entity was corrected."""
    if not records:
        raise ValueError("correction_rate needs a non-empty record list")
    corrected = sum(1 for r in records if r.outcome.verdict == "corrected")
    return corrected / len(records)


def record_to_dict(record: RefinedRecord, kb: EntityVocabulary) -> dict:
    return {
        "image_id": record.image_id,
        "original_caption": record.original_caption,
        "candidate_entity": kb[record.candidate_entity_id].canonical_name,
        "verdict": record.outcome.verdict,
        "entity": record.outcome.entity_name,
        "rationale": record.outcome.rationale,
        "qa": [{"question": p.question, "answer": p.answer} for p in record.qa_pairs],
    }


def record_from_dict(obj: dict, kb: Optional[EntityVocabulary] = None) -> RefinedRecord:
    """Rebuild a record from its JSON form; candidate id is -1 without a kb."""
    candidate_id = -1
    if kb is not None:
        resolved = kb.lookup(obj["candidate_entity"])
        if resolved is None:
            raise ValueError(f"unknown candidate entity {obj['candidate_entity']!r}")
        candidate_id = resolved
    return RefinedRecord(
        image_id=str(obj["image_id"]),
        original_caption=str(obj["original_caption"]),
        candidate_entity_id=candidate_id,
        outcome=VerificationOutcome(
            verdict=obj["verdict"],
            entity_name=str(obj["entity"]),
            rationale=str(obj["rationale"]),
        ),
        qa_pairs=tuple(QAPair(question=p["question"], answer=p["answer"]) for p in obj["qa"]),
    )
