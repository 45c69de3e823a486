"""Prompt-template catalog for the captioning pipeline and the judges.

Template bodies contain literal JSON braces in their output-format lines,
so rendering uses targeted token replacement ("{name}" per declared
placeholder), never str.format. A templates directory can override any
default body with a file named <template>.txt.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

FRAME_KEY = "Frame Level Description"
CLIP_KEY = "Clip Level Description"
VIDEO_KEY = "Video Level Description"


class TemplateError(ValueError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str
    placeholders: tuple[str, ...] = ()

    def render(self, **values: object) -> str:
        text = self.body
        for key in self.placeholders:
            if key not in values:
                raise TemplateError(f"template {self.name!r} needs placeholder {key!r}")
            text = text.replace("{" + key + "}", str(values[key]))
        for key in self.placeholders:
            if "{" + key + "}" in text:
                raise TemplateError(f"template {self.name!r} left {key!r} unresolved")
        return text


FRAME_PROMPT = PromptTemplate(
    name="frame",
    body="""\
Task:

You are an expert in understanding the visual details of individual frames within a video. You are requested to create detailed descriptions for each video frame sent to you. Your task is to describe the frame's content with high precision, focusing only on the elements visible in that exact frame. Do not infer or speculate about actions or events not explicitly visible in the frame.

Guidelines For Frame Description:

- Describe only what is visible in the frame: Focus on the exact visual details, without making assumptions about what happens before or after.
- Avoid narrative progression: Unlike a clip description, there is no need to interpret or connect this frame with others. Only describe the current frame.
- Be specific and exhaustive: Include as many details as possible, such as:
  - Objects: Colors, shapes, textures, positions, and relationships between objects.
  - People: Clothing, facial expressions, posture, gestures, and any visible features (e.g., hair color, accessories).
  - Background: Environmental details, lighting, shadows, and any visible text (with translations if necessary).
  - Text in the frame: If text appears, provide its original language and an English translation in parentheses.
- No additional reasoning: Do not infer motivations, future actions, or unseen parts of the scene.

Output Format:

Your response should look like this: {"Frame Level Description": "The frame shows..."}
""",
)

CLIP_PROMPT = PromptTemplate(
    name="clip",
    body="""\
Task:

You are an expert in understanding scene transitions based on visual features in a video. There is a video including multiple sequential clips (clip-1,clip-2,...). Given the description for these clips (clip-1,clip-2,...,) as the context, you are requested to create the descriptions for the current clip sent to you, which includes multiple sequential frames.

Guidelines For Clip Description:

- Your description should see the description of previous clips as context.
- Analyze the narrative progression implied by the sequence of frames, interpreting the sequence as a whole.
- Note that since these frames are extracted from a clip, adjacent frames may show minimal differences. These should not be interpreted as special effects in the clip.
- Note that some objects and scenes shown in the previous clips might not shown in the current clip. Be carefully do not assume the same object and scenes shown in every clips.
- If text appears in the frames, you must describe the text in its original language and provide an English translation in parentheses. For example: book. Additionally, explain the meaning of the text within its context.
- When referring to people, use their characteristics, such as clothing, to distinguish different people.
- **IMPORTANT** Please provide as many details as possible in your description, including colors, shapes, and textures of objects, actions and characteristics of humans, as well as scenes and backgrounds.

Output Format:

Your response should look like this: {"Clip Level Description": "The clip begins with..., progresses by..., and concludes with..."}

Description of Previous Clips: {prev_clip_caption}
""",
    placeholders=("prev_clip_caption",),
)

VIDEO_PROMPT = PromptTemplate(
    name="video",
    body="""\
Task:

You are an expert at understanding frame-level and clip-level descriptions in a video that includes {num_frame} frames and {num_clip} clips. You are requested to create a video description by summarizing these frame-level and clip-level descriptions chronologically.

Guidelines For Video Description:

- Since the frame-level and clip-level descriptions are provided in chronological order, ensure that the video description is coherent and follows the same sequence. Avoid referring to the first or final frame of each clip as the first or final frame of the entire video.
- Include any text that appears in the clip, provide its English translation in parentheses, and explain the significance of each text within its context.
- The tone of the video description should be as if you are describing a video directly instead of summarizing the information from several clip descriptions. Therefore, avoid phrases found in the referred clip descriptions such as "The clip begins...", "As the clip progresses...", "The clip concludes", "The final/first frame", "The second clip begins with", "The final frames of this segment", etc
- **IMPORTANT** Include all details from the given clip descriptions in the video description. Try to understand of the theme of the video and provide a coherent narrative that connects all the clips together.

Output Format:

1. Your output should be formed in a JSON file.
2. Only provide the Python dictionary string.
3. You can use various descriptive sentence structures to outline the narrative progression.
Your response should look like this: {"Video Level Description": "YOUR DESCRIPTION HERE."}

Frame-level and clip-level descriptions (interleaved, sorted in chronological order):
{interleaved_blocks}

Please give me the description of the video given the frame-level and clip-level descriptions.
""",
    placeholders=("num_frame", "num_clip", "interleaved_blocks"),
)

PROBE_PROMPT = PromptTemplate(
    name="probe",
    body="""\
Task:

You are an expert in understanding scene transitions based on visual features in a video. You are requested to create the descriptions for the current video sent to you, which includes multiple sequential frames.

Guidelines For Video Description:

- Analyze the narrative progression implied by the sequence of frames, interpreting the sequence as a whole.
- Note that since these frames are extracted from a video, adjacent frames may show minimal differences. These should not be interpreted as special effects in the video.
- If text appears in the frames, you must describe the text in its original language and provide an English translation in parentheses. For example: book. Additionally, explain the meaning of the text within its context.
- When referring to people, use their characteristics, such as clothing, to distinguish different people.
- **IMPORTANT** Please provide as many details as possible in your description, including colors, shapes, and textures of objects, actions and characteristics of humans, as well as scenes and backgrounds.

Output Format:

Your response should look like this: {"Video Level Description": "The video begins with..., progresses by..., and concludes with..."}

Please give me the description of the current video.
""",
)

QUALITY_PROMPT = PromptTemplate(
    name="quality",
    body="""\
You are an expert in evaluating text quality. Please evaluate the quality of an AI assistant's response to a user's writing request. Be as strict as possible.

You need to evaluate across the following six dimensions, with scores ranging from 1 to 5. The scoring criteria from 5 to 1 for each dimension are as follows:

1. Relevance: From content highly relevant and fully applicable to the user's request to completely irrelevant or inapplicable.

2. Accuracy: From content completely accurate with no factual errors or misleading information to content with numerous errors and highly misleading.

3. Coherence: From clear structure with smooth logical connections to disorganized structure with no coherence.

4. Clarity: From clear language, rich in detail, and easy to understand to confusing expression with minimal details.

5. Breadth and Depth: From both broad and deep content with a lot of information to seriously lacking breadth and depth with minimal information.

6. Reading Experience: From excellent reading experience, engaging and easy to understand content to very poor reading experience, boring and hard to understand content.

Please evaluate the quality of the following response to a user's request according to the above requirements.

<User Request>: {request}

<Response>: {response}

Please evaluate the quality of the response. You must first provide a brief analysis of its quality, then give a comprehensive analysis with scores for each dimension. The output must strictly follow the JSON format: {"Analysis": ..., "Relevance": ..., "Accuracy": ..., "Coherence": ..., "Clarity": ..., "Breadth and Depth": ..., "Reading Experience": ...}. You do not need to consider whether the response meets the user's length requirements in your evaluation. Ensure that only one integer between 1 and 5 is output for each dimension score.
""",
    placeholders=("request", "response"),
)

RELEVANCE_PROMPT = PromptTemplate(
    name="relevance",
    body="""\
You are an intelligent chatbot designed for evaluating the detail orientation of generative outputs for video-based question-answer pairs. Your task is to compare the predicted answer with the correct answer and determine its level of detail, considering both completeness and specificity. Here's how you can accomplish the task:

------

INSTRUCTIONS:

- Check if the predicted answer covers all major points from the video. The response should not leave out any key aspects.
- Evaluate whether the predicted answer includes specific details rather than just generic points. It should provide comprehensive information that is tied to specific elements of the video.
- Consider synonyms or paraphrases as valid matches.
- Provide a single evaluation score that reflects the level of detail orientation of the prediction, considering both completeness and specificity.

Please evaluate the following video-based question-answer pair:

<User Request>: {question}

<Correct Answer>: {reference}

<Predicted Answer>: {candidate}

Provide your evaluation only as a detail orientation score where the detail orientation score is an integer value between 0 and 5, with 5 indicating the highest level of detail orientation. Please generate the response in the form of a Python dictionary string with keys 'score', where its value is the detail orientation score in INTEGER, not STRING.
DO NOT PROVIDE ANY OTHER OUTPUT TEXT OR EXPLANATION. Only provide the Python dictionary string.
For example, your response should look like this: {'score': 4.8}.
""",
    placeholders=("question", "reference", "candidate"),
)

DEFAULT_TEMPLATES: dict[str, PromptTemplate] = {
    t.name: t
    for t in (FRAME_PROMPT, CLIP_PROMPT, VIDEO_PROMPT, PROBE_PROMPT, QUALITY_PROMPT, RELEVANCE_PROMPT)
}


def load_templates(directory: Path | None = None) -> dict[str, PromptTemplate]:
    """Default catalog, with per-name overrides from <directory>/<name>.txt."""
    catalog = dict(DEFAULT_TEMPLATES)
    if directory is None:
        return catalog
    directory = Path(directory)
    for name, default in DEFAULT_TEMPLATES.items():
        override = directory / f"{name}.txt"
        if override.exists():
            catalog[name] = PromptTemplate(
                name=name,
                body=override.read_text(encoding="utf-8"),
                placeholders=default.placeholders,
            )
    return catalog
