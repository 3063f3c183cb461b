"""Question templates for the four VQA task families.

The template strings are load-bearing data, not prose: emitted questions must
be exact members of these lists, and the reasoner vocabulary is harvested from
them. Do not edit casually.
"""

from __future__ import annotations

SCENE_TEMPLATES = (
    "What can you tell about the current driving conditions from the images?",
    "What can be observed in the panoramic images provided?",
    "Can you provide a summary of the current driving scenario based on the input images?",
    "What can you observe from the provided images regarding the driving conditions?",
    "Please describe the current driving conditions based on the images provided.",
    "Can you describe the current weather conditions and the general environment depicted in the images?",
    "Please describe the current driving conditions based on the input images.",
    "Could you summarize the current driving conditions based on the input images?",
    "Please provide an overview of the current driving conditions based on the images.",
    "Can you summarize what the panoramic images show?",
    "Can you describe the overall conditions and environment based on the images?",
    "Could you describe the overall environment and objects captured in the images provided?",
)

CRITICAL_TEMPLATES = (
    "Where are the critical objects in the scene and what impact do they have on the ego vehicle?",
    "Identify the significant objects in the scene and their specific impacts on the ego vehicle.",
    "Can you pinpoint the critical objects in the scene and describe their influence on the ego vehicle?",
    "Which objects in the scene are critical, and what effects do they have on the ego vehicle's movement?",
    "Please describe the critical objects in the scene, their positions, and the influence they have on the ego vehicle.",
)

ACTION_TEMPLATES = (
    "Please describe your driving behavior and explain the reasons.",
    "What is the current behavior of the vehicle?",
)

HISTORY_TEMPLATES = (
    "What are the differences between the current scene and the past scene in terms of critical objects?",
    "How do the critical objects in the current scene differ from those in the past scene?",
    "What changes have occurred in the critical objects between the current and past scenes?",
    "What are the differences in critical objects between the present scene and the previous scene?",
    "What distinctions exist between the critical objects of the current scene and those of the past scene?",
    "In the past few frames, has a traffic light affected the driving strategy of the ego vehicle?",
    "Within the recent frames, has the driving strategy of the ego vehicle been influenced by a traffic light?",
    "In the last few frames, has the driving strategy of the ego vehicle been impacted by a traffic light?",
    "Has the driving strategy of the ego vehicle been affected by a traffic light in the past few frames?",
    "Has the traffic light influenced the driving strategy of the ego vehicle in the previous frames?",
    "How has the current speed changed compared to the previous frames?",
    "What was my driving behavior in the previous frame?",
)

# History sub-families: templates 0-4 ask about object deltas, 5-9 about
# traffic-light influence, 10 about speed change, 11 about prior behavior.
HISTORY_OBJECT_RANGE = range(0, 5)
HISTORY_LIGHT_RANGE = range(5, 10)
HISTORY_SPEED_ID = 10
HISTORY_BEHAVIOR_ID = 11

VQA_TYPES = ("scene_description", "critical_objects", "action_reasoning", "history")

QUESTION_TEMPLATES: dict[str, tuple[str, ...]] = {
    "scene_description": SCENE_TEMPLATES,
    "critical_objects": CRITICAL_TEMPLATES,
    "action_reasoning": ACTION_TEMPLATES,
    "history": HISTORY_TEMPLATES,
}

ALL_TEMPLATES = SCENE_TEMPLATES + CRITICAL_TEMPLATES + ACTION_TEMPLATES + HISTORY_TEMPLATES
