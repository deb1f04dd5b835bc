"""
Diverse-structure caption templates and the deterministic attribute renderer.

The bank holds ten sentence skeletons with named slots; each image gets a
uniformly drawn skeleton. Every skeleton names all six attributes, so the described
attributes stay fixed while the sentence structure varies.
"""
import logging
import string
from dataclasses import dataclass

from utils.exceptions import RenderingError

logger = logging.getLogger('dsfad')

TEMPLATE_BANK_VERSION = 2

# Attribute value -> phrase used to fill a slot
ATTRIBUTE_PHRASES = {
    'gender': {'man': 'man', 'woman': 'woman'},
    'age': {'young': 'young', 'middle-aged': 'middle-aged', 'senior': 'senior'},
    'hair': {'dark': 'dark hair', 'blond': 'blond hair', 'red': 'red hair', 'gray': 'gray hair'},
    'upper': {
        'gray-shirt': 'a gray shirt',
        'red-jacket': 'a red jacket',
        'blue-sweater': 'a blue sweater',
        'green-t-shirt': 'a green t-shirt',
        'purple-blouse': 'a purple blouse',
        'orange-coat': 'an orange coat',
    },
    'lower': {
        'khaki-shorts': 'khaki shorts',
        'blue-jeans': 'blue jeans',
        'black-trousers': 'black trousers',
        'gray-skirt': 'a gray skirt',
        'brown-pants': 'brown pants',
    },
    'accessory': {
        'watch': 'a watch',
        'backpack': 'a backpack',
        'handbag': 'a handbag',
        'hat': 'a hat',
        'scarf': 'a scarf',
    },
}

_SKELETONS = (
    "A {age} {gender} with {hair} is outfitted in {upper} and {lower}, accompanied by {accessory}.",
    "This {gender} appears {age}, has {hair}, and wears {upper} with {lower} and {accessory}.",
    "Wearing {upper} and {lower}, the {age} {gender} with {hair} is seen with {accessory}.",
    "The pedestrian is a {age} {gender} with {hair}, dressed in {lower} and {upper}, carrying {accessory}.",
    "With {hair} and {accessory}, this {age} {gender} walks by in {upper} and {lower}.",
    "A {gender} in {upper} and {lower} who has {hair}, {accessory} and looks {age}.",
    "Seen from the camera, the {age} {gender} has {hair}, {accessory}, {upper} and {lower}.",
    "The person, a {age} {gender}, sports {hair} and is wearing {lower}, {upper} and {accessory}.",
    "Dressed in {upper} and {lower}, a {age} {gender} with {accessory} and {hair} stands here.",
    "Notable features of this {age} {gender}: {hair}, {upper}, {lower} and {accessory}.",
)


@dataclass(frozen=True)
class CaptionTemplate:
    template_id: int
    skeleton: str

    @property
    def slot_order(self):
        """Slots in the order they appear in the sentence."""
        return tuple(name for _, name, _, _ in string.Formatter().parse(self.skeleton) if name)


_BANK = tuple(CaptionTemplate(template_id=i, skeleton=s) for i, s in enumerate(_SKELETONS))


def template_bank():
    """Return the frozen bank of ten caption templates."""
    return _BANK


def select_template(rng, bank=None):
    """Draw one template uniformly from the bank."""
    bank = bank or _BANK
    return bank[int(rng.integers(len(bank)))]


def render_caption(identity, template):
    """
    Fill a template's slots with the identity's attribute phrases.

    Args:
        identity (Identity): Pedestrian whose attributes are described
        template (CaptionTemplate): Sentence skeleton

    Returns:
        str: Rendered description
    """
    values = identity.attribute_values()
    phrases = {}
    for slot in template.slot_order:
        value = values.get(slot)
        if value is None or value not in ATTRIBUTE_PHRASES.get(slot, {}):
            raise RenderingError(f"Template {template.template_id} references '{slot}' "
                                 f"but identity {identity.label} has no phrase for it")
        phrases[slot] = ATTRIBUTE_PHRASES[slot][value]
    return template.skeleton.format(**phrases)
